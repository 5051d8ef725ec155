"""Flat-output optimal trajectory planning for SISO LTI systems, plus
homeostat-based closed-loop tracking and a shooting extension for the
cubic first-order benchmark plant."""

from .cost import (QuadraticJetForm, Trajectory, evaluate_lagrangian,
                   integrate_cost, lqr_to_jet_form, shifted_form, simpson)
from .errors import NumericalFailure
from .euler_lagrange import EulerLagrangeOde, derive_el
from .lti import (FlatMap, JetPoint, LtiSiso, RealPolynomial,
                  evaluate_variable, flat_parameterization, is_controllable,
                  is_minimum_phase, is_stable, make_canonical)
from .mfc import (ClosedLoopResult, ClosedLoopScenario, Gains, Homeostat,
                  Plan, Window, estimate_f_nu1, estimate_f_nu2, ip_control,
                  ipd_control, run_closed_loop)
from .shooting import (LagrangianComparison, NonlinearElProblem,
                       ShootingSolution, compare_lagrangians, energy_cost,
                       nonlinear_el_rhs, shoot, solve_linear_surrogate)
from .simulate import (DcMotorParams, DcMotorPlant, DisturbanceSpec,
                       MismatchSpec, NoiseSpec, NonlinearPlant,
                       NonlinearPlantParams, dc_motor_flat_map, dc_motor_lti,
                       disturbance_value, gaussian_stream, replay_dc_motor,
                       replay_nonlinear, step_dc_motor, step_nonlinear)
from .tpbvp import (BoundaryData, BvpSolution, HorizonScan, SolutionBasis,
                    boundary_residual, build_basis, characteristic_roots,
                    eval_solution, horizon_scan, ode_residual, optimal_cost,
                    particular_solution, solve_tpbvp)

__version__ = "0.1.0"
