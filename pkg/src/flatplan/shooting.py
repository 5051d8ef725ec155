"""Shooting solver for the nonlinear stationarity equation of the
cubic first-order benchmark plant.

Plant:  T ydot + y^3 = K u,  energy cost (y_f - y)^2 + u^2 with
u = (T ydot + y^3) / K.  The stationarity condition is the second-order
equation  ydd = (K^2 (y - y_f) + 3 y^5) / T^2, solved as a two-point
problem by root finding on the unknown initial slope of an RK4
integration.  The miss function typically jumps from a finite undershoot
straight into blow-up, so the secant iteration is safeguarded by
bisection whenever a sign-change bracket is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cost import QuadraticJetForm, Trajectory, shifted_form, simpson
from .errors import NumericalFailure
from .euler_lagrange import derive_el
from .tpbvp import BoundaryData, eval_solution, solve_tpbvp

RK_STEP = 1e-3
MISS_TOL = 1e-8
MAX_ITER = 100
BLOWUP_CAP = 1e6


@dataclass(frozen=True)
class NonlinearElProblem:
    """Two-point problem data for the cubic plant's stationarity equation.

    The cost center y_f is identified with the terminal target y(t_end).
    """

    T_param: float
    K_param: float
    y_f: float
    t_end: float
    y0: float

    def __post_init__(self):
        if self.T_param <= 0.0:
            raise ValueError("plant time constant must be positive")
        if self.K_param == 0.0:
            raise ValueError("plant gain must be nonzero")
        if self.t_end <= 0.0:
            raise ValueError("t_end must be positive")

    @property
    def y_target(self) -> float:
        return self.y_f


def nonlinear_el_rhs(y: float, problem: NonlinearElProblem) -> float:
    """Acceleration of the stationarity equation, solved for ydd."""
    return (problem.K_param ** 2 * (y - problem.y_f) + 3.0 * y ** 5) / problem.T_param ** 2


def input_from_output(y, ydot, problem: NonlinearElProblem):
    """Differential parameterization u = (T ydot + y^3) / K."""
    return (problem.T_param * np.asarray(ydot) + np.asarray(y) ** 3) / problem.K_param


@dataclass(frozen=True)
class ShootingSolution:
    """Converged shot: trajectory channels y, y_d1, y_d2, u_star."""

    trajectory: Trajectory
    v_star: float
    miss: float
    iterations: int


def _integrate(problem: NonlinearElProblem, v0: float, h: float):
    """RK4 integration of (y, v); returns (ys, vs, miss).  Blow-up is
    reported as a capped miss value so root finding can keep going."""
    n = int(round(problem.t_end / h))
    ys = np.empty(n + 1)
    vs = np.empty(n + 1)
    y, v = problem.y0, v0
    ys[0], vs[0] = y, v

    def acc(yy: float) -> float:
        return nonlinear_el_rhs(yy, problem)

    for i in range(n):
        try:
            # the quintic can overflow within one step's stages
            k1y, k1v = v, acc(y)
            k2y, k2v = v + 0.5 * h * k1v, acc(y + 0.5 * h * k1y)
            k3y, k3v = v + 0.5 * h * k2v, acc(y + 0.5 * h * k2y)
            k4y, k4v = v + h * k3v, acc(y + h * k3y)
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        except OverflowError:
            return None, None, float(math.copysign(BLOWUP_CAP, y))
        if not np.isfinite(y) or abs(y) > BLOWUP_CAP:
            return None, None, float(math.copysign(BLOWUP_CAP, y))
        ys[i + 1], vs[i + 1] = y, v
    return ys, vs, float(ys[-1] - problem.y_target)


def shoot(problem: NonlinearElProblem,
          v_bracket: tuple[float, float] | None = None,
          h: float = RK_STEP) -> ShootingSolution:
    """Find ydot(0) landing on the terminal target.

    Secant iteration on the terminal miss, safeguarded by bisection while a
    sign-change bracket is known (the miss function is steep next to the
    blow-up boundary, where pure secant stalls).
    """
    if v_bracket is None:
        v_bracket = (0.0, 2.0 * (problem.y_target - problem.y0) / problem.t_end)
    va, vb = float(v_bracket[0]), float(v_bracket[1])
    ma = _integrate(problem, va, h)[2]
    mb = _integrate(problem, vb, h)[2]

    # endpoints might already satisfy the tolerance
    for v_end, m_end in ((va, ma), (vb, mb)):
        if abs(m_end) < MISS_TOL:
            ys, vs, miss = _integrate(problem, v_end, h)
            return _package(problem, ys, vs, v_end, miss, 0, h)

    have_bracket = ma * mb < 0.0
    lo, hi = (va, vb) if va <= vb else (vb, va)
    mlo = ma if va <= vb else mb

    v0, m0, v1, m1 = va, ma, vb, mb
    force_bisect = False
    for it in range(1, MAX_ITER + 1):
        width = hi - lo
        v2 = None
        if not force_bisect and m1 != m0:
            v2 = v1 - m1 * (v1 - v0) / (m1 - m0)
        if v2 is None or not np.isfinite(v2) or (have_bracket and not (lo < v2 < hi)):
            if not have_bracket:
                raise NumericalFailure(
                    "shooting failed: no sign change over the bracket and the "
                    f"secant diverged (miss {ma:.6g} at v={va:.6g}, "
                    f"{mb:.6g} at v={vb:.6g})")
            v2 = 0.5 * (lo + hi)
        ys, vs, m2 = _integrate(problem, v2, h)
        if ys is not None and abs(m2) < MISS_TOL:
            return _package(problem, ys, vs, v2, m2, it, h)
        if have_bracket:
            if m2 * mlo < 0.0:
                hi = v2
            else:
                lo, mlo = v2, m2
            if hi - lo < 1e-15 * max(1.0, abs(lo)):
                raise NumericalFailure(
                    "shooting bracket collapsed without meeting the terminal "
                    f"tolerance (best miss {min(abs(m1), abs(m2)):.6g}); the "
                    "target sits on a blow-up boundary of the flow")
            # a secant step that barely shrinks the bracket stalls on flat
            # stretches of the miss function; interleave bisection
            force_bisect = (hi - lo) > 0.75 * width
        elif m2 * m1 < 0.0:
            have_bracket = True
            lo, hi = (v1, v2) if v1 <= v2 else (v2, v1)
            mlo = m1 if v1 <= v2 else m2
        v0, m0, v1, m1 = v1, m1, v2, m2
    raise NumericalFailure(
        f"shooting did not converge in {MAX_ITER} iterations "
        f"(last miss {m1:.6g}; bracket miss {ma:.6g} / {mb:.6g})")


def _package(problem, ys, vs, v_star, miss, iterations, h) -> ShootingSolution:
    times = np.arange(ys.size) * h
    accel = np.array([nonlinear_el_rhs(y, problem) for y in ys])
    traj = Trajectory(times, {
        "y": ys,
        "y_d1": vs,
        "y_d2": accel,
        "u_star": input_from_output(ys, vs, problem),
    })
    return ShootingSolution(trajectory=traj, v_star=float(v_star),
                            miss=float(miss), iterations=iterations)


def energy_cost(traj: Trajectory, problem: NonlinearElProblem) -> float:
    """Integral of (y_f - y)^2 + u^2 along a trajectory with y and u channels."""
    y = traj.channel("y")
    u = traj.channel("u_star")
    return simpson((problem.y_f - y) ** 2 + u ** 2, traj.step)


def quadratic_surrogate_form(problem: NonlinearElProblem) -> QuadraticJetForm:
    """(y_f - y)^2 + ydot^2: the quadratic stand-in whose stationarity
    equation is linear."""
    return shifted_form([(0, 1.0, problem.y_f), (1, 1.0, 0.0)])


def solve_linear_surrogate(problem: NonlinearElProblem, h: float = RK_STEP) -> Trajectory:
    """Plan from the quadratic surrogate cost, mapped through the plant's
    input parameterization (channels y, y_d1, u_star)."""
    ode = derive_el(quadratic_surrogate_form(problem))
    bc = BoundaryData([problem.y0], [problem.y_target])
    sol = solve_tpbvp(ode, bc, problem.t_end)
    n = int(round(problem.t_end / h))
    base = eval_solution(sol, np.arange(n + 1) * h, 1)
    y = base.channel("z")
    ydot = base.channel("z_d1")
    return Trajectory(base.times, {
        "y": y,
        "y_d1": ydot,
        "u_star": input_from_output(y, ydot, problem),
    })


@dataclass(frozen=True)
class LagrangianComparison:
    """Energy cost of the true optimum vs. the quadratic-surrogate plan."""

    j_energy_optimal: float
    j_energy_linear_plan: float
    v_star: float


def compare_lagrangians(problem: NonlinearElProblem, h: float = RK_STEP) -> LagrangianComparison:
    """Evaluate the energy criterion on both plans with identical boundary
    data: the shooting solution of the nonlinear stationarity equation, and
    the linear-equation plan from the quadratic surrogate."""
    shot = shoot(problem, h=h)
    j_opt = energy_cost(shot.trajectory, problem)
    lin = solve_linear_surrogate(problem, h=h)
    j_lin = energy_cost(lin, problem)
    return LagrangianComparison(j_energy_optimal=j_opt,
                                j_energy_linear_plan=j_lin,
                                v_star=shot.v_star)
