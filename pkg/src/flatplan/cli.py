"""Scenario-driven command-line front end.

A scenario is one JSON file describing plant, cost, boundary data, horizon,
controller, noise and disturbance.  Subcommands orchestrate the pipeline
and emit CSV/JSON artifacts:

    derive    print and store the stationarity ODE of the cost
    plan      optimal open-loop trajectory as CSV
    horizon   criterion-vs-horizon scan, CSV plus JSON summary
    simulate  closed-loop tracking run, CSV plus JSON metrics
    shoot     nonlinear benchmark shot, CSV plus JSON summary
    compare   energy cost of the nonlinear optimum vs. the quadratic plan

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .cost import QuadraticJetForm, jet_channel, lqr_to_jet_form, shifted_form
from .errors import NumericalFailure
from .euler_lagrange import EulerLagrangeOde, derive_el
from .lti import FlatMap, evaluate_variable, flat_parameterization
from .mfc import ClosedLoopScenario, Gains, Homeostat, Plan, run_closed_loop
from .shooting import (NonlinearElProblem, compare_lagrangians, energy_cost,
                       shoot, solve_linear_surrogate)
from .simulate import (DcMotorParams, DcMotorPlant, DisturbanceSpec, MismatchSpec,
                       NoiseSpec, NonlinearPlant, NonlinearPlantParams,
                       dc_motor_flat_map, dc_motor_lti)
from .tpbvp import BoundaryData, BvpSolution, eval_solution, horizon_scan, solve_tpbvp

log = logging.getLogger(__name__)

SCENARIO_SCHEMA = "flatplan-scenario/1"


def _req(block: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in block:
        raise ValueError(f"{path}.{key}: missing required field")
    return block[key]


@dataclass(frozen=True)
class Scenario:
    """Validated scenario file contents."""

    name: str
    seed: int
    plant_type: str                      # "dc_motor" | "cubic_first_order"
    plant_params: Any
    mismatch: MismatchSpec
    initial_state: tuple[float, ...] | None
    cost_lqr: tuple[np.ndarray, float] | None
    cost_jet: tuple[tuple[int, float, float], ...]
    boundary: BoundaryData
    horizon_T: float
    scan_grid: np.ndarray | None
    nu: int
    alpha: float
    gains: Gains
    tau: float
    h: float
    sigma: float
    disturbance: DisturbanceSpec


def load_scenario(source: str | Path | Mapping[str, Any]) -> Scenario:
    """Parse and validate a scenario mapping or JSON file."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    else:
        data = dict(source)

    schema = data.get("schema")
    if schema != SCENARIO_SCHEMA:
        raise ValueError(f"schema: expected {SCENARIO_SCHEMA!r}, got {schema!r}")

    plant = _req(data, "plant", "scenario")
    ptype = _req(plant, "type", "plant")
    params_block = dict(_req(plant, "params", "plant"))
    try:
        if ptype == "dc_motor":
            params = DcMotorParams(**params_block)
        elif ptype == "cubic_first_order":
            params = NonlinearPlantParams(**params_block)
        else:
            raise ValueError(f"unknown type {ptype!r}")
    except (TypeError, ValueError) as exc:
        raise ValueError(f"plant.params: {exc}") from None
    try:
        mismatch = MismatchSpec(plant.get("mismatch", {}))
        mismatch.apply(params)
    except ValueError as exc:
        raise ValueError(f"plant.mismatch: {exc}") from None
    initial = plant.get("initial_state")
    if initial is not None:
        initial = tuple(float(v) for v in initial)

    cost = data.get("cost", {})
    cost_lqr = None
    if "lqr" in cost:
        Q = np.array(_req(cost["lqr"], "Q", "cost.lqr"), dtype=float)
        R = float(_req(cost["lqr"], "R", "cost.lqr"))
        cost_lqr = (Q, R)
    cost_jet = tuple((int(o), float(w), float(c)) for o, w, c in cost.get("jet", []))

    boundary = _req(data, "boundary", "scenario")
    try:
        bc = BoundaryData(_req(boundary, "at0", "boundary"), _req(boundary, "atT", "boundary"))
    except ValueError as exc:
        raise ValueError(f"boundary: {exc}") from None

    horizon = _req(data, "horizon", "scenario")
    T = float(_req(horizon, "T", "horizon"))
    if T <= 0.0:
        raise ValueError("horizon.T: must be positive")
    scan = None
    if "scan" in horizon:
        s = horizon["scan"]
        start = float(_req(s, "start", "horizon.scan"))
        stop = float(_req(s, "stop", "horizon.scan"))
        step = float(_req(s, "step", "horizon.scan"))
        if not (0.0 < start < stop and step > 0.0):
            raise ValueError("horizon.scan: need 0 < start < stop and step > 0")
        scan = np.arange(start, stop + 0.5 * step, step)

    control = _req(data, "control", "scenario")
    nu = int(_req(control, "nu", "control"))
    alpha = float(_req(control, "alpha", "control"))
    kp = float(_req(control, "kp", "control"))
    kd = float(control.get("kd", 0.0))
    convention = control.get("gain_convention", "deviation")
    if convention == "flipped":
        # stored law is du = (-F + kp dy)/alpha: same controller with the
        # proportional gain negated relative to the deviation convention
        log.info("control.gain_convention=flipped: stored kp=%g becomes internal kp=%g",
                 kp, -kp)
        kp = -kp
    elif convention != "deviation":
        raise ValueError(f"control.gain_convention: unknown value {convention!r}")
    tau = float(_req(control, "tau", "control"))
    h = float(_req(control, "h", "control"))
    try:
        Homeostat(nu=nu, alpha=alpha, tau=tau)
    except ValueError as exc:
        raise ValueError(f"control: {exc}") from None
    if h <= 0.0:
        raise ValueError("control.h: sampling period must be positive")

    noise = data.get("noise", {})
    sigma = float(noise.get("sigma", 0.0))
    dist_block = data.get("disturbance", {"kind": "none"})
    try:
        disturbance = DisturbanceSpec(
            kind=dist_block.get("kind", "none"),
            amplitude=float(dist_block.get("amplitude", 0.0)),
            frequency=float(dist_block.get("frequency", 0.0)),
            t_on=float(dist_block.get("t_on", 0.0)),
            t_off=float(dist_block.get("t_off", 0.0)),
        )
    except ValueError as exc:
        raise ValueError(f"disturbance: {exc}") from None

    return Scenario(
        name=str(data.get("name", "scenario")),
        seed=int(data.get("seed", 0)),
        plant_type=ptype,
        plant_params=params,
        mismatch=mismatch,
        initial_state=initial,
        cost_lqr=cost_lqr,
        cost_jet=cost_jet,
        boundary=bc,
        horizon_T=T,
        scan_grid=scan,
        nu=nu,
        alpha=alpha,
        gains=Gains(kp=kp, kd=kd),
        tau=tau,
        h=h,
        sigma=sigma,
        disturbance=disturbance,
    )


def builtin_scenario_path(name: str) -> Path:
    """Filesystem path of a packaged reference scenario."""
    candidate = resources.files("flatplan").joinpath("scenarios", f"{name}.json")
    with resources.as_file(candidate) as path:
        if not path.exists():
            raise ValueError(f"no packaged scenario named {name!r}")
        return Path(path)


def formula_alpha(scn: Scenario) -> float:
    """Control gain computed from plant constants instead of the stored
    scenario value: the quasi-steady output-rate gain of the input."""
    p = scn.plant_params
    if scn.plant_type == "dc_motor":
        return p.a * p.d * p.u_dc / p.c
    return p.K_param / p.T_param


def _flat_model(scn: Scenario) -> tuple[Any, FlatMap]:
    if scn.plant_type != "dc_motor":
        raise ValueError(f"plant type {scn.plant_type!r} has no linear flat model; "
                         "use the shoot/compare subcommands")
    sys = dc_motor_lti(scn.plant_params)
    return sys, flat_parameterization(sys)


def build_cost_form(scn: Scenario) -> QuadraticJetForm:
    """Assemble the scenario cost: LQR block pushed through the flat map,
    plus any shifted-square jet terms; both blocks are summed."""
    parts: list[QuadraticJetForm] = []
    if scn.cost_lqr is not None:
        _, fmap = _flat_model(scn)
        try:
            parts.append(lqr_to_jet_form(fmap, scn.cost_lqr[0], scn.cost_lqr[1]))
        except ValueError as exc:
            raise ValueError(f"cost.lqr: {exc}") from None
    if scn.cost_jet:
        try:
            parts.append(shifted_form(scn.cost_jet))
        except ValueError as exc:
            raise ValueError(f"cost.jet: {exc}") from None
    if not parts:
        raise ValueError("cost: need an lqr and/or jet block")
    form = parts[0]
    for extra in parts[1:]:
        form = form + extra
    return form


def derive_ode(scn: Scenario) -> EulerLagrangeOde:
    form = build_cost_form(scn)
    ode = derive_el(form)
    if scn.boundary.nu * 2 != ode.order:
        raise ValueError(
            f"boundary: prescribes orders 0..{scn.boundary.nu - 1} but the "
            f"stationarity equation has order {ode.order}; need 0..{ode.order // 2 - 1}")
    return ode


def solve_plan(scn: Scenario) -> BvpSolution:
    ode = derive_ode(scn)
    return solve_tpbvp(ode, scn.boundary, scn.horizon_T)


def build_plan(scn: Scenario) -> Plan:
    """Control-grid reference: pointwise y*, ydot*, and zero-order-hold
    feedforward as exact interval averages of the continuous input."""
    h = scn.h
    steps = int(round(scn.horizon_T / h))
    if abs(steps * h - scn.horizon_T) > 1e-9 * scn.horizon_T:
        raise ValueError(f"control.h: horizon T={scn.horizon_T} is not a multiple of h={h}")
    times = np.arange(steps + 1) * h
    if scn.plant_type == "dc_motor":
        sol = solve_plan(scn)
        _, fmap = _flat_model(scn)
        u_row = fmap.row("u")
        jets = sol.eval_jet(times, 1)
        u_star = np.empty(steps + 1)
        for k in range(steps):
            u_star[k] = sum(cj * sol.interval_mean(j, times[k], times[k + 1])
                            for j, cj in enumerate(u_row))
        end_jet = sol.eval_jet(scn.horizon_T, len(u_row) - 1)[:, 0]
        u_star[steps] = float(np.dot(u_row, end_jet))
        return Plan(times=times, y_star=jets[0], ydot_star=jets[1], u_star=u_star)

    problem = shooting_problem(scn)
    shot = shoot(problem)
    traj = shot.trajectory
    ratio = h / traj.step
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError(f"control.h: {h} is not a multiple of the shot step {traj.step}")
    r = int(round(ratio))
    y = traj.channel("y")[::r]
    ydot = traj.channel("y_d1")[::r]
    u_fine = traj.channel("u_star")
    u_star = np.empty(steps + 1)
    for k in range(steps):
        u_star[k] = np.trapezoid(u_fine[k * r:(k + 1) * r + 1], dx=traj.step) / h
    u_star[steps] = u_fine[-1]
    return Plan(times=times, y_star=y, ydot_star=ydot, u_star=u_star)


def shooting_problem(scn: Scenario) -> NonlinearElProblem:
    if scn.plant_type != "cubic_first_order":
        raise ValueError(f"plant type {scn.plant_type!r} is not the nonlinear benchmark")
    return NonlinearElProblem(
        T_param=scn.plant_params.T_param,
        K_param=scn.plant_params.K_param,
        y_f=scn.boundary.atT[0],
        t_end=scn.horizon_T,
        y0=scn.boundary.at0[0],
    )


def build_plant(scn: Scenario, nominal: bool = False):
    mismatch = MismatchSpec() if nominal else scn.mismatch
    if scn.plant_type == "dc_motor":
        if scn.initial_state is not None:
            x0 = scn.initial_state
        else:
            x0 = (scn.boundary.at0[0], scn.boundary.at0[1] / scn.plant_params.a)
        return DcMotorPlant(scn.plant_params, mismatch, scn.disturbance, x0=x0)
    y0 = scn.initial_state[0] if scn.initial_state else scn.boundary.at0[0]
    return NonlinearPlant(scn.plant_params, mismatch, scn.disturbance, y0=y0)


def build_closed_loop(scn: Scenario, *, feedback: bool = True, nominal: bool = False,
                      saturate: bool = False, alpha: float | None = None,
                      seed: int | None = None, sigma: float | None = None) -> ClosedLoopScenario:
    """Assemble one tracking run from a scenario, with optional overrides."""
    plan = build_plan(scn)
    return ClosedLoopScenario(
        plan=plan,
        plant=build_plant(scn, nominal=nominal),
        homeostat=Homeostat(nu=scn.nu, alpha=scn.alpha if alpha is None else alpha,
                            tau=scn.tau),
        gains=scn.gains,
        noise=NoiseSpec(sigma=scn.sigma if sigma is None else sigma,
                        seed=scn.seed if seed is None else seed),
        saturate=saturate,
        feedback=feedback,
    )


# ---------------------------------------------------------------- output --

def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path: Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    rows = len(columns[0])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(rows):
            fh.write(",".join(_fmt(col[i]) for col in columns) + "\n")


def write_json(path: Path, payload: Mapping[str, Any]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def ode_text(ode: EulerLagrangeOde) -> str:
    terms = []
    for k in range(ode.order, -1, -1):
        c = ode.raw_coeffs[k]
        if c == 0.0:
            continue
        var = "z" if k == 0 else f"z^({k})"
        terms.append(f"{c:+.6g}*{var}")
    lhs = " ".join(terms).lstrip("+")
    return f"{lhs} = {ode.raw_rhs:.6g}"


# ----------------------------------------------------------- subcommands --

def cmd_derive(scn: Scenario, out: Path) -> int:
    ode = derive_ode(scn)
    print(f"stationarity equation ({scn.name}): {ode_text(ode)}")
    write_json(out / "derive.json", {
        "schema": "flatplan-derive/1",
        "order": ode.order,
        "coeffs_raw": list(ode.raw_coeffs),
        "rhs_raw": ode.raw_rhs,
        "coeffs_normalized": list(ode.coeffs),
        "rhs_normalized": ode.rhs,
        "scale": ode.scale,
    })
    return 0


def cmd_plan(scn: Scenario, out: Path) -> int:
    sol = solve_plan(scn)
    _, fmap = _flat_model(scn)
    nu = scn.boundary.nu
    h = scn.h
    steps = int(round(scn.horizon_T / h))
    times = np.arange(steps + 1) * h
    n_state = len(fmap.state_names())
    jets = sol.eval_jet(times, max(nu, n_state))
    header = ["t"] + [jet_channel(k) for k in range(nu + 1)] + ["u_star"]
    cols = [times] + [jets[k] for k in range(nu + 1)]
    u_row = np.array(fmap.row("u"))
    cols.append(u_row @ jets[:len(u_row)])
    physical = dc_motor_flat_map(scn.plant_params)
    for name in physical.state_names():
        header.append(name)
        cols.append(np.array([evaluate_variable(physical, name, jets[:, i])
                              for i in range(times.size)]))
    write_csv(out / "plan.csv", header, cols)
    print(f"plan written: {out / 'plan.csv'} ({steps + 1} samples, "
          f"condition {sol.condition_estimate:.3g})")
    return 0


def cmd_horizon(scn: Scenario, out: Path) -> int:
    if scn.scan_grid is None:
        raise ValueError("horizon.scan: missing (required by the horizon subcommand)")
    ode = derive_ode(scn)
    form = build_cost_form(scn)
    result = horizon_scan(ode, scn.boundary, form, scn.scan_grid)
    write_csv(out / "horizon.csv", ["T", "J"], [result.t_values, result.j_values])
    write_json(out / "horizon.json", {
        "schema": "flatplan-horizon/1",
        "T0": result.t_opt,
        "J0": result.j_opt,
        "bracketed": result.bracketed,
    })
    print(f"horizon scan: T0 = {result.t_opt:.6g} (J0 = {result.j_opt:.6g}, "
          f"bracketed = {result.bracketed})")
    return 0


def cmd_simulate(scn: Scenario, out: Path, saturate: bool = False,
                 alpha: float | None = None) -> int:
    run = build_closed_loop(scn, saturate=saturate, alpha=alpha)
    result = run_closed_loop(run)
    traj = result.trajectory
    header = ["t", "y_star", "y_meas", "y_true", "u_star", "u", "F_est"]
    cols = [traj.times] + [traj.channel(name) for name in header[1:]]
    write_csv(out / "simulate.csv", header, cols)
    write_json(out / "simulate.json", {
        "schema": "flatplan-simulate/1",
        "alpha": run.homeostat.alpha,
        **result.metrics,
    })
    print("closed loop: " + ", ".join(f"{k} = {v:.6g}" for k, v in result.metrics.items()))
    return 0


def cmd_shoot(scn: Scenario, out: Path) -> int:
    problem = shooting_problem(scn)
    shot = shoot(problem)
    j_opt = energy_cost(shot.trajectory, problem)
    j_lin = energy_cost(solve_linear_surrogate(problem), problem)
    traj = shot.trajectory
    header = ["t", "y", "y_d1", "y_d2", "u_star"]
    cols = [traj.times] + [traj.channel(n) for n in header[1:]]
    write_csv(out / "shoot.csv", header, cols)
    write_json(out / "shoot.json", {
        "schema": "flatplan-shoot/1",
        "v_star": shot.v_star,
        "J_energ": j_opt,
        "J_energ_linear_plan": j_lin,
    })
    print(f"shot converged: v* = {shot.v_star:.8g}, J_energ = {j_opt:.6g}")
    return 0


def cmd_compare(scn: Scenario, out: Path) -> int:
    comparison = compare_lagrangians(shooting_problem(scn))
    write_json(out / "compare.json", {
        "schema": "flatplan-compare/1",
        "J_energ_optimal": comparison.j_energy_optimal,
        "J_energ_linear_plan": comparison.j_energy_linear_plan,
        "optimal_is_better": bool(comparison.j_energy_optimal < comparison.j_energy_linear_plan),
    })
    print(f"energy cost: optimal plan {comparison.j_energy_optimal:.6g}, "
          f"quadratic-surrogate plan {comparison.j_energy_linear_plan:.6g}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="flatplan",
        description="flat-output trajectory planning and homeostat-based tracking")
    parser.add_argument("command",
                        choices=["derive", "plan", "horizon", "simulate", "shoot", "compare"])
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument("--out", default="out", help="output directory (created on demand)")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--saturate", action="store_true",
                        help="clamp the control to the plant input bounds")
    parser.add_argument("--alpha-from-formula", action="store_true",
                        help="use the plant-constant control gain instead of the stored one")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        scn = load_scenario(args.scenario)
        if args.seed is not None:
            scn = dataclasses.replace(scn, seed=args.seed)
        if args.alpha_from_formula:
            alpha = formula_alpha(scn)
            log.info("alpha from plant constants: %.6g (stored value %.6g)", alpha, scn.alpha)
            scn = dataclasses.replace(scn, alpha=alpha)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "derive":
            return cmd_derive(scn, out)
        if args.command == "plan":
            return cmd_plan(scn, out)
        if args.command == "horizon":
            return cmd_horizon(scn, out)
        if args.command == "simulate":
            return cmd_simulate(scn, out, saturate=args.saturate)
        if args.command == "shoot":
            return cmd_shoot(scn, out)
        return cmd_compare(scn, out)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
