"""Homeostat-based closed-loop tracking around a planned trajectory.

The loop models the tracking deviation by the low-order input-output
relation  d^nu/dt^nu dy = F + alpha du  (nu = 1 or 2), where F lumps
neglected dynamics, parameter mismatch and disturbances.  F is estimated
over a sliding window by annihilator integrals evaluated with the
trapezoid rule, and cancelled by an intelligent-P or -PD correction on top
of the nominal feedforward:

    iP:   du = -(F_est + K_P dy) / alpha
    iPD:  du = -(F_est + K_P dy + K_D d(dy)) / alpha

Before the window has filled (the first tau seconds) the emitted control
is exactly the feedforward.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .cost import Trajectory
from .errors import NumericalFailure
from .simulate import NoiseSpec, gaussian_stream

log = logging.getLogger(__name__)

STATE_CAP = 1e12


@dataclass(frozen=True)
class Homeostat:
    """Deviation model order nu, control gain alpha, estimation window tau."""

    nu: int
    alpha: float
    tau: float

    def __post_init__(self):
        if self.nu not in (1, 2):
            raise ValueError("homeostat order nu must be 1 or 2")
        if self.alpha == 0.0:
            raise ValueError("control gain alpha must be nonzero")
        if self.tau <= 0.0:
            raise ValueError("estimation window tau must be positive")


@dataclass(frozen=True)
class Gains:
    """Proportional and derivative gains; K_D is ignored when nu = 1."""

    kp: float
    kd: float = 0.0


class Window:
    """Ring buffer of the last tau/h sampling intervals of (dy, du).

    Holds N + 1 = tau/h + 1 samples so the trapezoid rule spans exactly
    [t - tau, t]; the estimator is defined only once the buffer is full.
    """

    def __init__(self, tau: float, h: float):
        n = tau / h
        if h <= 0.0 or abs(n - round(n)) > 1e-9 * max(n, 1.0):
            raise ValueError(f"window tau={tau} must be a positive integer multiple of h={h}")
        self.tau = float(tau)
        self.h = float(h)
        self.n_intervals = int(round(n))
        if self.n_intervals < 2:
            raise ValueError("window must span at least two sampling intervals")
        self._dy = deque(maxlen=self.n_intervals + 1)
        self._du = deque(maxlen=self.n_intervals + 1)

    def push(self, dy: float, du: float) -> None:
        self._dy.append(float(dy))
        self._du.append(float(du))

    @property
    def full(self) -> bool:
        return len(self._dy) == self.n_intervals + 1

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self._dy), np.array(self._du)

    def sigma(self) -> np.ndarray:
        """Window-local time of each sample, 0 .. tau."""
        return np.arange(self.n_intervals + 1) * self.h


def estimate_f_nu1(window: Window, alpha: float, tau: float | None = None) -> float | None:
    """First-order lumped-dynamics estimate over the window.

    Trapezoidal evaluation of
        F = -(6/tau^3) int_0^tau [ (tau - 2 s) dy(s) + s (tau - s) alpha du(s) ] ds
    where s runs across the window.  The kernels annihilate constant
    offsets and reproduce a constant F exactly in the continuous limit.
    Returns None while the window is still warming up.
    """
    if not window.full:
        return None
    tau = window.tau if tau is None else tau
    s = window.sigma()
    dy, du = window.arrays()
    integrand = (tau - 2.0 * s) * dy + s * (tau - s) * alpha * du
    return float(-6.0 / tau ** 3 * np.trapezoid(integrand, dx=window.h))


def estimate_f_nu2(window: Window, alpha: float, tau: float | None = None) -> float | None:
    """Second-order lumped-dynamics estimate over the window.

    Trapezoidal evaluation of
        F = (60/tau^5) [ int ((tau-s)^2 - 4 (tau-s) s + s^2) dy(s) ds
                         - 1/2 int (tau-s)^2 s^2 alpha du(s) ds ]
    whose kernels annihilate affine dy and reproduce constant F.
    """
    if not window.full:
        return None
    tau = window.tau if tau is None else tau
    s = window.sigma()
    dy, du = window.arrays()
    ky = (tau - s) ** 2 - 4.0 * (tau - s) * s + s ** 2
    ku = 0.5 * (tau - s) ** 2 * s ** 2
    iy = np.trapezoid(ky * dy, dx=window.h)
    iu = np.trapezoid(ku * alpha * du, dx=window.h)
    return float(60.0 / tau ** 5 * (iy - iu))


def ip_control(f_est: float, delta_y: float, gains: Gains, homeostat: Homeostat) -> float:
    """Intelligent-P correction: cancel the estimate, impose first-order
    error decay at rate K_P."""
    return -(f_est + gains.kp * delta_y) / homeostat.alpha


def ipd_control(f_est: float, delta_y: float, delta_y_dot: float,
                gains: Gains, homeostat: Homeostat) -> float:
    """Intelligent-PD correction for the second-order deviation model."""
    return -(f_est + gains.kp * delta_y + gains.kd * delta_y_dot) / homeostat.alpha


@dataclass(frozen=True)
class Plan:
    """Reference trajectory on the control grid.

    u_star must be the zero-order-hold feedforward: entry k is applied on
    [t_k, t_{k+1}).  Planners provide interval averages so that impulse-like
    transients of the continuous plan survive sampling.
    """

    times: np.ndarray
    y_star: np.ndarray
    ydot_star: np.ndarray
    u_star: np.ndarray

    def __post_init__(self):
        for name in ("times", "y_star", "ydot_star", "u_star"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.times.size
        for name in ("y_star", "ydot_star", "u_star"):
            if getattr(self, name).size != n:
                raise ValueError(f"plan channel {name} length differs from the grid")

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class ClosedLoopScenario:
    """Everything one tracking run needs."""

    plan: Plan
    plant: object                    # DcMotorPlant / NonlinearPlant / compatible
    homeostat: Homeostat
    gains: Gains
    noise: NoiseSpec = NoiseSpec()
    saturate: bool = False
    feedback: bool = True            # False: pure feedforward (open loop)


@dataclass(frozen=True)
class ClosedLoopResult:
    """Logged channels on the control grid plus tracking metrics."""

    trajectory: Trajectory
    metrics: Mapping[str, float] = field(default_factory=dict)


def run_closed_loop(scn: ClosedLoopScenario) -> ClosedLoopResult:
    """Run one deterministic tracking experiment.

    Per control instant: sample the measurement (true output plus noise),
    form the deviation against the plan, estimate F once the window is
    full, apply the iP/iPD correction on top of the feedforward, then
    advance the plant over one sampling period.  State overflow aborts
    with the divergence time.
    """
    plan = scn.plan
    h = plan.h
    steps = plan.times.size - 1
    window = Window(scn.homeostat.tau, h)
    noise = gaussian_stream(scn.noise)
    plant = scn.plant

    y_true = np.empty(steps + 1)
    y_meas = np.empty(steps + 1)
    u_out = np.empty(steps + 1)
    f_out = np.zeros(steps + 1)
    du_prev = 0.0
    saturated = 0

    estimator = estimate_f_nu1 if scn.homeostat.nu == 1 else estimate_f_nu2
    for k in range(steps + 1):
        t = float(plan.times[k])
        y = plant.output
        if not math.isfinite(y) or abs(y) > STATE_CAP:
            raise NumericalFailure(f"closed loop diverged at t = {t:.6g} (|y| = {abs(y):.3g})")
        y_true[k] = y
        y_meas[k] = y + next(noise)
        dy = y_meas[k] - plan.y_star[k]
        window.push(dy, du_prev)

        du = 0.0
        if scn.feedback:
            f_est = estimator(window, scn.homeostat.alpha)
            if f_est is not None:
                f_out[k] = f_est
                if scn.homeostat.nu == 1:
                    du = ip_control(f_est, dy, scn.gains, scn.homeostat)
                else:
                    dy_dot = _measured_rate(y_meas, k, h) - plan.ydot_star[k]
                    du = ipd_control(f_est, dy, dy_dot, scn.gains, scn.homeostat)
        u = plan.u_star[k] + du
        bounds = getattr(plant, "input_bounds", None)
        if bounds is not None and not (bounds[0] < u < bounds[1]):
            saturated += 1
            if scn.saturate:
                u = min(max(u, bounds[0]), bounds[1])
        u_out[k] = u
        if k == steps:
            break
        du_prev = du
        plant.advance(u, t, h)

    if saturated:
        verb = "clipped to" if scn.saturate else "left"
        log.warning("control %s its bounds on %d of %d samples", verb, saturated, steps + 1)

    warmup = scn.homeostat.tau
    mask = plan.times >= warmup
    err = y_true - plan.y_star
    metrics = {
        "rms_err": float(np.sqrt(np.mean(err[mask] ** 2))),
        "max_err": float(np.max(np.abs(err[mask]))),
        "terminal_err": float(abs(err[-1])),
        "warmup_s": float(warmup),
    }
    traj = Trajectory(plan.times, {
        "y_star": plan.y_star,
        "y_meas": y_meas,
        "y_true": y_true,
        "u_star": plan.u_star,
        "u": u_out,
        "F_est": f_out,
    })
    return ClosedLoopResult(trajectory=traj, metrics=metrics)


def _measured_rate(y_meas: np.ndarray, k: int, h: float) -> float:
    """Backward three-point difference of the measured output (zero during
    the first two samples, which fall inside the estimator warm-up)."""
    if k < 2:
        return 0.0
    return (3.0 * y_meas[k] - 4.0 * y_meas[k - 1] + y_meas[k - 2]) / (2.0 * h)
