"""Deterministic fixed-step plant simulation.

Plants: the two-state DC drive (speed/current with load-torque disturbance
and chopper duty-cycle input), the cubic first-order benchmark plant, and
generic controllable-canonical LTI systems.  Integration is classical RK4
with the input held constant over each step (zero-order hold); replay
helpers additionally support continuously sampled inputs for checking that
a planned (u*, y*) pair is dynamically consistent with the plant model.

Measurement noise is generated by the Marsaglia polar method on top of the
stdlib Mersenne Twister, so streams are bit-reproducible per seed across
platforms and library versions.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .cost import Trajectory
from .lti import FlatMap, LtiSiso, make_canonical

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DcMotorParams:
    """Aggregate constants of the DC drive state model.

    a: torque constant over inertia, b: back-emf constant over inductance,
    c: resistance over inductance, d: inverse inductance, e: inverse
    inertia; u_dc is the chopper bus voltage, so the physical armature
    voltage is u_dc times the duty cycle.
    """

    a: float = 0.970
    b: float = 171.0
    c: float = 30.3
    d: float = 65.1
    e: float = 0.370
    u_dc: float = 500.0

    def __post_init__(self):
        for name in ("a", "b", "c", "d", "e", "u_dc"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"parameter {name} must be positive")

    @property
    def input_gain(self) -> float:
        """Gain from duty cycle to the speed equation: a * d * u_dc."""
        return self.a * self.d * self.u_dc


@dataclass(frozen=True)
class NonlinearPlantParams:
    """Cubic first-order plant  T ydot + y^3 = K u."""

    T_param: float = 2.0
    K_param: float = 0.1

    def __post_init__(self):
        if self.T_param <= 0.0:
            raise ValueError("T_param must be positive")
        if self.K_param == 0.0:
            raise ValueError("K_param must be nonzero")


@dataclass(frozen=True)
class DisturbanceSpec:
    """Additive load disturbance: none, or a sine burst on [t_on, t_off]."""

    kind: str = "none"              # "none" | "sine_burst"
    amplitude: float = 0.0
    frequency: float = 0.0          # rad/s
    t_on: float = 0.0
    t_off: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "sine_burst"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.t_on > self.t_off:
            raise ValueError("t_on must not exceed t_off")


NO_DISTURBANCE = DisturbanceSpec()


def disturbance_value(spec: DisturbanceSpec, t: float) -> float:
    """Disturbance sample: amplitude * sin(frequency * t) inside the burst
    window, zero outside."""
    if spec.kind == "none":
        return 0.0
    if spec.t_on <= t <= spec.t_off:
        return spec.amplitude * math.sin(spec.frequency * t)
    return 0.0


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian measurement noise with a reproducible stream per seed."""

    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")


def gaussian_stream(spec: NoiseSpec) -> Iterator[float]:
    """Endless N(0, sigma^2) samples, bit-reproducible for a fixed seed.

    Marsaglia polar method over random.Random; the algorithm is pinned here
    rather than delegated so that the stream never changes underneath a
    stored scenario.
    """
    if spec.sigma == 0.0:
        while True:
            yield 0.0
    rng = random.Random(spec.seed)
    while True:
        while True:
            u = 2.0 * rng.random() - 1.0
            v = 2.0 * rng.random() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        m = math.sqrt(-2.0 * math.log(s) / s)
        yield spec.sigma * u * m
        yield spec.sigma * v * m


@dataclass(frozen=True)
class MismatchSpec:
    """Multiplicative factors applied to named plant parameters of the
    simulated (true) plant; the planner keeps the nominal values."""

    factors: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "factors", dict(self.factors))
        for name, f in self.factors.items():
            if f <= 0.0:
                raise ValueError(f"mismatch factor for {name!r} must be positive")

    def factor(self, name: str) -> float:
        return self.factors.get(name, 1.0)

    def apply(self, params):
        """New params dataclass with the factors applied (names validated)."""
        known = set(params.__dataclass_fields__)
        unknown = set(self.factors) - known
        if unknown:
            raise ValueError(f"mismatch names {sorted(unknown)} not in {sorted(known)}")
        updates = {n: getattr(params, n) * self.factor(n) for n in known}
        return type(params)(**updates)


NO_MISMATCH = MismatchSpec()


def _rk4(f: Callable[[float, np.ndarray], np.ndarray], t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def dc_motor_rhs(state: np.ndarray, u: float, tau_l: float, params: DcMotorParams) -> np.ndarray:
    """State derivative of (speed, current) under duty cycle u and load tau_l."""
    x1, x2 = state
    return np.array([
        params.a * x2 - params.e * tau_l,
        -params.b * x1 - params.c * x2 + params.d * params.u_dc * u,
    ])


def step_dc_motor(state, u: float, tau_l: float, params: DcMotorParams, h: float) -> np.ndarray:
    """One RK4 step with u and tau_l held constant over the step."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    x = np.asarray(state, dtype=float)
    return _rk4(lambda t, s: dc_motor_rhs(s, u, tau_l, params), 0.0, x, h)


def nonlinear_rhs(y: float, u: float, params: NonlinearPlantParams) -> float:
    return (params.K_param * u - y ** 3) / params.T_param


def step_nonlinear(y: float, u: float, params: NonlinearPlantParams, h: float) -> float:
    """One RK4 step of the cubic plant with u held constant."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    x = np.array([float(y)])
    out = _rk4(lambda t, s: np.array([nonlinear_rhs(s[0], u, params)]), 0.0, x, h)
    return float(out[0])


def dc_motor_lti(params: DcMotorParams) -> LtiSiso:
    """Canonical transfer model of the speed output with zero load:
    a*d*u_dc / (s^2 + c s + a b)."""
    return make_canonical([params.a * params.b, params.c], params.input_gain)


def dc_motor_flat_map(params: DcMotorParams) -> FlatMap:
    """Physical-variable parameterization by the speed output: x1 is the
    speed itself, x2 the armature current, and u the duty cycle."""
    gain = params.input_gain
    return FlatMap(rows={
        "x1": (1.0,),
        "x2": (0.0, 1.0 / params.a),
        "u": (params.b / (params.d * params.u_dc), params.c / gain, 1.0 / gain),
    })


class DcMotorPlant:
    """Stateful DC drive for closed-loop runs: zero-order-hold input, the
    control period subdivided into integrator substeps, disturbance
    sampled at substep boundaries."""

    input_bounds: tuple[float, float] | None = (0.0, 1.0)

    def __init__(self, params: DcMotorParams, mismatch: MismatchSpec = NO_MISMATCH,
                 disturbance: DisturbanceSpec = NO_DISTURBANCE, substeps: int = 10,
                 x0: Sequence[float] = (0.0, 0.0)):
        self.params = mismatch.apply(params)
        self.disturbance = disturbance
        self.substeps = int(substeps)
        self.x = np.array(x0, dtype=float)
        if self.x.shape != (2,):
            raise ValueError("DC drive state is (speed, current)")

    @property
    def output(self) -> float:
        return float(self.x[0])

    def advance(self, u: float, t: float, h: float) -> None:
        hs = h / self.substeps
        for j in range(self.substeps):
            tau = disturbance_value(self.disturbance, t + j * hs)
            self.x = step_dc_motor(self.x, u, tau, self.params, hs)


class NonlinearPlant:
    """Stateful cubic plant for closed-loop runs."""

    input_bounds: tuple[float, float] | None = None

    def __init__(self, params: NonlinearPlantParams, mismatch: MismatchSpec = NO_MISMATCH,
                 disturbance: DisturbanceSpec = NO_DISTURBANCE, substeps: int = 10,
                 y0: float = 0.0):
        self.params = mismatch.apply(params)
        self.disturbance = disturbance
        self.substeps = int(substeps)
        self.y = float(y0)

    @property
    def output(self) -> float:
        return self.y

    def advance(self, u: float, t: float, h: float) -> None:
        hs = h / self.substeps
        for j in range(self.substeps):
            d = disturbance_value(self.disturbance, t + j * hs)
            self.y = step_nonlinear(self.y, u + d, self.params, hs)


class CanonicalLtiPlant:
    """Stateful controllable-canonical LTI plant xdot_n = -a.x + b u."""

    input_bounds: tuple[float, float] | None = None

    def __init__(self, a: Sequence[float], b: float, substeps: int = 10,
                 x0: Sequence[float] | None = None):
        self.a = np.array(a, dtype=float)
        self.b = float(b)
        self.substeps = int(substeps)
        n = self.a.size
        self.x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
        if self.x.shape != (n,):
            raise ValueError(f"state must have length {n}")

    @property
    def output(self) -> float:
        return float(self.x[0])

    def _rhs(self, t: float, x: np.ndarray, u: float) -> np.ndarray:
        dx = np.empty_like(x)
        dx[:-1] = x[1:]
        dx[-1] = -self.a @ x + self.b * u
        return dx

    def advance(self, u: float, t: float, h: float) -> None:
        hs = h / self.substeps
        for _ in range(self.substeps):
            self.x = _rk4(lambda tt, s: self._rhs(tt, s, u), t, self.x, hs)


def replay_dc_motor(params: DcMotorParams, u_of_t: Callable[[float], float],
                    t_end: float, h: float = 1e-3,
                    x0: Sequence[float] = (0.0, 0.0),
                    tau_l_of_t: Callable[[float], float] | None = None,
                    t0: float = 0.0) -> Trajectory:
    """Open-loop replay with the input sampled at the RK4 stage times.

    This closes the planning loop: feeding an exactly parameterized input
    back into the plant model must reproduce the planned output to
    integrator accuracy, without zero-order-hold bias.
    """
    tau_fn = tau_l_of_t or (lambda t: 0.0)
    n = int(round((t_end - t0) / h))
    x = np.array(x0, dtype=float)
    ys = np.empty(n + 1)
    cur = np.empty(n + 1)
    ys[0], cur[0] = x
    for i in range(n):
        t = t0 + i * h
        x = _rk4(lambda tt, s: dc_motor_rhs(s, u_of_t(tt), tau_fn(tt), params), t, x, h)
        ys[i + 1], cur[i + 1] = x
    times = t0 + np.arange(n + 1) * h
    return Trajectory(times, {"y": ys, "x2": cur})


def replay_nonlinear(params: NonlinearPlantParams, u_of_t: Callable[[float], float],
                     t_end: float, h: float = 1e-3, y0: float = 0.0,
                     t0: float = 0.0) -> Trajectory:
    """Open-loop replay of the cubic plant with stage-time input sampling."""
    n = int(round((t_end - t0) / h))
    y = np.empty(n + 1)
    y[0] = y0
    state = np.array([float(y0)])
    for i in range(n):
        t = t0 + i * h
        state = _rk4(lambda tt, s: np.array([nonlinear_rhs(s[0], u_of_t(tt), params)]), t, state, h)
        y[i + 1] = state[0]
    times = t0 + np.arange(n + 1) * h
    return Trajectory(times, {"y": y})
