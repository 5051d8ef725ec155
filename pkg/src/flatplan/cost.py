"""Quadratic Lagrangians in flat-output jet coordinates.

A cost integrand is stored in expanded form

    L(z, zdot, ..., z^(nu)) = jet' P jet + q' jet + r

which accommodates several shifted squares sum_k w_k (z^(mu_k) - chi_k)^2
with different centers on the same derivative order, as well as state/input
LQR costs pushed through a flat parameterization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .lti import FlatMap, JetPoint

# Positive-definiteness margin, relative to the largest eigenvalue.  The
# expanded forms used here can be legitimately near-singular (input weights
# scale with the inverse squared plant gain), so the margin is small.
PD_RTOL = 1e-12


def jet_channel(k: int) -> str:
    """Canonical trajectory channel name of the k-th flat-output derivative."""
    return "z" if k == 0 else f"z_d{k}"


@dataclass(frozen=True)
class QuadraticJetForm:
    """Expanded quadratic integrand over jet coordinates (z, ..., z^(nu))."""

    P: np.ndarray
    q: np.ndarray
    r: float

    def __init__(self, P, q, r: float = 0.0):
        P = np.array(P, dtype=float)
        q = np.array(q, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("P must be a square matrix")
        if q.shape != (P.shape[0],):
            raise ValueError("q must match the dimension of P")
        if not np.allclose(P, P.T, rtol=1e-12, atol=1e-12 * max(1.0, float(np.abs(P).max()))):
            raise ValueError("P must be symmetric")
        P = 0.5 * (P + P.T)        # exact symmetry, bitwise
        P.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", float(r))

    @property
    def nu(self) -> int:
        """Highest derivative order appearing in the form."""
        return self.P.shape[0] - 1

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.P)

    def is_positive_definite(self, rtol: float = PD_RTOL) -> bool:
        ev = self.eigenvalues()
        return ev[-1] > 0.0 and ev[0] > rtol * ev[-1]

    def is_positive_semidefinite(self, rtol: float = PD_RTOL) -> bool:
        ev = self.eigenvalues()
        return ev[0] >= -rtol * max(ev[-1], 1.0)

    def evaluate(self, jet: JetPoint | Sequence[float]) -> float:
        values = jet.values if isinstance(jet, JetPoint) else tuple(jet)
        n = self.nu + 1
        if len(values) < n:
            raise ValueError(f"jet too short: form needs orders 0..{self.nu}, got {len(values) - 1}")
        v = np.asarray(values[:n], dtype=float)
        return float(v @ self.P @ v + self.q @ v + self.r)

    def padded(self, nu: int) -> "QuadraticJetForm":
        """Same form viewed over jet coordinates up to order ``nu``."""
        if nu < self.nu:
            raise ValueError("cannot pad to a lower order")
        n, m = self.nu + 1, nu + 1
        P = np.zeros((m, m))
        P[:n, :n] = self.P
        q = np.zeros(m)
        q[:n] = self.q
        return QuadraticJetForm(P, q, self.r)

    def __add__(self, other: "QuadraticJetForm") -> "QuadraticJetForm":
        nu = max(self.nu, other.nu)
        a, b = self.padded(nu), other.padded(nu)
        return QuadraticJetForm(a.P + b.P, a.q + b.q, a.r + b.r)

    def __rmul__(self, scalar: float) -> "QuadraticJetForm":
        return QuadraticJetForm(scalar * self.P, scalar * self.q, scalar * self.r)


def shifted_form(terms: Iterable[tuple[int, float, float]]) -> QuadraticJetForm:
    """Build ``sum_k w_k (z^(order_k) - center_k)^2`` in expanded form.

    Duplicate orders are summed.  Weights must be positive.
    """
    terms = [(int(o), float(w), float(c)) for o, w, c in terms]
    if not terms:
        raise ValueError("need at least one (order, weight, center) term")
    nu = max(o for o, _, _ in terms)
    P = np.zeros((nu + 1, nu + 1))
    q = np.zeros(nu + 1)
    r = 0.0
    for order, weight, center in terms:
        if order < 0:
            raise ValueError(f"negative derivative order {order}")
        if weight <= 0.0:
            raise ValueError(f"weight for order {order} must be positive, got {weight}")
        P[order, order] += weight
        q[order] += -2.0 * weight * center
        r += weight * center ** 2
    return QuadraticJetForm(P, q, r)


def lqr_to_jet_form(fmap: FlatMap, Q, R: float) -> QuadraticJetForm:
    """Express ``x' Q x + R u^2`` in flat-output jet coordinates.

    Every state row and the input row of ``fmap`` is substituted for its
    variable and the quadratic is collected; the result has nu equal to the
    order of the input row (n for a canonical system).
    """
    Q = np.array(Q, dtype=float)
    states = fmap.state_names()
    n = len(states)
    if Q.shape != (n, n):
        raise ValueError(f"Q must be {n}x{n} for {n} states, got {Q.shape}")
    if not np.allclose(Q, Q.T):
        raise ValueError("Q must be symmetric")
    evq = np.linalg.eigvalsh(0.5 * (Q + Q.T))
    if evq[0] <= 0.0:
        raise ValueError(f"Q is not positive-definite (smallest eigenvalue {evq[0]:.6g})")
    R = float(np.asarray(R).reshape(()))
    if R <= 0.0:
        raise ValueError(f"R must be positive, got {R}")

    u_row = fmap.row("u")
    m = len(u_row)                      # n + 1 jet coordinates
    X = np.zeros((n, m))
    for i, name in enumerate(states):
        row = fmap.row(name)
        X[i, :len(row)] = row
    u = np.asarray(u_row)
    P = X.T @ Q @ X + R * np.outer(u, u)
    return QuadraticJetForm(P, np.zeros(m), 0.0)


def evaluate_lagrangian(form: QuadraticJetForm, jet: JetPoint | Sequence[float]) -> float:
    """Integrand value at one jet point."""
    return form.evaluate(jet)


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled time series: named channels over a shared grid."""

    times: np.ndarray
    channels: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __init__(self, times, channels):
        times = np.asarray(times, dtype=float)
        channels = {k: np.asarray(v, dtype=float) for k, v in channels.items()}
        if times.ndim != 1 or times.size < 2:
            raise ValueError("need a one-dimensional grid with at least two samples")
        steps = np.diff(times)
        h = steps[0]
        if h <= 0.0 or np.any(np.abs(steps - h) > 1e-9 * max(h, 1.0)):
            raise ValueError("time grid must be uniform with positive step")
        for name, v in channels.items():
            if v.shape != times.shape:
                raise ValueError(f"channel {name!r} length {v.shape} != grid length {times.shape}")
            v.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "channels", channels)

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise ValueError(f"trajectory has no channel {name!r}; have {sorted(self.channels)}") from None

    def jet_matrix(self, nu: int, prefix: str = "z") -> np.ndarray:
        """Stack derivative channels 0..nu as a (nu+1, len(times)) array."""
        names = [prefix if k == 0 else f"{prefix}_d{k}" for k in range(nu + 1)]
        return np.vstack([self.channel(n) for n in names])


def simpson(values: np.ndarray, dx: float) -> float:
    """Composite Simpson rule on a uniform grid.

    An odd interval count is handled with a 3/8 rule on the last three
    intervals, preserving fourth-order accuracy.
    """
    y = np.asarray(values, dtype=float)
    n = y.size - 1
    if n < 2:
        raise ValueError("Simpson quadrature needs at least three samples")
    if n % 2 == 0:
        return float(dx / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-2:2].sum()))
    head = 0.0
    if n > 3:
        head = simpson(y[:n - 2], dx)
    tail = 3.0 * dx / 8.0 * (y[-4] + 3.0 * y[-3] + 3.0 * y[-2] + y[-1])
    return float(head + tail)


def integrate_cost(form: QuadraticJetForm, traj: Trajectory) -> float:
    """Criterion value: Simpson quadrature of the integrand along ``traj``.

    The trajectory must carry flat-output jet channels up to the form's
    order (``z``, ``z_d1``, ...).
    """
    if traj.times.size < 3:
        raise ValueError("cost integration needs at least three samples")
    jets = traj.jet_matrix(form.nu)
    integrand = np.einsum("it,ij,jt->t", jets, form.P, jets) + form.q @ jets + form.r
    return simpson(integrand, traj.step)
