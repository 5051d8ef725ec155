"""Stationarity equation of a quadratic jet-coordinate criterion.

For L = jet' P jet + q' jet + r the first variation gives a linear
constant-coefficient ODE of order 2 nu:

    sum_{j,k} 2 (-1)^j P[j][k] z^(j+k) = -q[0]

Only the order-0 linear term survives on the right-hand side: time
derivatives of the constant q entries vanish.  The characteristic polynomial
is even, p(s) = p(-s), so odd-order coefficients are identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import PD_RTOL, QuadraticJetForm


@dataclass(frozen=True)
class EulerLagrangeOde:
    """Linear constant-coefficient ODE with constant right-hand side.

    ``coeffs[k]`` multiplies z^(k) after normalizing the leading coefficient
    to one; ``scale`` is the original leading coefficient, so the raw
    equation is ``scale * (sum coeffs[k] z^(k)) = scale * rhs``.
    Normalization keeps root finding well conditioned when the raw
    coefficients span many orders of magnitude.
    """

    coeffs: tuple[float, ...]
    rhs: float
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "rhs", float(self.rhs))
        object.__setattr__(self, "scale", float(self.scale))
        if len(self.coeffs) < 1:
            raise ValueError("ODE needs at least one coefficient")
        if self.coeffs[-1] == 0.0 and len(self.coeffs) > 1:
            raise ValueError("leading coefficient must be nonzero")
        if self.scale == 0.0:
            raise ValueError("scale must be nonzero")

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def raw_coeffs(self) -> tuple[float, ...]:
        return tuple(self.scale * c for c in self.coeffs)

    @property
    def raw_rhs(self) -> float:
        return self.scale * self.rhs

    def char_value(self, s: complex) -> complex:
        """Characteristic polynomial p(s) (normalized coefficients)."""
        acc = 0.0 + 0.0j
        for c in reversed(self.coeffs):
            acc = acc * s + c
        return acc


def derive_el(form: QuadraticJetForm) -> EulerLagrangeOde:
    """Euler-Lagrange ODE of a quadratic jet form.

    Indefinite forms are rejected; positive-semidefinite forms are accepted
    (the stationarity equation remains meaningful as long as the leading
    block is nonzero).  Coefficient assembly pairs (j,k) with (k,j) so that
    odd-order coefficients cancel exactly, not just to rounding.
    """
    ev = form.eigenvalues()
    if ev[0] < -PD_RTOL * max(ev[-1], 1.0):
        raise ValueError(
            f"indefinite cost form: smallest eigenvalue {ev[0]:.6g} is negative")
    nu = form.nu
    P = form.P
    raw = [0.0] * (2 * nu + 1)
    for j in range(nu + 1):
        raw[2 * j] += 2.0 * (-1.0) ** j * P[j, j]
        for k in range(j + 1, nu + 1):
            sign = (-1.0) ** j + (-1.0) ** k          # exactly 0 for odd j+k
            raw[j + k] += 2.0 * sign * P[j, k]
    raw_rhs = -form.q[0]
    while len(raw) > 1 and raw[-1] == 0.0:
        raw.pop()
    scale = raw[-1]
    if scale == 0.0:
        raise ValueError("degenerate form: the stationarity equation vanishes")
    return EulerLagrangeOde(
        coeffs=tuple(c / scale for c in raw),
        rhs=raw_rhs / scale,
        scale=scale,
    )
