"""SISO LTI plant models and their flat-output parameterization.

Systems are stored as transfer-function coefficient lists (ascending degree,
denominator monic).  Controllability is coprimeness of numerator and
denominator, stability and minimum phase are root-location tests, and a
system in controllable canonical form (constant numerator) exposes the
linear differential operators mapping the flat output z onto every state
variable and the input:

    x_{k+1} = z^(k),   u = (z^(n) + a_{n-1} z^(n-1) + ... + a_0 z) / b
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

# Relative tolerance for the Euclidean coprimeness test and for root
# classification; exact algebra needs a threshold in floating point.
COPRIME_RTOL = 1e-9


def _trimmed(coeffs: Iterable[float]) -> tuple[float, ...]:
    out = [float(c) for c in coeffs]
    while len(out) > 1 and out[-1] == 0.0:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class RealPolynomial:
    """Real polynomial, coefficients in ascending degree order.

    The trailing (highest-order) coefficient is nonzero unless this is the
    zero polynomial, which is stored as ``(0.0,)``.
    """

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Iterable[float]):
        object.__setattr__(self, "coeffs", _trimmed(coeffs))
        if len(self.coeffs) == 0:
            raise ValueError("polynomial needs at least one coefficient")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return self.coeffs == (0.0,)

    @property
    def leading(self) -> float:
        return self.coeffs[-1]

    def __call__(self, s: complex) -> complex:
        acc = 0.0 + 0.0j if isinstance(s, complex) else 0.0
        for c in reversed(self.coeffs):
            acc = acc * s + c
        return acc

    def derivative(self) -> "RealPolynomial":
        if self.degree == 0:
            return RealPolynomial((0.0,))
        return RealPolynomial(tuple(k * c for k, c in enumerate(self.coeffs) if k > 0))

    def __mul__(self, other: "RealPolynomial") -> "RealPolynomial":
        if self.is_zero or other.is_zero:
            return RealPolynomial((0.0,))
        return RealPolynomial(np.convolve(self.coeffs, other.coeffs))

    def monic(self) -> "RealPolynomial":
        if self.is_zero:
            raise ValueError("cannot normalize the zero polynomial")
        return RealPolynomial(tuple(c / self.leading for c in self.coeffs))

    def roots(self) -> np.ndarray:
        """Roots via companion-matrix eigenvalues (empty for constants)."""
        if self.degree == 0:
            return np.empty(0, dtype=complex)
        return np.roots(self.coeffs[::-1])


def _approx_gcd(p: RealPolynomial, q: RealPolynomial, rtol: float = COPRIME_RTOL) -> RealPolynomial:
    """Euclidean remainder sequence with a relative coefficient threshold."""
    ref = max(max(abs(c) for c in p.coeffs), max(abs(c) for c in q.coeffs))
    if ref == 0.0:
        return RealPolynomial((0.0,))
    tol = rtol * ref
    a = np.array(p.coeffs[::-1], dtype=float)
    b = np.array(q.coeffs[::-1], dtype=float)
    if len(b) > len(a):
        a, b = b, a
    while True:
        # drop numerically-zero leading coefficients of the divisor
        nz = np.flatnonzero(np.abs(b) > tol)
        if nz.size == 0:
            return RealPolynomial(a[::-1])
        b = b[nz[0]:]
        if b.size == 1:
            return RealPolynomial(b[::-1])
        _, r = np.polydiv(a, b)
        a, b = b, r


def make_canonical(a: Sequence[float], b: float) -> "LtiSiso":
    """Controllable canonical system of order ``n = len(a)``.

    ``a`` holds the characteristic coefficients a_0 ... a_{n-1}; the transfer
    function is b / (s^n + a_{n-1} s^{n-1} + ... + a_0).

    >>> make_canonical([1.0], 1.0).den.coeffs
    (1.0, 1.0)
    """
    if len(a) < 1:
        raise ValueError("canonical form needs order n >= 1")
    if b == 0.0:
        raise ValueError("input gain b must be nonzero "
                         "(the flat parameterization of u is undefined for b = 0)")
    den = RealPolynomial(tuple(a) + (1.0,))
    return LtiSiso(num=RealPolynomial((float(b),)), den=den)


@dataclass(frozen=True)
class LtiSiso:
    """SISO LTI system num/den; the denominator is normalized to be monic."""

    num: RealPolynomial
    den: RealPolynomial

    def __post_init__(self):
        if self.den.degree < 1:
            raise ValueError("denominator must have degree >= 1")
        if self.num.is_zero:
            raise ValueError("numerator must not be identically zero")
        if self.num.degree >= self.den.degree:
            raise ValueError("numerator degree must be below denominator degree")
        lead = self.den.leading
        if lead != 1.0:
            object.__setattr__(self, "den", RealPolynomial(tuple(c / lead for c in self.den.coeffs)))
            object.__setattr__(self, "num", RealPolynomial(tuple(c / lead for c in self.num.coeffs)))

    @property
    def order(self) -> int:
        return self.den.degree

    @property
    def is_canonical(self) -> bool:
        """Constant numerator: the transfer function of canonical form."""
        return self.num.degree == 0


def is_controllable(sys: LtiSiso) -> bool:
    """True iff num and den are coprime (gcd of degree zero)."""
    if sys.num.degree == 0:
        return True
    return _approx_gcd(sys.num, sys.den).degree == 0


def is_stable(sys: LtiSiso) -> bool:
    """True iff every denominator root has strictly negative real part."""
    return bool(np.all(sys.den.roots().real < 0.0))


def is_minimum_phase(sys: LtiSiso) -> bool:
    """True iff the numerator is constant or all its roots lie strictly in
    the open left half-plane."""
    if sys.num.degree == 0:
        return True
    return bool(np.all(sys.num.roots().real < 0.0))


@dataclass(frozen=True)
class FlatMap:
    """Linear differential operators expressing system variables in the
    flat output: ``rows[name][k]`` multiplies z^(k)."""

    rows: Mapping[str, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "rows", {k: tuple(float(c) for c in v) for k, v in self.rows.items()})

    def names(self) -> list[str]:
        return list(self.rows)

    def row(self, name: str) -> tuple[float, ...]:
        try:
            return self.rows[name]
        except KeyError:
            raise ValueError(f"unknown variable {name!r}; have {sorted(self.rows)}") from None

    def state_names(self) -> list[str]:
        xs = [n for n in self.rows if n.startswith("x")]
        return sorted(xs, key=lambda n: int(n[1:]))


@dataclass(frozen=True)
class JetPoint:
    """Value of a signal and its derivatives at one instant:
    ``values[k] = z^(k)(t)``."""

    values: tuple[float, ...]

    def __init__(self, values: Iterable[float]):
        object.__setattr__(self, "values", tuple(float(v) for v in values))
        if len(self.values) < 1:
            raise ValueError("a jet needs at least the order-0 value")

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, k: int) -> float:
        return self.values[k]


def flat_parameterization(sys: LtiSiso) -> FlatMap:
    """Differential parameterization of states and input by the flat output.

    Only canonical-form systems (constant numerator) qualify; the canonical
    states are x_{k+1} = z^(k) and the input row has n + 1 entries.
    """
    if not sys.is_canonical:
        zeros = sys.num.roots()
        raise ValueError(
            "output is not flat: numerator is not constant; obstructing roots "
            + ", ".join(f"{z:.6g}" for z in zeros))
    n = sys.order
    b = sys.num.coeffs[0]
    rows: dict[str, tuple[float, ...]] = {}
    for k in range(n):
        rows[f"x{k + 1}"] = (0.0,) * k + (1.0,)
    rows["u"] = tuple(c / b for c in sys.den.coeffs)
    return FlatMap(rows=rows)


def evaluate_variable(fmap: FlatMap, name: str, jet: JetPoint | Sequence[float]) -> float:
    """Inner product of a flat-map row with a jet."""
    row = fmap.row(name)
    values = jet.values if isinstance(jet, JetPoint) else tuple(jet)
    if len(values) < len(row):
        raise ValueError(
            f"jet too short for {name!r}: needs derivatives up to order "
            f"{len(row) - 1}, got {len(values) - 1}")
    return float(sum(c * v for c, v in zip(row, values)))
