"""Two-point boundary-value solver for linear constant-coefficient ODEs.

The homogeneous solution space is spanned by real modes built from the
characteristic roots (polynomial-times-exponential, with cosine/sine pairs
for complex roots).  Growing modes are anchored at the right endpoint, i.e.
expressed in t - T, so every basis value on [0, T] stays bounded by a
polynomial in T; without this the boundary matrix overflows double
precision for stiff problems.

Boundary conditions prescribe derivatives of orders 0 .. nu-1 at t = 0 and
t = T, which matches the 2 nu free coefficients of an order-2 nu equation.
A constant forcing term is absorbed by the particular solution rhs / p(0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .cost import QuadraticJetForm, Trajectory, integrate_cost, jet_channel
from .errors import NumericalFailure
from .euler_lagrange import EulerLagrangeOde

CLUSTER_RTOL = 1e-6
CONDITION_LIMIT = 1e12
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def characteristic_roots(ode: EulerLagrangeOde,
                         cluster_rtol: float = CLUSTER_RTOL) -> list[tuple[complex, int]]:
    """Roots of the characteristic polynomial with multiplicities.

    Roots are computed as companion-matrix eigenvalues and clustered with a
    relative tolerance; near-real and near-imaginary parts are snapped so
    conjugate and sign symmetries are exact in the output.
    """
    if ode.order < 1:
        raise ValueError("constant equation has no characteristic roots")
    raw = np.roots(ode.coeffs[::-1])
    scale = max(1.0, float(np.abs(raw).max()))
    tol = cluster_rtol * scale

    clusters: list[list] = []          # [sum, count]
    for r in sorted(raw, key=lambda z: (z.real, z.imag)):
        for cl in clusters:
            if abs(r - cl[0] / cl[1]) <= tol:
                cl[0] += r
                cl[1] += 1
                break
        else:
            clusters.append([r, 1])

    out: list[tuple[complex, int]] = []
    for total, count in clusters:
        center = total / count
        re = 0.0 if abs(center.real) <= tol else center.real
        im = 0.0 if abs(center.imag) <= tol else center.imag
        out.append((complex(re, im), count))

    # make conjugate pairs exactly conjugate
    for i, (c, m) in enumerate(out):
        if c.imag <= 0.0:
            continue
        for j, (c2, m2) in enumerate(out):
            if c2.imag < 0.0 and abs(c2 - c.conjugate()) <= 2 * tol and m2 == m:
                mean = 0.5 * (c + c2.conjugate())
                out[i] = (mean, m)
                out[j] = (mean.conjugate(), m)
                break
    out.sort(key=lambda rm: (rm[0].real, rm[0].imag))
    return out


@dataclass(frozen=True)
class Mode:
    """One real basis function: Re or Im of (t - anchor)^degree e^{root (t - anchor)}."""

    root: complex
    degree: int
    trig: str            # "none" | "cos" | "sin"
    anchor: float

    def values(self, t, deriv: int) -> np.ndarray:
        tau = np.asarray(t, dtype=float) - self.anchor
        acc = np.zeros(tau.shape, dtype=complex)
        k = self.degree
        for i in range(min(deriv, k) + 1):
            coef = math.comb(deriv, i) * math.perm(k, i)
            acc += coef * tau ** (k - i) * self.root ** (deriv - i)
        acc *= np.exp(self.root * tau)
        return acc.imag if self.trig == "sin" else acc.real

    def antiderivative(self, t) -> np.ndarray:
        """Closed-form antiderivative, for interval averages of the solution."""
        tau = np.asarray(t, dtype=float) - self.anchor
        k = self.degree
        if self.root == 0.0:
            acc = tau ** (k + 1) / (k + 1) + 0.0j
        else:
            acc = np.zeros(tau.shape, dtype=complex)
            for i in range(k + 1):
                acc += (-1.0) ** i * math.perm(k, i) * tau ** (k - i) / self.root ** (i + 1)
            acc *= np.exp(self.root * tau)
        return acc.imag if self.trig == "sin" else acc.real


@dataclass(frozen=True)
class SolutionBasis:
    """Real solution basis of the homogeneous equation on [0, T]."""

    modes: tuple[Mode, ...]
    horizon: float

    @property
    def size(self) -> int:
        return len(self.modes)

    def matrix(self, t, deriv: int) -> np.ndarray:
        """Stack of mode derivative values, one column per mode."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([m.values(t, deriv) for m in self.modes])


def build_basis(roots: Sequence[tuple[complex, int]], T: float,
                anchor_growth: bool = True) -> SolutionBasis:
    """Real basis from clustered roots.

    A real root of multiplicity m contributes t^k e^{rt}, k = 0..m-1;
    a conjugate pair contributes matching cos/sin modes.  Modes with
    positive real part are anchored at T when ``anchor_growth`` is set.
    """
    modes: list[Mode] = []
    seen_neg: list[tuple[complex, int]] = []
    for root, mult in roots:
        anchor = T if (anchor_growth and root.real > 0.0) else 0.0
        if root.imag == 0.0:
            for k in range(mult):
                modes.append(Mode(complex(root.real, 0.0), k, "none", anchor))
        elif root.imag > 0.0:
            for k in range(mult):
                modes.append(Mode(root, k, "cos", anchor))
                modes.append(Mode(root, k, "sin", anchor))
        else:
            seen_neg.append((root, mult))
    for root, mult in seen_neg:
        partner = [(r, m) for r, m in roots if r == root.conjugate() and m == mult]
        if not partner:
            raise ValueError(f"complex root {root} lacks a conjugate partner")
    return SolutionBasis(modes=tuple(modes), horizon=float(T))


def particular_solution(ode: EulerLagrangeOde) -> float:
    """Constant particular solution rhs / p(0).

    Homogeneous equations return zero.  A constant forcing with p(0) = 0
    has no constant particular solution (a polynomial one is out of scope).
    """
    if ode.rhs == 0.0:
        return 0.0
    p0 = ode.coeffs[0]
    if p0 == 0.0:
        raise ValueError("p(0) = 0 with nonzero forcing: no constant particular "
                         "solution exists (resonant constant forcing)")
    return ode.rhs / p0


@dataclass(frozen=True)
class BoundaryData:
    """Derivatives of orders 0..nu-1 prescribed at t = 0 and t = T."""

    at0: tuple[float, ...]
    atT: tuple[float, ...]

    def __init__(self, at0: Sequence[float], atT: Sequence[float]):
        object.__setattr__(self, "at0", tuple(float(v) for v in at0))
        object.__setattr__(self, "atT", tuple(float(v) for v in atT))
        if len(self.at0) != len(self.atT):
            raise ValueError("boundary data must prescribe the same orders at both endpoints")
        if len(self.at0) < 1:
            raise ValueError("boundary data must prescribe at least the value")

    @property
    def nu(self) -> int:
        return len(self.at0)

    def scaled(self, factor: float) -> "BoundaryData":
        return BoundaryData([factor * v for v in self.at0], [factor * v for v in self.atT])


@dataclass(frozen=True)
class BvpSolution:
    """Solved two-point problem: basis, coefficients, particular constant."""

    basis: SolutionBasis
    c: np.ndarray
    particular: float
    condition_estimate: float

    def eval_jet(self, t, max_deriv: int) -> np.ndarray:
        """Derivative stack (max_deriv+1, len(t)); order 0 includes the
        particular constant."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((max_deriv + 1, t.size))
        for d in range(max_deriv + 1):
            out[d] = self.basis.matrix(t, d) @ self.c
        out[0] += self.particular
        return out

    def value(self, t: float, deriv: int = 0) -> float:
        return float(self.eval_jet(t, deriv)[deriv][0])

    def interval_mean(self, deriv: int, t0: float, t1: float) -> float:
        """Exact mean of z^(deriv) over [t0, t1] (closed-form integrals).

        Means of boundary-layer modes are what a zero-order-hold sampler
        should see; pointwise sampling would miss or exaggerate them.
        """
        if t1 <= t0:
            raise ValueError("interval must have positive length")
        if deriv >= 1:
            lo, hi = self.eval_jet(np.array([t0, t1]), deriv - 1)[deriv - 1]
            return float((hi - lo) / (t1 - t0))
        ants = np.array([m.antiderivative(np.array([t0, t1])) for m in self.basis.modes])
        lo, hi = self.c @ ants[:, 0], self.c @ ants[:, 1]
        return float((hi - lo) / (t1 - t0) + self.particular)


def solve_tpbvp(ode: EulerLagrangeOde, bc: BoundaryData, T: float,
                anchor_growth: bool = True,
                condition_limit: float = CONDITION_LIMIT) -> BvpSolution:
    """Solve the two-point problem on [0, T].

    Assembles the 2 nu x 2 nu matrix of basis derivatives of orders
    0..nu-1 at both endpoints and solves for the coefficients, with the
    particular constant subtracted from the order-0 boundary values.
    Rejects ill-conditioned boundary matrices instead of returning garbage.
    """
    if T <= 0.0:
        raise ValueError("horizon T must be positive")
    if ode.order % 2 != 0 or ode.order == 0:
        raise ValueError(f"two-point assignment needs an even-order equation, got order {ode.order}")
    nu = ode.order // 2
    if bc.nu != nu:
        raise ValueError(f"boundary data prescribes orders 0..{bc.nu - 1}, "
                         f"but an order-{ode.order} equation needs 0..{nu - 1}")
    roots = characteristic_roots(ode)
    if sum(m for _, m in roots) != ode.order:
        raise NumericalFailure("root clustering lost multiplicity; cannot build a basis")
    basis = build_basis(roots, T, anchor_growth)
    z_p = particular_solution(ode)

    M = np.empty((2 * nu, 2 * nu))
    for d in range(nu):
        M[d] = basis.matrix(0.0, d)[0]
        M[nu + d] = basis.matrix(T, d)[0]
    if not np.all(np.isfinite(M)):
        raise NumericalFailure(
            "boundary matrix has non-finite entries (basis overflow; "
            "anchoring of growing modes is required for this horizon)")
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > condition_limit:
        sign, _ = np.linalg.slogdet(M)
        raise NumericalFailure(
            f"boundary matrix numerically singular: condition {cond:.3g} "
            f"exceeds {condition_limit:.1g} (determinant sign {sign:+.0f})")
    rhs = np.empty(2 * nu)
    rhs[:nu] = bc.at0
    rhs[nu:] = bc.atT
    rhs[0] -= z_p
    rhs[nu] -= z_p
    c = np.linalg.solve(M, rhs)
    return BvpSolution(basis=basis, c=c, particular=z_p, condition_estimate=cond)


def eval_solution(sol: BvpSolution, times, max_deriv: int) -> Trajectory:
    """Sample the solution and its derivatives on a grid (closed form,
    no numerical differentiation)."""
    if max_deriv > sol.basis.size:
        raise ValueError(f"max_deriv {max_deriv} exceeds the equation order {sol.basis.size}")
    times = np.asarray(times, dtype=float)
    jets = sol.eval_jet(times, max_deriv)
    channels = {jet_channel(k): jets[k] for k in range(max_deriv + 1)}
    return Trajectory(times, channels)


def ode_residual(ode: EulerLagrangeOde, sol: BvpSolution, times) -> float:
    """Max absolute raw-coefficient residual |sum c_k z^(k) - rhs| on a grid."""
    jets = sol.eval_jet(np.asarray(times, dtype=float), ode.order)
    res = np.zeros(jets.shape[1])
    for k, ck in enumerate(ode.raw_coeffs):
        res += ck * jets[k]
    return float(np.abs(res - ode.raw_rhs).max())


def boundary_residual(sol: BvpSolution, bc: BoundaryData, T: float) -> float:
    """Max absolute mismatch of the solved trajectory against the data."""
    nu = bc.nu
    j0 = sol.eval_jet(0.0, nu - 1)[:, 0]
    jT = sol.eval_jet(T, nu - 1)[:, 0]
    return float(max(np.abs(j0 - np.array(bc.at0)).max(),
                     np.abs(jT - np.array(bc.atT)).max()))


@dataclass(frozen=True)
class HorizonScan:
    """Criterion samples over a horizon grid plus the refined minimizer."""

    t_values: np.ndarray
    j_values: np.ndarray
    t_opt: float
    j_opt: float
    bracketed: bool


def optimal_cost(ode: EulerLagrangeOde, bc: BoundaryData, form: QuadraticJetForm,
                 T: float, quad_points: int = 801) -> float:
    """Criterion value of the T-horizon optimal trajectory."""
    sol = solve_tpbvp(ode, bc, T)
    traj = eval_solution(sol, np.linspace(0.0, T, quad_points), form.nu)
    return integrate_cost(form, traj)


def _golden_section(f: Callable[[float], float], a: float, b: float, rtol: float) -> tuple[float, float]:
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while (b - a) > rtol * max(1e-12, abs(a + b) / 2.0):
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    t0 = 0.5 * (a + b)
    return t0, f(t0)


def horizon_scan(ode: EulerLagrangeOde, bc: BoundaryData, form: QuadraticJetForm,
                 t_grid: Sequence[float], quad_points: int = 801,
                 refine_rtol: float = 1e-3) -> HorizonScan:
    """Scan J(T) over a horizon grid and refine the interior minimum.

    Grid points are evaluated independently (order does not matter); an
    interior argmin is refined by golden section between its neighbors.
    A boundary argmin is returned as-is and flagged as not bracketed.
    """
    t_values = np.asarray(t_grid, dtype=float)
    if t_values.ndim != 1 or t_values.size < 2:
        raise ValueError("horizon grid needs at least two points")
    if np.any(np.diff(t_values) <= 0.0):
        raise ValueError("horizon grid must be strictly increasing")

    def j_of(T: float) -> float:
        return optimal_cost(ode, bc, form, T, quad_points)

    j_values = np.array([j_of(T) for T in t_values])
    i = int(np.argmin(j_values))
    if i == 0 or i == t_values.size - 1:
        return HorizonScan(t_values, j_values, float(t_values[i]), float(j_values[i]),
                           bracketed=False)
    t_opt, j_opt = _golden_section(j_of, float(t_values[i - 1]), float(t_values[i + 1]),
                                   refine_rtol)
    return HorizonScan(t_values, j_values, t_opt, j_opt, bracketed=True)
