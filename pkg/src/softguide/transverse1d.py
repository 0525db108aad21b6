"""
One-dimensional transverse operators  -d^2/du^2 - depth * w(u).

Single wells, mirror-symmetric double wells (wells centred at +-rho), the
Dirichlet box on (-a, a), and closed forms for point interactions.

Discretization is the second-order three-point stencil on the uniform grid
x_j = -L + j*h, h = 2L/n, j = 0..n, with homogeneous Dirichlet values at the
two end nodes. Potential breakpoints (well edges) are placed on nodes when the
grid allows it; at a node sitting exactly on a jump the potential takes the
mean of the one-sided values, which keeps the error expansion in even powers
of h so Richardson extrapolation applies.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import reduce
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .errors import DomainError, KindError, ResolutionError

log = logging.getLogger(__name__)

KINDS = ("poly_well", "square_well", "delta_point")
DEFAULT_N_LIST = (2000, 4000, 8000)
# minimum number of grid intervals per well half-width
RESOLVE = 25
MAX_DEPTH_H2 = 0.5


@dataclass(frozen=True)
class TransverseProfile:
    """
    Attractive transverse profile.

    ``depth`` is the well depth for regular kinds (potential ``-depth*w``, w in
    [0, 1]) and the point-interaction strength alpha for ``delta_point``.
    """

    kind: str
    a: float
    depth: float
    exponent: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KindError(f"unknown profile kind {self.kind!r}")
        if self.kind != "delta_point" and not self.a > 0:
            raise DomainError(f"half-width must be positive, got {self.a}")
        if self.depth < 0:
            raise DomainError(f"depth must be nonnegative, got {self.depth}")
        if self.kind == "poly_well" and (self.exponent < 2 or self.exponent % 2):
            raise DomainError(f"poly_well exponent must be an even integer >= 2, got {self.exponent}")

    @property
    def regular(self) -> bool:
        return self.kind != "delta_point"

    def with_depth(self, depth: float) -> "TransverseProfile":
        return replace(self, depth=float(depth))


def poly_well(exponent: int, a: float, depth: float) -> TransverseProfile:
    return TransverseProfile("poly_well", float(a), float(depth), int(exponent))


def square_well(a: float, depth: float) -> TransverseProfile:
    return TransverseProfile("square_well", float(a), float(depth))


def delta_point(alpha: float) -> TransverseProfile:
    return TransverseProfile("delta_point", 0.0, float(alpha))


def eval_profile(p: TransverseProfile, u):
    """Centred well shape w(u) in [0, 1]; the potential is ``-p.depth * w``."""
    if p.kind == "delta_point":
        raise KindError("a point interaction has no pointwise profile")
    r = np.abs(np.asarray(u, dtype=float)) / p.a
    if p.kind == "square_well":
        w = np.where(r < 1.0, 1.0, 0.0)
    else:
        w = np.where(r < 1.0, 1.0 - r ** p.exponent, 0.0)
    return w if w.ndim else float(w)


def _node_shape(p: TransverseProfile, u: np.ndarray) -> np.ndarray:
    w = eval_profile(p, u)
    if p.kind == "square_well":
        w = np.where(np.isclose(np.abs(u), p.a, rtol=0.0, atol=1e-9 * p.a), 0.5, w)
    return w


def profile_integral(p: TransverseProfile) -> float:
    """Integral of w over the real line."""
    if p.kind == "square_well":
        return 2.0 * p.a
    if p.kind == "poly_well":
        return 2.0 * p.a * p.exponent / (p.exponent + 1.0)
    raise KindError("delta_point has no profile integral; use its strength")


@dataclass
class Eigensolution1D:
    """
    Discrete eigenpair on [-L, L].

    ``phi`` is sampled on all n+1 nodes (zero at the Dirichlet ends) and
    normalized so that h * sum(phi**2) = 1.
    """

    energy: float
    x: np.ndarray
    phi: np.ndarray
    center_value_ratio: float
    residual: float
    h: float
    L: float

    @property
    def eta(self) -> float:
        return self.center_value_ratio


# ---------------------------------------------------------------- tridiagonal core


def tridiagonal_eigs(potential, h: float, bc: str = "dirichlet", k: int = 1, vectors: bool = False):
    """
    Lowest ``k`` eigenpairs of ``-d^2/dx^2 - V`` for node values ``potential``.

    ``bc='dirichlet'``: the values are the unknowns strictly between two
    zero end nodes. ``bc='neumann'``: the values include both end nodes and
    mirror ghost nodes are used; the matrix is the symmetric similarity
    transform with end-node weights 1/2, so returned vectors are in the
    weighted basis (divide the end entries by sqrt(1/2) for nodal values).
    """
    V = np.asarray(potential, dtype=float)
    m = V.size
    if k > m:
        raise DomainError(f"asked for {k} eigenpairs of a {m}x{m} matrix")
    inv = 1.0 / (h * h)
    d = 2.0 * inv - V
    e = np.full(m - 1, -inv)
    if bc == "neumann":
        e[0] = e[-1] = -math.sqrt(2.0) * inv
    elif bc != "dirichlet":
        raise DomainError(f"unknown boundary condition {bc!r}")
    out = eigh_tridiagonal(d, e, eigvals_only=not vectors, select="i", select_range=(0, k - 1))
    return out


def neumann_weights(m: int) -> np.ndarray:
    w = np.ones(m)
    w[0] = w[-1] = 0.5
    return w


def _tridiag_apply(V, h, vec):
    out = (2.0 / h**2 - V) * vec
    out[1:] -= vec[:-1] / h**2
    out[:-1] -= vec[1:] / h**2
    return out


def _check_resolution(depth_max: float, h: float):
    if depth_max * h * h > MAX_DEPTH_H2:
        raise ResolutionError(
            f"depth*h^2 = {depth_max * h * h:.3g} exceeds {MAX_DEPTH_H2}; refine the grid"
        )


def solve_potential(shape_fn: Callable[[np.ndarray], np.ndarray], L: float, n: int, k: int = 1):
    """
    Eigenpairs of ``-d^2/dx^2 - V`` on [-L, L] with Dirichlet ends.

    ``shape_fn`` maps node abscissae to potential values V >= 0 (attractive).
    ``n`` is the number of grid intervals.
    """
    if n < 2 or n % 2:
        raise DomainError(f"n must be an even number of intervals, got {n}")
    h = 2.0 * L / n
    x = -L + h * np.arange(n + 1)
    x[n // 2] = 0.0
    V = shape_fn(x[1:-1])
    _check_resolution(float(np.max(V, initial=0.0)), h)
    vals, vecs = tridiagonal_eigs(V, h, "dirichlet", k, vectors=True)
    sols = []
    for j in range(len(vals)):
        v = vecs[:, j] / math.sqrt(h * np.dot(vecs[:, j], vecs[:, j]))
        res = np.sqrt(h) * np.linalg.norm(_tridiag_apply(V, h, v) - vals[j] * v)
        phi = np.zeros(n + 1)
        phi[1:-1] = v
        c = phi[n // 2]
        if abs(c) > 1e-8 * np.max(np.abs(phi)):
            sign = math.copysign(1.0, c)
        else:
            sign = math.copysign(1.0, phi[np.argmax(np.abs(phi))])
        phi *= sign
        sols.append(Eigensolution1D(float(vals[j]), x, phi, float(abs(c)), float(res), h, L))
    return sols


# ---------------------------------------------------------------- grid alignment


def _as_fraction(v: float) -> Fraction:
    return Fraction(v).limit_denominator(10**6)


def aligned_half_length(L_min: float, breakpoints: Sequence[float], n_list: Sequence[int]) -> float:
    """
    Smallest L >= L_min for which every breakpoint is a node of every grid in ``n_list``.

    Falls back to ``L_min`` (breakpoints off-node) when the breakpoints share
    no usable common unit.
    """
    pts = [_as_fraction(abs(b)) for b in breakpoints if b]
    if not pts:
        return float(L_min)
    unit = reduce(lambda p, q: Fraction(math.gcd(p.numerator * q.denominator, q.numerator * p.denominator),
                                        p.denominator * q.denominator), pts)
    half = reduce(math.gcd, [n // 2 for n in n_list])
    for M in range(1, half + 1):
        if half % M == 0 and float(unit * M) >= L_min:
            return float(unit * M)
    log.debug("could not align breakpoints %s on grids %s", breakpoints, n_list)
    return float(L_min)


# ---------------------------------------------------------------- single and double wells


def _require_regular(p: TransverseProfile):
    if not p.regular:
        raise KindError("finite-difference solvers need a regular profile; use the delta closed forms")


def single_well_potential(p: TransverseProfile):
    return lambda x: p.depth * _node_shape(p, x)


def double_well_potential(p: TransverseProfile, rho: float):
    return lambda x: p.depth * (_node_shape(p, x - rho) + _node_shape(p, x + rho))


def solve_single_well(p: TransverseProfile, L: float, n: int, k: int = 1):
    """``k`` lowest eigenpairs of h_v; only negative energies are bound states."""
    _require_regular(p)
    if L < 10 * p.a:
        raise DomainError(f"L={L} below 10*a={10 * p.a}")
    if n < 200:
        raise DomainError(f"n={n} below 200")
    return solve_potential(single_well_potential(p), L, n, k)


def solve_double_well(p: TransverseProfile, rho: float, L: float, n: int, k: int = 1):
    """Eigenpairs of the mirror-symmetric double well with wells centred at +-rho."""
    _require_regular(p)
    if not rho > p.a:
        raise DomainError(f"wells overlap: need rho > a, got rho={rho}, a={p.a}")
    if L < rho + 10 * p.a:
        raise DomainError(f"L={L} below rho + 10*a")
    if n < 200:
        raise DomainError(f"n={n} below 200")
    return solve_potential(double_well_potential(p, rho), L, n, k)


# ---------------------------------------------------------------- extrapolated ground states


def richardson(values: Sequence[float], ratio: float = 2.0, order: int = 2):
    """
    Repeated Richardson extrapolation for a sequence on grids h, h/r, h/r^2, ...

    Assumes an error expansion in powers order, order+2, ... Returns
    ``(estimate, error_estimate, observed_order)``; the observed order is
    ``nan`` when fewer than three values are given.
    """
    T = [float(v) for v in values]
    if len(T) == 1:
        return T[0], math.inf, math.nan
    obs = math.nan
    if len(T) >= 3:
        d1, d2 = T[-3] - T[-2], T[-2] - T[-1]
        obs = math.log(abs(d1 / d2), ratio) if d2 != 0 and d1 != 0 else math.nan
    p = order
    prev = T
    while len(prev) > 1:
        f = ratio**p
        nxt = [prev[i + 1] + (prev[i + 1] - prev[i]) / (f - 1.0) for i in range(len(prev) - 1)]
        if len(nxt) == 1:
            return nxt[0], abs(nxt[0] - prev[-1]), obs
        prev = nxt
        p += 2
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class ConvergedGround:
    """Extrapolated ground state with its per-grid raw values."""

    energy: float
    error: float
    eta: float
    raw: tuple
    order: float
    L: float
    n_list: tuple


def _resolving_n(L: float, a: float, n: int) -> int:
    """Smallest multiple of ``n`` whose spacing 2L/n resolves the half-width (h <= a/RESOLVE)."""
    return n * max(1, math.ceil(2.0 * L * RESOLVE / (a * n)))


def _containment(p: TransverseProfile, rho: float, potential) -> float:
    """Half-length holding the ground state: L >= rho + 10a + 5/sqrt|eps|."""
    L = rho + 10.0 * p.a
    for _ in range(40):
        n = _resolving_n(L, p.a, 2000)
        h = 2.0 * L / n
        if p.depth * h * h > MAX_DEPTH_H2:
            return L
        e = solve_potential(potential, L, n, 1)[0].energy
        if e >= 0:
            # the box squeezes a weakly bound state above zero; widen it
            L *= 2.0
            continue
        need = rho + 10.0 * p.a + 5.0 / math.sqrt(-e)
        if L >= need:
            return L
        L = 1.2 * need
    return L


def _converged(p, rho, potential, breakpoints, n_list, L=None) -> ConvergedGround:
    n_list = tuple(sorted(n_list))
    ratios = {n_list[i + 1] / n_list[i] for i in range(len(n_list) - 1)}
    if len(ratios) > 1:
        raise DomainError(f"n_list must be geometric, got {n_list}")
    ratio = ratios.pop() if ratios else 2.0
    if L is None:
        L = aligned_half_length(_containment(p, rho, potential), breakpoints, n_list)
    # integer refinement keeps aligned breakpoints on nodes
    factor = _resolving_n(L, p.a, n_list[0]) // n_list[0]
    n_list = tuple(factor * n for n in n_list)
    sols = [solve_potential(potential, L, n, 1)[0] for n in n_list]
    e, err, order = richardson([s.energy for s in sols], ratio)
    eta, _, _ = richardson([s.eta for s in sols], ratio)
    return ConvergedGround(e, err, eta, tuple(s.energy for s in sols), order, L, n_list)


def converged_single_well(p: TransverseProfile, n_list=DEFAULT_N_LIST, L=None) -> ConvergedGround:
    """Ground state of h_v, Richardson-extrapolated over ``n_list``."""
    _require_regular(p)
    return _converged(p, 0.0, single_well_potential(p), [p.a], n_list, L)


def converged_double_well(p: TransverseProfile, rho: float, n_list=DEFAULT_N_LIST, L=None) -> ConvergedGround:
    """Ground state of the double well, Richardson-extrapolated; ``eta`` is |phi(0)|/||phi||."""
    _require_regular(p)
    if not rho > p.a:
        raise DomainError(f"wells overlap: need rho > a, got rho={rho}, a={p.a}")
    return _converged(p, rho, double_well_potential(p, rho), [rho - p.a, rho + p.a], n_list, L)


def dirichlet_box_ground(p: TransverseProfile, n_list=DEFAULT_N_LIST, extra_depth: float = 0.0) -> float:
    """
    Lowest eigenvalue of ``-d^2/du^2 - depth*w - extra_depth`` on (-a, a), Dirichlet at +-a.

    ``extra_depth`` is a constant added inside the box (it shifts the result
    exactly and exists for the deep-ditch comparison).
    """
    _require_regular(p)
    n_list = tuple(sorted(n_list))
    vals = []
    for n in n_list:
        h = 2.0 * p.a / n
        x = -p.a + h * np.arange(1, n)
        V = p.depth * eval_profile(p, x) + extra_depth
        _check_resolution(float(np.max(V, initial=0.0)), h)
        vals.append(float(tridiagonal_eigs(V, h, "dirichlet", 1)[0]))
    ratio = n_list[1] / n_list[0] if len(n_list) > 1 else 2.0
    return richardson(vals, ratio)[0]


# ---------------------------------------------------------------- point interactions


def delta_ground(alpha: float) -> float:
    """Ground energy -alpha^2/4 of -d^2/dx^2 - alpha*delta(x)."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    return -0.25 * alpha * alpha


def _double_delta_kappa(alpha: float, rho: float) -> float:
    if not alpha > 0 or not rho > 0:
        raise DomainError(f"need alpha > 0 and rho > 0, got alpha={alpha}, rho={rho}")
    # contraction: |d/dk| = alpha*rho*exp(-2 k rho) <= 1/e for k >= alpha/2
    k = 0.5 * alpha
    for _ in range(10_000):
        k_new = 0.5 * alpha * (1.0 + math.exp(-2.0 * k * rho))
        if abs(k_new - k) <= 1e-15 * k_new:
            return k_new
        k = k_new
    return k


def double_delta_ground(alpha: float, rho: float) -> float:
    """Even ground state of two delta wells of strength alpha at +-rho."""
    k = _double_delta_kappa(alpha, rho)
    return -k * k


def double_delta_eta(alpha: float, rho: float) -> float:
    """|phi(0)|/||phi|| for the double-delta ground state phi = cosh(kx) inside, exp tail outside."""
    k = _double_delta_kappa(alpha, rho)
    ch = math.cosh(k * rho)
    norm2 = 2.0 * (0.5 * rho + math.sinh(2.0 * k * rho) / (4.0 * k) + ch * ch / (2.0 * k))
    return 1.0 / math.sqrt(norm2)


# ---------------------------------------------------------------- exact square well


def square_well_levels(a: float, depth: float) -> list[float]:
    """
    Bound-state energies of a square well of half-width ``a`` and depth ``depth``.

    Roots of k tan(ka) = kappa (even) and -k cot(ka) = kappa (odd), with
    k^2 = depth + E and kappa^2 = -E.
    """
    z0 = a * math.sqrt(depth)
    levels = []
    j = 0
    while j * 0.5 * math.pi < z0:
        lo, hi = j * 0.5 * math.pi, min((j + 1) * 0.5 * math.pi, z0)
        if j % 2 == 0:
            f = lambda xi: xi * math.sin(xi) - math.sqrt(max(z0 * z0 - xi * xi, 0.0)) * math.cos(xi)
        else:
            f = lambda xi: -xi * math.cos(xi) - math.sqrt(max(z0 * z0 - xi * xi, 0.0)) * math.sin(xi)
        flo, fhi = f(lo), f(hi)
        if flo * fhi <= 0.0 and hi > lo:
            xi = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            kap = math.sqrt(max(z0 * z0 - xi * xi, 0.0)) / a
            if kap > 0:
                levels.append(-kap * kap)
        j += 1
    return sorted(levels)
