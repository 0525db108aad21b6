"""
Spectral quantities of bookcover waveguides and the experiments built on them.

Counting convention
-------------------
A 2D run compares eigenvalues of the discretized operator with a level
``nu``. Finite differences shift every energy by O(h^2), so a level given
in continuum units is first moved by the grid's own threshold bias: the
difference between the discrete channel threshold (1D three-point operator
on the same spacing) and the converged continuum threshold. The discrete
channel threshold is computed under both outer boundary conditions; their
difference sets the default safety margin ``max(3*|gap|, 1e-6)``.

For parallel pages (beta = 0) the channel cross-section is exactly a grid
column, so the discrete threshold is the tridiagonal problem on the column
at the right edge of the window. For beta > 0 it is the single well on a
uniform line with the same spacing (orientation effects are O(h^2) and are
absorbed into the margin by the caller if needed).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from . import transverse1d as t1d
from .eigensolve import DEFAULT_SEED, lowest_k
from .errors import BracketError, DomainError, InconclusiveError, KindError
from .geometry import Curve, build_bookcover
from .operator2d import assemble, assemble_masked_strip, grid_for_curve, sample_potential
from .transverse1d import TransverseProfile

THRESHOLD_SOURCES = ("single_well", "double_well", "delta_formula", "double_delta_formula")
MIN_MARGIN = 1e-6


# ---------------------------------------------------------------- thresholds


@dataclass(frozen=True)
class ThresholdReport:
    beta: float
    threshold: float
    source: str
    tolerance: float
    eta: float = math.nan


def _depth(p: TransverseProfile, depth: Optional[float]) -> TransverseProfile:
    return p if depth is None else p.with_depth(depth)


def essential_threshold(p: TransverseProfile, rho: float, beta: float, depth: Optional[float] = None,
                        n_list=t1d.DEFAULT_N_LIST) -> ThresholdReport:
    """
    Bottom of the essential spectrum.

    Diverging pages (beta > 0) see the single transverse well; parallel pages
    (beta = 0) see the double well with centres at +-rho.
    """
    p = _depth(p, depth)
    if not rho > 0 or not 0.0 <= beta < 0.5 * math.pi:
        raise DomainError(f"need rho > 0 and beta in [0, pi/2), got rho={rho}, beta={beta}")
    if p.regular and not rho > p.a:
        raise DomainError(f"need rho > a, got rho={rho}, a={p.a}")
    if not p.regular:
        if beta > 0:
            return ThresholdReport(beta, t1d.delta_ground(p.depth), "delta_formula", 0.0)
        return ThresholdReport(beta, t1d.double_delta_ground(p.depth, rho), "double_delta_formula", 1e-12,
                               t1d.double_delta_eta(p.depth, rho))
    if beta > 0:
        g = t1d.converged_single_well(p, n_list)
        return ThresholdReport(beta, g.energy, "single_well", g.error, g.eta)
    g = t1d.converged_double_well(p, rho, n_list)
    return ThresholdReport(beta, g.energy, "double_well", g.error, g.eta)


def default_pad(p: TransverseProfile, energy: float) -> float:
    """Window padding 5*max(a, 1/sqrt|eps|)."""
    decay = 1.0 / math.sqrt(abs(energy)) if energy < 0 else math.inf
    return 5.0 * max(p.a, decay)


# ---------------------------------------------------------------- 2D counting


@dataclass(frozen=True)
class GridSpec:
    """Numerical parameters of a 2D run; ``pad=None`` selects :func:`default_pad`."""

    h: float
    pad: Optional[float] = None
    tail_length: Optional[float] = None
    k: int = 4
    tol: float = 1e-6
    seed: int = DEFAULT_SEED


@dataclass
class CountReport:
    count_lower: int
    count_upper: int
    nu: float
    margin: float
    beta: float = math.nan
    nu_grid: float = math.nan
    eigen_dirichlet: np.ndarray = field(default_factory=lambda: np.empty(0))
    eigen_neumann: np.ndarray = field(default_factory=lambda: np.empty(0))
    threshold_dirichlet: float = math.nan
    threshold_neumann: float = math.nan
    residual_max: float = math.nan
    dimension: int = 0


def channel_thresholds(c: Curve, p: TransverseProfile, f) -> tuple[float, float]:
    """Discrete channel thresholds ``(dirichlet, neumann)`` matching the grid of ``f``."""
    g = f.grid
    if c.beta == 0:
        col = f.values[:, -1]
        thr_d = float(t1d.tridiagonal_eigs(col[1:-1], g.hy, "dirichlet", 1)[0])
        thr_n = float(t1d.tridiagonal_eigs(col, g.hy, "neumann", 1)[0])
        return thr_d, thr_n
    h = g.hy
    m = int(math.ceil((p.a + (g.ymax - g.ymin) / 2.0) / h))
    x = h * np.arange(-m, m + 1)
    col = p.depth * t1d.eval_profile(p, x)
    thr_d = float(t1d.tridiagonal_eigs(col[1:-1], h, "dirichlet", 1)[0])
    thr_n = float(t1d.tridiagonal_eigs(col, h, "neumann", 1)[0])
    return thr_d, thr_n


def _window(c: Curve, p: TransverseProfile, spec: GridSpec, thr: float):
    pad = default_pad(p, thr) if spec.pad is None else spec.pad
    g = grid_for_curve(c, p.a, spec.h, pad, spec.tail_length)
    return sample_potential(c, p, g)


def _spectrum_below(A, level: float, spec: GridSpec):
    k = min(spec.k, A.dimension - 1)
    while True:
        r = lowest_k(A, k, tol=spec.tol, seed=spec.seed, vectors=False)
        if r.eigenvalues[-1] >= level or k >= A.dimension - 1:
            return r
        k = min(2 * k, A.dimension - 1)


def count_discrete(c: Curve, p: TransverseProfile, spec: GridSpec, nu: Optional[float] = None,
                   margin: Optional[float] = None, depth: Optional[float] = None) -> CountReport:
    """
    Eigenvalues below ``nu - margin`` under Dirichlet and Neumann outer boundaries.

    ``nu`` may not exceed the essential threshold (above it the box
    eigenvalues are truncation artifacts). ``nu=None`` counts below the
    essential threshold itself (the discrete
    channel threshold of the grid). A level given in continuum units is
    shifted by the grid's threshold bias before counting. Raises
    :class:`InconclusiveError` when an eigenvalue falls inside
    ``[nu - margin, nu + margin]``.
    """
    p = _depth(p, depth)
    thr = essential_threshold(p, c.rho, c.beta)
    f = _window(c, p, spec, thr.threshold)
    thr_d, thr_n = channel_thresholds(c, p, f)
    if margin is None:
        margin = max(3.0 * abs(thr_d - thr_n), MIN_MARGIN)
    if nu is None:
        nu, nu_grid = thr.threshold, thr_d
    else:
        if not nu <= thr.threshold:
            raise DomainError(f"nu={nu} lies above the essential threshold {thr.threshold:.10g}")
        nu_grid = nu + (thr_d - thr.threshold)
    level = nu_grid + margin
    spectra = {}
    for bc in ("dirichlet", "neumann"):
        spectra[bc] = _spectrum_below(assemble(f, bc), level, spec)
    bad = [(bc, e) for bc, r in spectra.items() for e in r.eigenvalues if abs(e - nu_grid) <= margin]
    if bad:
        raise InconclusiveError(
            f"eigenvalue {bad[0][1]:.10g} ({bad[0][0]}) within margin {margin:.3g} of level {nu_grid:.10g}"
        )
    ed, en = spectra["dirichlet"].eigenvalues, spectra["neumann"].eigenvalues
    lower = int(np.sum(ed < nu_grid - margin))
    upper = int(np.sum(en < nu_grid - margin))
    return CountReport(
        count_lower=lower, count_upper=upper, nu=float(nu), margin=float(margin), beta=c.beta,
        nu_grid=float(nu_grid), eigen_dirichlet=ed, eigen_neumann=en,
        threshold_dirichlet=thr_d, threshold_neumann=thr_n,
        residual_max=float(max(np.max(r.residual_norms) for r in spectra.values())),
        dimension=int(assemble(f, "neumann").dimension),
    )


# ---------------------------------------------------------------- variational bound


@dataclass(frozen=True)
class VariationalBoundReport:
    n_nu: int
    L_star: float
    R_value: float
    eta: float
    rho_beta: float
    eps_rho_beta: float = math.nan


def R_nu(nu: float, eps_rb: float, eta: float, L, beta: float):
    """Rayleigh-quotient bound (nu - eps + nu eta^2 L t) / (1 + eta^2 L t), t = tan(beta/2)."""
    q = eta * eta * np.asarray(L, dtype=float) * math.tan(0.5 * beta)
    return (nu - eps_rb + nu * q) / (1.0 + q)


def variational_count_bound(p: TransverseProfile, rho: float, beta: float, nu: float,
                            L_grid: Optional[Sequence[float]] = None,
                            depth: Optional[float] = None) -> VariationalBoundReport:
    """
    Number of trial functions certified by the closing-book quadratic-form bound.

    For each strip length L the bound admits every mode m with
    (pi*m/L)^2 < R_nu(L); ``n_nu`` is the largest such count over ``L_grid``.
    ``nu <= eps_{rho_beta}`` yields zero.
    """
    p = _depth(p, depth)
    if not beta > 0:
        raise DomainError("the variational bound needs beta > 0")
    rho_b = rho / math.cos(0.5 * beta)
    eps_v = essential_threshold(p, rho, beta).threshold
    if not nu < eps_v:
        raise DomainError(f"nu={nu} must lie below the single-well energy {eps_v:.10g}")
    if p.regular:
        g = t1d.converged_double_well(p, rho_b)
        eps_rb, eta = g.energy, g.eta
    else:
        eps_rb, eta = t1d.double_delta_ground(p.depth, rho_b), t1d.double_delta_eta(p.depth, rho_b)
    if L_grid is None:
        L_grid = np.geomspace(1e-2, 1e4, 4001)
    L = np.asarray(L_grid, dtype=float)
    R = R_nu(nu, eps_rb, eta, L, beta)
    root = np.sqrt(np.clip(R, 0.0, None))
    # strict inequality (pi m / L)^2 < R
    n = np.where(R > 0, np.ceil(L * root / math.pi) - 1.0, 0.0).astype(int)
    n = np.maximum(n, 0)
    i = int(np.argmax(n)) if np.any(n > 0) else int(np.argmax(R))
    return VariationalBoundReport(int(n[i]), float(L[i]), float(R[i]), float(eta), rho_b, float(eps_rb))


# ---------------------------------------------------------------- critical coupling


def dimensionless_strength(p: TransverseProfile, depth: Optional[float] = None) -> float:
    """sqrt(depth) * A with A = (1/pi) * integral of sqrt(w) over the well support."""
    p = _depth(p, depth)
    if not p.regular:
        raise KindError("dimensionless strength needs a regular profile")
    if p.kind == "square_well":
        A = 2.0 * p.a / math.pi
    else:
        A = quad(lambda u: math.sqrt(max(float(t1d.eval_profile(p, u)), 0.0)), -p.a, p.a,
                 epsabs=1e-13, epsrel=1e-12, limit=200)[0] / math.pi
    return math.sqrt(p.depth) * A


@dataclass(frozen=True)
class CriticalDepthReport:
    depth: float
    band: tuple
    dn_gap: float
    strength: float
    evaluations: int


def binds(c: Curve, p: TransverseProfile, spec: GridSpec, bc: str, depth: float) -> bool:
    """True when the lowest ``bc`` eigenvalue lies below the discrete threshold minus the margin."""
    q = p.with_depth(depth)
    thr = essential_threshold(q, c.rho, c.beta)
    f = _window(c, q, spec, thr.threshold)
    thr_d, thr_n = channel_thresholds(c, q, f)
    margin = max(3.0 * abs(thr_d - thr_n), MIN_MARGIN)
    level = thr_d if bc == "dirichlet" else thr_n
    e1 = lowest_k(assemble(f, bc), 1, tol=spec.tol, seed=spec.seed, vectors=False).eigenvalues[0]
    return bool(e1 < level - margin)


def critical_depth(c: Curve, p: TransverseProfile, depth_lo: float, depth_hi: float, tol: float,
                   spec: GridSpec) -> CriticalDepthReport:
    """
    Depth at which a bound state below the essential threshold appears.

    Onset is bisected separately for the Neumann and the Dirichlet outer
    boundary. The Neumann onset is returned as the estimate: a Neumann cut
    across a straight channel leaves the zero-momentum channel mode
    admissible, so its onset converges to the infinite-domain value as the
    window grows. ``band`` is ``(neumann_onset, dirichlet_onset)``.
    """
    if not 0 < depth_lo < depth_hi or not tol > 0:
        raise DomainError("need 0 < depth_lo < depth_hi and tol > 0")
    evals = [0]

    def test(bc, d):
        evals[0] += 1
        return binds(c, p, spec, bc, d)

    if test("neumann", depth_lo) or test("dirichlet", depth_lo):
        raise BracketError(f"already bound at depth_lo={depth_lo}")
    if not test("dirichlet", depth_hi):
        raise BracketError(f"no Dirichlet bound state at depth_hi={depth_hi}")

    onset = {}
    lo_n = depth_lo
    for bc in ("neumann", "dirichlet"):
        lo, hi = lo_n, depth_hi
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if test(bc, mid):
                hi = mid
            else:
                lo = mid
        onset[bc] = 0.5 * (lo + hi)
        # Dirichlet onset cannot precede the Neumann one
        lo_n = lo
    lam_n, lam_d = onset["neumann"], onset["dirichlet"]
    if lam_d < lam_n - tol:
        raise InconclusiveError(f"Dirichlet onset {lam_d} below Neumann onset {lam_n}")
    return CriticalDepthReport(lam_n, (lam_n, lam_d), lam_d - lam_n, dimensionless_strength(p, lam_n), evals[0])


# ---------------------------------------------------------------- comparison operator S_Gamma


def _sgamma_grid(s0: float, L_min: float, base: int = 2000):
    M = max(2, math.ceil(L_min / s0))
    n0 = 2 * M * math.ceil(base / (2 * M))
    return M * s0, (n0, 2 * n0, 4 * n0)


def sgamma_spectrum(c: Curve, k: Optional[int] = None, rtol: float = 1e-6) -> np.ndarray:
    """
    Negative eigenvalues of -d^2/ds^2 - gamma(s)^2/4 along the bookcover.

    gamma^2/4 is a square well of depth 1/(4R^2) on |s| < s0. The levels are
    computed by finite differences with the well edges on nodes, extrapolated,
    and checked against the exact square-well roots.
    """
    depth = 0.25 / c.arc_radius**2
    exact = t1d.square_well_levels(c.s0, depth)
    if k is not None:
        exact = exact[:k]
    nlev = len(exact)
    L, n_list = _sgamma_grid(c.s0, c.s0 + 12.0 / math.sqrt(-exact[-1]))
    well = t1d.square_well(c.s0, depth)
    shape = lambda x: depth * t1d._node_shape(well, x)
    per_grid = [np.array([s.energy for s in t1d.solve_potential(shape, L, n, nlev)]) for n in n_list]
    levels = np.array([t1d.richardson([g[j] for g in per_grid], 2.0)[0] for j in range(nlev)])
    dev = np.abs(levels - np.asarray(exact))
    if np.any(dev > rtol * np.maximum(np.abs(exact), 1e-3 * depth)):
        raise AssertionError(f"finite-difference levels {levels} disagree with exact roots {exact}")
    return levels


# ---------------------------------------------------------------- deep ditch


@dataclass(frozen=True)
class StrongEssRow:
    lam: float
    energy: float
    delta: float
    splitting: float = math.nan


def strong_ess_check(p: TransverseProfile, rho: float, lambda_list: Sequence[float],
                     depth: Optional[float] = None, n_list=t1d.DEFAULT_N_LIST):
    """
    Deep-ditch law for the channel threshold.

    For each lambda the double well of ``depth*w + lambda*chi_(-a,a)`` is
    solved and ``Delta = |eps + lambda - eps_D|`` is compared with the
    Dirichlet-box energy ``eps_D`` of the undeepened profile. ``splitting``
    is the single-well energy minus the double-well energy at the same
    lambda (the tunnelling part). Returns the rows and the least-squares
    slope of log(Delta) against sqrt(lambda).
    """
    p = _depth(p, depth)
    t1d._require_regular(p)
    if not rho > p.a:
        raise DomainError(f"need rho > a, got rho={rho}, a={p.a}")
    eps_d = t1d.dirichlet_box_ground(p, n_list)
    box = t1d.square_well(p.a, 1.0)
    rows = []
    for lam in lambda_list:
        lam = float(lam)
        if lam < 0:
            raise DomainError(f"lambda must be nonnegative, got {lam}")

        def potential(x, lam=lam):
            base = t1d._node_shape(p, x - rho) + t1d._node_shape(p, x + rho)
            chi = t1d._node_shape(box, x - rho) + t1d._node_shape(box, x + rho)
            return p.depth * base + lam * chi

        def single(x, lam=lam):
            return p.depth * t1d._node_shape(p, x) + lam * t1d._node_shape(box, x)

        q = p.with_depth(p.depth + lam)
        g = t1d._converged(q, rho, potential, [rho - p.a, rho + p.a], n_list)
        g1 = t1d._converged(q, 0.0, single, [p.a], n_list)
        rows.append(StrongEssRow(lam, g.energy, abs(g.energy + lam - eps_d), g1.energy - g.energy))
    slope = math.nan
    pos = [r for r in rows if r.lam > 0 and r.delta > 0]
    if len(pos) >= 2:
        xs = np.sqrt([r.lam for r in pos])
        ys = np.log([r.delta for r in pos])
        slope = float(np.polyfit(xs, ys, 1)[0])
    return rows, slope


# ---------------------------------------------------------------- closing the book


@dataclass
class SweepReport:
    rows: list
    bounds: list
    slope: float
    intercept: float


def _sweep_task(args):
    p, rho, beta, nu, spec, tail = args
    c = build_bookcover(rho, beta, tail)
    return count_discrete(c, p, spec, nu), variational_count_bound(p, rho, beta, nu)


def closing_sweep(p: TransverseProfile, rho: float, beta_list: Sequence[float], nu: float, spec: GridSpec,
                  tail_length=5.0, workers: int = 1, depth: Optional[float] = None) -> SweepReport:
    """
    Counts below ``nu`` for each opening ``beta`` plus the variational lower bound.

    ``tail_length`` is one length for every entry or a sequence matching
    ``beta_list`` (small openings need longer pages). Results follow the
    order of ``beta_list``. The fit is count_upper against 1/beta by least
    squares.
    """
    p = _depth(p, depth)
    eps_r = essential_threshold(p, rho, 0.0).threshold
    eps_v = essential_threshold(p, rho, 1.0).threshold
    if not eps_r < nu < eps_v:
        raise DomainError(f"nu={nu} must lie in ({eps_r:.10g}, {eps_v:.10g})")
    tails = list(tail_length) if np.ndim(tail_length) else [tail_length] * len(beta_list)
    if len(tails) != len(beta_list):
        raise DomainError(f"{len(tails)} tail lengths for {len(beta_list)} openings")
    tasks = [(p, rho, float(b), nu, spec, float(t)) for b, t in zip(beta_list, tails)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_sweep_task, tasks))
    else:
        out = [_sweep_task(t) for t in tasks]
    rows = [o[0] for o in out]
    bounds = [o[1] for o in out]
    slope = intercept = math.nan
    if len(rows) >= 2:
        inv = 1.0 / np.asarray([r.beta for r in rows])
        slope, intercept = (float(v) for v in np.polyfit(inv, [r.count_upper for r in rows], 1))
    return SweepReport(rows, bounds, slope, intercept)


@dataclass(frozen=True)
class CriticalRow:
    a_over_rho: float
    exponent: int
    report: CriticalDepthReport


def find_bracket(c: Curve, p: TransverseProfile, spec: GridSpec, guess: float, factor: float = 1.5,
                 max_steps: int = 12) -> tuple[float, float]:
    """Expand geometrically around ``guess`` until unbound/bound depths bracket the onset."""
    lo = hi = guess
    for _ in range(max_steps):
        if not binds(c, p, spec, "neumann", lo):
            break
        lo /= factor
    else:
        raise BracketError(f"still bound at depth {lo}")
    for _ in range(max_steps):
        if binds(c, p, spec, "dirichlet", hi):
            break
        hi *= factor
    else:
        raise BracketError(f"still unbound at depth {hi}")
    if hi <= lo:
        hi = lo * factor
    return lo, hi


def _critical_task(args):
    ratio, exponent, a, spec, tail, strength_guess, rtol = args
    rho = a / ratio
    c = build_bookcover(rho, 0.0, tail)
    p = t1d.poly_well(exponent, a, 1.0)
    unit = dimensionless_strength(p, 1.0)
    guess = (strength_guess / unit) ** 2
    lo, hi = find_bracket(c, p, spec, guess)
    return CriticalRow(ratio, exponent, critical_depth(c, p, lo, hi, rtol * guess, spec))


def critical_sweep(ratios: Sequence[float], exponents: Sequence[int], spec: GridSpec, a: float = 0.1,
                   tail_length: float = 3.0, strength_guess: float = 0.6, rtol: float = 2e-3,
                   workers: int = 1) -> list:
    """
    Critical depth over a grid of relative widths a/rho and profile exponents.

    The half-width is fixed and rho = a / ratio; the dimensionless strength
    is invariant under the scaling (rho, a, depth) -> (s rho, s a, depth/s^2).
    Rows follow the order ratios x exponents (exponent varying fastest).
    """
    tasks = [(float(r), int(e), a, spec, tail_length, strength_guess, rtol) for r in ratios for e in exponents]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_critical_task, tasks))
    return [_critical_task(t) for t in tasks]


# ---------------------------------------------------------------- Dirichlet strip


@dataclass(frozen=True)
class StripRow:
    h: float
    eigenvalue: float
    dimension: int
    residual: float


def dirichlet_strip_study(c: Curve, p: TransverseProfile, h_list: Sequence[float], depth: Optional[float] = None,
                          tol: float = 1e-8, seed: int = DEFAULT_SEED) -> list:
    """
    Lowest eigenvalue of the masked Dirichlet tube around ``c`` on a sequence of grids.

    The tube ends where the straight pages are cut at ``c.tail_length``.
    """
    p = _depth(p, depth)
    rows = []
    for h in h_list:
        g = grid_for_curve(c, p.a, float(h), 2.0 * float(h))
        A = assemble_masked_strip(c, p, g)
        r = lowest_k(A, 1, tol=tol, seed=seed, vectors=False)
        rows.append(StripRow(float(g.hx), float(r.eigenvalues[0]), A.dimension, float(r.residual_norms[0])))
    return rows
