import math

import numpy as np
import pytest

from oracles import double_delta_eta_numeric, double_delta_kappa, sgamma_ground
from softguide import analysis as an
from softguide.errors import BracketError, DomainError, InconclusiveError, KindError
from softguide.geometry import build_bookcover
from softguide.operator2d import Grid2D, assemble, sample_potential
from softguide.eigensolve import lowest_k
from softguide.transverse1d import (
    converged_single_well,
    delta_point,
    dirichlet_box_ground,
    poly_well,
    square_well,
    tridiagonal_eigs,
)

HAIRPIN = poly_well(2, 0.1, 225.0)
COARSE = an.GridSpec(h=0.025, pad=0.4)


def test_threshold_examples():
    r = an.essential_threshold(delta_point(2.0), 1.0, 0.3)
    assert r.threshold == -1.0 and r.source == "delta_formula"
    r = an.essential_threshold(delta_point(2.0), 1.0, 0.0)
    assert r.threshold == pytest.approx(-1.2297, abs=5e-4) and r.source == "double_delta_formula"
    r0 = an.essential_threshold(HAIRPIN, 0.25, 0.0)
    r1 = an.essential_threshold(HAIRPIN, 0.25, 0.2)
    assert r0.source == "double_well" and r1.source == "single_well"
    assert r0.threshold == pytest.approx(-97.08907978200428, abs=1e-7)
    assert r0.threshold < r1.threshold


@pytest.mark.parametrize("rho", [0.12, 0.2, 0.5])
def test_double_threshold_below_single(rho):
    assert an.essential_threshold(HAIRPIN, rho, 0.0).threshold < an.essential_threshold(HAIRPIN, rho, 0.1).threshold


def test_decoupled_double_threshold_within_tolerance():
    # the splitting at rho = 2 is far below the discretization error
    far = an.essential_threshold(HAIRPIN, 2.0, 0.0).threshold
    assert far < an.essential_threshold(HAIRPIN, 2.0, 0.1).threshold + 1e-8


def test_threshold_rejects_overlapping_wells():
    with pytest.raises(DomainError):
        an.essential_threshold(HAIRPIN, 0.1, 0.0)


def test_dimensionless_strength():
    assert an.dimensionless_strength(poly_well(2, 0.3, 1.0)) == pytest.approx(0.15, rel=1e-10)
    assert an.dimensionless_strength(square_well(0.3, 1.0)) == pytest.approx(0.6 / math.pi, rel=1e-12)
    assert an.dimensionless_strength(HAIRPIN) == pytest.approx(0.75, rel=1e-10)
    # the exponent-8 profile is fuller than the parabola
    assert an.dimensionless_strength(poly_well(8, 0.1, 1.0)) > an.dimensionless_strength(poly_well(2, 0.1, 1.0))
    with pytest.raises(KindError):
        an.dimensionless_strength(delta_point(1.0))


def test_straight_ditch_has_no_bound_state():
    # a window around a straight part of the channel, far from the bend
    c = build_bookcover(0.25, 0.0, 6.0)
    h = 0.025
    g = Grid2D(1.0, 3.0, -1.0, 1.0, 81, 81)
    f = sample_potential(c, HAIRPIN, g)
    col = f.values[:, 0]
    thr_d = tridiagonal_eigs(col[1:-1], h, "dirichlet", 1)[0]
    thr_n = tridiagonal_eigs(col, h, "neumann", 1)[0]
    margin = max(3 * abs(thr_d - thr_n), an.MIN_MARGIN)
    ed = lowest_k(assemble(f, "dirichlet"), 1).eigenvalues[0]
    en = lowest_k(assemble(f, "neumann"), 1).eigenvalues[0]
    assert ed > thr_d - margin
    assert en > thr_n - margin
    # the Neumann flat mode sits exactly at the channel threshold
    assert en == pytest.approx(thr_n, abs=1e-8)


@pytest.fixture(scope="module")
def hairpin_coarse_count():
    return an.count_discrete(build_bookcover(0.25, 0.0, 2.0), HAIRPIN, COARSE)


def test_hairpin_coarse_count(hairpin_coarse_count):
    r = hairpin_coarse_count
    assert r.count_lower <= r.count_upper
    assert r.count_lower >= 1
    assert r.margin == pytest.approx(max(3 * abs(r.threshold_dirichlet - r.threshold_neumann), 1e-6))
    assert np.all(r.eigen_neumann[: len(r.eigen_dirichlet)] <= r.eigen_dirichlet + 1e-9)


def test_count_inconclusive_inside_margin(hairpin_coarse_count):
    r = hairpin_coarse_count
    nu = r.eigen_dirichlet[0] - (r.nu_grid - r.nu)
    with pytest.raises(InconclusiveError):
        an.count_discrete(build_bookcover(0.25, 0.0, 2.0), HAIRPIN, COARSE, nu=nu)


def test_count_rejects_level_above_threshold():
    with pytest.raises(DomainError):
        an.count_discrete(build_bookcover(0.25, 0.0, 2.0), HAIRPIN, COARSE, nu=-90.0)


def _bound_oracle(alpha, rho, beta, nu, L):
    rb = rho / math.cos(beta / 2)
    eps = -double_delta_kappa(alpha, rb) ** 2
    eta = double_delta_eta_numeric(alpha, rb)
    q = eta**2 * L * math.tan(beta / 2)
    R = (nu - eps + nu * q) / (1 + q)
    n = np.where(R > 0, np.floor(L * np.sqrt(np.clip(R, 0, None)) / math.pi - 1e-12), 0)
    return int(n.max())


def test_variational_bound_delta_example():
    L = np.geomspace(1e-2, 1e4, 4001)
    rep = an.variational_count_bound(delta_point(2.0), 1.0, 0.2, -1.1, L)
    assert rep.n_nu == _bound_oracle(2.0, 1.0, 0.2, -1.1, L) == 0
    assert rep.rho_beta == pytest.approx(1.0 / math.cos(0.1))
    assert rep.eta == pytest.approx(double_delta_eta_numeric(2.0, rep.rho_beta), rel=1e-8)
    # frozen values for smaller openings
    got = [an.variational_count_bound(delta_point(2.0), 1.0, b, -1.1, L).n_nu for b in (0.05, 0.02, 0.01)]
    assert got == [1, 2, 5]
    assert got == [_bound_oracle(2.0, 1.0, b, -1.1, L) for b in (0.05, 0.02, 0.01)]


def test_variational_bound_grows_as_book_closes():
    nu = -13.0
    p = poly_well(2, 0.1, 60.0)
    ns = [an.variational_count_bound(p, 0.12, b, nu).n_nu for b in (0.4, 0.2, 0.1, 0.05, 0.025)]
    assert all(x <= y for x, y in zip(ns, ns[1:]))
    assert ns[-1] > ns[0]


def test_variational_report_invariant():
    rep = an.variational_count_bound(delta_point(2.0), 1.0, 0.01, -1.1)
    assert rep.n_nu >= 0
    assert (math.pi * rep.n_nu / rep.L_star) ** 2 < rep.R_value


def test_variational_level_below_double_well_gives_zero():
    rep = an.variational_count_bound(delta_point(2.0), 1.0, 0.1, -1.3)
    assert rep.n_nu == 0
    assert rep.R_value <= 0


def test_variational_domain_errors():
    with pytest.raises(DomainError):
        an.variational_count_bound(delta_point(2.0), 1.0, 0.1, -0.9)
    with pytest.raises(DomainError):
        an.variational_count_bound(delta_point(2.0), 1.0, 0.0, -1.1)


def test_sgamma_semicircle_against_oracle():
    c = build_bookcover(1.0, 0.0, 1.0)
    levels = an.sgamma_spectrum(c)
    assert len(levels) == 1
    assert levels[0] == pytest.approx(sgamma_ground(1.0, math.pi / 2), rel=1e-8)


def test_sgamma_scaling():
    l1 = an.sgamma_spectrum(build_bookcover(1.0, 0.0, 1.0))
    l2 = an.sgamma_spectrum(build_bookcover(2.0, 0.0, 1.0))
    np.testing.assert_allclose(l2, 0.25 * l1, rtol=1e-8)


@pytest.mark.parametrize("beta", [0.0, 0.5, 1.0, 1.5])
def test_sgamma_always_binds(beta):
    assert an.sgamma_spectrum(build_bookcover(1.0, beta, 1.0))[0] < 0


def test_strong_ess_table():
    rows, slope = an.strong_ess_check(HAIRPIN, 0.25, [0.0, 50.0, 100.0, 200.0, 400.0])
    eps_d = dirichlet_box_ground(HAIRPIN)
    assert rows[0].delta == pytest.approx(abs(an.essential_threshold(HAIRPIN, 0.25, 0.0).threshold - eps_d))
    deltas = [r.delta for r in rows]
    assert all(x > y for x, y in zip(deltas, deltas[1:]))
    assert slope < 0
    split = [r.splitting for r in rows]
    assert all(s > 0 for s in split)
    assert all(x > y for x, y in zip(split, split[1:]))


def test_strong_ess_rejects_negative_lambda():
    with pytest.raises(DomainError):
        an.strong_ess_check(HAIRPIN, 0.25, [-1.0])


def test_binds_weak_and_strong_sides():
    c = build_bookcover(0.25, 0.0, 1.5)
    spec = an.GridSpec(h=0.025, pad=0.6)
    assert not an.binds(c, HAIRPIN, spec, "neumann", 20.0)
    assert an.binds(c, HAIRPIN, spec, "dirichlet", 400.0)


def test_critical_depth_bracket_errors():
    c = build_bookcover(0.25, 0.0, 1.5)
    spec = an.GridSpec(h=0.025, pad=0.6)
    with pytest.raises(BracketError):
        an.critical_depth(c, HAIRPIN, 300.0, 400.0, 1.0, spec)
    with pytest.raises(BracketError):
        an.critical_depth(c, HAIRPIN, 10.0, 20.0, 1.0, spec)
    with pytest.raises(DomainError):
        an.critical_depth(c, HAIRPIN, 20.0, 10.0, 1.0, spec)


def test_critical_depth_tail_invariance():
    spec = an.GridSpec(h=0.025, pad=0.8)
    tol = 0.5
    r1 = an.critical_depth(build_bookcover(0.25, 0.0, 2.0), HAIRPIN, 60.0, 300.0, tol, spec)
    r2 = an.critical_depth(build_bookcover(0.25, 0.0, 4.0), HAIRPIN, 60.0, 300.0, tol, spec)
    assert r1.band[0] <= r1.band[1]
    assert abs(r1.depth - r2.depth) <= 2 * tol
    assert r1.strength == pytest.approx(an.dimensionless_strength(HAIRPIN, r1.depth))


def test_closing_sweep_rejects_level_outside_window():
    p = poly_well(2, 0.1, 60.0)
    with pytest.raises(DomainError):
        an.closing_sweep(p, 0.12, [0.4], -5.0, COARSE)


def test_default_pad():
    assert an.default_pad(HAIRPIN, -100.0) == pytest.approx(0.5)
    assert an.default_pad(HAIRPIN, -1.0) == pytest.approx(5.0)


def test_weak_coupling_single_well_slope():
    p = poly_well(2, 0.1, 0.01)
    e = converged_single_well(p).energy
    target = 0.5 * 2 * 0.1 * 2 / 3
    assert abs(math.sqrt(-e) / 0.01 - target) / target <= 0.10
