from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanctl.carleman import (
    CutoffSpec,
    _pair_ratio,
    admissible_family,
    build_weight_F1,
    build_weight_F2,
    build_weights,
    carleman_ratio,
    default_bundles,
    default_weight_geometry,
    energy_lemma_check,
    energy_window,
    fursikov_N,
    fursikov_weights,
    log_weighted_norm,
    observability_ratio,
    quintic_cutoff,
    random_terminal,
    rho_weight,
    verify_weight_properties,
)
from stefanctl.config import Interval
from stefanctl.discrete import Discretization
from stefanctl.errors import ConfigError, DegenerateSampleError, WeightOverflowError
from stefanctl.parabolic import space_weights
from stefanctl.transform import BoundaryTrajectory

from .conftest import make_cfg, scenario

OMEGA1, OMEGA2 = Interval(0.15, 0.55), Interval(0.2, 0.45)


@pytest.fixture(scope="module")
def narrow_cfg():
    """Reference-like problem whose ell* leaves room for the example geometry."""
    return make_cfg(ell_star=0.8, n_space=41, n_time=41)


@pytest.fixture(scope="module")
def pair(narrow_cfg):
    ell = BoundaryTrajectory.static(narrow_cfg)
    return build_weight_F2(ell, 0.1, 0.6, OMEGA1, OMEGA2)


def one_sided_derivatives(p, x0, width):
    """First and second derivatives at ``x0`` of the polynomial through
    samples on ``[x0, x0 + width]``.  Exact for a quintic up to roundoff."""
    s = np.linspace(0.0, 1.0, 12)
    coef = np.polynomial.polynomial.polyfit(s, p(x0 + width * s), 5)
    d1 = np.polynomial.polynomial.polyval(0.0, np.polynomial.polynomial.polyder(coef, 1)) / width
    d2 = np.polynomial.polynomial.polyval(0.0, np.polynomial.polynomial.polyder(coef, 2)) / width**2
    return d1, d2


# ---------------------------------------------------------------------------
# cut-offs


def test_quintic_endpoints_and_midpoint():
    p = quintic_cutoff(0.2, 0.7)
    assert p(0.2) == 1.0 and p(0.7) == 0.0
    assert p(-5.0) == 1.0 and p(3.0) == 0.0
    assert p(0.45) == pytest.approx(0.5, abs=1e-15)


def test_quintic_flat_ends():
    b, c = 0.2, 0.7
    p = quintic_cutoff(b, c)
    d1, d2 = one_sided_derivatives(p, b, c - b)
    assert abs(d1) <= 1e-8 and abs(d2) <= 1e-8
    q = lambda x: p(c - x)  # noqa: E731  mirror so the samples sit inside (b, c)
    d1, d2 = one_sided_derivatives(q, 0.0, c - b)
    assert abs(d1) <= 1e-8 and abs(d2) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(b=st.floats(-5, 5), width=st.floats(1e-3, 10))
def test_quintic_monotone(b, width):
    p = quintic_cutoff(b, b + width)
    x = np.linspace(b - width, b + 2 * width, 2001)
    v = p(x)
    assert np.all(np.diff(v) <= 0.0)
    assert v.min() >= 0.0 and v.max() <= 1.0


def test_quintic_rejects_bad_interval():
    with pytest.raises(ValueError):
        quintic_cutoff(0.5, 0.5)
    with pytest.raises(ValueError):
        quintic_cutoff(0.6, 0.5)


def test_cutoff_spec_bump():
    th = CutoffSpec(rise=(0.1, 0.2), fall=(0.4, 0.5))
    assert th.flat_one.lo == 0.2 and th.flat_one.hi == 0.4
    np.testing.assert_array_equal(th(np.array([0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.9])),
                                  [0, 0, 1, 1, 1, 0, 0])
    with pytest.raises(ValueError):
        CutoffSpec(rise=(0.1, 0.3), fall=(0.2, 0.5))


# ---------------------------------------------------------------------------
# eta*


def test_fursikov_N_example():
    assert fursikov_N(0.1, 0.2, 0.5, 0.6, 0.8) == pytest.approx(3.5, rel=1e-15)


def test_example_geometry_sup_norm(narrow_cfg):
    ell = BoundaryTrajectory.static(narrow_cfg)
    eta = build_weight_F1(ell, 0.1, 0.6, OMEGA1, inset=0.125)
    assert eta.inner.lo == pytest.approx(0.2) and eta.inner.hi == pytest.approx(0.5)
    assert eta.N == pytest.approx(3.5)
    assert eta.sup_norm == pytest.approx(4.5)
    _, values = eta.sample()
    assert values.max() == pytest.approx(4.5, rel=1e-12)


def test_value_one_at_b_tilde(pair):
    eta1, eta2 = pair
    ell = eta1.ell
    for eta in pair:
        np.testing.assert_allclose(eta(0.6, ell.values), 1.0, rtol=0, atol=1e-14)


def test_pair_common_N_and_agreement(pair):
    eta1, eta2 = pair
    assert eta1.N == eta2.N
    ell = eta1.ell
    x = np.linspace(0.0, ell.ell0, 2001)
    off = (x <= eta1.a_tilde) | (x >= eta1.b_tilde)
    assert np.max(np.abs(eta1(x, ell.ell0) - eta2(x, ell.ell0))[off]) <= 1e-12


def test_nesting_violation_rejected(narrow_cfg):
    ell = BoundaryTrajectory.static(narrow_cfg)
    with pytest.raises(ConfigError):
        build_weight_F2(ell, 0.2, 0.6, OMEGA1, OMEGA2)  # a~ above omega
    with pytest.raises(ConfigError):
        build_weight_F2(ell, 0.1, 0.9, OMEGA1, OMEGA2)  # b~ beyond ell*


@pytest.mark.parametrize("member", [0, 1, 3], ids=["static", "expanding", "oscillating"])
def test_weight_clauses_hold_on_moving_boundaries(narrow_cfg, member):
    ell = admissible_family(narrow_cfg)[member]
    eta1, eta2 = build_weight_F2(ell, 0.1, 0.6, OMEGA1, OMEGA2)
    report = verify_weight_properties(eta1, partner=eta2)
    assert report.passed, report.failed()
    assert report.c_report >= 0.5 * min(1 / eta1.a_tilde, 1 / (ell.Bmax - eta1.b_tilde))
    assert verify_weight_properties(eta2, partner=eta1).passed


def test_ramp_and_boundary_values(narrow_cfg):
    ell = admissible_family(narrow_cfg)[3]
    eta1 = build_weight_F1(ell, 0.1, 0.6, OMEGA1)
    field_ = eta1.on_grid(narrow_cfg.grid)
    x = ell.values[:, None] * narrow_cfg.grid.xi[None, :] / ell.ell0
    right = x > 0.6
    ramp = 1 - (x - 0.6) / (ell.values[:, None] - 0.6)
    assert np.max(np.abs(field_ - ramp)[right]) <= 1e-12
    assert np.max(np.abs(eta1(ell.values, ell.values))) <= 1e-14
    assert not field_[:, 0].any()


def test_static_weight_is_time_independent(pair, narrow_cfg):
    field_ = pair[0].on_grid(narrow_cfg.grid)
    assert np.max(np.abs(field_ - field_[0])) <= 1e-12


def test_dropping_theta_c_breaks_positivity(pair):
    eta = pair[0]
    report = verify_weight_properties(eta.without("c"))
    names = [c.name for c in report.failed()]
    assert "positivity" in names
    x, _ = next(c for c in report.failed() if c.name == "positivity").witness
    a, ap, bp, b = eta.omega.lo, eta.inner.lo, eta.inner.hi, eta.omega.hi
    ga, gb = ap - a, b - bp
    assert (ap - ga / 3 <= x <= ap - ga / 9) or (bp + gb / 9 <= x <= bp + gb / 3)


def test_default_geometry_follows_case():
    g1 = scenario("uniformity")
    g2 = scenario("tracking_g2")
    assert len(default_weight_geometry(g1)[2]) == 1
    assert len(default_weight_geometry(g2)[2]) == 2
    assert len(build_weights(g2, BoundaryTrajectory.static(g2))) == 2


# ---------------------------------------------------------------------------
# exponential weights


@pytest.fixture(scope="module")
def bundle(pair, narrow_cfg):
    return fursikov_weights(pair[0], 1.0, 2.0, narrow_cfg.T, narrow_cfg.grid)


def test_sigma_plus_xi_identity(bundle, narrow_cfg):
    t = narrow_cfg.grid.t[1:-1, None]
    M, lam = bundle.sup_norm, bundle.params["lam"]
    lhs = np.logaddexp(bundle.log_sigma[1:-1], bundle.log_xi[1:-1])
    rhs = 4 * lam * M - np.log(t * (narrow_cfg.T - t))
    assert np.max(np.abs(lhs - rhs) / np.abs(rhs)) <= 1e-10
    assert np.all(bundle.log_sigma[1:-1] > -np.inf) and np.isinf(bundle.log_sigma[[0, -1]]).all()


def test_sigma_minimal_at_half_time(bundle, narrow_cfg):
    mid = (narrow_cfg.n_time - 1) // 2
    assert narrow_cfg.grid.t[mid] == pytest.approx(narrow_cfg.T / 2)
    ls = bundle.log_sigma[1:-1]
    assert np.all(ls >= bundle.log_sigma[mid] - 1e-12)
    assert np.all(bundle.log_sigma[[1, -2]] - bundle.log_sigma[mid] > np.log(10.0))


def test_edge_rows_are_negligible(bundle):
    s = bundle.params["s"]
    with np.errstate(over="ignore"):
        log_w = -2 * s * np.exp(bundle.log_sigma[[1, -2]]) + 3 * bundle.log_xi[[1, -2]]
    assert np.all(log_w <= np.log(1e-30))


def test_overflow_is_refused(pair, narrow_cfg):
    with pytest.raises(WeightOverflowError):
        fursikov_weights(pair[0], 1.0, 40.0, narrow_cfg.T, narrow_cfg.grid)
    with pytest.raises(ValueError):
        fursikov_weights(pair[0], 0.0, 1.0, narrow_cfg.T, narrow_cfg.grid)


def test_rho_weight(pair, narrow_cfg):
    b = fursikov_weights(pair[0], 1.0, 2.0, narrow_cfg.T, narrow_cfg.grid)
    log_rho = rho_weight(b, narrow_cfg.rho_nbhd)
    t, T = narrow_cfg.grid.t, narrow_cfg.T
    assert not log_rho[t <= T - narrow_cfg.rho_nbhd].any()
    assert np.all(np.diff(log_rho) >= 0)
    assert log_rho[-2] > np.log(1e6)
    with np.errstate(over="ignore"):
        assert np.all(np.exp(-2 * log_rho) <= 1.0)


def test_log_weighted_norm_matches_direct():
    cfg = make_cfg(n_space=21, n_time=21)
    g = cfg.grid
    rng = np.random.default_rng(0)
    log_rho = np.linspace(0.0, 3.0, g.n_time)
    u = rng.standard_normal(g.shape)
    jac = 1 + 0.1 * g.t
    w = (g.dt * jac)[:, None] * space_weights(g)[None, :]
    w[[0, -1]] *= 0.5
    direct = 0.5 * np.log(np.sum(np.exp(2 * log_rho)[:, None] * u**2 * w))
    assert log_weighted_norm(log_rho, u, jac, g) == pytest.approx(direct, rel=1e-12)
    # far beyond double range the log form stays finite
    assert np.isfinite(log_weighted_norm(log_rho + 1e4, u, jac, g))
    u[-1] = 0.0
    assert np.isfinite(log_weighted_norm(np.append(log_rho[:-1], np.inf), u, jac, g))
    u[-1, 3] = 1.0
    assert log_weighted_norm(np.append(log_rho[:-1], np.inf), u, jac, g) == np.inf


# ---------------------------------------------------------------------------
# energy lemma


def test_energy_window_unit_penalties():
    cfg = make_cfg(mu=(1.0, 1.0), coefficient_a="0")
    win = energy_window(cfg, BoundaryTrajectory.static(cfg))
    assert win["delta"] == pytest.approx(6.0) and win["t0"] == pytest.approx(1 / 12)


def test_energy_window_alternative_reading():
    cfg = make_cfg(mu=(1.0, 0.5), coefficient_a="0")
    win = energy_window(cfg, BoundaryTrajectory.static(cfg))
    assert win["delta"] == pytest.approx(4 + 1 + 2)
    assert win["delta_alt"] == pytest.approx(4 + 1 + 4)


def test_empty_window_passes_vacuously():
    cfg = scenario("reference").with_(n_space=21, n_time=21)
    rep = energy_lemma_check(None, cfg, n_samples=3)
    assert rep.window_empty and rep.passed and rep.n_samples == 0


def test_pair_ratio():
    assert _pair_ratio(np.zeros(6), 4) == 0.0
    assert _pair_ratio(np.array([4.0, 2.0, 1.0, 0.5]), 3) == pytest.approx(8.0)
    assert _pair_ratio(np.array([1.0, 2.0, 3.0]), 2) == pytest.approx(2 / 3)


def test_energy_lemma_on_long_horizon():
    cfg = scenario("energy").with_(n_space=41, n_time=201)
    rep = energy_lemma_check(None, cfg, n_samples=10)
    assert not rep.window_empty
    assert rep.worst_ratio <= 2.05 and rep.passed


# ---------------------------------------------------------------------------
# observability and Carleman diagnostics


@pytest.fixture(scope="module")
def obs():
    cfg = scenario("uniformity").with_(n_space=41, n_time=41)
    ell = BoundaryTrajectory.static(cfg)
    disc = Discretization.build(cfg, ell)
    return cfg, disc, default_bundles(cfg, ell)[0]


def test_observability_scale_invariant(obs):
    cfg, disc, b = obs
    psiT = random_terminal(np.random.default_rng(2), cfg.grid)
    r1 = observability_ratio(psiT, None, cfg, b, disc=disc)
    r7 = observability_ratio(7 * psiT, None, cfg, b, disc=disc)
    assert np.isfinite(r1) and r1 > 0
    assert abs(r7 - r1) <= 1e-10 * r1


def test_observability_zero_sample(obs):
    cfg, disc, b = obs
    with pytest.raises(DegenerateSampleError):
        observability_ratio(np.zeros(cfg.n_space), None, cfg, b, disc=disc)


def test_carleman_zero_sample_is_degenerate():
    cfg = scenario("uniformity").with_(n_space=21, n_time=21)
    rep = carleman_ratio(np.zeros(21), None, cfg)
    assert rep.degenerate and np.isnan(rep.log10_ratio)


@pytest.mark.parametrize("s", [1.0, 2.0, 4.0])
def test_carleman_ratio_finite(s):
    cfg = scenario("uniformity").with_(n_space=41, n_time=41)
    psiT = random_terminal(np.random.default_rng(3), cfg.grid)
    rep = carleman_ratio(psiT, None, cfg, s=s, lam=2.0)
    assert rep.case == "G1" and np.isfinite(rep.log10_ratio)


def test_carleman_second_case_sums_both_weights():
    cfg = scenario("tracking_g2").with_(n_space=41, n_time=41)
    ell = BoundaryTrajectory.static(cfg)
    bundles = tuple(fursikov_weights(e, 1.0, 2.0, cfg.T, cfg.grid) for e in build_weights(cfg, ell))
    psiT = random_terminal(np.random.default_rng(4), cfg.grid)
    both = carleman_ratio(psiT, ell, cfg, bundles)
    single = [carleman_ratio(psiT, ell, cfg, (b,)) for b in bundles]
    assert both.case == "G2" and np.isfinite(both.log10_ratio)
    assert both.log_rhs >= max(r.log_rhs for r in single) - 1e-12


def test_weighted_target_norms():
    from stefanctl.carleman import weighted_target_norms

    cfg = scenario("tracking_g2").with_(n_space=21, n_time=21)
    ell = BoundaryTrajectory.static(cfg)
    b = default_bundles(cfg, ell)[0]
    # rho is infinite at t = T, so targets that do not vanish there are flagged
    assert weighted_target_norms(cfg, ell, b) == [np.inf, np.inf]
    zero = scenario("zero").with_(n_space=21, n_time=21)
    assert weighted_target_norms(zero, ell, b) == [-np.inf, -np.inf]
