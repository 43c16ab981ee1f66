"""Randomized property suites.  Each returns a ``SuiteResult`` with one row per sample."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import carleman
from .config import ProblemConfig
from .discrete import Discretization
from .hum import duality_gap, duality_terms, leader_control, solve_adjoint_cascade
from .nash import follower_controls, nash_perturbation_test, nash_residual, solve_optimality
from .transform import BoundaryTrajectory

SUITES = ("energy", "observability", "carleman", "nash", "duality")


@dataclass
class SuiteResult:
    name: str
    header: list[str]
    rows: list[list] = field(default_factory=list)
    passed: bool = True
    assertive: bool = True
    summary: dict = field(default_factory=dict)


def random_space_time(rng, grid, mask=None) -> np.ndarray:
    u = rng.standard_normal(grid.shape)
    u[:, [0, -1]] = 0.0
    return u if mask is None else u * mask


def duality_suite(cfg: ProblemConfig, n: int, seed: int, ell: BoundaryTrajectory | None = None) -> SuiteResult:
    """Random ``(y0, f, y_d, psiT)``; compares both sides of the duality identity."""
    ell = BoundaryTrajectory.static(cfg) if ell is None else ell
    base = Discretization.build(cfg, ell)
    rng = np.random.default_rng(seed)
    tol = max(1e-10, 10 * cfg.solver.tol_picard)
    res = SuiteResult("duality", ["sample", "lhs", "rhs", "rel_error"])
    for k in range(n):
        y0 = carleman.random_terminal(rng, cfg.grid)
        targets = (random_space_time(rng, cfg.grid), random_space_time(rng, cfg.grid))
        disc = base.with_data(y0=y0, targets=targets)
        f = random_space_time(rng, cfg.grid, disc.leader_mask)
        psiT = carleman.random_terminal(rng, cfg.grid)
        state = solve_optimality(f, None, cfg, disc=disc)
        cas = solve_adjoint_cascade(psiT, None, cfg, disc=disc)
        lhs, rhs, _ = duality_terms(state, cas, psiT)
        err = duality_gap(state, cas, psiT)
        res.rows.append([k, lhs, rhs, err])
    worst = max(r[3] for r in res.rows)
    res.passed = worst <= tol
    res.summary = dict(max_rel_error=worst, tolerance=tol)
    return res


def energy_suite(cfg: ProblemConfig, n: int, seed: int) -> SuiteResult:
    rep = carleman.energy_lemma_check(None, cfg, n, seed)
    res = SuiteResult("energy", ["sample", "ratio", "t0", "delta"])
    res.rows = [[k, r, rep.t0, rep.delta] for k, r in enumerate(rep.ratios)]
    res.passed = rep.passed
    res.summary = dict(worst_ratio=rep.worst_ratio, worst_integrated=rep.worst_integrated, t0=rep.t0,
                       t0_alt=rep.t0_alt, worst_ratio_alt=rep.worst_ratio_alt, window_empty=rep.window_empty)
    return res


def observability_suite(cfg: ProblemConfig, n: int, seed: int) -> SuiteResult:
    fam = carleman.admissible_family(cfg)
    rep = carleman.estimate_observability_constant(fam, cfg, n, seed)
    res = SuiteResult("observability", ["ell_index", "sample", "ratio"])
    for i, ratios in enumerate(rep.ratios):
        res.rows.extend([i, k, r] for k, r in enumerate(ratios))
    res.passed = rep.finite and rep.spread <= 0.5
    res.summary = dict(baseline=rep.baseline, family_max=rep.family_max, spread=rep.spread,
                       per_ell_max=rep.per_ell_max)
    return res


def carleman_suite(cfg: ProblemConfig, n: int, seed: int, s_values=(1.0, 2.0, 4.0)) -> SuiteResult:
    ell = BoundaryTrajectory.static(cfg)
    lam = cfg.weights.lam
    rng = np.random.default_rng(seed)
    samples = [carleman.random_terminal(rng, cfg.grid) for _ in range(n)]
    res = SuiteResult("carleman", ["sample", "s", "lambda", "log_lhs", "log_rhs", "log10_ratio"], assertive=False)
    for s in s_values:
        bundles = tuple(carleman.fursikov_weights(e, s, lam, cfg.T, cfg.grid)
                        for e in carleman.build_weights(cfg, ell))
        for k, psiT in enumerate(samples):
            rep = carleman.carleman_ratio(psiT, ell, cfg, bundles, s, lam)
            res.rows.append([k, s, lam, rep.log_lhs, rep.log_rhs, rep.log10_ratio])
    return res


def nash_suite(cfg: ProblemConfig, n: int, seed: int) -> SuiteResult:
    """Leader control on the static boundary, then stationarity and perturbation checks."""
    hum = leader_control(BoundaryTrajectory.static(cfg), cfg)
    state = hum.state
    v = follower_controls(state, cfg)
    r = nash_residual(state, v, cfg, n_directions=10, rng_seed=seed)
    norms = [state.disc.norm_sources(p) for p in state.phi]
    rel = [ri / ni if ni > 0 else ri for ri, ni in zip(r, norms)]
    rep = nash_perturbation_test(state, v, cfg, n_trials=n, magnitude=1e-2, rng_seed=seed)
    res = SuiteResult("nash", ["follower", "residual", "relative_residual", "min_gap", "slack"])
    for i in range(2):
        res.rows.append([i + 1, r[i], rel[i], rep.min_gap[i], rep.slack[i]])
    res.passed = max(rel) <= 1e-6 and rep.passed
    res.summary = dict(relative_residuals=rel, min_gap=list(rep.min_gap))
    return res


def run_suite(name: str, cfg: ProblemConfig, n: int, seed: int) -> SuiteResult:
    runners = dict(duality=duality_suite, energy=energy_suite, observability=observability_suite,
                   carleman=carleman_suite, nash=nash_suite)
    if name not in runners:
        raise KeyError(name)
    return runners[name](cfg, n, seed)
