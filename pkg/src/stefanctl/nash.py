"""Follower equilibrium for a given leader control and boundary.

The coupled system (state forward, one adjoint per follower backward) is
solved by Picard sweeps; the followers' controls are then read off as
``v_i = -phi_i / mu_i`` on their regions.  The backward solves are exact
transposes of the forward one, so that formula is the exact stationarity
condition of the discrete costs, not an approximation of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ProblemConfig
from .discrete import Discretization, resolve
from .picard import picard
from .transform import BoundaryTrajectory


@dataclass(eq=False)
class OptimalityState:
    y: np.ndarray
    phi: tuple[np.ndarray, np.ndarray]
    picard_iters: int
    picard_residual: float
    f: np.ndarray
    disc: Discretization = field(repr=False)
    residual_history: list[float] = field(default_factory=list, repr=False)


@dataclass(eq=False)
class FollowerControls:
    v: tuple[np.ndarray, np.ndarray]


def solve_optimality(f, ell: BoundaryTrajectory | None, cfg: ProblemConfig, *,
                     disc: Discretization | None = None, zero_data: bool = False,
                     tol: float | None = None) -> OptimalityState:
    """Solve state + follower adjoints for leader control ``f``.

    ``zero_data`` drops the initial datum and the targets, which gives the
    linear part of the map ``f -> y`` used by the HUM iteration.
    """
    disc = resolve(cfg, ell, disc)
    op, mu = disc.op, cfg.mu
    f = np.asarray(f, dtype=float)
    y0 = np.zeros(disc.grid.n_space) if zero_data else disc.y0
    targets = (0.0, 0.0) if zero_data else disc.targets
    zero_terminal = np.zeros(disc.grid.n_space)
    leader_source = f * disc.leader_mask

    def sweep(phis):
        g = leader_source - sum(m * p / mu_i for m, p, mu_i in zip(disc.follower_masks, phis, mu))
        y = op.forward(y0, g)
        fresh = [op.backward(zero_terminal, m * (y - yd)) for m, yd in zip(disc.observation_masks, targets)]
        return y, fresh

    s = cfg.solver
    y, phis, iters, history = picard(sweep, [disc.grid.zeros(), disc.grid.zeros()],
                                     tol=s.tol_picard if tol is None else tol,
                                     max_iter=s.max_picard, damping=s.picard_damping,
                                     what="optimality system")
    return OptimalityState(y=y, phi=tuple(phis), picard_iters=iters, picard_residual=history[-1],
                           f=f, disc=disc, residual_history=history)


def follower_controls(state: OptimalityState, cfg: ProblemConfig) -> FollowerControls:
    masks = state.disc.follower_masks
    return FollowerControls(v=tuple(-m * p / mu for m, p, mu in zip(masks, state.phi, cfg.mu)))


def cost(i: int, v: FollowerControls, y, cfg: ProblemConfig, disc: Discretization) -> float:
    """Cost of follower ``i`` (0-based): tracking on its observation region plus penalty."""
    miss = disc.observation_masks[i] * (np.asarray(y) - disc.targets[i])
    vi = disc.follower_masks[i] * v.v[i]
    return 0.5 * disc.op.pair_states(miss, miss) + 0.5 * cfg.mu[i] * disc.op.pair_sources(vi, vi)


def controlled_state(state: OptimalityState, v: FollowerControls) -> np.ndarray:
    """State driven by ``f, v_1, v_2`` as fixed external sources."""
    disc = state.disc
    g = state.f * disc.leader_mask + sum(m * vi for m, vi in zip(disc.follower_masks, v.v))
    return disc.op.forward(disc.y0, g)


def _random_direction(rng, disc: Discretization, i: int, magnitude: float = 1.0) -> np.ndarray:
    d = rng.standard_normal(disc.grid.shape) * disc.follower_masks[i]
    d[-1] = 0.0  # the last level carries no weight in the control norm
    return magnitude * d / disc.norm_sources(d)


def nash_residual(state: OptimalityState, controls: FollowerControls, cfg: ProblemConfig,
                  n_directions: int = 10, rng_seed: int = 0) -> tuple[float, float]:
    """Largest directional derivative of each follower's cost over random unit
    directions supported in its region.  Adjoints are recomputed from the state
    the controls actually produce."""
    disc = state.disc
    y = controlled_state(state, controls)
    zero = np.zeros(disc.grid.n_space)
    rng = np.random.default_rng(rng_seed)
    out = []
    for i in range(2):
        phi = disc.op.backward(zero, disc.observation_masks[i] * (y - disc.targets[i]))
        grad = disc.follower_masks[i] * (phi + cfg.mu[i] * controls.v[i])
        worst = 0.0
        for _ in range(n_directions):
            worst = max(worst, abs(disc.op.pair_sources(grad, _random_direction(rng, disc, i))))
        out.append(worst)
    return out[0], out[1]


@dataclass
class PerturbationReport:
    min_gap: tuple[float, float]
    slack: tuple[float, float]
    costs: tuple[float, float]
    n_trials: int
    magnitude: float

    @property
    def passed(self) -> bool:
        return all(g >= -s for g, s in zip(self.min_gap, self.slack))


def _perturbed_cost(state, controls, cfg, i, delta, y_base):
    disc = state.disc
    y = y_base + disc.op.forward(np.zeros(disc.grid.n_space), disc.follower_masks[i] * delta)
    v = list(controls.v)
    v[i] = v[i] + delta
    return cost(i, FollowerControls(tuple(v)), y, cfg, disc)


def nash_perturbation_test(state: OptimalityState, controls: FollowerControls, cfg: ProblemConfig,
                           n_trials: int = 100, magnitude: float = 1e-2,
                           rng_seed: int = 0) -> PerturbationReport:
    """Unilateral deviations must not lower a follower's own cost."""
    disc = state.disc
    rng = np.random.default_rng(rng_seed)
    y_base = controlled_state(state, controls)
    gaps, slacks, costs = [], [], []
    for i in range(2):
        base = cost(i, controls, y_base, cfg, disc)
        gap = np.inf
        for _ in range(n_trials):
            delta = _random_direction(rng, disc, i, magnitude)
            gap = min(gap, _perturbed_cost(state, controls, cfg, i, delta, y_base) - base)
        gaps.append(float(gap))
        slacks.append(1e-8 * (1.0 + base))
        costs.append(base)
    return PerturbationReport(tuple(gaps), tuple(slacks), tuple(costs), n_trials, magnitude)


def gap_scaling(state: OptimalityState, controls: FollowerControls, cfg: ProblemConfig, i: int,
                magnitudes, rng_seed: int = 0) -> tuple[np.ndarray, float]:
    """Cost increase along one fixed direction for each magnitude, and the
    log-log slope of increase versus magnitude."""
    disc = state.disc
    rng = np.random.default_rng(rng_seed)
    direction = _random_direction(rng, disc, i)
    y_base = controlled_state(state, controls)
    base = cost(i, controls, y_base, cfg, disc)
    mags = np.asarray(magnitudes, dtype=float)
    gaps = np.array([_perturbed_cost(state, controls, cfg, i, m * direction, y_base) - base for m in mags])
    slope = float(np.polyfit(np.log(mags), np.log(np.abs(gaps)), 1)[0])
    return gaps, slope
