"""Leader control by minimising the penalised dual functional (HUM).

For a terminal datum ``psiT`` the adjoint cascade ``(psi, gamma_1, gamma_2)``
is solved backward/forward, the leader control is ``f = psi`` on the leader
region, and the dual functional

    F(psiT) = <y0, psi(0)> - sum_i <y_{i,d}, gamma_i> + 1/2 ||psi||^2_{O x (0,T)} + eps ||psiT||

is minimised.  Its smooth part is quadratic with gradient ``y(T)``, the
terminal state the control produces, so conjugate gradients on it stop as
soon as ``||y(T)|| <= eps``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import ProblemConfig
from .discrete import Discretization, resolve
from .nash import OptimalityState, solve_optimality
from .picard import picard
from .transform import BoundaryTrajectory

log = logging.getLogger(__name__)


@dataclass(eq=False)
class AdjointCascade:
    psi: np.ndarray
    gamma: tuple[np.ndarray, np.ndarray]
    picard_iters: int
    picard_residual: float


@dataclass(eq=False)
class HumResult:
    f: np.ndarray
    psiT: np.ndarray
    terminal_norm: float
    f_norm: float
    cg_iters: int
    converged: bool
    state: OptimalityState = field(repr=False)
    cascade: AdjointCascade | None = field(default=None, repr=False)
    dual_history: list[float] = field(default_factory=list, repr=False)
    gradient_history: list[float] = field(default_factory=list, repr=False)
    gradient_checks: list[tuple[int, float]] = field(default_factory=list, repr=False)


def solve_adjoint_cascade(psiT, ell: BoundaryTrajectory | None, cfg: ProblemConfig, *,
                          disc: Discretization | None = None, tol: float | None = None) -> AdjointCascade:
    disc = resolve(cfg, ell, disc)
    op, mu = disc.op, cfg.mu
    psiT = np.asarray(psiT, dtype=float)
    zero = np.zeros(disc.grid.n_space)

    def sweep(gammas):
        psi = op.backward(psiT, sum(m * g for m, g in zip(disc.observation_masks, gammas)))
        fresh = [op.forward(zero, -m * psi / mu_i) for m, mu_i in zip(disc.follower_masks, mu)]
        return psi, fresh

    s = cfg.solver
    psi, gammas, iters, history = picard(sweep, [disc.grid.zeros(), disc.grid.zeros()],
                                         tol=s.tol_picard if tol is None else tol,
                                         max_iter=s.max_picard, damping=s.picard_damping,
                                         what="adjoint cascade")
    return AdjointCascade(psi=psi, gamma=tuple(gammas), picard_iters=iters, picard_residual=history[-1])


def duality_terms(state: OptimalityState, cascade: AdjointCascade, psiT) -> tuple[float, float, float]:
    """Both sides of ``<y(T), psiT> = <y0, psi(0)> - sum <y_d, gamma> + <f 1_O, psi>``
    and the sum of the absolute values of all terms, the scale for a relative gap."""
    disc = state.disc
    op = disc.op
    lhs = op.pair_profiles(state.y[-1], psiT, -1)
    terms = [op.pair_profiles(disc.y0, cascade.psi[0], 0),
             *(-op.pair_states(yd, g) for yd, g in zip(disc.targets, cascade.gamma)),
             op.pair_sources(state.f * disc.leader_mask, cascade.psi)]
    return lhs, float(sum(terms)), abs(lhs) + float(sum(abs(t) for t in terms))


def duality_gap(state: OptimalityState, cascade: AdjointCascade, psiT) -> float:
    """Relative mismatch of the duality identity (0 when every term vanishes)."""
    lhs, rhs, scale = duality_terms(state, cascade, psiT)
    return 0.0 if scale == 0.0 else abs(lhs - rhs) / scale


def _smooth_value(disc: Discretization, cascade: AdjointCascade) -> float:
    op = disc.op
    psi_o = cascade.psi * disc.leader_mask
    return (op.pair_profiles(disc.y0, cascade.psi[0], 0)
            - sum(op.pair_states(yd, g) for yd, g in zip(disc.targets, cascade.gamma))
            + 0.5 * op.pair_sources(psi_o, psi_o))


def dual_value(psiT, ell: BoundaryTrajectory | None, cfg: ProblemConfig, *,
               disc: Discretization | None = None) -> float:
    disc = resolve(cfg, ell, disc)
    cascade = solve_adjoint_cascade(psiT, None, cfg, disc=disc)
    return _smooth_value(disc, cascade) + cfg.eps * disc.op.norm_profile(np.asarray(psiT), -1)


def smooth_gradient(psiT, ell: BoundaryTrajectory | None, cfg: ProblemConfig, *,
                    disc: Discretization | None = None) -> np.ndarray:
    """Gradient of the quadratic part of ``dual_value``: the terminal state
    produced by ``f = psi 1_O`` (Riesz representative in the level-K product)."""
    disc = resolve(cfg, ell, disc)
    cascade = solve_adjoint_cascade(psiT, None, cfg, disc=disc)
    return solve_optimality(cascade.psi * disc.leader_mask, None, cfg, disc=disc).y[-1].copy()


def smooth_value(psiT, ell: BoundaryTrajectory | None, cfg: ProblemConfig, *,
                 disc: Discretization | None = None) -> float:
    """The quadratic part ``D`` of ``dual_value`` (no ``eps`` term)."""
    disc = resolve(cfg, ell, disc)
    return _smooth_value(disc, solve_adjoint_cascade(psiT, None, cfg, disc=disc))


def gradient_check(psiT, cfg: ProblemConfig, *, disc: Discretization, n_directions: int = 10,
                   delta: float = 1e-5, rng_seed: int = 0) -> float:
    """Worst relative mismatch between central differences of ``D`` and
    ``<smooth_gradient, h>`` over random directions ``h``."""
    op = disc.op
    psiT = np.asarray(psiT, dtype=float)
    grad = smooth_gradient(psiT, None, cfg, disc=disc)
    rng = np.random.default_rng(rng_seed)
    worst = 0.0
    for _ in range(n_directions):
        h = rng.standard_normal(psiT.shape)
        h[[0, -1]] = 0.0
        fd = (smooth_value(psiT + delta * h, None, cfg, disc=disc)
              - smooth_value(psiT - delta * h, None, cfg, disc=disc)) / (2 * delta)
        exact = op.pair_profiles(grad, h, -1)
        worst = max(worst, abs(fd - exact) / max(abs(exact), np.finfo(float).tiny))
    return worst


def leader_control(ell: BoundaryTrajectory | None, cfg: ProblemConfig, *,
                   disc: Discretization | None = None, eps: float | None = None,
                   check_every: int | None = None) -> HumResult:
    """Minimise the dual functional by conjugate gradients.

    The linear part ``psiT -> y(T)`` is applied with zero data; the residual
    is updated recursively and re-anchored on the true terminal state whenever
    it claims convergence.  With ``check_every`` the gradient is checked
    against central differences at every such iterate (and the first one).
    """
    disc = resolve(cfg, ell, disc)
    op = disc.op
    eps = cfg.eps if eps is None else eps
    n = disc.grid.n_space
    dot = lambda u, w: op.pair_profiles(u, w, -1)  # noqa: E731

    free = solve_optimality(np.zeros(disc.grid.shape), None, cfg, disc=disc)
    b = free.y[-1].copy()
    psiT = np.zeros(n)
    if disc.has_zero_data() or np.sqrt(dot(b, b)) <= eps:
        nb = float(np.sqrt(dot(b, b)))
        return HumResult(f=disc.grid.zeros(), psiT=psiT, terminal_norm=nb, f_norm=0.0, cg_iters=0,
                         converged=True, state=free, dual_history=[0.0], gradient_history=[nb])

    def apply_lambda(d):
        cas = solve_adjoint_cascade(d, None, cfg, disc=disc)
        return solve_optimality(cas.psi * disc.leader_mask, None, cfg, disc=disc, zero_data=True).y[-1]

    def true_gradient(p):
        cas = solve_adjoint_cascade(p, None, cfg, disc=disc)
        st = solve_optimality(cas.psi * disc.leader_mask, None, cfg, disc=disc)
        return cas, st

    r = b.copy()
    d = -r
    rr = dot(r, r)
    dual_hist = [0.0]
    grad_hist = [float(np.sqrt(rr))]
    iters = 0
    converged = False
    cas, st = None, free
    checks: list[tuple[int, float]] = []
    while iters < cfg.solver.cg_max:
        if check_every and iters % check_every == 0:
            checks.append((iters, gradient_check(psiT, cfg, disc=disc, n_directions=1, rng_seed=iters)))
        lam_d = apply_lambda(d)
        curv = dot(d, lam_d)
        if curv <= 0.0:
            log.warning("non-positive curvature %.3e in CG; stopping", curv)
            break
        alpha = rr / curv
        psiT = psiT + alpha * d
        r = r + alpha * lam_d
        iters += 1
        rr_new = dot(r, r)
        dual_hist.append(0.5 * dot(r + b, psiT))  # smooth part D, quadratic in psiT
        grad_hist.append(float(np.sqrt(rr_new)))
        if np.sqrt(rr_new) <= eps:
            cas, st = true_gradient(psiT)
            r = st.y[-1].copy()
            rr_true = dot(r, r)
            if np.sqrt(rr_true) <= eps:
                converged = True
                break
            d = -r  # restart from the recomputed residual
            rr = rr_true
            continue
        d = -r + (rr_new / rr) * d
        rr = rr_new

    if not converged:
        cas, st = true_gradient(psiT)
    f = cas.psi * disc.leader_mask
    return HumResult(f=f, psiT=psiT, terminal_norm=disc.terminal_norm(st.y), f_norm=disc.norm_sources(f),
                     cg_iters=iters, converged=converged, state=st, cascade=cas,
                     dual_history=dual_hist, gradient_history=grad_hist, gradient_checks=checks)
