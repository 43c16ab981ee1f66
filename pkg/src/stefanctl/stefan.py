"""Free-boundary loop: ``ell_{k+1} = Lambda_eps(ell_k)``.

``Lambda_eps`` computes the leader control for the current boundary, the
follower equilibrium it induces, and moves the boundary by the Stefan law
``ell' = -y_x(ell, t) / beta``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .config import ProblemConfig, validate_geometry
from .discrete import Discretization
from .errors import ConvergenceError, GeometryError
from .hum import HumResult, leader_control
from .nash import FollowerControls, OptimalityState, follower_controls
from .transform import BoundaryTrajectory, flux_series

log = logging.getLogger(__name__)


@dataclass(eq=False)
class ControlSolution:
    ell: BoundaryTrajectory
    hum: HumResult
    state: OptimalityState
    followers: FollowerControls
    stefan_residual: float
    outer_iters: int
    ell_increments: np.ndarray
    eps: float = 0.0
    converged: bool = True
    flux: np.ndarray = field(default=None, repr=False)


def advance_boundary(flux, ell: BoundaryTrajectory, cfg: ProblemConfig, *, check: bool = True) -> BoundaryTrajectory:
    """Integrate the Stefan law for a given flux history (trapezoid in time)."""
    flux = np.asarray(flux, dtype=float)
    values = cfg.ell0 - cumulative_trapezoid(flux, ell.t, initial=0.0) / cfg.beta
    return ell.with_values(values, -flux / cfg.beta, check=check)


def lambda_map(ell: BoundaryTrajectory, cfg: ProblemConfig, *, state: OptimalityState | None = None,
               check: bool = True) -> BoundaryTrajectory:
    """One application of ``Lambda_eps``.

    Passing ``state`` skips the control solve and uses that state's flux; this
    is the seam for driving the map with a prescribed temperature field.
    Raises ``AdmissibilityError`` when the new boundary leaves the admissible class.
    """
    if state is None:
        state = leader_control(ell, cfg).state
    return advance_boundary(flux_series(state.y, ell, cfg.grid), ell, cfg, check=check)


def stefan_residual(state: OptimalityState, ell: BoundaryTrajectory, cfg: ProblemConfig) -> float:
    """Worst mismatch of the Stefan law over interior time levels."""
    flux = flux_series(state.y, ell, cfg.grid)
    return float(np.max(np.abs(ell.slopes[1:-1] + flux[1:-1] / cfg.beta)))


def _outer_loop(cfg: ProblemConfig, ell: BoundaryTrajectory, increments: list[float]):
    s = cfg.solver
    theta = s.outer_damping
    for it in range(1, s.outer_max + 1):
        hum = leader_control(None, cfg, disc=Discretization.build(cfg, ell))
        new = lambda_map(ell, cfg, state=hum.state)
        if theta < 1.0:
            new = ell.with_values((1 - theta) * ell.values + theta * new.values,
                                  (1 - theta) * ell.slopes + theta * new.slopes)
        inc = float(np.max(np.abs(new.values - ell.values)))
        increments.append(inc)
        log.info("outer %d: increment %.3e (cg %d, |y(T)| %.3e)", it, inc, hum.cg_iters, hum.terminal_norm)
        ell = new
        if inc <= cfg.tol_ell:
            return ell, it
        if len(increments) > 1 and inc > increments[-2] and theta == 1.0:
            log.warning("boundary increment grew (%.3e -> %.3e); damping 0.5", increments[-2], inc)
            theta = 0.5
    raise ConvergenceError(f"free-boundary iteration did not converge in {s.outer_max} steps",
                           iterations=len(increments), last_residual=increments[-1])


def solve_stefan_control(cfg: ProblemConfig, *, ell: BoundaryTrajectory | None = None) -> ControlSolution:
    """End-to-end solve: outer Picard on the boundary, then a final cascade on
    the converged boundary.  With an ``eps_schedule`` each stage is warm-started
    from the previous boundary and the last stage uses ``cfg.eps``."""
    report = validate_geometry(cfg)
    if not report.ok:
        raise GeometryError("; ".join(report.violations), key="geometry")
    ell = BoundaryTrajectory.static(cfg) if ell is None else ell
    schedule = [e for e in cfg.solver.eps_schedule if e > cfg.eps] + [cfg.eps]
    increments: list[float] = []
    total = 0
    for eps in schedule:
        stage = cfg if eps == cfg.eps else cfg.with_(eps=eps)
        ell, n = _outer_loop(stage, ell, increments)
        total += n
    disc = Discretization.build(cfg, ell)
    hum = leader_control(None, cfg, disc=disc)
    state = hum.state
    return ControlSolution(
        ell=ell,
        hum=hum,
        state=state,
        followers=follower_controls(state, cfg),
        stefan_residual=stefan_residual(state, ell, cfg),
        outer_iters=total,
        ell_increments=np.array(increments),
        eps=cfg.eps,
        converged=hum.converged,
        flux=flux_series(state.y, ell, cfg.grid),
    )
