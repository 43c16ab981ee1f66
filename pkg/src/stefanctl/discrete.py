"""Everything that depends on one boundary trajectory, built once and shared."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import GridSpec, ProblemConfig
from .parabolic import ParabolicOperator
from .transform import BoundaryTrajectory, CoefficientFields, physical_x, pullback_coefficients


@dataclass(eq=False)
class Discretization:
    cfg: ProblemConfig
    ell: BoundaryTrajectory
    grid: GridSpec
    coeffs: CoefficientFields
    op: ParabolicOperator
    leader_mask: np.ndarray
    follower_masks: tuple[np.ndarray, np.ndarray]
    observation_masks: tuple[np.ndarray, np.ndarray]
    targets: tuple[np.ndarray, np.ndarray]
    y0: np.ndarray

    @classmethod
    def build(cls, cfg: ProblemConfig, ell: BoundaryTrajectory) -> "Discretization":
        grid = cfg.grid
        coeffs = pullback_coefficients(ell, cfg.a_values, grid)
        x = physical_x(ell, grid)
        t = grid.t[:, None]
        return cls(
            cfg=cfg,
            ell=ell,
            grid=grid,
            coeffs=coeffs,
            op=ParabolicOperator(coeffs),
            leader_mask=cfg.leader_region.mask(x),
            follower_masks=tuple(r.mask(x) for r in cfg.follower_regions),
            observation_masks=tuple(r.mask(x) for r in cfg.observation_regions),
            targets=tuple(cfg.target_values(i, x, t) for i in range(2)),
            y0=cfg.y0,
        )

    def with_data(self, y0=None, targets=None) -> "Discretization":
        """Same operator and masks, different initial datum and/or targets."""
        from dataclasses import replace

        changes = {}
        if y0 is not None:
            changes["y0"] = np.asarray(y0, dtype=float)
        if targets is not None:
            changes["targets"] = tuple(np.asarray(m * t, dtype=float)
                                       for m, t in zip(self.observation_masks, targets))
        return replace(self, **changes)

    @property
    def mu(self) -> tuple[float, float]:
        return self.cfg.mu

    def has_zero_data(self) -> bool:
        return not np.any(self.y0) and not any(np.any(t) for t in self.targets)

    def norm_states(self, u) -> float:
        return float(np.sqrt(max(self.op.pair_states(u, u), 0.0)))

    def norm_sources(self, u) -> float:
        return float(np.sqrt(max(self.op.pair_sources(u, u), 0.0)))

    def terminal_norm(self, u) -> float:
        return self.op.norm_profile(np.asarray(u)[-1], -1)


def resolve(cfg: ProblemConfig, ell: BoundaryTrajectory | None, disc: Discretization | None) -> Discretization:
    if disc is not None:
        return disc
    if ell is None:
        ell = BoundaryTrajectory.static(cfg)
    return Discretization.build(cfg, ell)
