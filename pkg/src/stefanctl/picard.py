"""Block Gauss-Seidel sweeps shared by the optimality system and its adjoint."""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from .errors import ConvergenceError

log = logging.getLogger(__name__)


def picard(sweep: Callable[[list[np.ndarray]], tuple[np.ndarray, list[np.ndarray]]],
           coupling: list[np.ndarray], *, tol: float, max_iter: int, damping: float = 1.0,
           what: str = "Picard"):
    """Iterate ``lead, coupling = sweep(coupling)`` to a fixed point.

    ``lead`` is the field solved first in each sweep, ``coupling`` the fields
    fed back into the next sweep.  The residual is the relative change of all
    fields together.  Damping drops to 0.5 after the first increase.
    Returns ``(lead, coupling, iterations, residuals)``.
    """
    lead_old = None
    residuals: list[float] = []
    theta = damping
    for it in range(1, max_iter + 1):
        lead, fresh = sweep(coupling)
        new = [(1.0 - theta) * old + theta * f for old, f in zip(coupling, fresh)]
        change = sum(float(np.sum((n - o) ** 2)) for n, o in zip(new, coupling))
        size = sum(float(np.sum(n**2)) for n in new)
        if lead_old is not None:
            change += float(np.sum((lead - lead_old) ** 2))
        else:
            change += float(np.sum(lead**2))
        size += float(np.sum(lead**2))
        res = 0.0 if change == 0.0 else float(np.sqrt(change / size))
        residuals.append(res)
        coupling, lead_old = new, lead
        if res <= tol:
            return lead, coupling, it, residuals
        if it > 2 and res > residuals[-2] and theta == 1.0:
            log.debug("%s increment grew; damping 0.5", what)
            theta = 0.5
        if not np.isfinite(res):
            break
    raise ConvergenceError(f"{what} did not converge (penalties too small?)",
                           iterations=len(residuals), last_residual=residuals[-1])
