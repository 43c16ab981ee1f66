"""Moving domain <-> fixed cylinder.

The map ``xi = x * ell0 / ell(t)`` sends ``{0 < x < ell(t)}`` onto
``(0, ell0)``.  Writing ``y(x, t) = z(xi, t)``, the operator
``y_t - y_xx + a y`` becomes ``z_t - b z_xixi + c z_xi + d z`` with

    b = (ell0 / ell)^2,   c = -xi * ell' / ell,   d = a(xi * ell / ell0, t).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .config import GridSpec, ProblemConfig
from .errors import AdmissibilityError, GridError


@dataclass(frozen=True, eq=False)
class BoundaryTrajectory:
    """Samples of ``ell`` and ``ell'`` on the time grid plus the admissible bounds."""

    values: np.ndarray
    slopes: np.ndarray
    ell0: float
    ell_star: float
    Bmax: float
    Rbound: float
    horizon: float
    check: bool = True

    def __post_init__(self):
        object.__setattr__(self, "values", np.array(self.values, dtype=float))
        object.__setattr__(self, "slopes", np.array(self.slopes, dtype=float))
        self.values.setflags(write=False)
        self.slopes.setflags(write=False)
        if self.values.shape != self.slopes.shape or self.values.ndim != 1 or self.values.size < 2:
            raise GridError("values and slopes must be matching 1-D time series")
        if self.check:
            self.validate()

    @classmethod
    def static(cls, cfg: ProblemConfig) -> "BoundaryTrajectory":
        return cls.from_function(cfg, lambda t: np.full_like(t, cfg.ell0), lambda t: np.zeros_like(t))

    @classmethod
    def from_function(cls, cfg: ProblemConfig, ell, dell, check: bool = True) -> "BoundaryTrajectory":
        t = cfg.grid.t
        values = np.asarray(ell(t), dtype=float).copy()
        values[0] = cfg.ell0
        return cls(values, np.asarray(dell(t), dtype=float), cfg.ell0, cfg.ell_star, cfg.Bmax,
                   cfg.Rbound, cfg.T, check=check)

    @property
    def n_time(self) -> int:
        return self.values.size

    @property
    def dt(self) -> float:
        return self.horizon / (self.n_time - 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_time)

    def with_values(self, values, slopes, check: bool = True) -> "BoundaryTrajectory":
        return BoundaryTrajectory(values, slopes, self.ell0, self.ell_star, self.Bmax, self.Rbound,
                                  self.horizon, check=check)

    def consistency_gap(self) -> tuple[float, float]:
        """Max mismatch between centred differences of ``values`` and ``slopes``,
        and the O(dt^2) tolerance it is held to."""
        if self.n_time < 3:
            return 0.0, np.inf
        dt = self.dt
        centred = (self.values[2:] - self.values[:-2]) / (2 * dt)
        gap = float(np.max(np.abs(centred - self.slopes[1:-1])))
        curvature = np.abs(self.slopes[2:] - 2 * self.slopes[1:-1] + self.slopes[:-2])
        # trapezoid-integrated slopes miss by |D2 s|/4; exact ell by dt^2 ell'''/6
        tol = float(np.max(curvature)) + 1e-10 * (1.0 + float(np.max(np.abs(self.slopes)))) + dt**2
        return gap, tol

    def validate(self) -> None:
        t = self.t
        if self.values[0] != self.ell0:
            raise AdmissibilityError("trajectory does not start at ell0", time=0.0, value=self.values[0])
        bad = np.flatnonzero(~((self.values > self.ell_star) & (self.values < self.Bmax)))
        if bad.size:
            k = bad[0]
            raise AdmissibilityError(f"ell left ({self.ell_star:g}, {self.Bmax:g})", time=t[k],
                                     value=self.values[k])
        bad = np.flatnonzero(~(np.abs(self.slopes) <= self.Rbound))
        if bad.size:
            k = bad[0]
            raise AdmissibilityError(f"|ell'| exceeds R={self.Rbound:g}", time=t[k], value=self.slopes[k])
        gap, tol = self.consistency_gap()
        if gap > tol:
            raise AdmissibilityError("slopes inconsistent with values", time=float("nan"), value=gap)


@dataclass(frozen=True, eq=False)
class CoefficientFields:
    """Transformed coefficients on the cylinder grid.

    ``jac`` is ``ell(t)/ell0``, the factor turning ``dxi`` into ``dx``.
    """

    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    jac: np.ndarray
    grid: GridSpec


def physical_x(ell: BoundaryTrajectory, grid: GridSpec) -> np.ndarray:
    """Physical abscissae ``x = xi * ell(t) / ell0`` of every cylinder node."""
    return np.outer(ell.values / ell.ell0, grid.xi)


def pullback_coefficients(ell: BoundaryTrajectory, a, grid: GridSpec) -> CoefficientFields:
    """Coefficients of the fixed-cylinder equation for the boundary ``ell``.

    ``a`` is a vectorised callable ``a(x, t)``.
    """
    if ell.n_time != grid.n_time:
        raise GridError("trajectory and grid have different time levels")
    xi = grid.xi[None, :]
    ratio = (ell.values / ell.ell0)[:, None]
    b = np.broadcast_to((1.0 / ratio) ** 2, grid.shape).copy()
    c = -xi * (ell.slopes / ell.values)[:, None]
    x = physical_x(ell, grid)
    d = np.asarray(a(x, grid.t[:, None]), dtype=float) * np.ones(grid.shape)
    return CoefficientFields(b=b, c=c, d=d, jac=ell.values / ell.ell0, grid=grid)


def boundary_flux(z: np.ndarray, ell: BoundaryTrajectory, k, grid: GridSpec):
    """Physical heat flux ``y_x(ell(t_k), t_k)`` from a cylinder field.

    ``k`` may be an index, a slice or an index array; the last space node is
    taken as zero.
    """
    if grid.n_space < 3:
        raise GridError("flux stencil needs n_space >= 3")
    z = np.asarray(z)
    dz = (-4.0 * z[k, -2] + z[k, -3]) / (2.0 * grid.dxi)
    return (ell.ell0 / ell.values[k]) * dz


def flux_series(z: np.ndarray, ell: BoundaryTrajectory, grid: GridSpec) -> np.ndarray:
    return boundary_flux(z, ell, slice(None), grid)


def to_physical(z: np.ndarray, ell: BoundaryTrajectory, samples, grid: GridSpec) -> np.ndarray:
    """Evaluate the physical field at ``(x, t)`` samples by bilinear interpolation."""
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    x, t = pts[:, 0], pts[:, 1]
    if np.any((t < 0) | (t > grid.horizon * (1 + 1e-12))):
        raise GridError("sample time outside (0, T)")
    ell_t = np.interp(t, grid.t, ell.values)
    if np.any((x < 0) | (x > ell_t * (1 + 1e-12))):
        raise GridError("sample outside the moving domain")
    xi = np.clip(x * ell.ell0 / ell_t, 0.0, grid.length)
    interp = RegularGridInterpolator((grid.t, grid.xi), np.asarray(z), method="linear")
    return interp(np.column_stack([np.clip(t, 0.0, grid.horizon), xi]))
