"""Exception hierarchy.  The CLI maps these onto exit codes."""

from __future__ import annotations


class StefanCtlError(Exception):
    """Base class for all package errors."""


class ConfigError(StefanCtlError, ValueError):
    """Invalid or unparsable scenario document."""

    def __init__(self, message: str, *, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


class GeometryError(ConfigError):
    """Control/observation regions fit neither geometric configuration."""


class GridError(StefanCtlError, ValueError):
    """Grid too coarse or fields on mismatched grids."""


class ConvergenceError(StefanCtlError, RuntimeError):
    """An iteration hit its cap.  ``last_residual`` is the final residual seen."""

    def __init__(self, message: str, *, iterations: int, last_residual: float):
        super().__init__(f"{message} after {iterations} iterations (last residual {last_residual:.3e})")
        self.iterations = iterations
        self.last_residual = last_residual


class AdmissibilityError(StefanCtlError, RuntimeError):
    """A boundary trajectory left the admissible class."""

    def __init__(self, message: str, *, time: float, value: float):
        super().__init__(f"{message} at t={time:.6g} (value {value:.6g})")
        self.time = time
        self.value = value


class WeightOverflowError(StefanCtlError, OverflowError):
    pass


class DegenerateSampleError(StefanCtlError, ValueError):
    pass
