"""Scenario data: geometry, penalties, coefficient, initial and target data.

A scenario is read from an INI-style document with the sections
``[problem]``, ``[geometry]``, ``[data]``, ``[grid]``, ``[solver]`` and an
optional ``[weights]``.  See the README for the key list.
"""

from __future__ import annotations

import configparser
import enum
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .expr import Expression, ExpressionError

SET_TOL = 1e-12


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi})")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def intersect(self, other: "Interval") -> "Interval | None":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if hi - lo <= SET_TOL:
            return None
        return Interval(lo, hi)

    def same_as(self, other: "Interval | None") -> bool:
        if other is None:
            return False
        return abs(self.lo - other.lo) <= SET_TOL and abs(self.hi - other.hi) <= SET_TOL

    def within(self, lo: float, hi: float) -> bool:
        return self.lo >= lo - SET_TOL and self.hi <= hi + SET_TOL

    def compactly_within(self, other: "Interval") -> bool:
        return self.lo > other.lo + SET_TOL and self.hi < other.hi - SET_TOL

    def mask(self, x) -> np.ndarray:
        """Indicator of the closed interval, as floats."""
        x = np.asarray(x, dtype=float)
        return ((x >= self.lo - SET_TOL) & (x <= self.hi + SET_TOL)).astype(float)

    def __str__(self) -> str:
        return f"({self.lo:g}, {self.hi:g})"


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the reference cylinder ``[0, length] x [0, horizon]``."""

    n_space: int = 101
    n_time: int = 201
    length: float = 1.0
    horizon: float = 1.0

    def __post_init__(self):
        if self.n_space < 3:
            raise ConfigError("n_space must be at least 3", key="grid.n_space")
        if self.n_time < 2:
            raise ConfigError("n_time must be at least 2", key="grid.n_time")
        if not (self.length > 0 and self.horizon > 0):
            raise ConfigError("grid extents must be positive", key="grid")

    @property
    def dxi(self) -> float:
        return self.length / (self.n_space - 1)

    @property
    def dt(self) -> float:
        return self.horizon / (self.n_time - 1)

    @property
    def xi(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_space)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_time)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_time, self.n_space)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


@dataclass(frozen=True)
class SolverSettings:
    tol_picard: float = 1e-10
    max_picard: int = 200
    picard_damping: float = 1.0
    cg_max: int = 500
    tol_ell: float | None = None  # None -> 1e-6 * ell0
    tol_stefan: float = 1e-4
    outer_max: int = 50
    outer_damping: float = 1.0
    eps_schedule: tuple[float, ...] = ()


@dataclass(frozen=True)
class WeightSettings:
    """Parameters of the Carleman weights; ``None`` means derive from geometry."""

    a_tilde: float | None = None
    b_tilde: float | None = None
    omega0: Interval | None = None
    omega1: Interval | None = None
    omega2: Interval | None = None
    s: float = 1.0
    lam: float = 2.0
    inset: float = 1.0 / 3.0


class GeometryCase(str, enum.Enum):
    G1 = "G1"
    G2 = "G2"
    INVALID = "invalid"


@dataclass(frozen=True)
class GeometryReport:
    config_case: GeometryCase
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.config_case is not GeometryCase.INVALID


def _as_expression(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float)):
        return Expression.constant(value)
    return Expression.parse(str(value))


@dataclass(frozen=True)
class ProblemConfig:
    beta: float
    T: float
    ell_star: float
    ell0: float
    Bmax: float
    mu: tuple[float, float]
    eps: float
    leader_region: Interval
    follower_regions: tuple[Interval, Interval]
    observation_regions: tuple[Interval, Interval]
    coefficient_a: Expression = field(default_factory=lambda: Expression.constant(0.0))
    y0_source: Expression | tuple[float, ...] = field(default_factory=lambda: Expression.constant(0.0))
    targets: tuple[Expression, Expression] = field(
        default_factory=lambda: (Expression.constant(0.0), Expression.constant(0.0))
    )
    Rbound: float | None = None
    rho_nbhd: float | None = None
    n_space: int = 101
    n_time: int = 201
    solver: SolverSettings = field(default_factory=SolverSettings)
    weights: WeightSettings = field(default_factory=WeightSettings)
    name: str = "scenario"

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("mu", tuple(float(m) for m in self.mu))
        set_("coefficient_a", _as_expression(self.coefficient_a))
        set_("targets", tuple(_as_expression(e) for e in self.targets))
        if not isinstance(self.y0_source, (Expression, tuple)):
            set_("y0_source", _as_expression(self.y0_source))
        if self.Rbound is None:
            set_("Rbound", 10.0 * self.ell0 / self.T)
        if self.rho_nbhd is None:
            set_("rho_nbhd", self.T / 10.0)
        self._check_scalars()
        set_("_y0", self._sample_y0())

    def _check_scalars(self) -> None:
        if not self.beta > 0:
            raise ConfigError("latent heat must be positive", key="beta")
        if not self.T > 0:
            raise ConfigError("horizon must be positive", key="T")
        if len(self.mu) != 2 or not all(m > 0 for m in self.mu):
            raise ConfigError("penalties must be strictly positive", key="mu")
        if not 0 < self.eps < 1:
            raise ConfigError("tolerance must lie in (0, 1)", key="eps")
        if not (0 < self.ell_star < self.ell0 < self.Bmax):
            raise ConfigError("ordering 0 < ell_star < ell0 < B violated", key="ell_star/ell0/B")
        if not self.Rbound > 0:
            raise ConfigError("slope bound must be positive", key="R")
        if not 0 < self.rho_nbhd < self.T / 2:
            raise ConfigError("rho_nbhd must lie in (0, T/2)", key="rho_nbhd")
        if not 0 < self.solver.picard_damping <= 1 or not 0 < self.solver.outer_damping <= 1:
            raise ConfigError("damping must lie in (0, 1]", key="solver.damping")
        GridSpec(self.n_space, self.n_time, self.ell0, self.T)

    def _sample_y0(self) -> np.ndarray:
        xi = self.grid.xi
        if isinstance(self.y0_source, Expression):
            y0 = self.y0_source(xi, 0.0, T=self.T, L0=self.ell0)
        else:
            samples = np.asarray(self.y0_source, dtype=float)
            if samples.size < 2:
                raise ConfigError("sampled initial datum needs at least two values", key="data.y0")
            y0 = np.interp(xi, np.linspace(0.0, self.ell0, samples.size), samples)
        scale = max(1.0, float(np.max(np.abs(y0))))
        if abs(y0[0]) > 1e-10 * scale or abs(y0[-1]) > 1e-10 * scale:
            raise ConfigError("initial datum must vanish at both endpoints", key="data.y0")
        y0 = y0.copy()
        y0[0] = y0[-1] = 0.0
        return y0

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.n_space, self.n_time, self.ell0, self.T)

    @property
    def y0(self) -> np.ndarray:
        return self._y0.copy()

    @property
    def tol_ell(self) -> float:
        return self.solver.tol_ell if self.solver.tol_ell is not None else 1e-6 * self.ell0

    def a_values(self, x, t) -> np.ndarray:
        return self.coefficient_a(x, t, T=self.T, L0=self.ell0)

    def target_values(self, i: int, x, t) -> np.ndarray:
        """Target ``i`` (0-based) at physical ``(x, t)``, zero outside its region."""
        vals = self.targets[i](x, t, T=self.T, L0=self.ell0)
        return vals * self.observation_regions[i].mask(x)

    def has_zero_data(self) -> bool:
        return not np.any(self._y0) and all(e.is_zero() for e in self.targets)

    def with_(self, **changes) -> "ProblemConfig":
        return replace(self, **changes)

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:16]


def classify_geometry(
    leader: Interval,
    followers: tuple[Interval, Interval],
    observations: tuple[Interval, Interval],
    ell_star: float,
    ell0: float,
    Bmax: float,
) -> GeometryReport:
    """Decide which geometric configuration (G1/G2) the regions satisfy."""
    violations: list[str] = []
    if not (0 < ell_star < ell0 < Bmax):
        violations.append("ordering 0<ℓ*<ℓ0<B violated")
    named = [("𝒪", leader), ("𝒪_1", followers[0]), ("𝒪_2", followers[1]),
             ("𝒪_{1,d}", observations[0]), ("𝒪_{2,d}", observations[1])]
    for label, region in named:
        if not region.within(0.0, ell_star):
            violations.append(f"{label}={region} not contained in (0,ℓ*)")
    traces = [leader.intersect(obs) for obs in observations]
    for i, trace in enumerate(traces, start=1):
        if trace is None:
            violations.append(f"𝒪∩𝒪_{{{i},d}}=∅")
    case = GeometryCase.INVALID
    if not violations:
        if observations[0].same_as(observations[1]):
            case = GeometryCase.G1
        elif not traces[0].same_as(traces[1]):
            case = GeometryCase.G2
        else:
            violations.append("𝒪_{1,d}≠𝒪_{2,d} but 𝒪∩𝒪_{1,d}=𝒪∩𝒪_{2,d} (neither G1 nor G2)")
    return GeometryReport(case, tuple(violations))


def validate_geometry(cfg: ProblemConfig) -> GeometryReport:
    return classify_geometry(cfg.leader_region, cfg.follower_regions, cfg.observation_regions,
                             cfg.ell_star, cfg.ell0, cfg.Bmax)


# ---------------------------------------------------------------------------
# document format

_REQUIRED = {
    "problem": ("beta", "t", "eps"),
    "geometry": ("ell_star", "ell0", "b", "leader", "follower1", "follower2", "target1", "target2"),
}


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, lines: dict[tuple[str, str], int]):
        self.parser = parser
        self.lines = lines

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def raw(self, section: str, key: str) -> str:
        return self.parser.get(section, key)

    def _err(self, section, key, msg):
        return ConfigError(msg, key=f"{section}.{key}", line=self.lines.get((section, key)))

    def number(self, section, key, default=None, kind=float):
        if not self.has(section, key):
            return default
        text = self.raw(section, key).strip()
        try:
            return kind(float(text)) if kind is int else kind(text)
        except ValueError:
            raise self._err(section, key, f"not a number: {text!r}") from None

    def numbers(self, section, key, count=None):
        text = self.raw(section, key)
        try:
            values = tuple(float(v) for v in text.split(",") if v.strip())
        except ValueError:
            raise self._err(section, key, f"not a comma list of numbers: {text!r}") from None
        if count is not None and len(values) != count:
            raise self._err(section, key, f"expected {count} values, got {len(values)}")
        return values

    def interval(self, section, key, default=None):
        if not self.has(section, key):
            return default
        lo, hi = self.numbers(section, key, 2)
        try:
            return Interval(lo, hi)
        except ValueError as exc:
            raise self._err(section, key, str(exc)) from None

    def expression(self, section, key, default="0"):
        text = self.raw(section, key) if self.has(section, key) else default
        try:
            return Expression.parse(text)
        except ExpressionError as exc:
            raise self._err(section, key, str(exc)) from None


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    lines: dict[tuple[str, str], int] = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
        elif section and "=" in line and not line.startswith(("#", ";")):
            lines[(section, line.split("=", 1)[0].strip().lower())] = no
    return lines


def loads_config(text: str) -> ProblemConfig:
    """Parse a scenario document held in a string."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse document: {exc}", line=getattr(exc, "lineno", None)) from None
    for section, keys in _REQUIRED.items():
        for key in keys:
            if not parser.has_option(section, key):
                raise ConfigError("missing required key", key=f"{section}.{key}")
    r = _Reader(parser, _line_numbers(text))

    if r.has("problem", "mu"):
        mu = r.numbers("problem", "mu", 2)
    else:
        mu = (r.number("problem", "mu1", 1.0), r.number("problem", "mu2", 1.0))
    if r.has("data", "y0") and "," in r.raw("data", "y0"):
        y0_source = r.numbers("data", "y0")
    else:
        y0_source = r.expression("data", "y0")

    solver = SolverSettings(
        tol_picard=r.number("solver", "tol_picard", 1e-10),
        max_picard=r.number("solver", "max_picard", 200, int),
        picard_damping=r.number("solver", "picard_damping", 1.0),
        cg_max=r.number("solver", "cg_max", 500, int),
        tol_ell=r.number("solver", "tol_ell", None),
        tol_stefan=r.number("solver", "tol_stefan", 1e-4),
        outer_max=r.number("solver", "outer_max", 50, int),
        outer_damping=r.number("solver", "outer_damping", 1.0),
        eps_schedule=r.numbers("solver", "eps_schedule") if r.has("solver", "eps_schedule") else (),
    )
    weights = WeightSettings(
        a_tilde=r.number("weights", "a_tilde", None),
        b_tilde=r.number("weights", "b_tilde", None),
        omega0=r.interval("weights", "omega0"),
        omega1=r.interval("weights", "omega1"),
        omega2=r.interval("weights", "omega2"),
        s=r.number("weights", "s", 1.0),
        lam=r.number("weights", "lambda", 2.0),
        inset=r.number("weights", "inset", 1.0 / 3.0),
    )
    return ProblemConfig(
        name=parser.get("problem", "name", fallback="scenario").strip(),
        beta=r.number("problem", "beta"),
        T=r.number("problem", "t"),
        eps=r.number("problem", "eps"),
        mu=mu,
        rho_nbhd=r.number("problem", "rho_nbhd", None),
        ell_star=r.number("geometry", "ell_star"),
        ell0=r.number("geometry", "ell0"),
        Bmax=r.number("geometry", "b"),
        Rbound=r.number("geometry", "r", None),
        leader_region=r.interval("geometry", "leader"),
        follower_regions=(r.interval("geometry", "follower1"), r.interval("geometry", "follower2")),
        observation_regions=(r.interval("geometry", "target1"), r.interval("geometry", "target2")),
        coefficient_a=r.expression("data", "a"),
        y0_source=y0_source,
        targets=(r.expression("data", "yd1"), r.expression("data", "yd2")),
        n_space=r.number("grid", "n_space", 101, int),
        n_time=r.number("grid", "n_time", 201, int),
        solver=solver,
        weights=weights,
    )


def load_config(source: str | Path) -> ProblemConfig:
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return loads_config(text)


def _fmt(v: float) -> str:
    return repr(float(v))


def _fmt_interval(iv: Interval) -> str:
    return f"{_fmt(iv.lo)}, {_fmt(iv.hi)}"


def dump_config(cfg: ProblemConfig) -> str:
    """Serialize ``cfg`` to the document format read by :func:`loads_config`."""
    if isinstance(cfg.y0_source, Expression):
        y0 = cfg.y0_source.source
    else:
        y0 = ", ".join(_fmt(v) for v in cfg.y0_source)
    s, w = cfg.solver, cfg.weights
    out = [
        "[problem]",
        f"name = {cfg.name}",
        f"beta = {_fmt(cfg.beta)}",
        f"T = {_fmt(cfg.T)}",
        f"eps = {_fmt(cfg.eps)}",
        f"mu = {_fmt(cfg.mu[0])}, {_fmt(cfg.mu[1])}",
        f"rho_nbhd = {_fmt(cfg.rho_nbhd)}",
        "",
        "[geometry]",
        f"ell_star = {_fmt(cfg.ell_star)}",
        f"ell0 = {_fmt(cfg.ell0)}",
        f"B = {_fmt(cfg.Bmax)}",
        f"R = {_fmt(cfg.Rbound)}",
        f"leader = {_fmt_interval(cfg.leader_region)}",
        f"follower1 = {_fmt_interval(cfg.follower_regions[0])}",
        f"follower2 = {_fmt_interval(cfg.follower_regions[1])}",
        f"target1 = {_fmt_interval(cfg.observation_regions[0])}",
        f"target2 = {_fmt_interval(cfg.observation_regions[1])}",
        "",
        "[data]",
        f"y0 = {y0}",
        f"a = {cfg.coefficient_a.source}",
        f"yd1 = {cfg.targets[0].source}",
        f"yd2 = {cfg.targets[1].source}",
        "",
        "[grid]",
        f"n_space = {cfg.n_space}",
        f"n_time = {cfg.n_time}",
        "",
        "[solver]",
        f"tol_picard = {_fmt(s.tol_picard)}",
        f"max_picard = {s.max_picard}",
        f"picard_damping = {_fmt(s.picard_damping)}",
        f"cg_max = {s.cg_max}",
        f"tol_stefan = {_fmt(s.tol_stefan)}",
        f"outer_max = {s.outer_max}",
        f"outer_damping = {_fmt(s.outer_damping)}",
    ]
    if s.tol_ell is not None:
        out.append(f"tol_ell = {_fmt(s.tol_ell)}")
    if s.eps_schedule:
        out.append("eps_schedule = " + ", ".join(_fmt(e) for e in s.eps_schedule))
    out += ["", "[weights]", f"s = {_fmt(w.s)}", f"lambda = {_fmt(w.lam)}", f"inset = {_fmt(w.inset)}"]
    for key in ("a_tilde", "b_tilde"):
        if getattr(w, key) is not None:
            out.append(f"{key} = {_fmt(getattr(w, key))}")
    for key in ("omega0", "omega1", "omega2"):
        if getattr(w, key) is not None:
            out.append(f"{key} = {_fmt_interval(getattr(w, key))}")
    return "\n".join(out) + "\n"
