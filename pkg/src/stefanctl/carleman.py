"""Explicit Fursikov weights, their lemma-level properties, and randomized
probes of the energy, observability and Carleman inequalities.

The spatial profile is assembled from C^2 quintic cut-offs:

    eta*(x, t) = (x/a~) th_a + (1 - (x - b~)/(ell(t) - b~)) th_b + th_c + N th_d

with ``omega = (a, b)`` and a sub-interval ``(a', b')`` at a fixed relative
inset.  The exponential weights are huge (``exp(4 lam |eta|)/(t(T-t))``
sits in an exponent), so everything downstream of ``eta`` is kept as a
logarithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .config import GeometryCase, GridSpec, Interval, ProblemConfig, validate_geometry
from .discrete import Discretization
from .errors import ConfigError, DegenerateSampleError, WeightOverflowError
from .hum import solve_adjoint_cascade
from .parabolic import space_weights
from .transform import BoundaryTrajectory, physical_x

# ---------------------------------------------------------------------------
# cut-offs


def _smoothstep_down(x, b: float, c: float):
    s = np.clip((np.asarray(x, dtype=float) - b) / (c - b), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def quintic_cutoff(b: float, c: float):
    """``x -> 1`` on ``(-inf, b]``, ``0`` on ``[c, inf)``, quintic in between."""
    if not b < c:
        raise ValueError(f"cut-off needs b < c, got b={b}, c={c}")
    return lambda x: _smoothstep_down(x, b, c)


@dataclass(frozen=True)
class CutoffSpec:
    """Cut-off equal to one on ``flat_one``, zero outside ``rise``/``fall`` edges.

    ``rise = (b, c)`` climbs from 0 at ``b`` to 1 at ``c``; ``fall = (b, c)``
    drops from 1 at ``b`` to 0 at ``c``.  A missing edge means the cut-off
    stays at one on that side.
    """

    rise: tuple[float, float] | None = None
    fall: tuple[float, float] | None = None

    def __post_init__(self):
        for edge in (self.rise, self.fall):
            if edge is not None and not edge[0] < edge[1]:
                raise ValueError(f"degenerate transition {edge}")
        if self.rise and self.fall and not self.rise[1] <= self.fall[0]:
            raise ValueError("transitions overlap")

    @property
    def flat_one(self) -> Interval:
        lo = self.rise[1] if self.rise else -np.inf
        hi = self.fall[0] if self.fall else np.inf
        return Interval(lo, hi)

    def __call__(self, x):
        out = np.ones_like(np.asarray(x, dtype=float))
        if self.rise is not None:
            out = out * (1.0 - _smoothstep_down(x, *self.rise))
        if self.fall is not None:
            out = out * _smoothstep_down(x, *self.fall)
        return out


def fursikov_N(a_tilde: float, a_prime: float, b_prime: float, b_tilde: float, ell_star: float) -> float:
    """Height of the bump that lifts the sup-norm of eta* to ``N + 1``."""
    return a_prime / a_tilde + (1.0 - (b_prime - b_tilde) / (ell_star - b_tilde))


def inner_interval(omega: Interval, inset: float) -> Interval:
    gap = inset * omega.length
    return Interval(omega.lo + gap, omega.hi - gap)


# ---------------------------------------------------------------------------
# spatial profile


@dataclass(frozen=True, eq=False)
class EtaStar:
    """The profile eta* for one observation set ``omega``; ``ell`` supplies ell(t)."""

    ell: BoundaryTrajectory
    a_tilde: float
    b_tilde: float
    omega: Interval
    inner: Interval
    N: float
    theta_a: CutoffSpec | None
    theta_b: CutoffSpec | None
    theta_c: CutoffSpec | None
    theta_d: CutoffSpec | None

    @property
    def sup_norm(self) -> float:
        return self.N + 1.0

    def __call__(self, x, ell_t):
        """Evaluate at physical ``x`` with boundary position ``ell_t`` (broadcast)."""
        x = np.asarray(x, dtype=float)
        ell_t = np.asarray(ell_t, dtype=float)
        out = np.zeros(np.broadcast(x, ell_t).shape)
        if self.theta_a is not None:
            out = out + (x / self.a_tilde) * self.theta_a(x)
        if self.theta_b is not None:
            out = out + (1.0 - (x - self.b_tilde) / (ell_t - self.b_tilde)) * self.theta_b(x)
        if self.theta_c is not None:
            out = out + self.theta_c(x)
        if self.theta_d is not None:
            out = out + self.N * self.theta_d(x)
        return out

    def on_grid(self, grid: GridSpec) -> np.ndarray:
        """Values at the cylinder nodes (x = xi ell(t)/ell0)."""
        return self(physical_x(self.ell, grid), self.ell.values[:, None])

    def sample(self, n_points: int = 512) -> tuple[np.ndarray, np.ndarray]:
        """``(x, eta)`` with ``n_points`` uniform points on ``[0, ell(t_k)]`` per time level."""
        s = np.linspace(0.0, 1.0, n_points)
        x = np.outer(self.ell.values, s)
        return x, self(x, self.ell.values[:, None])

    def without(self, *names: str) -> "EtaStar":
        from dataclasses import replace

        return replace(self, **{f"theta_{n}": None for n in names})


def _check_nesting(a_tilde, b_tilde, omega: Interval, ell_star):
    if not (0 < a_tilde < omega.lo and omega.hi < b_tilde < ell_star):
        raise ConfigError(f"need 0 < a~ < a < b < b~ < ell*, got a~={a_tilde}, omega={omega}, "
                          f"b~={b_tilde}, ell*={ell_star}", key="weights")


def _build(ell, a_tilde, b_tilde, omega, inset, N) -> EtaStar:
    inner = inner_interval(omega, inset)
    a, ap, bp, b = omega.lo, inner.lo, inner.hi, omega.hi
    ga, gb = ap - a, b - bp
    return EtaStar(
        ell=ell, a_tilde=a_tilde, b_tilde=b_tilde, omega=omega, inner=inner, N=N,
        theta_a=CutoffSpec(fall=(a + ga / 3, ap - ga / 3)),
        theta_b=CutoffSpec(rise=(bp + gb / 3, b - gb / 3)),
        theta_c=CutoffSpec(rise=(a + ga / 6, a + ga / 3), fall=(b - gb / 3, b - gb / 6)),
        theta_d=CutoffSpec(rise=(ap - ga / 9, ap), fall=(bp, bp + gb / 9)),
    )


def build_weight_F2(ell: BoundaryTrajectory, a_tilde: float, b_tilde: float, omega1: Interval,
                    omega2: Interval, grid: GridSpec | None = None, *,
                    inset: float = 1.0 / 3.0) -> tuple[EtaStar, EtaStar]:
    """Pair of profiles with a common bump height, hence equal sup-norms."""
    for om in (omega1, omega2):
        _check_nesting(a_tilde, b_tilde, om, ell.ell_star)
    inners = [inner_interval(om, inset) for om in (omega1, omega2)]
    N = max(fursikov_N(a_tilde, iv.lo, iv.hi, b_tilde, ell.ell_star) for iv in inners)
    return (_build(ell, a_tilde, b_tilde, omega1, inset, N), _build(ell, a_tilde, b_tilde, omega2, inset, N))


def build_weight_F1(ell: BoundaryTrajectory, a_tilde: float, b_tilde: float, omega0: Interval,
                    grid: GridSpec | None = None, *, inset: float = 1.0 / 3.0) -> EtaStar:
    _check_nesting(a_tilde, b_tilde, omega0, ell.ell_star)
    inner = inner_interval(omega0, inset)
    return _build(ell, a_tilde, b_tilde, omega0, inset,
                  fursikov_N(a_tilde, inner.lo, inner.hi, b_tilde, ell.ell_star))


def default_weight_geometry(cfg: ProblemConfig) -> tuple[float, float, tuple[Interval, ...]]:
    """``(a~, b~, omegas)``: the leader region, and each trace of it on an
    observation region shrunk by 10% per side (one omega in case G1)."""
    w = cfg.weights
    a_tilde = cfg.leader_region.lo if w.a_tilde is None else w.a_tilde
    b_tilde = cfg.leader_region.hi if w.b_tilde is None else w.b_tilde
    box = Interval(a_tilde, b_tilde)

    def shrink(region):
        trace = box.intersect(region)
        if trace is None:
            raise ConfigError(f"(a~, b~) misses observation region {region}", key="weights")
        pad = 0.1 * trace.length
        return Interval(trace.lo + pad, trace.hi - pad)

    report = validate_geometry(cfg)
    if report.config_case is GeometryCase.G1:
        omega0 = w.omega0 or shrink(cfg.observation_regions[0])
        return a_tilde, b_tilde, (omega0,)
    omegas = (w.omega1 or shrink(cfg.observation_regions[0]), w.omega2 or shrink(cfg.observation_regions[1]))
    return a_tilde, b_tilde, omegas


def build_weights(cfg: ProblemConfig, ell: BoundaryTrajectory) -> tuple[EtaStar, ...]:
    a_tilde, b_tilde, omegas = default_weight_geometry(cfg)
    inset = cfg.weights.inset
    if len(omegas) == 1:
        return (build_weight_F1(ell, a_tilde, b_tilde, omegas[0], inset=inset),)
    return build_weight_F2(ell, a_tilde, b_tilde, *omegas, inset=inset)


# ---------------------------------------------------------------------------
# clause verification


@dataclass(frozen=True)
class Clause:
    name: str
    passed: bool
    value: float
    witness: tuple[float, float] | None = None  # (x, t)


@dataclass
class WeightReport:
    clauses: list[Clause]
    c_report: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def failed(self) -> list[Clause]:
        return [c for c in self.clauses if not c.passed]


def _witness(x, t, idx) -> tuple[float, float]:
    k, j = np.unravel_index(idx, x.shape)
    return float(x[k, j]), float(t[k])


def verify_weight_properties(eta_star: EtaStar, ell: BoundaryTrajectory | None = None,
                             omega: Interval | None = None, grid: GridSpec | None = None, *,
                             partner: EtaStar | None = None, n_points: int = 512,
                             margin: float = 0.5) -> WeightReport:
    """Check the lemma clauses on ``n_points`` samples per time level.

    ``partner`` is the other member of an F2 pair; with it the equal-norm and
    agreement-off-(a~, b~) clauses are checked too.
    """
    if ell is not None and ell is not eta_star.ell:
        from dataclasses import replace

        eta_star = replace(eta_star, ell=ell)
    ell = eta_star.ell
    omega = eta_star.omega if omega is None else omega
    t = ell.t
    x, eta = eta_star.sample(n_points)
    clauses = []

    interior = eta[:, 1:-1]
    idx = int(np.argmin(interior))
    clauses.append(Clause("positivity", bool(interior.min() > 0.0), float(interior.min()),
                          _witness(x[:, 1:-1], t, idx)))

    ends = np.abs(eta[:, [0, -1]])
    idx = int(np.argmax(ends))
    clauses.append(Clause("boundary_vanishing", bool(ends.max() <= 1e-10), float(ends.max()),
                          _witness(x[:, [0, -1]], t, idx)))

    # centred differences at interior samples, one-cell halo around omega
    h = (x[:, 2:] - x[:, :-2])
    grad = np.abs((eta[:, 2:] - eta[:, :-2]) / h)
    xc = x[:, 1:-1]
    cell = (ell.values / (n_points - 1))[:, None]
    outside = (xc <= omega.lo - cell) | (xc >= omega.hi + cell)
    c_emp = float(grad[outside].min()) if outside.any() else np.inf
    c_min = (1 - margin) * min(1.0 / eta_star.a_tilde, 1.0 / (ell.Bmax - eta_star.b_tilde))
    masked = np.where(outside, grad, np.inf)
    idx = int(np.argmin(masked))
    clauses.append(Clause("gradient_lower_bound", bool(c_emp >= c_min), c_emp, _witness(xc, t, idx)))

    right = x > eta_star.b_tilde
    ramp = 1.0 - (x - eta_star.b_tilde) / (ell.values[:, None] - eta_star.b_tilde)
    dev = np.where(right, np.abs(eta - ramp), 0.0)
    idx = int(np.argmax(dev))
    clauses.append(Clause("ramp_formula", bool(dev.max() <= 1e-12), float(dev.max()), _witness(x, t, idx)))

    sup = float(eta.max())
    clauses.append(Clause("sup_norm", bool(abs(sup - eta_star.sup_norm) <= 1e-12 * eta_star.sup_norm),
                          sup, None))

    if partner is not None:
        other = partner(x, ell.values[:, None])
        clauses.append(Clause("equal_sup_norms", bool(abs(sup - other.max()) <= 1e-12 * sup),
                              abs(sup - float(other.max())), None))
        off = (x <= eta_star.a_tilde) | (x >= eta_star.b_tilde)
        diff = np.where(off, np.abs(eta - other), 0.0)
        idx = int(np.argmax(diff))
        clauses.append(Clause("agree_off_box", bool(diff.max() <= 1e-12), float(diff.max()),
                              _witness(x, t, idx)))
    return WeightReport(clauses, c_emp)


# ---------------------------------------------------------------------------
# exponential weights


@dataclass(eq=False)
class WeightBundle:
    """Fursikov weights on the cylinder grid.  ``log_sigma``/``log_xi`` are
    natural logs; the rows ``t = 0`` and ``t = T`` are ``+inf``."""

    eta_star: np.ndarray
    eta: np.ndarray
    log_sigma: np.ndarray
    log_xi: np.ndarray
    grid: GridSpec
    params: dict = field(default_factory=dict)
    log_rho: np.ndarray | None = None

    @property
    def sigma(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_sigma)

    @property
    def xi(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_xi)

    @property
    def rho(self) -> np.ndarray | None:
        if self.log_rho is None:
            return None
        with np.errstate(over="ignore"):
            return np.exp(self.log_rho)

    @property
    def sup_norm(self) -> float:
        return self.params["sup_norm"]


def fursikov_weights(eta_star, s: float, lam: float, T: float, grid: GridSpec) -> WeightBundle:
    """Build ``sigma`` and ``xi`` from a profile (an ``EtaStar`` or a field)."""
    if not (s > 0 and lam > 0):
        raise ValueError("s and lambda must be positive")
    analytic = isinstance(eta_star, EtaStar)
    field_ = eta_star.on_grid(grid) if analytic else np.asarray(eta_star, dtype=float)
    eta = field_ + 1.0
    M = float(np.max(np.abs(eta)))
    if analytic:
        M = max(M, eta_star.sup_norm + 1.0)
    if 4.0 * lam * M > 700.0:
        raise WeightOverflowError(f"weight overflow (4*lambda*|eta| = {4 * lam * M:.1f} > 700); reduce lambda")
    t = grid.t
    with np.errstate(divide="ignore"):
        log_tt = np.log(t * (T - t))
    log_tt[[0, -1]] = -np.inf
    log_sigma = 4 * lam * M + np.log1p(-np.exp(lam * (eta - 2 * M))) - log_tt[:, None]
    log_xi = lam * (2 * M + eta) - log_tt[:, None]
    params = dict(s=s, lam=lam, sup_norm=M)
    if analytic:
        params.update(a_tilde=eta_star.a_tilde, b_tilde=eta_star.b_tilde, omega=eta_star.omega, N=eta_star.N)
    return WeightBundle(field_, eta, log_sigma, log_xi, grid, params)


def rho_weight(bundle: WeightBundle, rho_nbhd: float, grid: GridSpec | None = None, *,
               s: float | None = None) -> np.ndarray:
    """``log rho`` on the time grid: 0 up to ``T - rho_nbhd``, then
    ``s max_x sigma`` with a running maximum.  Also stored on the bundle."""
    grid = bundle.grid if grid is None else grid
    s = bundle.params["s"] if s is None else s
    T = grid.horizon
    with np.errstate(over="ignore"):
        log_rho = s * np.exp(np.max(bundle.log_sigma, axis=1))
    log_rho[grid.t <= T - rho_nbhd + 1e-14 * T] = 0.0
    log_rho = np.maximum.accumulate(np.maximum(log_rho, 0.0))
    bundle.log_rho = log_rho
    bundle.params.update(rho_nbhd=rho_nbhd, rho_s=s)
    return log_rho


def log_weighted_norm(log_rho: np.ndarray, field_, jac, grid: GridSpec) -> float:
    """``log || rho * field ||_{L2}`` computed with log-sum-exp."""
    w = (grid.dt * np.asarray(jac))[:, None] * space_weights(grid)[None, :]
    w[0] *= 0.5
    w[-1] *= 0.5
    f2 = np.asarray(field_) ** 2 * w
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = 2 * log_rho[:, None] + np.log(f2)
    terms = np.where(f2 > 0, terms, -np.inf)
    if np.isposinf(terms).any():
        return float("inf")
    return 0.5 * float(logsumexp(terms))


def weighted_target_norms(cfg: ProblemConfig, ell: BoundaryTrajectory, bundle: WeightBundle) -> list[float]:
    """``log || rho y_{i,d} ||`` over each observation region, a diagnostic for
    the target smallness hypothesis (no threshold is enforced)."""
    log_rho = bundle.log_rho if bundle.log_rho is not None else rho_weight(bundle, cfg.rho_nbhd)
    disc = Discretization.build(cfg, ell)
    return [log_weighted_norm(log_rho, m * yd, disc.coeffs.jac, cfg.grid)
            for m, yd in zip(disc.observation_masks, disc.targets)]


# ---------------------------------------------------------------------------
# probes


def random_terminal(rng: np.random.Generator, grid: GridSpec, n_modes: int = 8) -> np.ndarray:
    """``sum_n c_n sin(n pi xi / ell0)`` with ``c_n ~ N(0, 1)/n``."""
    n = np.arange(1, n_modes + 1)
    c = rng.standard_normal(n_modes) / n
    prof = np.sin(np.outer(grid.xi, n) * np.pi / grid.length) @ c
    prof[[0, -1]] = 0.0
    return prof


def energy_window(cfg: ProblemConfig, ell: BoundaryTrajectory) -> dict:
    x = physical_x(ell, cfg.grid)
    a_inf = float(np.max(np.abs(cfg.a_values(x, cfg.grid.t[:, None]))))
    mu1, mu2 = cfg.mu
    delta = 2 * a_inf + 4 + 1 / mu1 + 1 / mu2
    delta_alt = 2 * a_inf + 4 + 1 / mu1 + mu2 ** -2.0
    return dict(a_inf=a_inf, delta=delta, t0=1 / (2 * delta), delta_alt=delta_alt, t0_alt=1 / (2 * delta_alt))


@dataclass
class EnergyReport:
    t0: float
    delta: float
    worst_ratio: float
    worst_integrated: float
    n_samples: int
    window_empty: bool = False
    t0_alt: float = float("nan")
    worst_ratio_alt: float = float("nan")
    ratios: list[float] = field(default_factory=list)
    bound: float = 2.0
    slack: float = 0.05

    @property
    def passed(self) -> bool:
        if self.window_empty:
            return True
        return self.worst_ratio <= self.bound + self.slack and self.worst_integrated <= 1.0 + self.slack


def _pair_ratio(E, m_max):
    """``max_{k < m <= m_max} E_k / E_m``."""
    prefix = np.maximum.accumulate(E[:m_max])  # max over k < m for m = 1..m_max
    tail = E[1:m_max + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(tail > 0, prefix / tail, np.where(prefix > 0, np.inf, 0.0))
    return float(np.max(r)) if r.size else 0.0


def energy_lemma_check(ell: BoundaryTrajectory | None, cfg: ProblemConfig, n_samples: int = 50,
                       rng_seed: int = 0) -> EnergyReport:
    ell = BoundaryTrajectory.static(cfg) if ell is None else ell
    win = energy_window(cfg, ell)
    T, grid = cfg.T, cfg.grid
    if win["t0"] >= T:
        return EnergyReport(win["t0"], win["delta"], 0.0, 0.0, 0, window_empty=True, t0_alt=win["t0_alt"])
    disc = Discretization.build(cfg, ell)
    t = grid.t
    m0 = int(np.searchsorted(t, win["t0"] * (1 + 1e-12), side="right") - 1)
    m0_alt = int(np.searchsorted(t, min(win["t0_alt"], T) * (1 + 1e-12), side="right") - 1)
    lo = t <= win["t0"] / 2
    hi = (t >= win["t0"] / 2) & (t <= T / 2)
    rng = np.random.default_rng(rng_seed)
    ratios, alts, integ = [], [], []
    for _ in range(n_samples):
        psi = solve_adjoint_cascade(random_terminal(rng, grid), None, cfg, disc=disc).psi
        E = np.array([disc.op.pair_profiles(psi[k], psi[k], k) for k in range(grid.n_time)])
        ratios.append(_pair_ratio(E, m0))
        alts.append(_pair_ratio(E, m0_alt))
        left = np.trapezoid(E[lo], t[lo]) if lo.sum() > 1 else 0.0
        right = 2 * win["t0"] / (T - win["t0"]) * np.trapezoid(E[hi], t[hi])
        integ.append(left / right if right > 0 else (0.0 if left == 0 else np.inf))
    return EnergyReport(win["t0"], win["delta"], max(ratios), max(integ), n_samples,
                        t0_alt=win["t0_alt"], worst_ratio_alt=max(alts), ratios=ratios)


def default_bundles(cfg: ProblemConfig, ell: BoundaryTrajectory, *, s: float | None = None,
                    lam: float | None = None) -> tuple[WeightBundle, ...]:
    s = cfg.weights.s if s is None else s
    lam = cfg.weights.lam if lam is None else lam
    bundles = tuple(fursikov_weights(e, s, lam, cfg.T, cfg.grid) for e in build_weights(cfg, ell))
    for b in bundles:
        rho_weight(b, cfg.rho_nbhd)
    return bundles


def observability_ratio(psiT, ell: BoundaryTrajectory | None, cfg: ProblemConfig,
                        bundle: WeightBundle | None = None, *, disc: Discretization | None = None,
                        rho_index: int = 0) -> float:
    """``(|psi(0)|^2 + sum rho^-2 |gamma_i|^2) / |psi|^2_{O x (0,T)}`` for one sample."""
    if disc is None:
        ell = BoundaryTrajectory.static(cfg) if ell is None else ell
        disc = Discretization.build(cfg, ell)
    if bundle is None:
        bundle = default_bundles(cfg, disc.ell)[rho_index]
    log_rho = bundle.log_rho if bundle.log_rho is not None else rho_weight(bundle, cfg.rho_nbhd)
    cas = solve_adjoint_cascade(psiT, None, cfg, disc=disc)
    op = disc.op
    psi_o = cas.psi * disc.leader_mask
    rhs = op.pair_sources(psi_o, psi_o)
    if not rhs > 1e-300:
        raise DegenerateSampleError("no observation signal")
    damp = np.exp(-2.0 * log_rho)[:, None]
    lhs = op.pair_profiles(cas.psi[0], cas.psi[0], 0) + sum(op.pair_states(damp * g, g) for g in cas.gamma)
    return lhs / rhs


def admissible_family(cfg: ProblemConfig, n: int = 5, amplitude: float | None = None) -> list[BoundaryTrajectory]:
    """Static, expanding, shrinking, oscillating and accelerating boundaries.

    Excursions default to 5% of ell0, capped at half the room to ell* and B.
    """
    T, l0 = cfg.T, cfg.ell0
    A = 0.05 * l0 if amplitude is None else amplitude
    A = min(A, 0.5 * (cfg.Bmax - l0), 0.5 * (l0 - cfg.ell_star))
    w = 2 * np.pi / T
    shapes = [
        (lambda t: l0 + 0 * t, lambda t: 0 * t),
        (lambda t: l0 + A * t / T, lambda t: A / T + 0 * t),
        (lambda t: l0 - A * t / T, lambda t: -A / T + 0 * t),
        (lambda t: l0 + A * np.sin(w * t), lambda t: A * w * np.cos(w * t)),
        (lambda t: l0 + A * (t / T) ** 2, lambda t: 2 * A * t / T**2),
    ]
    return [BoundaryTrajectory.from_function(cfg, f, df) for f, df in shapes[:n]]


@dataclass
class ObservabilityReport:
    per_ell_max: list[float]
    per_ell_min: list[float]
    per_ell_median: list[float]
    n_samples: int
    ratios: list[list[float]] = field(default_factory=list, repr=False)

    @property
    def family_max(self) -> float:
        return max(self.per_ell_max)

    @property
    def baseline(self) -> float:
        return self.per_ell_max[0]

    @property
    def spread(self) -> float:
        """Largest relative deviation of a family member's max from the first member's."""
        return max(abs(m / self.baseline - 1.0) for m in self.per_ell_max)

    @property
    def finite(self) -> bool:
        return all(np.isfinite(r).all() for r in self.ratios)


def estimate_observability_constant(ells, cfg: ProblemConfig, n_samples: int = 100,
                                    rng_seed: int = 0) -> ObservabilityReport:
    """Empirical lower bound on the observability constant over a boundary family.
    Every member sees the same terminal samples."""
    mx, mn, md, all_r = [], [], [], []
    for ell in ells:
        disc = Discretization.build(cfg, ell)
        bundle = default_bundles(cfg, ell)[0]
        rng = np.random.default_rng(rng_seed)
        r = [observability_ratio(random_terminal(rng, cfg.grid), None, cfg, bundle, disc=disc)
             for _ in range(n_samples)]
        all_r.append(r)
        mx.append(max(r))
        mn.append(min(r))
        md.append(float(np.median(r)))
    return ObservabilityReport(mx, mn, md, n_samples, all_r)


@dataclass
class CarlemanReport:
    log_lhs: float
    log_rhs: float
    s: float
    lam: float
    case: str
    degenerate: bool = False

    @property
    def log10_ratio(self) -> float:
        if self.degenerate:
            return float("nan")
        return (self.log_lhs - self.log_rhs) / np.log(10.0)


def _log_integral(log_weight, values, disc: Discretization, mask=None) -> float:
    """``log sum w exp(log_weight) values^2`` over the interior time rows;
    ``log_weight`` is given on those rows only."""
    g = disc.grid
    w = (g.dt * disc.coeffs.jac)[1:-1, None] * space_weights(g)[None, :]
    v2 = np.asarray(values)[1:-1] ** 2 * w
    if mask is not None:
        v2 = v2 * mask[1:-1]
    pos = v2 > 0
    terms = np.where(pos, log_weight + np.log(np.where(pos, v2, 1.0)), -np.inf)
    return float(logsumexp(terms))


def carleman_ratio(psiT, ell: BoundaryTrajectory | None, cfg: ProblemConfig,
                   bundles: tuple[WeightBundle, ...] | None = None, s: float = 1.0,
                   lam: float = 2.0) -> CarlemanReport:
    """Both sides of the Carleman inequality (without its constant), in logs.

    With one bundle (case G1) the right side uses that weight; with two
    (case G2) the sum of both weights.  Diagnostic only.
    """
    ell = BoundaryTrajectory.static(cfg) if ell is None else ell
    disc = Discretization.build(cfg, ell)
    if bundles is None:
        bundles = tuple(fursikov_weights(e, s, lam, cfg.T, cfg.grid) for e in build_weights(cfg, ell))
    psi = solve_adjoint_cascade(psiT, None, cfg, disc=disc).psi
    case = "G1" if len(bundles) == 1 else "G2"
    if not np.any(psi):
        return CarlemanReport(-np.inf, -np.inf, s, lam, case, degenerate=True)
    inner = slice(1, -1)
    b0 = bundles[0]
    log_lhs = _log_integral(-2 * s * np.exp(b0.log_sigma[inner]) + 3 * b0.log_xi[inner], psi, disc)
    rhs_terms = []
    for b in bundles:
        lw = -2 * s * np.exp(b.log_sigma[inner]) + 4 * b.log_xi[inner]
        rhs_terms.append(_log_integral(lw, psi, disc, disc.leader_mask))
    log_rhs = float(np.log(s * lam)) + float(logsumexp(rhs_terms))
    return CarlemanReport(log_lhs, log_rhs, s, lam, case)
