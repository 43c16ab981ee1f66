"""``stefanctl`` command line.

Exit codes: 0 ok, 1 usage or configuration error, 2 non-convergence
(including leaving the admissible class), 3 property failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, carleman, probes
from .config import ProblemConfig, load_config, validate_geometry
from .errors import (AdmissibilityError, ConfigError, ConvergenceError, DegenerateSampleError,
                     GridError, StefanCtlError, WeightOverflowError)
from .stefan import solve_stefan_control
from .transform import BoundaryTrajectory, physical_x

EXIT_OK, EXIT_USAGE, EXIT_NONCONV, EXIT_PROPERTY = 0, 1, 2, 3

log = logging.getLogger("stefanctl")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("STEFANCTL_THREADS", "1")))
    except ValueError:
        return 1


class Run:
    """Output directory plus manifest bookkeeping for one command."""

    def __init__(self, command: str, cfg: ProblemConfig, out: str | None):
        self.command = command
        self.cfg = cfg
        self.dir = Path(out) if out else Path("stefanctl-out") / f"{cfg.name}-{command}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.suites: dict[str, bool] = {}
        self.extra: dict = {}
        self.t0 = time.perf_counter()

    def csv(self, name, header, rows):
        write_csv(self.dir / name, header, rows)
        self.files.append(name)

    def finish(self, status: str):
        manifest = dict(
            scenario=self.cfg.name,
            command=self.command,
            config_hash=self.cfg.digest(),
            grid=dict(n_space=self.cfg.n_space, n_time=self.cfg.n_time),
            timings=dict(wall_seconds=round(time.perf_counter() - self.t0, 3)),
            files=self.files,
            suites=self.suites,
            status=status,
            version=__version__,
            **self.extra,
        )
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_fmt) + "\n")


# ---------------------------------------------------------------------------
# commands


def _solution_rows(sol, cfg):
    grid = cfg.grid
    x = physical_x(sol.ell, grid)
    st, v = sol.state, sol.followers.v
    for k, t in enumerate(grid.t):
        for j, xi in enumerate(grid.xi):
            yield [t, x[k, j], xi, st.y[k, j], st.phi[0][k, j], st.phi[1][k, j], sol.hum.f[k, j],
                   v[0][k, j], v[1][k, j]]


def cmd_solve(args, cfg: ProblemConfig) -> int:
    if args.eps is not None:
        cfg = cfg.with_(eps=args.eps[0])
    run = Run("solve", cfg, args.out)
    try:
        sol = solve_stefan_control(cfg)
    except (ConvergenceError, AdmissibilityError) as exc:
        run.finish(f"failed: {exc}")
        print(f"stefanctl: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    grid = cfg.grid
    run.csv("solution.csv", ["t", "x", "xi", "y", "phi1", "phi2", "f", "v1", "v2"], _solution_rows(sol, cfg))
    resid = np.abs(sol.ell.slopes + sol.flux / cfg.beta)
    run.csv("boundary.csv", ["t", "ell", "ell_prime", "flux", "residual"],
            zip(grid.t, sol.ell.values, sol.ell.slopes, sol.flux, resid))
    h = sol.hum
    run.csv("summary.csv",
            ["eps", "terminal_norm", "f_norm", "cg_iters", "outer_iters", "stefan_residual", "converged"],
            [[cfg.eps, h.terminal_norm, h.f_norm, h.cg_iters, sol.outer_iters, sol.stefan_residual, sol.converged]])
    run.csv("increments.csv", ["iteration", "increment"], enumerate(sol.ell_increments, start=1))
    ok = sol.converged and sol.stefan_residual <= cfg.solver.tol_stefan
    run.suites["solve"] = bool(ok)
    run.finish("ok" if ok else "not converged")
    if not ok:
        print(f"stefanctl: not converged (terminal norm {h.terminal_norm:.3e}, "
              f"stefan residual {sol.stefan_residual:.3e})", file=sys.stderr)
        return EXIT_NONCONV
    return EXIT_OK


def cmd_weights(args, cfg: ProblemConfig) -> int:
    if args.s is not None or args.lam is not None:
        from dataclasses import replace

        cfg = cfg.with_(weights=replace(cfg.weights, s=args.s or cfg.weights.s, lam=args.lam or cfg.weights.lam))
    ell = BoundaryTrajectory.static(cfg)
    etas = carleman.build_weights(cfg, ell)
    case = "F1" if len(etas) == 1 else "F2"
    if args.case not in ("auto", case):
        raise ConfigError(f"geometry gives case {case}, not {args.case}", key="case")
    if args.drop_theta_c:
        etas = tuple(e.without("c") for e in etas)
    run = Run("weights", cfg, args.out)
    report_rows, ok = [], True
    for i, e in enumerate(etas):
        partner = etas[1 - i] if len(etas) == 2 else None
        rep = carleman.verify_weight_properties(e, partner=partner)
        ok &= rep.passed
        for c in rep.clauses:
            wx, wt = c.witness if c.witness else (float("nan"), float("nan"))
            report_rows.append([i, c.name, c.passed, c.value, wx, wt])
            if not c.passed:
                print(f"stefanctl: clause {c.name} failed for weight {i} (value {c.value:.6g}, "
                      f"witness x={wx:.6g}, t={wt:.6g})", file=sys.stderr)
    grid = cfg.grid
    bundles = [carleman.fursikov_weights(e, cfg.weights.s, cfg.weights.lam, cfg.T, grid) for e in etas]
    for b in bundles:
        carleman.rho_weight(b, cfg.rho_nbhd)
    x = physical_x(ell, grid)
    rows = []
    for i, b in enumerate(bundles):
        for k, t in enumerate(grid.t):
            for j in range(grid.n_space):
                rows.append([i, t, x[k, j], b.eta_star[k, j], b.eta[k, j], b.log_sigma[k, j], b.log_xi[k, j],
                             b.log_rho[k]])
    run.csv("weights.csv", ["weight", "t", "x", "eta_star", "eta", "log_sigma", "log_xi", "log_rho"], rows)
    run.csv("report.csv", ["weight", "clause", "passed", "value", "witness_x", "witness_t"], report_rows)
    run.suites["weights"] = bool(ok)
    run.extra["case"] = case
    norms = carleman.weighted_target_norms(cfg, ell, bundles[0])
    run.extra["log_rho_target_norms"] = [v if np.isfinite(v) else _fmt(v) for v in norms]
    run.finish("ok" if ok else "property failure")
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_probe(args, cfg: ProblemConfig) -> int:
    if args.suite is None:
        raise ConfigError("--suite is required", key="suite")
    if args.suite not in probes.SUITES:
        raise ConfigError(f"unknown suite {args.suite!r}; choose from {', '.join(probes.SUITES)}", key="suite")
    if args.n <= 0:
        raise ConfigError("empty suite (n must be positive)", key="n")
    run = Run(f"probe-{args.suite}", cfg, args.out)
    try:
        res = probes.run_suite(args.suite, cfg, args.n, args.seed)
    except (ConvergenceError, AdmissibilityError) as exc:
        run.finish(f"failed: {exc}")
        print(f"stefanctl: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    run.csv("probe.csv", res.header, res.rows)
    run.suites[res.name] = bool(res.passed)
    run.extra.update(seed=args.seed, n=args.n, rng="numpy PCG64 (default_rng)", summary=res.summary)
    run.finish("ok" if res.passed else "property failure")
    if res.assertive and not res.passed:
        print(f"stefanctl: suite {res.name} failed: {res.summary}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


SWEEP_PARAMS = ("eps", "mu", "grid")


def _sweep_one(cfg: ProblemConfig, param: str, value: float):
    if param == "eps":
        c = cfg.with_(eps=value)
    elif param == "mu":
        c = cfg.with_(mu=(value, value))
    else:
        n = int(value)
        c = cfg.with_(n_space=n, n_time=2 * (n - 1) + 1)
    try:
        sol = solve_stefan_control(c)
    except (ConvergenceError, AdmissibilityError) as exc:
        return dict(value=value, converged=False, error=str(exc))
    h = sol.hum
    return dict(value=value, converged=sol.converged, outer_iters=sol.outer_iters, cg_iters=h.cg_iters,
                terminal_norm=h.terminal_norm, f_norm=h.f_norm, stefan_residual=sol.stefan_residual,
                ell_T=float(sol.ell.values[-1]))


def observed_orders(values, q) -> list[float]:
    """``log2(|q_{k-2} - q_{k-1}| / |q_{k-1} - q_k|)`` for dyadic refinements."""
    out = [float("nan")] * len(q)
    for k in range(2, len(q)):
        d1, d2 = abs(q[k - 2] - q[k - 1]), abs(q[k - 1] - q[k])
        if d1 > 0 and d2 > 0:
            ratio = (values[k] - 1) / (values[k - 1] - 1)
            out[k] = float(np.log(d1 / d2) / np.log(ratio))
    return out


def cmd_sweep(args, cfg: ProblemConfig) -> int:
    if args.param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {args.param!r}; choose from {', '.join(SWEEP_PARAMS)}",
                          key="param")
    values = args.values or (args.eps if args.param == "eps" else None)
    if not values:
        raise ConfigError("no sweep values given", key="values")
    run = Run(f"sweep-{args.param}", cfg, args.out)
    with ThreadPoolExecutor(max_workers=min(_threads(), len(values))) as pool:
        results = list(pool.map(lambda v: _sweep_one(cfg, args.param, v), values))
    fn = [r.get("f_norm", np.nan) for r in results]
    pos = [f for f in fn if np.isfinite(f) and f > 0]
    spread = max(pos) / min(pos) if pos else float("nan")
    orders = (observed_orders(values, [r.get("ell_T", np.nan) - cfg.ell0 for r in results])
              if args.param == "grid" else [float("nan")] * len(results))
    header = ["value", "converged", "outer_iters", "cg_iters", "terminal_norm", "f_norm", "stefan_residual",
              "ell_T", "f_norm_spread", "order"]
    rows = [[r["value"], r["converged"], r.get("outer_iters", -1), r.get("cg_iters", -1),
             r.get("terminal_norm", np.nan), r.get("f_norm", np.nan), r.get("stefan_residual", np.nan),
             r.get("ell_T", np.nan), spread, o] for r, o in zip(results, orders)]
    run.csv("sweep.csv", header, rows)
    ok = all(r["converged"] for r in results)
    run.suites["sweep"] = ok
    run.finish("ok" if ok else "some values did not converge")
    for r in results:
        if "error" in r:
            print(f"stefanctl: value {r['value']}: {r['error']}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_NONCONV


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stefanctl", description="Hierarchical control of the one-phase Stefan problem.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", required=True, help="scenario document (INI)")
        sp.add_argument("--out", help="output directory (default stefanctl-out/<name>-<command>)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--eps", type=float, nargs="+", help="penalty tolerance (sweep: list of values)")
        return sp

    common(sub.add_parser("solve", help="run the full free-boundary control solve"))
    w = common(sub.add_parser("weights", help="build and verify the Carleman weights"))
    w.add_argument("--case", choices=("auto", "F1", "F2"), default="auto")
    w.add_argument("--s", type=float)
    w.add_argument("--lambda", dest="lam", type=float)
    w.add_argument("--drop-theta-c", action="store_true", help="omit the positivity cut-off (sabotage check)")
    pr = common(sub.add_parser("probe", help="run a randomized property suite"))
    pr.add_argument("--suite", help=f"one of {', '.join(probes.SUITES)}")
    pr.add_argument("--n", type=int, default=20, help="number of samples")
    sw = common(sub.add_parser("sweep", help="repeat the solve over parameter values"))
    sw.add_argument("--param", default="eps", help=f"one of {', '.join(SWEEP_PARAMS)}")
    sw.add_argument("--values", type=float, nargs="+")
    return p


COMMANDS = dict(solve=cmd_solve, weights=cmd_weights, probe=cmd_probe, sweep=cmd_sweep)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        report = validate_geometry(cfg)
        if not report.ok:
            raise ConfigError("invalid geometry: " + "; ".join(report.violations), key="geometry")
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, GridError) as exc:
        print(f"stefanctl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, AdmissibilityError) as exc:
        print(f"stefanctl: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (WeightOverflowError, DegenerateSampleError) as exc:
        print(f"stefanctl: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except StefanCtlError as exc:
        print(f"stefanctl: {exc}", file=sys.stderr)
        return EXIT_NONCONV


if __name__ == "__main__":
    sys.exit(main())
