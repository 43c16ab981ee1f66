from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import pytest

from stefanctl.config import Interval, ProblemConfig, load_config

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


def scenario(name: str) -> ProblemConfig:
    return load_config(SCENARIOS / f"{name}.ini")


def make_cfg(**changes) -> ProblemConfig:
    """Reference-like configuration built in code; keyword overrides win."""
    base = dict(
        beta=1.0, T=0.1, ell_star=0.9, ell0=1.0, Bmax=1.5, mu=(10.0, 10.0), eps=1e-3,
        leader_region=Interval(0.3, 0.4),
        follower_regions=(Interval(0.2, 0.5), Interval(0.15, 0.45)),
        observation_regions=(Interval(0.25, 0.45), Interval(0.25, 0.45)),
        y0_source="0.01*sin(pi*x/L0)", n_space=21, n_time=21,
    )
    base.update(changes)
    return ProblemConfig(**base)


def with_solver(cfg: ProblemConfig, **changes) -> ProblemConfig:
    return cfg.with_(solver=replace(cfg.solver, **changes))


@pytest.fixture(scope="session")
def reference_cfg() -> ProblemConfig:
    return scenario("reference")


@pytest.fixture(scope="session")
def small_cfg() -> ProblemConfig:
    return make_cfg()


# acceptance lines are collected here and echoed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {text}")
