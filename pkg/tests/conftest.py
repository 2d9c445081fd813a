"""Shared fixtures: small analytic problems and cached study runs."""
from __future__ import annotations

import numpy as np
import pytest

from spoc.cli import COLD_MESH, WARM_MESH
from spoc.loop import solve_spoc
from spoc.ocp import OcpDefinition
from spoc.rlve import CASE1, CASE2, ROTATING, build_study, cold_start_guess, sweep_configs
from spoc.transcription import DomainLayout


def _di_dynamics(y, u, t, p):
    return y[:, 1], u[:, 0]


def _di_effort(y, u, t, p):
    return 0.5 * u[:, 0] * u[:, 0]


def _zero_mayer(y0, t0, yf, tf, p):
    return 0.0


def double_integrator(**kw) -> OcpDefinition:
    """min 1/2 int u^2 on [0, 1], x'' = u, (x, v): (0, 0) -> (1, 0).

    Closed form: u = 6 - 12 t, v = 6 t - 6 t^2, x = 3 t^2 - 2 t^3, cost 6.
    """
    args = dict(
        n_y=2, n_u=1, dynamics=_di_dynamics, mayer=_zero_mayer, lagrange=_di_effort,
        initial_state_bounds=([0.0, 0.0], [0.0, 0.0]),
        final_state_bounds=([1.0, 0.0], [1.0, 0.0]),
        initial_time_bounds=(0.0, 0.0), final_time_bounds=(1.0, 1.0),
        name="double-integrator",
    )
    args.update(kw)
    return OcpDefinition(**args)


class DoubleIntegratorExact:
    t0, tf = 0.0, 1.0

    @staticmethod
    def state_at(t):
        t = np.asarray(t, float)
        return np.column_stack([3 * t**2 - 2 * t**3, 6 * t - 6 * t**2])

    @staticmethod
    def control_at(t):
        return (6.0 - 12.0 * np.asarray(t, float))[:, None]


@pytest.fixture
def di_problem():
    return double_integrator()


@pytest.fixture
def di_exact():
    return DoubleIntegratorExact()


# ---------------------------------------------------------------- studies
_cache: dict = {}


def run_cold(config, key):
    if key not in _cache:
        problem = build_study(config)
        layout = DomainLayout.single(0.0, 2000.0, *COLD_MESH)
        _cache[key] = (problem, solve_spoc(problem, layout, cold_start_guess(problem)))
    return _cache[key]


def run_warm(config, key):
    if key not in _cache:
        _, base = run_cold(CASE1, "case1")
        problem = build_study(config)
        layout = DomainLayout.single(base.t0, base.tf, *WARM_MESH)
        _cache[key] = (problem, solve_spoc(problem, layout, base))
    return _cache[key]


@pytest.fixture(scope="session")
def case1_run():
    return run_cold(CASE1, "case1")


@pytest.fixture(scope="session")
def case2_run():
    return run_cold(CASE2, "case2")


@pytest.fixture(scope="session")
def rotating_run():
    return run_warm(ROTATING, "rotating")


@pytest.fixture(scope="session")
def sweep_runs():
    out = []
    for cfg in sweep_configs():
        key = "rotating" if cfg.Qdot_max == ROTATING.Qdot_max else f"sweep{cfg.Qdot_max}"
        out.append((cfg.Qdot_max, *run_warm(cfg, key)))
    return out


# ---------------------------------------------------------------- acceptance report
ACCEPTANCE: list[str] = []


def record_criterion(number: int, title: str, checks) -> bool:
    """Store one PASS/FAIL line (plus one line per check) for the terminal summary."""
    ok = all(c[1] for c in checks)
    lines = [f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"]
    for label, passed, detail in checks:
        lines.append(f"       {'ok ' if passed else 'BAD'} {label}: {detail}")
    ACCEPTANCE.extend(lines)
    print("\n".join(lines))
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
