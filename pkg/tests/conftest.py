"""Shared fixtures: reference configs, a small test plant, JIT warm-up.

The acceptance tests carry runtime limits, so a session-scoped warm-up
fixture compiles every accelerated kernel once before anything is timed.
"""

from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from dmae import LtvModel, load_config
from dmae.scenario import ScenarioConfig

settings.register_profile("suite", max_examples=50, deadline=None)
settings.load_profile("suite")

REPO_ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIR = REPO_ROOT / "configs"

CONFIG_NAMES = {
    "example1": "example1.cfg",
    "case1": "example2_case1.cfg",
    "case2": "example2_case2.cfg",
    "case3": "example2_case3.cfg",
}

# Benchmark plant shared by the oracle tests: two states, two disturbance
# channels, two output faults, full-rank E and F.
BENCH = {
    "A": [[-0.0005, -0.0084], [0.0517, 0.8069]],
    "B": [[0.1815], [1.7902]],
    "E": [[0.629, 0.0], [0.0, -0.52504]],
    "H": [[1.0, 0.0], [0.0, 1.0]],
    "F": [[1.0, 0.0], [0.0, 1.0]],
    "Q": [[4.0e-6, 0.0], [0.0, 4.0e-6]],
    "R": [[1.0e-4, 0.0], [0.0, 1.0e-4]],
}


def config_path(key: str) -> Path:
    return CONFIG_DIR / CONFIG_NAMES[key]


@pytest.fixture(scope="session")
def example1_cfg():
    return load_config(config_path("example1"))


@pytest.fixture(scope="session")
def case1_cfg():
    return load_config(config_path("case1"))


@pytest.fixture(scope="session")
def case2_cfg():
    return load_config(config_path("case2"))


@pytest.fixture(scope="session")
def case3_cfg():
    return load_config(config_path("case3"))


@pytest.fixture(scope="session")
def bench_model():
    return LtvModel(**{k: np.array(v) for k, v in BENCH.items()})


def tiny_scenario_dict() -> dict:
    """Small full-featured scenario: fast to run, exercises both filters."""
    return {
        "name": "tiny",
        "horizon": 20,
        "seed": 0,
        "model": {
            "A": [[0.5, 0.1], [0.0, 0.4]],
            "B": [[0.1], [0.2]],
            "E": [[1.0, 0.0], [0.0, 1.0]],
            "H": [[1.0, 0.0], [0.0, 1.0]],
            "F": [[1.0, 0.0], [0.0, 1.0]],
            "Q": [[1.0e-6, 0.0], [0.0, 1.0e-6]],
            "R": [[1.0e-4, 0.0], [0.0, 1.0e-4]],
        },
        "input": {"kind": "constant", "value": 0.5},
        "disturbance": {"kind": "constant", "values": [0.1, -0.2]},
        "faults": [{"start": 6, "end": 12, "value": [0.5, -0.3]}],
        "dmae": {
            "x0_f": [1.0e-3, 1.0e-3],
            "P0_f": 10.0,
            "Qf": 1.0e-4,
            "prob_floor": 1.0e-3,
            "window": 5,
            "initial_probs": [0.95, 0.05],
            "adapt_qd": True,
            "qd_init": 0.01,
        },
        "pf": {"particles": 50, "fault_noise": 1.0e-2},
    }


@pytest.fixture
def tiny_dict():
    return tiny_scenario_dict()


@pytest.fixture
def tiny_cfg(tiny_dict):
    return ScenarioConfig.from_dict(tiny_dict, name="tiny")


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Compile the accelerated kernels before any timed test runs."""
    from dmae import run_akf, run_dmae, run_pf
    from dmae.kernels import dryden_channel_kernel

    cfg = ScenarioConfig.from_dict(tiny_scenario_dict(), name="warmup")
    run_dmae(cfg, seed=0)
    run_akf(cfg, seed=0)
    run_pf(cfg, seed=0)
    dryden_channel_kernel(35.0, 2500.0, 0.5, np.zeros(8))
    yield


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance summary")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
