import sys
from pathlib import Path

import pytest

# make the finite-difference oracle importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))

from udelab.config import load_config  # noqa: E402
from udelab.experiment import run_stage, toy_splits  # noqa: E402


@pytest.fixture(scope="session")
def toy_cfg():
    return load_config(None)


@pytest.fixture(scope="session")
def splits(toy_cfg):
    return toy_splits(toy_cfg.data, toy_cfg.seed)


@pytest.fixture(scope="session")
def trained(toy_cfg, splits):
    """Source, adapted and distilled toy models for the default seed."""
    src = run_stage("source", toy_cfg, splits).network
    da = run_stage("da", toy_cfg, splits).network
    kdde = run_stage("kdde", toy_cfg, splits, src, da).network
    return {"source": src, "da": da, "kdde": kdde}


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
