import numpy as np
import pytest

from preyflock.env import PredatorState, WorldConfig, WorldState, make_rng

ACCEPTANCE_LINES = []


def make_state(positions, orientations, pred_pos=(30.0, 30.0), pred_ori=0.0, seed=0, **pred):
    positions = np.array(positions, dtype=float).reshape(-1, 2)
    return WorldState(
        positions,
        np.array(orientations, dtype=float).reshape(-1),
        np.zeros(len(positions), dtype=np.int64),
        PredatorState(np.array(pred_pos, dtype=float), float(pred_ori), **pred),
        make_rng(seed),
    )


@pytest.fixture
def cfg():
    return WorldConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
