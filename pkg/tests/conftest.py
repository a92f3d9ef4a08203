import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uashape.gridworld import GridConfig, GridState  # noqa: E402


@pytest.fixture
def cfg3():
    return GridConfig(3, 3)


@pytest.fixture
def cfg4():
    return GridConfig(4, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_state(**kw):
    """A 3x3-room mission-1 state, overridable field by field."""
    base = dict(agent_pos=(1, 2), agent_dir=0, carrying_key=False, door_open=False,
                key_pos=(3, 2), door_pos=(4, 2), goal_pos=(6, 2), mission=1, step_count=0)
    base.update(kw)
    return GridState(**base)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance")
        for line in sorted(mod.LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
