import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from inspectplan.config import PlannerConfig  # noqa: E402
from inspectplan.fixtures import SCENES, scene_path, task_path  # noqa: E402
from inspectplan.pipeline import plan  # noqa: E402

_RUNS = {}


def planned(name: str, smoothing: bool = True, seed: int = 0):
    """Plan a bundled scene once per session (no files written)."""
    key = (name, smoothing, seed)
    if key not in _RUNS:
        _RUNS[key] = plan(scene_path(name), task_path(name), PlannerConfig(seed=seed), smoothing=smoothing)
    return _RUNS[key]


@pytest.fixture(scope="session")
def runs():
    return {name: planned(name) for name in SCENES}
