import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import qcreg as q


class PairRun:
    """One full registration of a shipped pair, timed, with identity baseline."""

    def __init__(self, name):
        moving, static = q.SHIPPED_PAIRS[name]()
        mesh = q.build_grid_mesh(*moving.shape)
        self.name = name
        self.moving = moving
        self.static = static
        self.initial_e_sim = q.e_sim(moving, static, q.identity_map(mesh))
        start = time.perf_counter()
        self.state = q.register_multires(moving, static, q.RegistrationConfig())
        self.seconds = time.perf_counter() - start
        self.final_e_sim = q.e_sim(moving, static, self.state.map)


@pytest.fixture(scope="session")
def blob_run():
    return PairRun("translated_blob")


@pytest.fixture(scope="session")
def bar_run():
    return PairRun("bent_bar")


@pytest.fixture(scope="session")
def disk_run():
    return PairRun("warped_disk")


@pytest.fixture(scope="session")
def all_runs(blob_run, bar_run, disk_run):
    return [blob_run, bar_run, disk_run]
