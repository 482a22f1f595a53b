import numpy as np
import pytest

from articugeo import synth
from articugeo.manifest import write_render_set

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n} ({title}): {detail}")


@pytest.fixture(scope="session")
def rig():
    return synth.default_rig()


@pytest.fixture(scope="session")
def island_two_frames(tmp_path_factory, rig):
    """Two rendered frames of the island scene with clean priors."""
    out = tmp_path_factory.mktemp("island2")
    return write_render_set(out, synth.island_scene(), rig, synth.make_trajectory(2))


@pytest.fixture(scope="session")
def plane_two_frames(tmp_path_factory, rig):
    out = tmp_path_factory.mktemp("plane2")
    return write_render_set(out, synth.ground_scene(), rig, synth.make_trajectory(2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
