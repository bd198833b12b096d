import numpy as np
import pytest

from vasbench.synthgen import SceneSpec, generate, static_scene


@pytest.fixture(scope="session")
def small_seq():
    """Short moving-camera sequence, cheap enough for most tests."""
    return generate(SceneSpec(width=160, height=90, frame_count=150, rng_seed=3))


@pytest.fixture(scope="session")
def static_seq():
    return static_scene(width=160, height=90, frame_count=70)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = []


def record(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
