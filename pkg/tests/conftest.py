import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from activevision.camera import CameraIntrinsics, VisibilityThresholds
from activevision.field import build_field

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def field():
    return build_field()


@pytest.fixture(scope="session")
def intr():
    return CameraIntrinsics()


@pytest.fixture(scope="session")
def thr():
    return VisibilityThresholds()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def intr_tuple(intr):
    return (intr.image_width, intr.image_height, intr.horizontal_fov, intr.mount_height,
            intr.mount_forward_offset)


DEG = math.pi / 180


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
