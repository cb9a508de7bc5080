import numpy as np
import pytest
import torch

from emogesture import kernels

KERNEL_NAMES = ("rot6d_to_matrix", "geodesic_angle", "rot6d_geodesic", "angular_speed",
                "forward_kinematics", "beat_align_score", "pairwise_l2")


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request, monkeypatch):
    """Run the test once per importable kernel backend."""
    impl = kernels.backends()[request.param]
    for name in KERNEL_NAMES:
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)


def random_rotations(rng, n):
    from scipy.spatial.transform import Rotation

    return Rotation.random(n, random_state=rng).as_matrix()


ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    """Print and remember one pass/fail line for an acceptance criterion."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
