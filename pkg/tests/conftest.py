import numpy as np
import pytest

from topoedge.grid import Grid
from topoedge.qpat import add_noise, default_phantom, forward

# one PASS/FAIL line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[n])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def phantom():
    return default_phantom()


@pytest.fixture(scope="session")
def qpat_clean(phantom):
    return forward(phantom)


def pixel_face_points(mask: np.ndarray, h: float = 1.0) -> np.ndarray:
    """Midpoints of the pixel faces separating ``mask`` from its complement."""
    pts = []
    jj, ii = np.nonzero(mask[:, 1:] != mask[:, :-1])
    pts += list(zip((ii + 1.0) * h, (jj + 0.5) * h))
    jj, ii = np.nonzero(mask[1:, :] != mask[:-1, :])
    pts += list(zip((ii + 0.5) * h, (jj + 1.0) * h))
    return np.array(pts)


def nearest_distance(points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    d = np.hypot(points[:, None, 0] - targets[None, :, 0], points[:, None, 1] - targets[None, :, 1])
    return d.min(axis=1)


@pytest.fixture(scope="session")
def disk_image():
    """Sampled disk of radius 18 px and contrast 0.1 on a 64 x 64 image."""
    g = Grid(64, 64, 1.0)
    X, Y = g.meshgrid()
    mask = (X - 32.0) ** 2 + (Y - 32.0) ** 2 <= 18.0**2
    return 0.1 * mask.astype(float), mask


def noisy_data(clean, percent, seed=0):
    return add_noise(clean, percent, seed).noisy_energy
