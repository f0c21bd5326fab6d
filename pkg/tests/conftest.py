import numpy as np
import pytest

from pldeblur import dataio
from pldeblur.core import BlurKernel


def scene(seed, n=64):
    """Piecewise-smooth test scene in [0, 1]: a sinusoid background with rectangles and a disc."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[:n, :n] / n
    img = 0.2 + 0.15 * np.sin(2 * np.pi * (rng.uniform(0.5, 2) * xx + rng.uniform(0, 1) * yy))
    for _ in range(4):
        x0, y0 = rng.uniform(0.1, 0.7, 2)
        w, h = rng.uniform(0.1, 0.35, 2)
        img[(xx > x0) & (xx < x0 + w) & (yy > y0) & (yy < y0 + h)] = rng.uniform(0.3, 0.95)
    cx, cy, r = rng.uniform(0.2, 0.8, 3) * [1, 1, 0.3]
    img[(xx - cx) ** 2 + (yy - cy) ** 2 < (0.05 + r) ** 2] = rng.uniform(0.0, 1.0)
    return np.clip(img, 0, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gauss_kernel():
    return dataio.gaussian_kernel(5, 1.0)


@pytest.fixture
def delta_kernel():
    return BlurKernel.delta(1)


@pytest.fixture
def blurred_problem(gauss_kernel):
    """Seeded 16x16 scene blurred by a sigma=1 Gaussian and sampled at alpha=20."""
    x = scene(3, 16)
    alpha = 20.0
    y = dataio.poisson_forward(x, gauss_kernel, alpha, seed=11)
    return x, y, gauss_kernel, alpha


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
