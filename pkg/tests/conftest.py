import numpy as np
import pytest

from fraclab import Ball, build_domain, sample


@pytest.fixture(scope="session")
def dom1d():
    """Unit-ball 1D domain, 200 nodes, boundary aligned with cell edges."""
    return build_domain(Ball(center=(0.0,), radius=1.0), 200, margin_cells=20)


@pytest.fixture(scope="session")
def dom1d_small():
    return build_domain(Ball(center=(0.0,), radius=1.0), 80, margin_cells=8)


@pytest.fixture(scope="session")
def dom2d():
    """Unit-disk 2D domain, moderate resolution."""
    return build_domain(Ball(center=(0.0, 0.0), radius=1.0), 40, margin_cells=4)


@pytest.fixture(scope="session")
def bump1d(dom1d):
    return sample(lambda x: np.maximum(1.0 - (x / 0.8) ** 2, 0.0) ** 3, dom1d)


@pytest.fixture(scope="session")
def bump2d(dom2d):
    return sample(
        lambda x, y: np.maximum(1.0 - (x**2 + y**2) / 0.8**2, 0.0) ** 2, dom2d
    )
