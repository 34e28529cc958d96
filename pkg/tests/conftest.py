import numpy as np
import pytest

from critsqg.spectral import SpectralField, TorusGrid


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid(2, 64)


@pytest.fixture(scope="session")
def grid32():
    return TorusGrid(2, 32)


def cos_x1(grid: TorusGrid, mult: int = 1, amplitude: float = 1.0) -> SpectralField:
    x = grid.coords
    if grid.dim == 1:
        return SpectralField.from_values(grid, amplitude * np.cos(mult * x))
    X, _ = np.meshgrid(x, x, indexing="ij")
    return SpectralField.from_values(grid, amplitude * np.cos(mult * X))


def meshes(grid: TorusGrid):
    x = grid.coords
    return np.meshgrid(x, x, indexing="ij")
