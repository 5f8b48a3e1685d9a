import math
import warnings

import numpy as np
import pytest
from hypothesis import settings

from qnslab.errors import HypothesisWarning, ResolutionWarning
from qnslab.spectral import Grid, SpectralField

settings.register_profile("repeatable", derandomize=True)
settings.load_profile("repeatable")


@pytest.fixture(autouse=True)
def _quiet_expected_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        warnings.simplefilter("ignore", ResolutionWarning)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_field(grid: Grid, rng, rank: int = 0, modes: int = 3, scale: float = 1.0) -> SpectralField:
    """Random real band-limited field with max amplitude ``scale``."""
    freq = np.abs(np.stack(np.meshgrid(*[grid.integer_frequencies] * grid.dim, indexing="ij")))
    low = np.all(freq <= modes, axis=0)
    shape = (grid.dim,) * rank + grid.shape
    vals = grid.to_real((rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * low)
    return SpectralField.from_real(grid, scale * vals / np.max(np.abs(vals)), dealias=True)


def zero_mean(f: SpectralField) -> SpectralField:
    f = f.copy()
    f.hat[(Ellipsis,) + f.grid.zero_mode] = 0
    return f


def sine(grid: Grid, axis: int = 0, mode: int = 1) -> np.ndarray:
    x = np.broadcast_arrays(*grid.x)[axis]
    return np.sin(2 * math.pi * mode * x / grid.box_length)
