"""Planted-activation data on a small grid with log-normal noise."""
from __future__ import annotations

import numpy as np

from .model import FmriDataset, fourier_basis


def boxcar_stimulus(T: int, period: int = 10) -> np.ndarray:
    """On/off block design, centered and scaled to unit standard deviation."""
    x = ((np.arange(T) // (period // 2)) % 2).astype(float)
    x -= x.mean()
    return x / x.std()


def planted_block(rows: int = 16, cols: int = 16, top: int = 6, left: int = 6, size: int = 4) -> np.ndarray:
    truth = np.zeros((rows, cols), dtype=bool)
    truth[top:top + size, left:left + size] = True
    return truth


def synthetic_dataset(seed: int = 0, rows: int = 16, cols: int = 16, T: int = 63,
                      amplitude: float = 1.0, sdlog: float = 0.5, trend_d: float = 10.0,
                      m: int = 8, block: tuple[int, int, int] = (6, 6, 4)):
    """Series ``exp(sdlog * (W alpha + beta x + e))`` per voxel.

    The trend coefficients are ``alpha ~ N(0, trend_d I)`` and ``e ~ N(0, 1)``, so
    the latent regression is the one the spatial copula with ``d = trend_d``
    is built from; the
    block voxels get ``beta = amplitude``.  The exponential makes the noise
    log-normal.  Returns ``(dataset, truth_grid)``.
    """
    rng = np.random.default_rng(seed)
    mask = np.ones((rows, cols), dtype=bool)
    truth = planted_block(rows, cols, *block)
    x = boxcar_stimulus(T)
    W = fourier_basis(T, m)
    N = rows * cols
    alpha = np.sqrt(trend_d) * rng.normal(size=(N, m))
    beta = amplitude * truth[mask].astype(float)
    latent = alpha @ W.T + beta[:, None] * x[None, :] + rng.normal(size=(N, T))
    series = np.exp(sdlog * latent)
    return FmriDataset.from_arrays(mask, series, x, W=W), truth
