"""Ising prior on a 2-D voxel grid with external field.

    p(gamma | theta) ∝ exp( sum_i delta_i gamma_i + theta sum_{i~j} w_ij I(gamma_i = gamma_j) )

over the (up to) eight neighbours of each in-mask voxel, with ``w = 1`` for
edge neighbours and ``1/sqrt(2)`` for diagonal ones.  Voxels are indexed in
raster order over the mask.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import CopulaVSError

THETA_MAX = 0.45
DIAG_WEIGHT = 1.0 / math.sqrt(2.0)
_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True, eq=False)
class Neighbors:
    """CSR adjacency over in-mask voxels (raster order)."""

    ptr: np.ndarray
    idx: np.ndarray
    weight: np.ndarray
    coords: np.ndarray

    @property
    def n(self) -> int:
        return self.ptr.size - 1


def build_neighbors(mask) -> Neighbors:
    mask = np.asarray(mask, dtype=bool)
    rows, cols = mask.shape
    index = -np.ones(mask.shape, dtype=np.int64)
    coords = np.argwhere(mask)
    index[mask] = np.arange(coords.shape[0])
    ptr, idx, wt = [0], [], []
    for r, c in coords:
        for dr, dc in _OFFSETS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < rows and 0 <= cc < cols and mask[rr, cc]:
                idx.append(index[rr, cc])
                wt.append(1.0 if dr == 0 or dc == 0 else DIAG_WEIGHT)
        ptr.append(len(idx))
    return Neighbors(np.asarray(ptr, dtype=np.int64), np.asarray(idx, dtype=np.int64),
                     np.asarray(wt, dtype=float), coords.astype(np.int64))


@dataclass(frozen=True, eq=False)
class LogPartitionTable:
    """``log Z(theta)`` on a grid; linear interpolation in between."""

    theta: np.ndarray
    log_z: np.ndarray
    dlog_z: np.ndarray

    def __call__(self, theta) -> np.ndarray:
        return np.interp(theta, self.theta, self.log_z)


@dataclass(frozen=True, eq=False)
class IsingPrior:
    neighbors: Neighbors
    delta: np.ndarray
    theta: float = 0.0
    table: LogPartitionTable | None = None

    def __post_init__(self):
        if not 0.0 <= self.theta <= THETA_MAX:
            raise CopulaVSError("invalid-theta", f"theta = {self.theta} outside [0, {THETA_MAX}]")
        if self.delta.shape != (self.neighbors.n,):
            raise CopulaVSError("shape-mismatch", "delta needs one entry per in-mask voxel")


# -- compiled kernels -----------------------------------------------------

@njit(cache=True)
def _expit(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def neighbor_sum(gamma, i, ptr, idx, w):
    """``sum_j w_ij (2 gamma_j - 1)``."""
    s = 0.0
    for k in range(ptr[i], ptr[i + 1]):
        s += w[k] * (2.0 * gamma[idx[k]] - 1.0)
    return s


@njit(cache=True)
def gibbs_sweep(gamma, field, theta, ptr, idx, w, uniforms, prob):
    """Raster-order single-site sweep; ``prob[i]`` gets Pr(gamma_i = 1 | rest)."""
    for i in range(gamma.shape[0]):
        p = _expit(field[i] + theta * neighbor_sum(gamma, i, ptr, idx, w))
        prob[i] = p
        gamma[i] = uniforms[i] < p


@njit(cache=True)
def agreement(gamma, ptr, idx, w):
    """``sum_{i~j} w_ij I(gamma_i = gamma_j)`` with each pair counted once."""
    s = 0.0
    for i in range(gamma.shape[0]):
        for k in range(ptr[i], ptr[i + 1]):
            j = idx[k]
            if j > i and gamma[i] == gamma[j]:
                s += w[k]
    return s


@njit(cache=True)
def agreement_rb(gamma, field, theta, ptr, idx, w):
    """Rao-Blackwellized estimate of the agreement statistic.

    Averages ``Pr(gamma_i = gamma_j | rest)`` over ordered pairs, which has
    the same expectation as :func:`agreement`.
    """
    s = 0.0
    for i in range(gamma.shape[0]):
        p = _expit(field[i] + theta * neighbor_sum(gamma, i, ptr, idx, w))
        for k in range(ptr[i], ptr[i + 1]):
            s += w[k] * (p if gamma[idx[k]] else 1.0 - p)
    return 0.5 * s


@njit(cache=True)
def _expected_agreement(gamma, field, theta, ptr, idx, w, uniforms, burnin):
    n = gamma.shape[0]
    prob = np.empty(n)
    total = 0.0
    sweeps = uniforms.shape[0]
    for k in range(sweeps):
        gibbs_sweep(gamma, field, theta, ptr, idx, w, uniforms[k], prob)
        if k >= burnin:
            total += agreement_rb(gamma, field, theta, ptr, idx, w)
    return total / (sweeps - burnin)


# -- public API -----------------------------------------------------------

def ising_conditional(prior: IsingPrior, gamma, i: int) -> float:
    """``Pr(gamma_i = 1 | gamma_{-i}, theta)``."""
    nb = prior.neighbors
    gamma = np.asarray(gamma, dtype=np.bool_)
    s = neighbor_sum(gamma, int(i), nb.ptr, nb.idx, nb.weight)
    return float(_expit(float(prior.delta[i]) + prior.theta * s))


def log_unnormalized(prior: IsingPrior, gamma, theta: float | None = None) -> float:
    nb = prior.neighbors
    gamma = np.asarray(gamma, dtype=np.bool_)
    theta = prior.theta if theta is None else theta
    return float(prior.delta @ gamma + theta * agreement(gamma, nb.ptr, nb.idx, nb.weight))


def tabulate_log_partition(neighbors: Neighbors, delta, theta_grid=None, *,
                           sweeps: int = 2000, burnin: int = 500, seed: int = 0) -> LogPartitionTable:
    """Thermodynamic integration of ``d log Z / d theta = E_theta[agreement]``.

    Each grid point runs a prior-only Gibbs chain warm-started from the
    previous point; ``log Z(0) = sum_i log(1 + exp(delta_i))`` is exact.
    """
    delta = np.ascontiguousarray(delta, dtype=float)
    if theta_grid is None:
        theta_grid = np.linspace(0.0, THETA_MAX, 46)
    theta_grid = np.asarray(theta_grid, dtype=float)
    if theta_grid[0] != 0.0 or np.any(np.diff(theta_grid) <= 0):
        raise CopulaVSError("invalid-grid", "theta grid must start at 0 and increase")
    if sweeps <= burnin:
        raise CopulaVSError("invalid-config", "need sweeps > burnin")
    rng = np.random.default_rng(seed)
    n = neighbors.n
    gamma = rng.random(n) < 1.0 / (1.0 + np.exp(-delta))
    deriv = np.empty(theta_grid.size)
    for k, th in enumerate(theta_grid):
        u = rng.random((sweeps, n))
        deriv[k] = _expected_agreement(gamma, delta, th, neighbors.ptr, neighbors.idx,
                                       neighbors.weight, u, burnin)
    log_z0 = float(np.logaddexp(0.0, delta).sum())
    steps = 0.5 * (deriv[1:] + deriv[:-1]) * np.diff(theta_grid)
    log_z = log_z0 + np.concatenate([[0.0], np.cumsum(steps)])
    return LogPartitionTable(theta_grid, log_z, deriv)
