"""Voxel data container and the per-voxel spatial selection copula.

At voxel ``i`` the pseudo-response regression ``Z = W alpha + x beta + e``
with ``alpha ~ N(0, d I)`` and ``beta ~ N(0, g/(x'x))`` gives

    Omega = I + d W W' + gamma g x x' / (x'x),   R = S Omega S,

with ``S`` standardizing ``Omega`` to unit diagonal.  The trend part
``Omega_0 = I + d W W'`` is shared by all voxels, so with
``Omega_0^{-1} = I - P P'`` (``P`` is ``T x m``) each kernel costs
``O(T m)`` and the ``gamma = 0`` kernel does not depend on ``g`` at all.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..errors import CopulaVSError
from ..margins import MarginModel, fit_margin

DEFAULT_D = 100.0
DEFAULT_ACTIVE_FRACTION = 0.02
KDE_MIN_T = 30


def fourier_basis(T: int, m: int = 8) -> np.ndarray:
    """``m`` low-order sine/cosine columns (frequencies 1..m/2), centered, unit norm."""
    if m % 2:
        raise CopulaVSError("invalid-basis", "m must be even")
    t = np.arange(T)
    cols = []
    for k in range(1, m // 2 + 1):
        cols.append(np.sin(2 * np.pi * k * t / T))
        cols.append(np.cos(2 * np.pi * k * t / T))
    W = np.column_stack(cols) if cols else np.zeros((T, 0))
    W = W - W.mean(axis=0)
    norms = np.linalg.norm(W, axis=0)
    if np.any(norms == 0):
        raise CopulaVSError("invalid-basis", f"T = {T} too short for {m} Fourier terms")
    return W / norms


@dataclass(frozen=True, eq=False)
class FmriDataset:
    """Voxel time series on a 2-D grid.

    ``series`` and ``stimulus`` hold one row per in-mask voxel (raster order
    over ``mask``); ``delta`` is the external field of the activation prior.
    """

    mask: np.ndarray
    series: np.ndarray
    stimulus: np.ndarray
    delta: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        if not self.mask.any():
            raise CopulaVSError("no in-mask voxels")
        N = int(self.mask.sum())
        if self.series.shape[0] != N:
            raise CopulaVSError("shape-mismatch", f"{self.series.shape[0]} series for {N} voxels")
        if self.stimulus.shape != self.series.shape:
            raise CopulaVSError("shape-mismatch", "stimulus must match series")
        if self.delta.shape != (N,):
            raise CopulaVSError("shape-mismatch", "delta needs one value per voxel")
        if self.W.shape[0] != self.T:
            raise CopulaVSError("shape-mismatch", "trend basis has the wrong length")
        for name in ("series", "stimulus", "delta", "W"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise CopulaVSError("non-finite-data", name)

    @classmethod
    def from_arrays(cls, mask, series, stimulus, delta=None, W=None, m: int = 8) -> "FmriDataset":
        """Build a dataset; a 1-D ``stimulus`` is shared by all voxels and a
        scalar or missing ``delta`` is broadcast (default ``logit(0.02)``)."""
        mask = np.asarray(mask, dtype=bool)
        series = np.atleast_2d(np.asarray(series, dtype=float))
        stimulus = np.asarray(stimulus, dtype=float)
        if stimulus.ndim == 1:
            stimulus = np.broadcast_to(stimulus, series.shape).copy()
        N = int(mask.sum())
        if delta is None:
            delta = math.log(DEFAULT_ACTIVE_FRACTION / (1 - DEFAULT_ACTIVE_FRACTION))
        delta = np.asarray(delta, dtype=float)
        if delta.shape == mask.shape:
            delta = delta[mask]
        delta = np.broadcast_to(delta, (N,)).copy()
        if W is None:
            W = fourier_basis(series.shape[1], m)
        return cls(mask, series, stimulus, delta, np.asarray(W, dtype=float))

    @property
    def N(self) -> int:
        return self.series.shape[0]

    @property
    def T(self) -> int:
        return self.series.shape[1]

    @property
    def m(self) -> int:
        return self.W.shape[1]

    @property
    def coords(self) -> np.ndarray:
        return np.argwhere(self.mask)

    def to_grid(self, values, fill=np.nan) -> np.ndarray:
        out = np.full(self.mask.shape, fill, dtype=float)
        out[self.mask] = values
        return out


def fit_voxel_margins(dataset: FmriDataset, kind: str = "kde") -> list[MarginModel]:
    """One margin per voxel; ``kde`` falls back to ``empirical`` for short series."""
    if kind == "kde" and dataset.T < KDE_MIN_T:
        kind = "empirical"
    return [fit_margin(row, kind, min_size=min(10, dataset.T)) for row in dataset.series]


class VoxelKernels:
    """Precomputed pieces for every voxel's copula kernel.

    ``Z`` holds the pseudo-data (one row per voxel).  Voxels whose stimulus
    is identically zero are flagged invalid and never activated.
    """

    def __init__(self, Z: np.ndarray, X: np.ndarray, W: np.ndarray, d: float = DEFAULT_D):
        if d < 0:
            raise CopulaVSError("invalid-d", f"d = {d}")
        self.Z = np.atleast_2d(np.asarray(Z, dtype=float))
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.W = np.asarray(W, dtype=float)
        self.d = float(d)
        T, m = self.W.shape
        self.a0 = 1.0 + d * np.einsum("ij,ij->i", self.W, self.W)
        C0 = np.eye(m) + d * self.W.T @ self.W
        L = linalg.cholesky(C0, lower=True)
        self.P = math.sqrt(d) * linalg.solve_triangular(L, self.W.T, lower=True).T
        self.logdet_omega0 = 2.0 * float(np.log(np.diag(L)).sum())
        self.xx = np.einsum("ij,ij->i", self.X, self.X)
        self.valid = self.xx > 0
        xx = np.where(self.valid, self.xx, 1.0)
        self.xn2 = self.X * self.X / xx[:, None]
        self.PX = self.X @ self.P
        self.kappa = np.where(self.valid, (self.xx - np.einsum("ij,ij->i", self.PX, self.PX)) / xx, 1.0)
        self._xx_safe = xx
        U0 = self.Z * np.sqrt(self.a0)
        PU0 = U0 @ self.P
        quad0 = np.einsum("ij,ij->i", U0, U0) - np.einsum("ij,ij->i", PU0, PU0)
        self.log_det_R0 = self.logdet_omega0 - float(np.log(self.a0).sum())
        self.k0 = -0.5 * (self.log_det_R0 + quad0)
        self._U0, self._PU0 = U0, PU0

    @property
    def N(self) -> int:
        return self.Z.shape[0]

    def _pieces(self, g: float, rows):
        Z = self.Z if rows is None else self.Z[rows]
        X = self.X if rows is None else self.X[rows]
        xn2 = self.xn2 if rows is None else self.xn2[rows]
        PX = self.PX if rows is None else self.PX[rows]
        xx = self._xx_safe if rows is None else self._xx_safe[rows]
        kappa = self.kappa if rows is None else self.kappa[rows]
        A1 = self.a0 + g * xn2
        U1 = Z * np.sqrt(A1)
        PU1 = U1 @ self.P
        xOu = np.einsum("ij,ij->i", X, U1) - np.einsum("ij,ij->i", PX, PU1)
        return A1, U1, PU1, xOu, xx, kappa

    def k1(self, g: float, rows=None) -> np.ndarray:
        """Log kernels with the stimulus included (``-inf`` for invalid voxels)."""
        A1, U1, PU1, xOu, xx, kappa = self._pieces(g, rows)
        quad = (np.einsum("ij,ij->i", U1, U1) - np.einsum("ij,ij->i", PU1, PU1)
                - (g / xx) * xOu * xOu / (1.0 + g * kappa))
        log_det = self.logdet_omega0 + np.log1p(g * kappa) - np.log(A1).sum(axis=1)
        out = -0.5 * (log_det + quad)
        valid = self.valid if rows is None else self.valid[rows]
        return np.where(valid, out, -np.inf)

    def log_kernel(self, i: int, gamma_i: int, g: float) -> float:
        if not gamma_i:
            return float(self.k0[i])
        return float(self.k1(g, rows=[i])[0])

    def beta_hat(self, g: float, rows=None) -> np.ndarray:
        """Posterior mean of the stimulus coefficient given activation:
        ``(g/x'x) x'Omega^{-1} S^{-1} z``, with the trend integrated out."""
        _, _, _, xOu, xx, kappa = self._pieces(g, rows)
        return (g / xx) * xOu / (1.0 + g * kappa)

    def fitted(self, g: float | None):
        """Plug-in mean ``mu`` and scale ``s`` of each pseudo-observation.

        ``g=None`` gives the inactive model.  The regression mean
        ``E[W alpha + x beta | z]`` equals ``u - Omega^{-1} u`` with
        ``u = S^{-1} z``.
        """
        if g is None:
            s = 1.0 / np.sqrt(self.a0)
            mean = self._PU0 @ self.P.T
            return s[None, :] * mean, np.broadcast_to(s, self.Z.shape)
        A1, U1, PU1, xOu, xx, kappa = self._pieces(g, None)
        omega0_x = self.X - self.PX @ self.P.T
        mean = PU1 @ self.P.T + (g / xx * xOu / (1.0 + g * kappa))[:, None] * omega0_x
        s = 1.0 / np.sqrt(A1)
        return s * mean, s


def voxel_log_kernel(kernels: VoxelKernels, i: int, gamma_i: int, g: float) -> float:
    """``log phi(z_i; 0, R) + (T/2) log 2 pi`` for voxel ``i``."""
    if gamma_i and not kernels.valid[i]:
        raise CopulaVSError("invalid-voxel", f"voxel {i} has an all-zero stimulus")
    return kernels.log_kernel(i, gamma_i, g)
