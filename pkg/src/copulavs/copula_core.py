"""Low-rank algebra for the variable selection copula.

For indicator vector ``gamma`` and scale ``g`` the copula correlation is

    R = S (I + g X_g (X_g'X_g)^{-1} X_g') S,   s_i = (1 + g t_i)^{-1/2},

with ``t_i`` the leverage of row ``i`` in the selected columns.  Writing
``X_g = M U`` (``U'U = X_g'X_g``, ``M`` with orthonormal columns) gives

    log|R|    = q log(1+g) - sum_i log(1 + g t_i)
    z'R^{-1}z = v'v - g/(1+g) |M'v|^2,   v = S^{-1} z

so nothing of size n x n is ever formed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import CopulaVSError
from .margins import MarginModel, pit_transform

# squared Cholesky pivot relative to the squared column norm below which the
# selected columns are treated as linearly dependent
SINGULAR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class RegressionData:
    """Response, centered design and pseudo-data.

    ``center`` holds the column means removed from the raw design.
    """

    y: np.ndarray
    X: np.ndarray
    z: np.ndarray
    center: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_arrays(cls, y, X, margin: MarginModel | None = None, z=None) -> "RegressionData":
        """Center ``X`` and attach pseudo-data from ``margin`` (or given ``z``)."""
        y = np.asarray(y, dtype=float).ravel()
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != y.size:
            raise CopulaVSError("shape-mismatch", f"y has {y.size} rows, X has {X.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise CopulaVSError("non-finite-data")
        center = X.mean(axis=0)
        Xc = X - center
        zero = np.flatnonzero(~np.any(np.abs(Xc) > 0, axis=0))
        if zero.size:
            raise CopulaVSError("zero-column", f"columns {zero.tolist()} are constant")
        if z is None:
            if margin is None:
                raise CopulaVSError("missing-margin", "need a margin or explicit z")
            z = pit_transform(margin, y)
        z = np.asarray(z, dtype=float).ravel()
        return cls(y=y, X=Xc, z=z, center=center)


@dataclass(frozen=True, eq=False)
class GammaFactor:
    """Cached factors for one indicator vector.

    ``chol_U`` is upper triangular with ``U'U = X_g'X_g``, ``M = X_g U^{-1}``
    and ``t`` holds the row leverages ``sum_j M[i, j]^2``.
    """

    gamma: np.ndarray
    chol_U: np.ndarray
    M: np.ndarray
    t: np.ndarray

    @property
    def q(self) -> int:
        return self.M.shape[1]

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.gamma)


def build_factor(X: np.ndarray, gamma) -> GammaFactor:
    """Cholesky factorization of the selected columns.

    Raises ``CopulaVSError("singular-submatrix")`` when the selected columns
    are (numerically) linearly dependent.
    """
    X = X.X if isinstance(X, RegressionData) else X
    gamma = np.asarray(gamma, dtype=bool).ravel()
    n = X.shape[0]
    idx = np.flatnonzero(gamma)
    if idx.size == 0:
        return GammaFactor(gamma, np.zeros((0, 0)), np.zeros((n, 0)), np.zeros(n))
    Xg = X[:, idx]
    try:
        U = linalg.cholesky(Xg.T @ Xg, lower=False)
    except linalg.LinAlgError:
        raise CopulaVSError("singular-submatrix", f"columns {idx.tolist()}") from None
    norms = np.einsum("ij,ij->j", Xg, Xg)
    if np.any(np.diag(U) ** 2 <= SINGULAR_TOL * norms):
        raise CopulaVSError("singular-submatrix", f"columns {idx.tolist()}")
    M = linalg.solve_triangular(U, Xg.T, trans="T", lower=False).T
    t = np.einsum("ij,ij->i", M, M)
    return GammaFactor(gamma, U, M, t)


def scale_factors(factor: GammaFactor, g: float) -> np.ndarray:
    """``s_i = (1 + g t_i)^{-1/2}``."""
    if g < 0:
        raise CopulaVSError("invalid-g", f"g = {g}")
    return 1.0 / np.sqrt(1.0 + g * factor.t)


def log_det_R(factor: GammaFactor, g: float) -> float:
    return factor.q * np.log1p(g) - np.log1p(g * factor.t).sum()


def quad_form_R_inv(factor: GammaFactor, g: float, z) -> float:
    """``z' R^{-1} z`` via the low-rank inverse."""
    v = np.asarray(z, dtype=float) * np.sqrt(1.0 + g * factor.t)
    w = factor.M.T @ v
    return float(v @ v - g / (1.0 + g) * (w @ w))


def log_gauss_copula_kernel(factor: GammaFactor, g: float, z) -> float:
    """``log phi(z; 0, R) + (n/2) log(2 pi)``, i.e. ``-(log|R| + z'R^{-1}z) / 2``."""
    return -0.5 * (log_det_R(factor, g) + quad_form_R_inv(factor, g, z))


def posterior_mean_beta(factor: GammaFactor, g: float, z) -> np.ndarray:
    """``g/(1+g) (X_g'X_g)^{-1} X_g' S^{-1} z`` by two triangular solves."""
    if factor.q == 0:
        return np.zeros(0)
    v = np.asarray(z, dtype=float) * np.sqrt(1.0 + g * factor.t)
    w = factor.M.T @ v                      # = U^{-T} X_g' v
    b = linalg.solve_triangular(factor.chol_U, w, lower=False)
    return g / (1.0 + g) * b

