"""Predictive densities, regression-function estimates and the CV log score.

For a kept draw ``(gamma, g)`` the pseudo-response at a new point is
``N(mu, s^2)`` with ``s = (1 + g x'(X'X)^{-1}x)^{-1/2}`` and
``mu = s x'beta_hat``.  Averaging over draws and mapping back through the
margin gives the predictive density on the response scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .copula_core import GammaFactor, RegressionData, build_factor
from .errors import CopulaVSError
from .margins import MarginFactory, MarginModel, resolve_margin
from .priors import GPrior
from .sampler import SamplerConfig, Trace, run_chain

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)
GH_NODES = 20


@dataclass(frozen=True)
class PredictiveRecord:
    """Per-draw location and scale of the pseudo-response at ``x_new``."""

    x_new: np.ndarray
    s: np.ndarray
    mu: np.ndarray


def predictive_scale(factor: GammaFactor, g: float, x_new) -> float:
    """``(1 + g x_g'(X_g'X_g)^{-1} x_g)^{-1/2}`` for a centered covariate vector."""
    if factor.q == 0:
        return 1.0
    xg = np.asarray(x_new, dtype=float)[factor.active]
    a = linalg.solve_triangular(factor.chol_U, xg, trans="T", lower=False)
    return 1.0 / math.sqrt(1.0 + g * float(a @ a))


def _kept_draws(trace: Trace):
    if trace.n_kept < 1:
        raise CopulaVSError("empty-trace", "no post burn-in sweeps")
    return trace.kept_gammas, trace.kept_g


def predictive_components(trace: Trace, data: RegressionData, X_new, centered: bool = False):
    """Per-draw ``s`` and ``mu`` at each row of ``X_new``.

    Returns two arrays of shape ``(m, K)`` for ``m`` new points and ``K``
    kept draws.  Draws sharing an indicator vector share one factorization.
    """
    gammas, gs = _kept_draws(trace)
    Xn = np.atleast_2d(np.asarray(X_new, dtype=float))
    if Xn.shape[1] != data.p:
        raise CopulaVSError("shape-mismatch", f"x_new has {Xn.shape[1]} entries, need {data.p}")
    if not centered:
        Xn = Xn - data.center
    m, K = Xn.shape[0], gs.size
    s = np.ones((m, K))
    mu = np.zeros((m, K))
    keys, inverse = np.unique(np.packbits(gammas, axis=1), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    for u in range(keys.shape[0]):
        cols = np.flatnonzero(inverse == u)
        gamma = gammas[cols[0]]
        if not gamma.any():
            continue
        f = build_factor(data.X, gamma)
        g = gs[cols]
        A = linalg.solve_triangular(f.chol_U, Xn[:, f.active].T, trans="T", lower=False)  # q x m
        tau = np.einsum("ij,ij->j", A, A)
        V = data.z[:, None] * np.sqrt(1.0 + f.t[:, None] * g[None, :])                   # n x k
        W = f.M.T @ V                                                                     # q x k
        sc = 1.0 / np.sqrt(1.0 + tau[:, None] * g[None, :])
        s[:, cols] = sc
        mu[:, cols] = sc * (g / (1.0 + g))[None, :] * (A.T @ W)
    return s, mu


def predictive_record(trace: Trace, data: RegressionData, x_new) -> PredictiveRecord:
    s, mu = predictive_components(trace, data, np.asarray(x_new, dtype=float)[None, :])
    return PredictiveRecord(np.asarray(x_new, dtype=float), s[0], mu[0])


def _log_mixture(z: np.ndarray, s: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """``log (1/K) sum_k (1/s_k) phi((z - mu_k)/s_k)`` for each ``z``.

    ``s`` and ``mu`` are ``(1, K)`` (shared) or ``(len(z), K)`` (per point).
    """
    r = (z[:, None] - mu) / s
    terms = -0.5 * r * r - np.log(s) - _LOG_SQRT_2PI
    return logsumexp(terms, axis=1) - math.log(s.shape[-1])


def log_predictive_density(trace: Trace, data: RegressionData, margin: MarginModel,
                           x_new, y_grid) -> np.ndarray:
    """Log of the predictive density at each ``y`` in ``y_grid``."""
    y = np.atleast_1d(np.asarray(y_grid, dtype=float))
    rec = predictive_record(trace, data, x_new)
    z = margin.pseudo_data(y)
    log_py = margin.logpdf(y)
    out = log_py + 0.5 * z * z + _LOG_SQRT_2PI + _log_mixture(z, rec.s[None, :], rec.mu[None, :])
    return np.where(np.isfinite(log_py), out, -np.inf)


def predictive_density(trace: Trace, data: RegressionData, margin: MarginModel,
                       x_new, y_grid) -> np.ndarray:
    """Predictive density of the response at ``x_new`` on ``y_grid``."""
    return np.exp(log_predictive_density(trace, data, margin, x_new, y_grid))


def predictive_mean(trace: Trace, data: RegressionData, margin: MarginModel, x_new) -> float:
    """Posterior predictive mean of the response (20-node Gauss-Hermite per draw)."""
    rec = predictive_record(trace, data, x_new)
    nodes, weights = np.polynomial.hermite.hermgauss(GH_NODES)
    weights = weights / weights.sum()
    zq = rec.mu[:, None] + rec.s[:, None] * math.sqrt(2.0) * nodes[None, :]
    yq = margin.quantile_z(zq.ravel()).reshape(zq.shape)
    return float((yq @ weights).mean())


def pointwise_log_scores(trace: Trace, data: RegressionData, margin: MarginModel,
                         X_new, y_new) -> np.ndarray:
    """``log p(y_new[i] | X_new[i])`` for each held-out row."""
    y_new = np.asarray(y_new, dtype=float).ravel()
    s, mu = predictive_components(trace, data, X_new)
    z = margin.pseudo_data(y_new)
    return margin.logpdf(y_new) + 0.5 * z * z + _LOG_SQRT_2PI + _log_mixture(z, s, mu)


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle split into ``folds`` near-equal blocks."""
    if n < folds:
        raise CopulaVSError("insufficient-data", f"n = {n} < folds = {folds}")
    perm = np.random.default_rng(seed).permutation(n)
    blocks = np.array_split(perm, folds)
    if min(len(b) for b in blocks) < 2:
        raise CopulaVSError("insufficient-data", "every fold needs at least 2 points")
    return [np.sort(b) for b in blocks]


def _prior_for(prior: GPrior, n: int) -> GPrior:
    return prior.with_n(n) if prior.kind in ("hyper-g-n", "zellner-siow") else prior


def cv_mean_log_score(y, X, margin: MarginFactory, prior: GPrior, config: SamplerConfig,
                      folds: int = 10, seed: int | None = None) -> float:
    """K-fold mean log score: the mean over folds of each fold's mean.

    Every fold refits the margin and the chain on its training complement;
    the design is re-centered on the training rows.  Priors that depend on
    the sample size use the training size.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    seed = config.seed if seed is None else seed
    blocks = fold_indices(y.size, folds, seed)
    scores = []
    for k, test in enumerate(blocks):
        train = np.setdiff1d(np.arange(y.size), test)
        fitted = resolve_margin(margin, y[train])
        data = RegressionData.from_arrays(y[train], X[train], fitted)
        cfg = replace(config, seed=config.seed + 7919 * (k + 1))
        trace = run_chain(data, _prior_for(prior, data.n), cfg)
        scores.append(pointwise_log_scores(trace, data, fitted, X[test], y[test]).mean())
    return float(np.mean(scores))
