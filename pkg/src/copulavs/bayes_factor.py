"""Bayes factors between indicator vectors by quadrature over ``log g``.

Two independent routes are provided.  ``"prop1"`` integrates the closed form
written with the implicit-copula coefficient of determination

    R2(gamma, g) = |M'v|^2 / v'v,   v = S^{-1} z,

against the empty model, for which the kernel of the comparison model does
not depend on ``g``; ``BF(a|b)`` is then ``BF(a|0) / BF(b|0)``.
``"marginal"`` integrates ``exp K(gamma, g) p(g)`` for each model with ``K``
the copula log kernel and takes the ratio.  Both agree to quadrature error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .copula_core import GammaFactor, RegressionData, build_factor, log_gauss_copula_kernel
from .errors import CopulaVSError
from .priors import GPrior, log_prior_loggtilde

LOG_G_RANGE = (-10.0, 20.0)
LOG_G_LIMIT = 300.0
TAIL_RATIO = math.log(1e-12)


@dataclass(frozen=True)
class BfRequest:
    gamma_a: np.ndarray
    gamma_b: np.ndarray
    prior: GPrior
    nodes: int = 201
    method: str = "prop1"


def copula_r_squared(factor: GammaFactor, g: float, z) -> float:
    """``1 - v'(I - MM')v / v'v`` with ``v = S^{-1} z``."""
    z = np.asarray(z, dtype=float)
    if not np.any(z):
        raise CopulaVSError("degenerate-pseudo-data", "z is identically zero")
    if factor.q == 0:
        return 0.0
    v = z * np.sqrt(1.0 + g * factor.t)
    w = factor.M.T @ v
    return float(min(max((w @ w) / (v @ v), 0.0), 1.0))


# -- log integrands on a grid of log g -----------------------------------

def _log_integrand_prop1(factor: GammaFactor, z: np.ndarray, prior: GPrior, lg: np.ndarray) -> np.ndarray:
    """Log of the integrand of ``BF(gamma | 0)`` in ``log g``."""
    g = np.exp(lg)
    zz = z @ z
    if factor.q == 0:
        return log_prior_loggtilde(prior, lg)
    a = 1.0 + np.outer(factor.t, g)                          # n x N
    V = z[:, None] * np.sqrt(a)
    vv = np.einsum("ij,ij->j", V, V)
    W = factor.M.T @ V
    r2 = np.einsum("ij,ij->j", W, W) / vv
    out = (0.5 * np.log(a).sum(axis=0) - 0.5 * factor.q * np.log1p(g)
           - vv / (2.0 * (1.0 + g)) * (1.0 + g * (1.0 - r2)) + 0.5 * zz)
    return out + log_prior_loggtilde(prior, lg)


def _log_integrand_marginal(factor: GammaFactor, z: np.ndarray, prior: GPrior, lg: np.ndarray) -> np.ndarray:
    """``K(gamma, g) + log p(g) + log g``."""
    k = np.array([log_gauss_copula_kernel(factor, float(np.exp(x)), z) for x in lg])
    return k + log_prior_loggtilde(prior, lg)


_INTEGRANDS = {"prop1": _log_integrand_prop1, "marginal": _log_integrand_marginal}


def _simpson_weights(m: int, h: float) -> np.ndarray:
    w = np.ones(m)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    return w * h / 3.0


def _log_simpson(fn, lo: float, hi: float, m: int) -> float:
    x = np.linspace(lo, hi, m)
    vals = fn(x)
    if not np.all(np.isfinite(vals) | (vals == -np.inf)):
        raise CopulaVSError("quadrature-failure",
                            f"non-finite integrand on log g in [{lo}, {hi}]")
    return float(logsumexp(vals, b=_simpson_weights(m, x[1] - x[0])))


def _support(fn, nodes: int) -> tuple[float, float]:
    """Widen ``[lo, hi]`` until both endpoint values are negligible."""
    lo, hi = LOG_G_RANGE
    for _ in range(64):
        vals = fn(np.linspace(lo, hi, nodes))
        peak = vals.max()
        if not np.isfinite(peak):
            raise CopulaVSError("quadrature-failure",
                                f"integrand has no finite values on log g in [{lo}, {hi}]")
        grow_lo = vals[0] - peak > TAIL_RATIO and lo > -LOG_G_LIMIT
        grow_hi = vals[-1] - peak > TAIL_RATIO and hi < LOG_G_LIMIT
        if not (grow_lo or grow_hi):
            break
        lo = max(lo - 10.0, -LOG_G_LIMIT) if grow_lo else lo
        hi = min(hi + 10.0, LOG_G_LIMIT) if grow_hi else hi
    return lo, hi


def log_integral(fn, nodes: int = 201, rtol: float = 1e-10, max_doublings: int = 8) -> float:
    """``log int exp(fn(x)) dx`` by composite Simpson, refining until stable."""
    m = nodes + (nodes + 1) % 2                # Simpson needs an odd count
    lo, hi = _support(fn, m)
    prev = _log_simpson(fn, lo, hi, m)
    for _ in range(max_doublings):
        m = 2 * m - 1
        cur = _log_simpson(fn, lo, hi, m)
        if abs(cur - prev) < rtol:
            return cur
        prev = cur
    return prev


def _model_log_integral(data: RegressionData, gamma, prior: GPrior, method: str, nodes: int) -> float:
    factor = build_factor(data.X, gamma)
    fn = _INTEGRANDS[method]
    return log_integral(lambda lg: fn(factor, data.z, prior, lg), nodes)


def log_marginal_likelihood(data: RegressionData, gamma, prior: GPrior, nodes: int = 201) -> float:
    """``log int exp K(gamma, g) p(g) dg``: the log density of ``z`` up to ``(n/2) log 2 pi``."""
    if prior.is_fixed:
        return log_gauss_copula_kernel(build_factor(data.X, gamma), prior.fixed_value, data.z)
    return _model_log_integral(data, gamma, prior, "marginal", nodes)


def log_bayes_factor(data: RegressionData, request: BfRequest) -> float:
    """``log BF(gamma_a | gamma_b)``."""
    if request.method not in _INTEGRANDS:
        raise CopulaVSError("unknown-method", repr(request.method))
    a = np.asarray(request.gamma_a, dtype=bool)
    b = np.asarray(request.gamma_b, dtype=bool)
    for gam in (a, b):
        if gam.shape != (data.p,):
            raise CopulaVSError("shape-mismatch", f"indicator vector needs {data.p} entries")
    if np.array_equal(a, b):
        return 0.0
    prior = request.prior
    if prior.is_fixed:
        g = prior.fixed_value
        return (log_gauss_copula_kernel(build_factor(data.X, a), g, data.z)
                - log_gauss_copula_kernel(build_factor(data.X, b), g, data.z))
    la = _model_log_integral(data, a, prior, request.method, request.nodes)
    lb = _model_log_integral(data, b, prior, request.method, request.nodes)
    return la - lb


def posterior_median_g(data: RegressionData, gamma, prior: GPrior, nodes: int = 2001) -> float:
    """Median of ``p(g | gamma, z)`` from the quadrature grid."""
    if prior.is_fixed:
        return prior.fixed_value
    factor = build_factor(data.X, gamma)

    def fn(lg):
        return _log_integrand_prop1(factor, data.z, prior, lg)

    lo, hi = _support(fn, 201)
    x = np.linspace(lo, hi, nodes)
    dens = np.exp(fn(x) - fn(x).max())
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))])
    return float(np.exp(np.interp(0.5 * cdf[-1], cdf, x)))
