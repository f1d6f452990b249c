"""Compiled inner loops for the pair-Gibbs sweep.

The basis for a set of columns is built by classical Gram-Schmidt with a
second pass when the first one cancels more than half the squared norm.
Its span equals that of ``M = X_g U^{-1}`` (the thin QR factor), so
leverages and ``|M'v|`` agree with :mod:`copulavs.copula_core` to rounding.
"""
import math

import numpy as np
from numba import njit

# configuration order (gamma_i, gamma_j): (0,0), (0,1), (1,0), (1,1)
CONFIGS = ((0, 0), (0, 1), (1, 0), (1, 1))


@njit(cache=True)
def extend_basis(Q, k, x, tol):
    """Orthonormalize ``x`` against ``Q[:, :k]`` into column ``k``.

    Returns False when ``x`` is numerically inside the current span.
    """
    n = x.shape[0]
    r = x.copy()
    nx2 = 0.0
    for i in range(n):
        nx2 += x[i] * x[i]
    nr2 = nx2
    for _ in range(2):
        before = nr2
        for j in range(k):
            c = 0.0
            for i in range(n):
                c += Q[i, j] * r[i]
            for i in range(n):
                r[i] -= c * Q[i, j]
        nr2 = 0.0
        for i in range(n):
            nr2 += r[i] * r[i]
        # second pass only after heavy cancellation
        if nr2 > 0.5 * before:
            break
    if nr2 <= tol * nx2:
        return False
    inv = 1.0 / math.sqrt(nr2)
    for i in range(n):
        Q[i, k] = r[i] * inv
    return True


@njit(cache=True)
def log_kernel(Q, k, z, g):
    """``-(log|R| + z'R^{-1}z)/2`` for the basis ``Q[:, :k]``."""
    n = z.shape[0]
    logdet = k * math.log1p(g)
    vv = 0.0
    w = np.zeros(k)
    for i in range(n):
        t = 0.0
        for j in range(k):
            t += Q[i, j] * Q[i, j]
        a = 1.0 + g * t
        logdet -= math.log(a)
        v = z[i] * math.sqrt(a)
        vv += v * v
        for j in range(k):
            w[j] += Q[i, j] * v
    ww = 0.0
    for j in range(k):
        ww += w[j] * w[j]
    return -0.5 * (logdet + vv - g / (1.0 + g) * ww)


@njit(cache=True)
def build_basis(XT, gamma, skip_i, skip_j, Q, tol):
    """Basis of the active columns except ``skip_i``/``skip_j``; -1 if singular."""
    k = 0
    for c in range(XT.shape[0]):
        if gamma[c] and c != skip_i and c != skip_j:
            if not extend_basis(Q, k, XT[c], tol):
                return -1
            k += 1
    return k


@njit(cache=True)
def pair_log_weights(XT, z, gamma, i, j, g, log_prior_q, Q, tol, out):
    """Fill ``out`` with log A for the four configurations of ``(i, j)``.

    Singular configurations get ``-inf``.  When ``i == j`` only (0,0) and
    (1,1) are admissible and represent a single-site update.  Returns False
    if the remaining columns are themselves singular.
    """
    k = build_basis(XT, gamma, i, j, Q, tol)
    if k < 0:
        return False
    out[:] = -np.inf
    out[0] = log_kernel(Q, k, z, g) + log_prior_q[k]
    ok_i = extend_basis(Q, k, XT[i], tol)
    if i == j:
        if ok_i:
            out[3] = log_kernel(Q, k + 1, z, g) + log_prior_q[k + 1]
        return True
    if ok_i:
        out[2] = log_kernel(Q, k + 1, z, g) + log_prior_q[k + 1]
        if extend_basis(Q, k + 1, XT[j], tol):
            out[3] = log_kernel(Q, k + 2, z, g) + log_prior_q[k + 2]
    if extend_basis(Q, k, XT[j], tol):
        out[1] = log_kernel(Q, k + 1, z, g) + log_prior_q[k + 1]
    return True


@njit(cache=True)
def normalize_log_weights(logw, probs):
    m = -np.inf
    for c in range(logw.shape[0]):
        if logw[c] > m:
            m = logw[c]
    if m == -np.inf:
        return False
    s = 0.0
    for c in range(logw.shape[0]):
        probs[c] = math.exp(logw[c] - m)
        s += probs[c]
    for c in range(logw.shape[0]):
        probs[c] /= s
    return True


@njit(cache=True)
def sweep_pairs(XT, z, gamma, pairs, uniforms, g, log_prior_q, tol, rb):
    """One pass of exact bivariate Gibbs draws over ``pairs``.

    ``gamma`` is updated in place; ``rb`` receives the conditional inclusion
    probabilities (later pairs overwrite earlier ones for a repeated index).
    Returns the index of a pair with no valid configuration, or -1.
    """
    n, p = XT.shape[1], XT.shape[0]
    Q = np.empty((n, p))
    logw = np.empty(4)
    probs = np.empty(4)
    for r in range(pairs.shape[0]):
        i, j = pairs[r, 0], pairs[r, 1]
        if not pair_log_weights(XT, z, gamma, i, j, g, log_prior_q, Q, tol, logw):
            return r
        if not normalize_log_weights(logw, probs):
            return r
        rb[i] = probs[2] + probs[3]
        rb[j] = probs[1] + probs[3]
        u = uniforms[r]
        c = 0
        acc = probs[0]
        while c < 3 and u >= acc:
            c += 1
            acc += probs[c]
        # guard against rounding in the cumulative sum landing on -inf mass
        while probs[c] == 0.0:
            c -= 1
        gamma[i] = c >= 2
        gamma[j] = (c & 1) == 1
        if i == j:
            gamma[i] = c == 3
    return -1


@njit(cache=True)
def full_basis(XT, gamma, tol):
    n, p = XT.shape[1], XT.shape[0]
    Q = np.empty((n, p))
    k = build_basis(XT, gamma, -1, -1, Q, tol)
    if k < 0:
        return Q[:, :0].copy(), False
    return Q[:, :k].copy(), True
