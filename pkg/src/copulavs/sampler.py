"""Stochastic search over the indicators with HMC for ``log g``.

Each sweep (1) partitions the indicators into random pairs, (2) draws every
pair exactly from its four-point conditional and (3) moves ``log g`` with a
fixed-length leapfrog HMC step whose step size is tuned by dual averaging
during burn-in.  Conditional inclusion probabilities computed in step 2 are
averaged after burn-in (Rao-Blackwellization).
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .copula_core import SINGULAR_TOL, GammaFactor, RegressionData, build_factor
from .errors import CopulaVSError
from .priors import GPrior, log_prior_gamma


@dataclass
class SamplerConfig:
    sweeps: int = 2000
    burnin: int = 500
    seed: int = 0
    hmc_target_accept: float = 0.8
    hmc_leapfrog_steps: int = 10
    hmc_adapt_sweeps: int | None = None
    init_g: float | None = None

    def __post_init__(self):
        if not 0 <= self.burnin < self.sweeps:
            raise CopulaVSError("invalid-config", "need 0 <= burnin < sweeps")
        if not 0 < self.hmc_target_accept < 1:
            raise CopulaVSError("invalid-config", "hmc_target_accept must lie in (0, 1)")
        if self.hmc_adapt_sweeps is None:
            self.hmc_adapt_sweeps = self.burnin


@dataclass
class SelectionState:
    factor: GammaFactor
    log_g: float

    @property
    def g(self) -> float:
        return math.exp(self.log_g)

    @property
    def gamma(self) -> np.ndarray:
        return self.factor.gamma


@dataclass
class Trace:
    """Chain output.  Arrays cover every sweep; ``burnin`` marks the split."""

    gammas: np.ndarray
    g: np.ndarray
    log_kernel: np.ndarray
    rb_sum: np.ndarray
    n_kept: int
    burnin: int
    accept_prob: np.ndarray
    step_size: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def kept_gammas(self) -> np.ndarray:
        return self.gammas[self.burnin:]

    @property
    def kept_g(self) -> np.ndarray:
        return self.g[self.burnin:]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sweep", "g", "q_gamma", "log_kernel", "gamma"])
            for k in range(len(self.g)):
                bits = "".join("1" if b else "0" for b in self.gammas[k])
                w.writerow([k, repr(float(self.g[k])), int(self.gammas[k].sum()),
                            repr(float(self.log_kernel[k])), bits])


# --- step 1 ---------------------------------------------------------------

def pair_partition(p: int, rng: np.random.Generator) -> np.ndarray:
    """Random pairing of ``0..p-1``; for odd ``p`` the leftover index is
    paired with a uniformly chosen other index."""
    if p < 2:
        raise CopulaVSError("invalid-dimension", "pair partition needs p >= 2")
    perm = rng.permutation(p)
    pairs = perm[: p - p % 2].reshape(-1, 2)
    if p % 2:
        partner = perm[rng.integers(p - 1)]
        pairs = np.vstack([pairs, [perm[-1], partner]])
    return pairs.astype(np.int64)


def _chain_pairs(p: int, rng: np.random.Generator) -> np.ndarray:
    if p == 1:
        return np.zeros((1, 2), dtype=np.int64)
    return pair_partition(p, rng)


# --- step 2 ---------------------------------------------------------------

def _log_prior_table(p: int) -> np.ndarray:
    return np.asarray(log_prior_gamma(p, np.arange(p + 1)), dtype=float)


def pair_log_weights(data: RegressionData, gamma, i: int, j: int, g: float) -> np.ndarray:
    """log A(c) for c in (0,0), (0,1), (1,0), (1,1); ``-inf`` if singular."""
    XT = np.ascontiguousarray(data.X.T)
    gam = np.asarray(gamma, dtype=np.bool_).copy()
    out = np.empty(4)
    Q = np.empty((data.n, data.p))
    ok = _kernels.pair_log_weights(XT, data.z, gam, i, j, g, _log_prior_table(data.p),
                                   Q, SINGULAR_TOL, out)
    if not ok or not np.isfinite(out).any():
        raise CopulaVSError("no-valid-configuration", f"pair ({i}, {j})")
    return out


def gibbs_pair_update(data: RegressionData, state: SelectionState, pair, rng: np.random.Generator):
    """Exact draw of ``(gamma_i, gamma_j)`` from its conditional.

    Returns ``(new_gamma, (pr_i, pr_j), probs)`` where ``pr_i`` is the
    conditional probability that ``gamma_i = 1`` and ``probs`` the four
    normalized configuration probabilities.
    """
    i, j = int(pair[0]), int(pair[1])
    logw = pair_log_weights(data, state.gamma, i, j, state.g)
    probs = np.exp(logw - logw.max())
    probs /= probs.sum()
    c = rng.choice(4, p=probs)
    gamma = state.gamma.copy()
    gi, gj = _kernels.CONFIGS[c]
    gamma[i], gamma[j] = bool(gi), bool(gj)
    if i == j:
        gamma[i] = c == 3
    return gamma, (probs[2] + probs[3], probs[1] + probs[3]), probs


# --- step 3 ---------------------------------------------------------------

class GTarget:
    """Log posterior of ``log g`` given the indicators, with its gradient.

    ``M`` is any orthonormal basis of the selected columns and ``t`` the row
    leverages.
    """

    def __init__(self, M: np.ndarray, t: np.ndarray, z: np.ndarray, prior: GPrior):
        self.M, self.t, self.z, self.prior = M, t, z, prior
        self.q = M.shape[1]
        self.zt = z * z * t

    @classmethod
    def from_factor(cls, factor: GammaFactor, z, prior: GPrior) -> "GTarget":
        return cls(factor.M, factor.t, np.asarray(z, dtype=float), prior)

    def kernel(self, g: float) -> float:
        a = 1.0 + g * self.t
        v = self.z * np.sqrt(a)
        w = self.M.T @ v
        return -0.5 * (self.q * math.log1p(g) - np.log(a).sum() + v @ v - g / (1 + g) * (w @ w))

    def __call__(self, log_g: float):
        if not -300.0 < log_g < 300.0:
            return -np.inf, np.nan
        g = math.exp(log_g)
        a = 1.0 + g * self.t
        sa = np.sqrt(a)
        v = self.z * sa
        w = self.M.T @ v
        ww = w @ w
        r = g / (1.0 + g)
        kern = -0.5 * (self.q * math.log1p(g) - np.log(a).sum() + v @ v - r * ww)
        dlogdet = self.q / (1.0 + g) - (self.t / a).sum()
        dvv = self.zt.sum()
        dv = 0.5 * self.z * self.t / sa
        dquad = ww / (1.0 + g) ** 2 + 2.0 * r * (w @ (self.M.T @ dv))
        dkern = -0.5 * (dlogdet + dvv - dquad)
        val = kern + self.prior.log_density_loggtilde(log_g)
        grad = g * dkern + self.prior.grad_loggtilde(log_g)
        return float(val), float(grad)


@dataclass
class DualAveraging:
    """Step-size adaptation toward a target acceptance probability."""

    target: float = 0.8
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75
    step_size: float = 0.1
    mu: float = 0.0
    h_bar: float = 0.0
    log_eps_bar: float = 0.0
    m: int = 0
    initialized: bool = False

    def start(self, step_size: float) -> None:
        self.step_size = step_size
        self.mu = math.log(10.0 * step_size)
        self.h_bar, self.log_eps_bar, self.m = 0.0, 0.0, 0
        self.initialized = True

    def update(self, accept_prob: float) -> None:
        self.m += 1
        eta = 1.0 / (self.m + self.t0)
        self.h_bar = (1 - eta) * self.h_bar + eta * (self.target - accept_prob)
        log_eps = self.mu - math.sqrt(self.m) / self.gamma * self.h_bar
        w = self.m ** -self.kappa
        self.log_eps_bar = w * log_eps + (1 - w) * self.log_eps_bar
        self.step_size = math.exp(log_eps)

    def freeze(self) -> None:
        if self.m:
            self.step_size = math.exp(self.log_eps_bar)


def find_reasonable_step(target, x: float, rng: np.random.Generator) -> float:
    eps = 1.0
    val0, grad0 = target(x)

    def log_ratio(e):
        r0 = rng.normal()
        r = r0 + 0.5 * e * grad0
        x1 = x + e * r
        val1, grad1 = target(x1)
        r = r + 0.5 * e * grad1
        out = val1 - val0 - 0.5 * r * r + 0.5 * r0 * r0
        return out if np.isfinite(out) else -np.inf

    direction = 1.0 if log_ratio(eps) > math.log(0.5) else -1.0
    for _ in range(50):
        if direction * log_ratio(eps) <= direction * math.log(0.5):
            break
        eps *= 2.0 ** direction
    return float(min(max(eps, 1e-4), 10.0))


def hmc_transition(target, x: float, step: float, n_steps: int, rng: np.random.Generator):
    """One leapfrog HMC move with unit mass.  Returns ``(x, accept_prob, ok)``."""
    val0, grad0 = target(x)
    r0 = rng.normal()
    u = rng.random()
    xn, r, grad = x, r0, grad0
    val = val0
    with np.errstate(over="ignore", invalid="ignore"):
        r = r + 0.5 * step * grad
        for l in range(n_steps):
            xn = xn + step * r
            val, grad = target(xn)
            if not (np.isfinite(val) and np.isfinite(grad)):
                return x, 0.0, False
            if l != n_steps - 1:
                r = r + step * grad
        r = r + 0.5 * step * grad
        log_acc = val - val0 - 0.5 * r * r + 0.5 * r0 * r0
    if not np.isfinite(log_acc):
        return x, 0.0, False
    acc = math.exp(min(0.0, log_acc))
    return (xn if u < acc else x), acc, True


def hmc_update_g(data: RegressionData, state: SelectionState, prior: GPrior,
                 tuner: DualAveraging, rng: np.random.Generator,
                 n_steps: int = 10, adapt: bool = True):
    """One HMC transition on ``log g``.  Returns ``(new_state, accept_prob)``.

    A fixed prior returns its value unchanged.
    """
    if prior.is_fixed:
        return SelectionState(state.factor, math.log(prior.fixed_value)), float("nan")
    target = GTarget.from_factor(state.factor, data.z, prior)
    if not tuner.initialized:
        tuner.start(find_reasonable_step(target, state.log_g, rng))
    x, acc, ok = hmc_transition(target, state.log_g, tuner.step_size, n_steps, rng)
    if not ok:
        warnings.warn("non-finite HMC trajectory; move rejected", RuntimeWarning, stacklevel=2)
    if adapt:
        tuner.update(acc)
    return SelectionState(state.factor, x), acc


# --- chain ----------------------------------------------------------------

def run_chain(data: RegressionData, prior: GPrior, config: SamplerConfig,
              init_gamma=None) -> Trace:
    """Run the sampler; deterministic given ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    n, p = data.n, data.p
    XT = np.ascontiguousarray(data.X.T)
    z = np.ascontiguousarray(data.z, dtype=float)
    lp = _log_prior_table(p)
    gamma = np.zeros(p, dtype=np.bool_) if init_gamma is None else np.asarray(init_gamma, dtype=np.bool_).copy()

    if prior.is_fixed:
        log_g = math.log(prior.fixed_value)
    else:
        log_g = math.log(config.init_g if config.init_g is not None else float(n))

    S = config.sweeps
    gammas = np.zeros((S, p), dtype=np.bool_)
    g_tr = np.empty(S)
    lk_tr = np.empty(S)
    acc_tr = np.full(S, np.nan)
    eps_tr = np.full(S, np.nan)
    rb_sum = np.zeros(p)
    rb = np.zeros(p)
    tuner = DualAveraging(target=config.hmc_target_accept)
    notes: list[str] = []

    for k in range(S):
        pairs = _chain_pairs(p, rng)
        uniforms = rng.random(len(pairs))
        g = prior.fixed_value if prior.is_fixed else math.exp(log_g)
        bad = _kernels.sweep_pairs(XT, z, gamma, pairs, uniforms, g, lp, SINGULAR_TOL, rb)
        if bad >= 0:
            raise CopulaVSError("no-valid-configuration", f"sweep {k}, pair {pairs[bad].tolist()}")
        M, ok = _kernels.full_basis(XT, gamma, SINGULAR_TOL)
        t = np.einsum("ij,ij->i", M, M)
        target = GTarget(M, t, z, prior)
        if not prior.is_fixed:
            if not tuner.initialized:
                tuner.start(find_reasonable_step(target, log_g, rng))
            eps_tr[k] = tuner.step_size
            log_g, acc, ok = hmc_transition(target, log_g, tuner.step_size, config.hmc_leapfrog_steps, rng)
            if not ok:
                notes.append(f"sweep {k}: non-finite HMC trajectory rejected")
            acc_tr[k] = acc
            if k < config.hmc_adapt_sweeps:
                tuner.update(acc)
                if k == config.hmc_adapt_sweeps - 1:
                    tuner.freeze()
        if not prior.is_fixed:
            g = math.exp(log_g)
        gammas[k] = gamma
        g_tr[k] = g
        lk_tr[k] = target.kernel(g)
        if k >= config.burnin:
            rb_sum += rb

    return Trace(gammas=gammas, g=g_tr, log_kernel=lk_tr, rb_sum=rb_sum,
                 n_kept=S - config.burnin, burnin=config.burnin,
                 accept_prob=acc_tr, step_size=eps_tr, warnings=notes)


def inclusion_probabilities(trace: Trace) -> np.ndarray:
    """Rao-Blackwellized posterior inclusion probabilities."""
    if trace.n_kept < 1:
        raise CopulaVSError("empty-trace", "no post burn-in sweeps")
    return np.clip(trace.rb_sum / trace.n_kept, 0.0, 1.0)


def frequency_inclusion(trace: Trace) -> np.ndarray:
    """Raw visit frequencies of each indicator after burn-in."""
    if trace.n_kept < 1:
        raise CopulaVSError("empty-trace", "no post burn-in sweeps")
    return trace.kept_gammas.mean(axis=0)


def top_models(trace: Trace, limit: int = 20):
    """Most visited indicator vectors after burn-in as ``(bits, frequency)``."""
    kept = trace.kept_gammas
    keys = ["".join("1" if b else "0" for b in row) for row in kept]
    uniq, counts = np.unique(keys, return_counts=True)
    order = sorted(range(len(uniq)), key=lambda i: (-counts[i], uniq[i]))[:limit]
    return [(str(uniq[i]), counts[i] / len(keys)) for i in order]
