"""Single-site sampler for spatial activation with an Ising prior.

Each sweep draws every activation indicator in raster order, then ``g`` by
independence Metropolis-Hastings with a Laplace (Gaussian) proposal on
``log g`` and finally ``theta`` by a reflecting random walk whose scale is
adapted during burn-in.  Activation probabilities, amplitudes and in-sample
predictive densities are Rao-Blackwellized over the conditionals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from ..errors import CopulaVSError
from ..margins import MarginModel
from ..priors import GPrior, log_prior_loggtilde, parse_g_prior
from .ising import THETA_MAX, LogPartitionTable, _expit, agreement, build_neighbors, \
    neighbor_sum, tabulate_log_partition
from .model import DEFAULT_D, FmriDataset, VoxelKernels, fit_voxel_margins

NEWTON_STEPS = 25
FD_STEP = 1e-4


def activation_threshold(level: float = 0.05) -> float:
    """Probability ``p`` with ``-2 log((1-p)/p)`` at the chi-square(1) critical value."""
    c = float(stats.chi2.ppf(1.0 - level, 1))
    return 1.0 / (1.0 + math.exp(-0.5 * c))


DEFAULT_THRESHOLD = round(activation_threshold(), 4)


@dataclass
class SpatialConfig:
    sweeps: int = 1000
    burnin: int = 250
    seed: int = 0
    d: float = DEFAULT_D
    g_prior: str = "hyper-g-n"
    theta_max: float = THETA_MAX
    theta_init: float = 0.1
    theta_grid_points: int = 46
    table_sweeps: int = 2000
    table_burnin: int = 500
    theta_target_accept: float = 0.44
    margin: str = "kde"
    theta_fixed: bool = False

    def __post_init__(self):
        if not 0 <= self.burnin < self.sweeps:
            raise CopulaVSError("invalid-config", "need 0 <= burnin < sweeps")
        if not 0 < self.theta_max <= THETA_MAX:
            raise CopulaVSError("invalid-config", f"theta_max must lie in (0, {THETA_MAX}]")
        if not 0 <= self.theta_init <= self.theta_max:
            raise CopulaVSError("invalid-config", "theta_init outside [0, theta_max]")


@dataclass
class SpatialTrace:
    prob: np.ndarray
    amplitude: np.ndarray
    g: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    g_accept: np.ndarray
    theta_accept: np.ndarray
    voxel_mls: np.ndarray
    burnin: int
    n_kept: int
    notes: list = field(default_factory=list)

    @property
    def g_accept_rate(self) -> float:
        return float(self.g_accept[self.burnin:].mean())


# -- indicator sweep ------------------------------------------------------

@njit(cache=True)
def _activation_sweep(gamma, log_ratio, delta, theta, ptr, idx, w, valid, uniforms, prob):
    for i in range(gamma.shape[0]):
        if not valid[i]:
            prob[i] = 0.0
            gamma[i] = False
            continue
        p = _expit(log_ratio[i] + delta[i] + theta * neighbor_sum(gamma, i, ptr, idx, w))
        prob[i] = p
        gamma[i] = uniforms[i] < p


# -- g update -------------------------------------------------------------

class _GConditional:
    """``log p(log g | gamma, z)`` up to a constant: active kernels plus prior."""

    def __init__(self, kernels: VoxelKernels, active: np.ndarray, prior: GPrior):
        self.kernels, self.rows, self.prior = kernels, np.flatnonzero(active), prior

    def __call__(self, x: float) -> float:
        if not -50.0 < x < 50.0:
            return -np.inf
        val = log_prior_loggtilde(self.prior, x)
        if self.rows.size:
            val += float(self.kernels.k1(math.exp(x), self.rows).sum())
        return val


def laplace_approximation(f, x0: float):
    """Mode and variance of ``exp(f)`` by Newton with finite differences.

    Returns ``None`` when Newton fails to reach a point of negative curvature.
    """
    h = FD_STEP
    x = x0
    for _ in range(NEWTON_STEPS):
        f0, fp, fm = f(x), f(x + h), f(x - h)
        if not np.isfinite(f0 + fp + fm):
            return None
        d1 = (fp - fm) / (2 * h)
        d2 = (fp - 2 * f0 + fm) / (h * h)
        if not d2 < 0:
            return None
        step = -d1 / d2
        step = max(min(step, 2.0), -2.0)
        x += step
        if abs(step) < 1e-6:
            break
    f0, fp, fm = f(x), f(x + h), f(x - h)
    d2 = (fp - 2 * f0 + fm) / (h * h)
    if not (np.isfinite(f0) and d2 < 0):
        return None
    return x, -1.0 / d2


def update_g(kernels: VoxelKernels, gamma, prior: GPrior, log_g: float, mode_hint: float,
             rng: np.random.Generator):
    """One MH move on ``log g``.  Returns ``(log_g, accepted, mode, used_laplace)``."""
    if prior.is_fixed:
        return math.log(prior.fixed_value), True, mode_hint, True
    f = _GConditional(kernels, gamma, prior)
    lap = laplace_approximation(f, mode_hint)
    cur = f(log_g)
    if lap is None:
        prop = log_g + 0.1 * rng.normal()
        log_a = f(prop) - cur
        u = rng.random()
        if math.log(u) < log_a:
            return prop, True, mode_hint, False
        return log_g, False, mode_hint, False
    mode, var = lap
    sd = math.sqrt(var)
    prop = mode + sd * rng.normal()

    def log_q(x):
        return -0.5 * ((x - mode) / sd) ** 2

    log_a = f(prop) - cur + log_q(log_g) - log_q(prop)
    u = rng.random()
    if math.log(u) < log_a:
        return prop, True, mode, True
    return log_g, False, mode, True


# -- theta update ---------------------------------------------------------

def _reflect(x: float, hi: float) -> float:
    period = 2.0 * hi
    x = math.fmod(x, period)
    if x < 0:
        x += period
    return period - x if x > hi else x


def update_theta(gamma, theta: float, scale: float, table: LogPartitionTable, nb, theta_max: float,
                 rng: np.random.Generator):
    """Reflecting random walk on ``[0, theta_max]`` (uniform prior)."""
    prop = _reflect(theta + scale * rng.normal(), theta_max)
    a = agreement(gamma, nb.ptr, nb.idx, nb.weight)
    log_a = (prop - theta) * a - (float(table(prop)) - float(table(theta)))
    u = rng.random()
    if math.log(u) < log_a:
        return prop, True
    return theta, False


# -- driver ---------------------------------------------------------------

def _log_ratio_density(z, mu, s):
    """``log[phi((z-mu)/s)/s] - log phi(z)``."""
    r = (z - mu) / s
    return -0.5 * r * r - np.log(s) + 0.5 * z * z


@dataclass
class SpatialState:
    gamma: np.ndarray
    log_g: float
    theta: float
    mode: float
    theta_scale: float = 0.05

    @property
    def g(self) -> float:
        return math.exp(self.log_g)


@dataclass
class SweepResult:
    prob: np.ndarray
    g_used: float
    g_accept: bool
    theta_accept: bool
    laplace: bool


def spatial_sweep(kernels: VoxelKernels, state: SpatialState, delta, nb, table: LogPartitionTable,
                  prior: GPrior, config: SpatialConfig, rng: np.random.Generator) -> SweepResult:
    """One raster-order pass over the indicators, then ``g``, then ``theta``.

    ``state`` is updated in place.  ``prob`` holds the conditional activation
    probabilities seen by the indicator draws and ``g_used`` the ``g`` they
    were drawn under.
    """
    g = state.g
    valid = kernels.valid
    log_ratio = np.where(valid, kernels.k1(g) - kernels.k0, 0.0)
    prob = np.empty(kernels.N)
    _activation_sweep(state.gamma, log_ratio, delta, state.theta, nb.ptr, nb.idx, nb.weight, valid,
                      rng.random(kernels.N), prob)
    state.log_g, g_acc, state.mode, used = update_g(kernels, state.gamma, prior, state.log_g,
                                                    state.mode, rng)
    th_acc = False
    if not config.theta_fixed:
        state.theta, th_acc = update_theta(state.gamma, state.theta, state.theta_scale, table, nb,
                                           config.theta_max, rng)
    return SweepResult(prob, g, bool(g_acc), bool(th_acc), used)


def run_spatial(dataset: FmriDataset, config: SpatialConfig, margins: list[MarginModel] | None = None,
                table: LogPartitionTable | None = None) -> SpatialTrace:
    """Fit the spatial model; deterministic given ``config.seed``."""
    ss = np.random.SeedSequence(config.seed)
    rng_table, rng = (np.random.default_rng(s) for s in ss.spawn(2))
    if margins is None:
        margins = fit_voxel_margins(dataset, config.margin)
    Z = np.vstack([m.pseudo_data(row) for m, row in zip(margins, dataset.series)])
    log_py = np.vstack([m.logpdf(row) for m, row in zip(margins, dataset.series)])
    kernels = VoxelKernels(Z, dataset.stimulus, dataset.W, config.d)
    prior = parse_g_prior(config.g_prior, dataset.T)
    nb = build_neighbors(dataset.mask)
    delta = np.ascontiguousarray(dataset.delta)
    if table is None and not config.theta_fixed:
        grid = np.linspace(0.0, config.theta_max, config.theta_grid_points)
        table = tabulate_log_partition(nb, delta, grid, sweeps=config.table_sweeps,
                                       burnin=config.table_burnin,
                                       seed=int(rng_table.integers(2**63)))

    N, S = dataset.N, config.sweeps
    log_g0 = math.log(prior.fixed_value) if prior.is_fixed else math.log(dataset.T)
    state = SpatialState(np.zeros(N, dtype=np.bool_), log_g0, config.theta_init, log_g0)
    prob_sum = np.zeros(N)
    amp_sum = np.zeros(N)
    dens_sum = np.zeros_like(Z)
    mu0, s0 = kernels.fitted(None)
    r0 = np.exp(_log_ratio_density(Z, mu0, s0))
    g_tr, th_tr, q_tr = np.empty(S), np.empty(S), np.empty(S, dtype=np.int64)
    g_acc, th_acc = np.zeros(S, dtype=bool), np.zeros(S, dtype=bool)
    notes: list[str] = []
    valid = kernels.valid

    for k in range(S):
        res = spatial_sweep(kernels, state, delta, nb, table, prior, config, rng)
        g_acc[k], th_acc[k] = res.g_accept, res.theta_accept
        if not res.laplace:
            notes.append(f"sweep {k}: Laplace proposal failed, random-walk fallback")
        if k < config.burnin and not config.theta_fixed:
            # Robbins-Monro on the log scale toward the target acceptance
            state.theta_scale *= math.exp((th_acc[k] - config.theta_target_accept) / math.sqrt(k + 1))
            state.theta_scale = min(max(state.theta_scale, 1e-4), config.theta_max)
        g_tr[k], th_tr[k], q_tr[k] = state.g, state.theta, int(state.gamma.sum())
        if k >= config.burnin:
            prob, g = res.prob, res.g_used
            prob_sum += prob
            amp_sum += prob * np.where(valid, kernels.beta_hat(g), 0.0)
            mu1, s1 = kernels.fitted(g)
            r1 = np.where(valid[:, None], np.exp(_log_ratio_density(Z, mu1, s1)), 0.0)
            dens_sum += prob[:, None] * r1 + (1.0 - prob[:, None]) * r0

    K = S - config.burnin
    with np.errstate(divide="ignore"):
        log_dens = log_py + np.log(dens_sum / K)
    voxel_mls = log_dens.mean(axis=1)
    return SpatialTrace(prob=prob_sum / K, amplitude=amp_sum / K, g=g_tr, theta=th_tr, q=q_tr,
                        g_accept=g_acc, theta_accept=th_acc, voxel_mls=voxel_mls,
                        burnin=config.burnin, n_kept=K, notes=notes)


@dataclass(frozen=True)
class ActivationMaps:
    probability: np.ndarray
    active: np.ndarray
    amplitude: np.ndarray
    threshold: float


def activation_maps(trace: SpatialTrace, dataset: FmriDataset,
                    threshold: float = DEFAULT_THRESHOLD) -> ActivationMaps:
    if trace.n_kept < 1:
        raise CopulaVSError("empty-trace", "no post burn-in sweeps")
    prob = dataset.to_grid(trace.prob)
    active = np.where(dataset.mask, prob >= threshold, False)
    return ActivationMaps(prob, active, dataset.to_grid(trace.amplitude), threshold)


def mls_breakdown(trace: SpatialTrace, active: np.ndarray, mask: np.ndarray | None = None) -> dict:
    """Mean in-sample log scores over active, inactive and all voxels plus
    the posterior mean and sd of the number of active voxels.

    ``active`` is one flag per in-mask voxel, or a grid together with ``mask``.
    """
    active = np.asarray(active, dtype=bool)
    if mask is not None:
        active = active[np.asarray(mask, dtype=bool)]
    if active.shape != trace.voxel_mls.shape:
        raise CopulaVSError("shape-mismatch", "need one activation flag per in-mask voxel")
    kept = trace.q[trace.burnin:]

    def mean(sel):
        return float(trace.voxel_mls[sel].mean()) if sel.any() else float("nan")

    return {"Active": mean(active), "Inactive": mean(~active),
            "Overall": float(trace.voxel_mls.mean()),
            "E(q|y)": float(kept.mean()), "Std(q|y)": float(kept.std())}
