"""Priors on the g-prior scale and on the model indicators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import CopulaVSError

KINDS = ("hyper-g", "hyper-g-n", "zellner-siow", "fixed")
_LGAMMA_HALF = math.lgamma(0.5)


def _log1pexp(x: float) -> float:
    return x + math.log1p(math.exp(-x)) if x > 0 else math.log1p(math.exp(x))


def _expit(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass(frozen=True)
class GPrior:
    """Prior on ``g``.

    ``kind`` is one of ``hyper-g``, ``hyper-g-n``, ``zellner-siow`` or
    ``fixed``.  ``n`` is the sample size used by ``hyper-g-n`` and
    ``zellner-siow``; ``fixed_value`` is the point mass for ``fixed``.
    """

    kind: str = "hyper-g"
    a: float = 4.0
    n: int | None = None
    fixed_value: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CopulaVSError("unknown-prior", repr(self.kind))
        if self.kind in ("hyper-g", "hyper-g-n") and not self.a > 2:
            raise CopulaVSError("invalid-prior", "hyper-g priors need a > 2")
        if self.kind in ("hyper-g-n", "zellner-siow") and not (self.n and self.n > 0):
            raise CopulaVSError("invalid-prior", f"{self.kind} needs the sample size n")
        if self.kind == "fixed" and not (self.fixed_value is not None and self.fixed_value > 0):
            raise CopulaVSError("invalid-prior", "fixed g must be positive")

    @property
    def is_fixed(self) -> bool:
        return self.kind == "fixed"

    def with_n(self, n: int) -> "GPrior":
        return GPrior(self.kind, self.a, n, self.fixed_value)

    def log_density_loggtilde(self, log_g: float) -> float:
        """Scalar ``log p(g) + log g`` for the hot HMC loop."""
        a = self.a
        if self.kind == "hyper-g":
            return math.log((a - 2) / 2) - 0.5 * a * _log1pexp(log_g) + log_g
        if self.kind == "hyper-g-n":
            return (math.log((a - 2) / (2 * self.n)) - 0.5 * a * _log1pexp(log_g - math.log(self.n))
                    + log_g)
        if self.kind == "zellner-siow":
            n = self.n
            return 0.5 * math.log(n / 2) - _LGAMMA_HALF - 0.5 * log_g - n / (2 * math.exp(log_g))
        raise CopulaVSError("invalid-prior", "fixed g has no density")

    def grad_loggtilde(self, log_g: float) -> float:
        """Scalar derivative of :meth:`log_density_loggtilde`."""
        if self.kind == "hyper-g":
            return 1.0 - 0.5 * self.a * _expit(log_g)
        if self.kind == "hyper-g-n":
            return 1.0 - 0.5 * self.a * _expit(log_g - math.log(self.n))
        if self.kind == "zellner-siow":
            return -0.5 + self.n / (2.0 * math.exp(log_g))
        return 0.0

    def label(self) -> str:
        if self.is_fixed:
            return f"fixed:{self.fixed_value:g}"
        return self.kind


def parse_g_prior(spec: str, n: int) -> GPrior:
    """Parse CLI names: ``hyper-g``, ``hyper-g-n``, ``zellner-siow``,
    ``fixed:<value>`` and the preset ``fixed:n``."""
    spec = spec.strip().lower()
    if spec.startswith("fixed:"):
        val = spec.split(":", 1)[1]
        value = float(n) if val == "n" else float(val)
        return GPrior("fixed", n=n, fixed_value=value)
    if spec in ("hyper-g/n", "hyper-g-n"):
        return GPrior("hyper-g-n", n=n)
    return GPrior(spec, n=n)


def log_prior_g(prior: GPrior, g: float | np.ndarray):
    """Log density of ``g`` under a continuous prior."""
    g = np.asarray(g, dtype=float)
    if np.any(g <= 0):
        raise CopulaVSError("invalid-g", "g must be positive")
    a = prior.a
    if prior.kind == "hyper-g":
        out = np.log((a - 2) / 2) - 0.5 * a * np.log1p(g)
    elif prior.kind == "hyper-g-n":
        n = prior.n
        out = np.log((a - 2) / (2 * n)) - 0.5 * a * np.log1p(g / n)
    elif prior.kind == "zellner-siow":
        n = prior.n
        out = 0.5 * np.log(n / 2) - special.gammaln(0.5) - 1.5 * np.log(g) - n / (2 * g)
    else:
        raise CopulaVSError("invalid-prior", "fixed g has no density")
    return out if out.ndim else float(out)


def log_prior_loggtilde(prior: GPrior, log_g):
    """Log density of ``log g``: ``log p(g) + log g``."""
    log_g = np.asarray(log_g, dtype=float)
    return log_prior_g(prior, np.exp(log_g)) + log_g


def dlog_prior_dloggtilde(prior: GPrior, log_g):
    """Derivative of ``log p(g) + log g`` with respect to ``log g``."""
    log_g = np.asarray(log_g, dtype=float)
    g = np.exp(log_g)
    a = prior.a
    if prior.kind == "hyper-g":
        out = 1.0 - 0.5 * a * g / (1.0 + g)
    elif prior.kind == "hyper-g-n":
        r = g / prior.n
        out = 1.0 - 0.5 * a * r / (1.0 + r)
    elif prior.kind == "zellner-siow":
        out = -0.5 + prior.n / (2.0 * g)
    else:
        out = np.zeros_like(g)
    return out if out.ndim else float(out)


def sample_g(prior: GPrior, rng: np.random.Generator, size=None):
    """Exact draws from the prior."""
    if prior.is_fixed:
        return np.full(size, prior.fixed_value) if size is not None else prior.fixed_value
    if prior.kind in ("hyper-g", "hyper-g-n"):
        # g/(1+g) ~ Beta(1, a/2 - 1)
        u = rng.beta(1.0, 0.5 * prior.a - 1.0, size=size)
        g = u / (1.0 - u)
        return g * prior.n if prior.kind == "hyper-g-n" else g
    # Inverse-Gamma(1/2, n/2)
    return (prior.n / 2.0) / rng.gamma(0.5, 1.0, size=size)


def log_prior_gamma(p: int, q):
    """``log B(p - q + 1, q + 1)``: uniform prior on the model size."""
    q = np.asarray(q)
    if np.any((q < 0) | (q > p)):
        raise CopulaVSError("invalid-model-size", f"q must lie in [0, {p}]")
    out = special.betaln(p - q + 1.0, q + 1.0)
    return out if out.ndim else float(out)
