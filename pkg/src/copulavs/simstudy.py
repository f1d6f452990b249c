"""Simulation protocol: correlated designs, three response cases, CV log
scores and precision-recall curves for copula and Gaussian selection.

All randomness flows from the scenario seed through named sub-streams
(design, then per replicate: beta, noise, sampler), so each replicate can be
rerun on its own.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import special

from .copula_core import RegressionData
from .errors import CopulaVSError
from .margins import fit_margin
from .predict import cv_mean_log_score
from .priors import parse_g_prior
from .sampler import SamplerConfig, inclusion_probabilities, run_chain

CASES = ("normal", "lognormal", "implicit-copula")
LN_MEANLOG, LN_SDLOG = -2.89, 2.0
THRESHOLDS = np.round(np.arange(101) / 100.0, 2)
MODEL_MARGINS = {"copula": "tkde", "gaussian": "normal"}


@dataclass(frozen=True)
class SimScenario:
    case: str = "normal"
    n: int = 200
    p: int = 20
    snr: float = 8.0
    replicates: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.case not in CASES:
            raise CopulaVSError("unknown-case", repr(self.case))


@dataclass(frozen=True)
class Method:
    """``model`` is ``copula`` (transformed-KDE margin) or ``gaussian`` (normal margin)."""

    model: str
    g_prior: str = "hyper-g"

    @property
    def label(self) -> str:
        return f"{self.model}/{self.g_prior}"


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def generate_design(n: int, p: int, seed) -> np.ndarray:
    """Rows ``N(0, D'D)`` with ``D`` upper triangular, entries ``N(0, 0.1^2)``; centered."""
    rng = _rng(seed)
    D = np.triu(rng.normal(0.0, 0.1, size=(p, p)))
    X = rng.normal(size=(n, p)) @ D
    return X - X.mean(axis=0)


def generate_beta(p: int, seed):
    """Spike at zero w.p. 0.75, else ``N(+-1, 0.25^2)``; redrawn until nonzero."""
    rng = _rng(seed)
    while True:
        support = rng.random(p) >= 0.75
        sign = np.where(rng.random(p) < 0.5, -1.0, 1.0)
        beta = np.where(support, rng.normal(sign, 0.25), 0.0)
        if support.any():
            return beta, support


def noise_scale(X, beta, snr: float) -> float:
    """``r`` with ``Var(X beta) / r^2 = snr`` (sample variance over rows)."""
    v = float(np.var(X @ beta, ddof=1))
    if not v > 0:
        raise CopulaVSError("zero-signal", "sample variance of X beta is zero")
    return float(np.sqrt(v / snr))


def generate_response(case: str, X, beta, snr: float, seed) -> np.ndarray:
    """Case responses; the noise scale fixes the linear-predictor SNR.

    ``lognormal`` multiplies the noise by 1.5, so its scale is divided by 1.5
    to keep the effective noise variance at ``Var(X beta)/snr``.
    """
    rng = _rng(seed)
    X = np.asarray(X, dtype=float)
    eta = X @ beta
    r = noise_scale(X, beta, snr)
    e = rng.normal(size=X.shape[0])
    if case == "normal":
        return eta + r * e
    if case == "lognormal":
        return np.exp(eta + 1.5 * (r / 1.5) * e)
    if case == "implicit-copula":
        return np.exp(LN_MEANLOG + LN_SDLOG * special.ndtri(special.ndtr(eta + r * e)))
    raise CopulaVSError("unknown-case", repr(case))


def precision_recall(inclusion_probs, truth, thresholds=THRESHOLDS):
    """Recall and precision of ``prob >= threshold`` at each threshold.

    Precision is 1 when nothing is selected.
    """
    probs = np.asarray(inclusion_probs, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    if not truth.any():
        raise CopulaVSError("no-positives", "truth has no signal covariates")
    sel = probs[None, :] >= np.asarray(thresholds)[:, None]
    tp = (sel & truth).sum(axis=1)
    npos = sel.sum(axis=1)
    recall = tp / truth.sum()
    precision = np.where(npos > 0, tp / np.maximum(npos, 1), 1.0)
    return recall, precision


def precision_at_recall(recall, precision, target: float = 0.8) -> float:
    """Precision where the curve crosses ``target`` recall (linear interpolation).

    ``recall`` is nonincreasing in the threshold; the crossing between the
    last point with recall >= target and the next one is used.
    """
    recall = np.asarray(recall, dtype=float)
    precision = np.asarray(precision, dtype=float)
    above = np.flatnonzero(recall >= target)
    if above.size == 0:
        return float("nan")
    k = above[-1]
    if recall[k] == target or k + 1 >= recall.size:
        return float(precision[k])
    r0, r1 = recall[k], recall[k + 1]
    w = (r0 - target) / (r0 - r1)
    return float(precision[k] + w * (precision[k + 1] - precision[k]))


# -- study driver ---------------------------------------------------------

@dataclass
class StudyReport:
    scenario: SimScenario
    mls: list = field(default_factory=list)            # (replicate, method, case, mls)
    inclusion: dict = field(default_factory=dict)      # method -> (replicates x p)
    truth: np.ndarray | None = None                    # replicates x p
    curves: dict = field(default_factory=dict)         # method -> (recall, precision)

    def mean_mls(self, label: str) -> float:
        return float(np.mean([row[3] for row in self.mls if row[1] == label]))

    def mls_by_replicate(self, label: str) -> np.ndarray:
        return np.array([row[3] for row in sorted(self.mls) if row[1] == label])


def replicate_data(scenario: SimScenario, replicate: int):
    """``(X, y, beta, support, sampler_seed)`` for one replicate."""
    design_ss, reps_ss = np.random.SeedSequence(scenario.seed).spawn(2)
    X = generate_design(scenario.n, scenario.p, np.random.default_rng(design_ss))
    beta_ss, noise_ss, sampler_ss = reps_ss.spawn(scenario.replicates)[replicate].spawn(3)
    beta, support = generate_beta(scenario.p, np.random.default_rng(beta_ss))
    y = generate_response(scenario.case, X, beta, scenario.snr, np.random.default_rng(noise_ss))
    return X, y, beta, support, int(sampler_ss.generate_state(1)[0])


def _cell(args):
    scenario, replicate, method, config, folds = args
    X, y, _, _, seed = replicate_data(scenario, replicate)
    cfg = replace(config, seed=seed)
    kind = MODEL_MARGINS[method.model]
    prior = parse_g_prior(method.g_prior, scenario.n)
    mls = cv_mean_log_score(y, X, kind, prior, cfg, folds=folds, seed=seed)
    data = RegressionData.from_arrays(y, X, fit_margin(y, kind))
    probs = inclusion_probabilities(run_chain(data, parse_g_prior(method.g_prior, data.n), cfg))
    return replicate, method, mls, probs


def run_study(scenario: SimScenario, methods, config: SamplerConfig, folds: int = 10,
              threads: int = 1, out_dir=None) -> StudyReport:
    """CV mean log score and inclusion probabilities for every replicate and
    method; averaged precision-recall curves per method."""
    methods = list(methods)
    cells = [(scenario, r, m, config, folds) for r in range(scenario.replicates) for m in methods]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_cell, cells))
    else:
        results = [_cell(c) for c in cells]
    report = StudyReport(scenario)
    report.truth = np.array([replicate_data(scenario, r)[3] for r in range(scenario.replicates)])
    for m in methods:
        report.inclusion[m.label] = np.zeros((scenario.replicates, scenario.p))
    for r, m, mls, probs in results:
        report.mls.append((r, m.label, scenario.case, mls))
        report.inclusion[m.label][r] = probs
    report.mls.sort(key=lambda row: (row[0], row[1]))
    for m in methods:
        rec, prec = zip(*(precision_recall(report.inclusion[m.label][r], report.truth[r])
                          for r in range(scenario.replicates)))
        report.curves[m.label] = (np.mean(rec, axis=0), np.mean(prec, axis=0))
    if out_dir is not None:
        write_report(report, out_dir)
    return report


# -- output ---------------------------------------------------------------

def write_report(report: StudyReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "mls.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "method", "case", "mls"])
        for r, label, case, mls in report.mls:
            w.writerow([r, label, case, repr(float(mls))])
    with open(out / "pr_curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "threshold", "recall", "precision"])
        for label, (rec, prec) in report.curves.items():
            for t, a, b in zip(THRESHOLDS, rec, prec):
                w.writerow([label, f"{t:.2f}", repr(float(a)), repr(float(b))])
    (out / "pr_curves.svg").write_text(pr_svg(report.curves, title=f"case: {report.scenario.case}"))


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def pr_svg(curves: dict, title: str = "", size: int = 360) -> str:
    """Minimal SVG line plot of precision against recall."""
    pad = 40
    span = size - 2 * pad

    def pt(r, p):
        return f"{pad + r * span:.1f},{size - pad - p * span:.1f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
             f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>',
             f'<text x="{size / 2}" y="{pad / 2}" text-anchor="middle" font-size="12">{title}</text>',
             f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle" font-size="11">recall</text>',
             f'<text x="12" y="{size / 2}" font-size="11" transform="rotate(-90 12 {size / 2})">precision</text>']
    for k, (label, (rec, prec)) in enumerate(curves.items()):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(pt(r, p) for r, p in zip(rec, prec))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{pad + 6}" y="{size - pad - 8 - 14 * k}" font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def default_threads() -> int:
    return max(1, (os.cpu_count() or 1))
