"""Command-line entry point: ``copulavs {fit, predict, bf, simulate, fmri-fit}``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .bayes_factor import BfRequest, copula_r_squared, log_bayes_factor, posterior_median_g
from .copula_core import build_factor
from .errors import CopulaVSError
from .margins import fit_margin
from .predict import log_predictive_density, pointwise_log_scores, predictive_mean
from .priors import parse_g_prior
from .sampler import SamplerConfig, inclusion_probabilities, run_chain, top_models
from .simstudy import CASES, Method, SimScenario, precision_at_recall, run_study
from .spatial import io as sio
from .spatial.model import DEFAULT_D
from .spatial.sampler import (DEFAULT_THRESHOLD, SpatialConfig, activation_maps, mls_breakdown,
                              run_spatial)
from .spatial.synthetic import synthetic_dataset

MARGINS = ("kde", "tkde", "empirical", "normal")
MLS_ROWS = ("Active", "Inactive", "Overall", "E(q|y)", "Std(q|y)")
DENSITY_POINTS = 201


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--sweeps", type=int, default=None)
    p.add_argument("--burnin", type=int, default=None)
    p.add_argument("--g-prior", default=None,
                   help="hyper-g, hyper-g-n, zellner-siow or fixed:<value>")
    p.add_argument("--margin", choices=MARGINS, default="kde")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copulavs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="run the selection sampler on a regression CSV")
    _common(p)
    p.add_argument("--data", type=Path, required=True)

    p = sub.add_parser("predict", help="predictive means and densities at new rows")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--new", type=Path, required=True,
                   help="CSV of new covariate rows; a leading response column adds log scores")

    p = sub.add_parser("bf", help="Bayes factor between two indicator vectors")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model-a", required=True, help="bit string, e.g. 1010")
    p.add_argument("--model-b", required=True)
    p.add_argument("--method", choices=("prop1", "marginal"), default="prop1")

    p = sub.add_parser("simulate", help="simulation study: CV log scores and PR curves")
    _common(p)
    p.add_argument("--case", choices=CASES + ("all",), default="all")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--p", type=int, default=20)
    p.add_argument("--snr", type=float, default=8.0)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--methods", default="copula/hyper-g,gaussian/hyper-g",
                   help="comma-separated model/g-prior pairs")

    p = sub.add_parser("fmri-fit", help="spatial activation maps for a voxel grid")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="dataset directory with manifest.txt")
    src.add_argument("--synthetic", type=int, metavar="SEED",
                     help="generate the planted-block synthetic grid with this seed")
    p.add_argument("--d", type=float, default=DEFAULT_D)
    p.add_argument("--theta-max", type=float, default=0.45)
    p.add_argument("--delta-file", type=Path, default=None)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    return parser


def _parse_bits(s: str, p: int) -> np.ndarray:
    s = s.strip()
    if len(s) != p or set(s) - {"0", "1"}:
        raise CopulaVSError("invalid-model", f"{s!r} is not a {p}-bit string")
    return np.array([c == "1" for c in s])


def _sampler_config(args, sweeps: int, burnin: int) -> SamplerConfig:
    return SamplerConfig(sweeps=args.sweeps or sweeps,
                         burnin=burnin if args.burnin is None else args.burnin, seed=args.seed)


def _load(args):
    table = io.load_regression_csv(args.data)
    margin = fit_margin(table.y, args.margin)
    data = table.to_data(margin)
    prior = parse_g_prior(args.g_prior or "hyper-g", data.n)
    return table, margin, data, prior


def _base_manifest(args, **extra) -> dict:
    resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    return {"command": args.command, "arguments": resolved, **extra}


def cmd_fit(args) -> None:
    table, margin, data, prior = _load(args)
    config = _sampler_config(args, 2000, 500)
    trace = run_chain(data, prior, config)
    probs = inclusion_probabilities(trace)
    io.write_rows(args.out / "inclusion_probs.csv", ["covariate", "probability"],
                  zip(table.names[1:], probs))
    trace.to_csv(args.out / "trace.csv")
    io.write_rows(args.out / "top-models.csv", ["gamma", "frequency"], top_models(trace, 20))
    io.write_manifest(args.out, _base_manifest(
        args, g_prior=prior.label(), sampler=asdict(config), margin_kind=margin.kind,
        columns=list(table.names), centering_offsets=table.offsets, warnings=trace.warnings))


def cmd_predict(args) -> None:
    table, margin, data, prior = _load(args)
    config = _sampler_config(args, 2000, 500)
    trace = run_chain(data, prior, config)
    X_new, y_new = io.load_covariates_csv(args.new, table)
    X_raw = X_new + data.center
    means = [predictive_mean(trace, data, margin, x) for x in X_raw]
    rows = [[i, mu] for i, mu in enumerate(means)]
    header = ["row", "mean"]
    if y_new is not None:
        header.append("log_score")
        scores = pointwise_log_scores(trace, data, margin, X_raw, y_new)
        rows = [r + [s] for r, s in zip(rows, scores)]
    io.write_rows(args.out / "predictions.csv", header, rows)
    y_grid = margin.quantile(np.linspace(0.001, 0.999, DENSITY_POINTS))
    dens_rows = []
    for i, x in enumerate(X_raw):
        for y, ld in zip(y_grid, log_predictive_density(trace, data, margin, x, y_grid)):
            dens_rows.append([i, float(y), float(np.exp(ld))])
    io.write_rows(args.out / "densities.csv", ["row", "y", "density"], dens_rows)
    io.write_manifest(args.out, _base_manifest(
        args, g_prior=prior.label(), sampler=asdict(config), margin_kind=margin.kind,
        columns=list(table.names), centering_offsets=table.offsets))


def cmd_bf(args) -> None:
    table, margin, data, prior = _load(args)
    a, b = _parse_bits(args.model_a, data.p), _parse_bits(args.model_b, data.p)
    log_bf = log_bayes_factor(data, BfRequest(a, b, prior, method=args.method))
    rows = [["log_bf", float(log_bf)]]
    for name, gam in (("a", a), ("b", b)):
        g_med = posterior_median_g(data, gam, prior)
        rows.append([f"g_median_{name}", float(g_med)])
        rows.append([f"r2_{name}", copula_r_squared(build_factor(data.X, gam), g_med, data.z)])
    io.write_rows(args.out / "bf.csv", ["quantity", "value"], rows)
    io.write_manifest(args.out, _base_manifest(
        args, g_prior=prior.label(), margin_kind=margin.kind, columns=list(table.names),
        centering_offsets=table.offsets))


def _methods(spec: str) -> list[Method]:
    out = []
    for item in spec.split(","):
        model, _, prior = item.strip().partition("/")
        if model not in ("copula", "gaussian"):
            raise CopulaVSError("invalid-method", repr(item))
        out.append(Method(model, prior or "hyper-g"))
    return out


def cmd_simulate(args) -> None:
    config = _sampler_config(args, 1000, 250)
    methods = _methods(args.methods)
    cases = CASES if args.case == "all" else (args.case,)
    summary = []
    for case in cases:
        scenario = SimScenario(case, args.n, args.p, args.snr, args.replicates, args.seed)
        report = run_study(scenario, methods, config, folds=args.folds, threads=args.threads,
                           out_dir=args.out / case)
        for m in methods:
            rec, prec = report.curves[m.label]
            summary.append([case, m.label, report.mean_mls(m.label), precision_at_recall(rec, prec)])
    io.write_rows(args.out / "summary.csv",
                  ["case", "method", "mean_mls", "precision_at_recall_0.8"], summary)
    io.write_manifest(args.out, _base_manifest(args, sampler=asdict(config), cases=list(cases)))


def cmd_fmri_fit(args) -> None:
    if args.data is not None:
        dataset, man = sio.load_fmri_dataset(args.data, args.delta_file)
        source = {"dataset_manifest": man}
    else:
        dataset, _ = synthetic_dataset(args.synthetic)
        sio.save_fmri_dataset(args.out / "dataset", dataset, {"synthetic_seed": args.synthetic})
        source = {"synthetic_seed": args.synthetic}
    config = SpatialConfig(sweeps=args.sweeps or 1000, burnin=250 if args.burnin is None else args.burnin,
                           seed=args.seed, d=args.d, g_prior=args.g_prior or "hyper-g-n",
                           theta_max=args.theta_max, theta_init=min(0.1, args.theta_max),
                           margin=args.margin)
    trace = run_spatial(dataset, config)
    maps = activation_maps(trace, dataset, args.threshold)
    sio.write_grid_csv(args.out / "probability.csv", maps.probability)
    sio.write_grid_csv(args.out / "amplitude.csv", maps.amplitude)
    sio.write_grid_csv(args.out / "active.csv", np.where(dataset.mask, maps.active, np.nan))
    sio.write_pgm(args.out / "probability.pgm", maps.probability, 0.0, 1.0)
    sio.write_pgm(args.out / "amplitude.pgm", maps.amplitude)
    sio.write_pgm(args.out / "active.pgm", maps.active.astype(float), 0.0, 1.0)
    io.write_rows(args.out / "traces.csv", ["sweep", "g", "theta", "q"],
                  ([k, float(g), float(t), int(q)] for k, (g, t, q)
                   in enumerate(zip(trace.g, trace.theta, trace.q))))
    mls = mls_breakdown(trace, maps.active, dataset.mask)
    io.write_rows(args.out / "mls.csv", ["metric", "value"], ([k, mls[k]] for k in MLS_ROWS))
    io.write_manifest(args.out, _base_manifest(
        args, config=asdict(config), threshold=maps.threshold, grid_shape=list(dataset.mask.shape),
        T=dataset.T, g_accept_rate=trace.g_accept_rate, notes=trace.notes, **source))


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "bf": cmd_bf, "simulate": cmd_simulate,
            "fmri-fit": cmd_fmri_fit}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args)
    except (CopulaVSError, OSError) as exc:
        print(f"copulavs {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
