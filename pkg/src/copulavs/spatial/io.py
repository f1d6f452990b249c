"""Plain-text grid container for voxel data and map writers.

A dataset directory holds ``manifest.txt`` (``key = value`` lines) and four
CSV payloads named in the manifest:

* ``mask``: rows x cols grid of 0/1;
* ``delta``: rows x cols grid of external-field values (optional);
* ``stimulus``: one column of length T (shared) or one row per voxel;
* ``signal``: one row per in-mask voxel, ``row, col, y_1 .. y_T``.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..errors import CopulaVSError
from .model import FmriDataset

REQUIRED_KEYS = ("rows", "cols", "T", "mask", "signal", "stimulus")


def read_manifest(path) -> dict:
    out = {}
    for k, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CopulaVSError("manifest-parse", f"line {k}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    missing = [k for k in REQUIRED_KEYS if k not in out]
    if missing:
        raise CopulaVSError("manifest-parse", f"missing keys {missing}")
    return out


def write_manifest(path, entries: dict) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in entries.items()))


def _read_matrix(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise CopulaVSError("csv-parse", f"{path}: row {r} is not numeric") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise CopulaVSError("csv-parse", f"{path}: empty or ragged")
    return np.array(rows)


def _write_matrix(path, M, fmt=repr) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.atleast_2d(M):
            w.writerow([fmt(float(v)) for v in row])


def load_fmri_dataset(directory, delta_file=None) -> tuple[FmriDataset, dict]:
    """Read a container directory; ``delta_file`` overrides the manifest entry."""
    d = Path(directory)
    man = read_manifest(d / "manifest.txt")
    rows, cols, T = int(man["rows"]), int(man["cols"]), int(man["T"])
    mask = _read_matrix(d / man["mask"]).astype(bool)
    if mask.shape != (rows, cols):
        raise CopulaVSError("shape-mismatch", f"mask is {mask.shape}, manifest says {(rows, cols)}")
    if not mask.any():
        raise CopulaVSError("no in-mask voxels")
    sig = _read_matrix(d / man["signal"])
    if sig.shape[1] != T + 2:
        raise CopulaVSError("shape-mismatch", f"signal rows need row, col and {T} values")
    index = {(int(r), int(c)): k for k, (r, c) in enumerate(sig[:, :2])}
    coords = [tuple(rc) for rc in np.argwhere(mask)]
    missing = [rc for rc in coords if rc not in index]
    if missing:
        raise CopulaVSError("shape-mismatch", f"no signal for in-mask voxel {missing[0]}")
    series = sig[[index[rc] for rc in coords], 2:]
    stim = _read_matrix(d / man["stimulus"])
    if stim.shape == (T, 1):
        stim = stim[:, 0]
    elif stim.shape != series.shape:
        raise CopulaVSError("shape-mismatch", "stimulus must be T x 1 or one row per voxel")
    delta_path = delta_file if delta_file is not None else (d / man["delta"] if "delta" in man else None)
    delta = None
    if delta_path is not None:
        delta = _read_matrix(delta_path)
        if delta.shape != mask.shape:
            raise CopulaVSError("shape-mismatch", "delta grid must match the mask")
    ds = FmriDataset.from_arrays(mask, series, stim, delta=delta, m=int(man.get("m", 8)))
    return ds, man


def save_fmri_dataset(directory, dataset: FmriDataset, extra: dict | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_matrix(d / "mask.csv", dataset.mask.astype(float), fmt=lambda v: str(int(v)))
    _write_matrix(d / "delta.csv", dataset.to_grid(dataset.delta, fill=0.0))
    if np.all(dataset.stimulus == dataset.stimulus[0]):
        _write_matrix(d / "stimulus.csv", dataset.stimulus[0][:, None])
    else:
        _write_matrix(d / "stimulus.csv", dataset.stimulus)
    with open(d / "signal.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        for (r, c), row in zip(dataset.coords, dataset.series):
            w.writerow([int(r), int(c)] + [repr(float(v)) for v in row])
    rows, cols = dataset.mask.shape
    entries = {"rows": rows, "cols": cols, "T": dataset.T, "m": dataset.m,
               "mask": "mask.csv", "delta": "delta.csv", "stimulus": "stimulus.csv",
               "signal": "signal.csv"}
    entries.update(extra or {})
    write_manifest(d / "manifest.txt", entries)


def write_grid_csv(path, grid, header_prefix: str = "c") -> None:
    """Grid as CSV with a header row; NaN cells (outside the mask) are empty."""
    grid = np.asarray(grid, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{header_prefix}{j}" for j in range(grid.shape[1])])
        for row in grid:
            w.writerow(["" if np.isnan(v) else repr(float(v)) for v in row])


def write_pgm(path, grid, lo: float | None = None, hi: float | None = None) -> None:
    """8-bit ASCII PGM (P2); values are scaled linearly from ``[lo, hi]`` and NaN maps to 0."""
    grid = np.asarray(grid, dtype=float)
    finite = grid[np.isfinite(grid)]
    lo = float(finite.min()) if lo is None and finite.size else (0.0 if lo is None else lo)
    hi = float(finite.max()) if hi is None and finite.size else (1.0 if hi is None else hi)
    span = hi - lo if hi > lo else 1.0
    pix = np.where(np.isfinite(grid), np.clip(np.rint(255 * (grid - lo) / span), 0, 255), 0).astype(int)
    lines = ["P2", f"{grid.shape[1]} {grid.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in pix]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    tokens = [t for line in Path(path).read_text().splitlines()
              if not line.startswith("#") for t in line.split()]
    if tokens[0] != "P2":
        raise CopulaVSError("pgm-parse", "expected an ASCII P2 image")
    w, h, _ = (int(t) for t in tokens[1:4])
    return np.array(tokens[4:4 + w * h], dtype=int).reshape(h, w)
