"""Regression CSV ingestion and run manifests."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from .copula_core import RegressionData
from .errors import CopulaVSError
from .margins import MIN_SAMPLE, MarginModel

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True, eq=False)
class RegressionTable:
    """Parsed regression CSV: response, centered covariates and the column means removed."""

    names: tuple
    y: np.ndarray
    X: np.ndarray
    offsets: np.ndarray

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def to_data(self, margin: MarginModel) -> RegressionData:
        return RegressionData.from_arrays(self.y, self.X, margin)

    def center(self, X_new) -> np.ndarray:
        return np.asarray(X_new, dtype=float) - self.offsets


def _parse_rows(path, min_cols: int):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CopulaVSError("csv-parse", f"{path} is empty") from None
        if len(header) < min_cols:
            raise CopulaVSError("csv-parse", f"{path}: need at least {min_cols} columns")
        rows = []
        for r, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise CopulaVSError("csv-parse", f"row {r}: {len(row)} cells, header has {len(header)}")
            vals = []
            for c, cell in enumerate(row, start=1):
                if cell.strip() == "":
                    raise CopulaVSError("missing-value", f"row {r}, column {c} is empty")
                try:
                    v = float(cell)
                except ValueError:
                    raise CopulaVSError("csv-parse",
                                        f"row {r}, column {c}: {cell!r} is not numeric") from None
                if not math.isfinite(v):
                    raise CopulaVSError("non-finite-data", f"row {r}, column {c}")
                vals.append(v)
            rows.append(vals)
    return tuple(h.strip() for h in header), np.array(rows, dtype=float).reshape(len(rows), len(header))


def load_regression_csv(path) -> RegressionTable:
    """Read ``response, x1, .., xp`` with a header row; covariates are centered.

    Rows and columns in error messages are 1-based and count data rows only.
    """
    names, M = _parse_rows(path, 2)
    if M.shape[0] < MIN_SAMPLE:
        raise CopulaVSError("insufficient-data", f"{M.shape[0]} rows, need {MIN_SAMPLE}")
    X = M[:, 1:]
    offsets = X.mean(axis=0)
    return RegressionTable(names, M[:, 0].copy(), X - offsets, offsets)


def load_covariates_csv(path, table: RegressionTable):
    """New design rows for prediction.

    The file has either the ``p`` covariate columns or all ``p + 1`` training
    columns; in the latter case the response column is returned too.
    """
    names, M = _parse_rows(path, 1)
    if M.shape[1] == table.p + 1:
        return table.center(M[:, 1:]), M[:, 0]
    if M.shape[1] == table.p:
        return table.center(M), None
    raise CopulaVSError("shape-mismatch", f"{path}: {M.shape[1]} columns for p = {table.p}")


def write_regression_csv(path, y, X, names=None) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    names = names or ["y"] + [f"x{j + 1}" for j in range(X.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for yi, row in zip(np.asarray(y, dtype=float), X):
            w.writerow([repr(float(yi))] + [repr(float(v)) for v in row])


def write_rows(path, header, rows) -> None:
    """CSV with a header; floats are written with ``repr`` so they round-trip."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def package_version() -> str:
    try:
        return metadata.version("copulavs")
    except metadata.PackageNotFoundError:
        return "unknown"


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_manifest(out_dir, entries: dict) -> Path:
    """One ``manifest.json`` per run directory, with sorted keys for stable bytes."""
    path = Path(out_dir) / MANIFEST_NAME
    body = {"version": package_version(), **_jsonable(entries)}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path
