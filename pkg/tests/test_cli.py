import csv
import json

import numpy as np
import pytest

from copulavs import io
from copulavs.cli import main
from copulavs.errors import CopulaVSError


@pytest.fixture
def regression_csv(tmp_path, rng):
    n, p = 40, 3
    X = rng.normal(size=(n, p)) + np.array([5.0, -2.0, 0.5])
    y = np.exp(0.8 * X[:, 0] + 0.3 * rng.normal(size=n))
    path = tmp_path / "train.csv"
    io.write_regression_csv(path, y, X)
    return path, y, X


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_bad_cell_is_located(tmp_path):
    path = tmp_path / "bad.csv"
    rows = ["y,a,b,c"] + [f"{i},1,2,3" for i in range(12)]
    rows[2] = "1,2,3,abc"
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(CopulaVSError, match="row 2, column 4"):
        io.load_regression_csv(path)


def test_missing_and_short(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("y,a\n" + "\n".join(f"{i}," for i in range(12)) + "\n")
    with pytest.raises(CopulaVSError, match="missing-value"):
        io.load_regression_csv(path)
    path.write_text("y,a\n" + "\n".join(f"{i},{i}" for i in range(5)) + "\n")
    with pytest.raises(CopulaVSError, match="insufficient-data"):
        io.load_regression_csv(path)


def test_round_trip_and_centering(regression_csv):
    path, y, X = regression_csv
    table = io.load_regression_csv(path)
    assert np.array_equal(table.y, y)
    np.testing.assert_allclose(table.X.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(table.X + table.offsets, X, rtol=0, atol=1e-12)
    assert table.names == ("y", "x1", "x2", "x3")


def test_fit_outputs(tmp_path, regression_csv):
    path, _, _ = regression_csv
    out = tmp_path / "fit"
    assert main(["fit", "--data", str(path), "--out", str(out), "--sweeps", "80", "--burnin", "20"]) == 0
    for name in ("inclusion_probs.csv", "trace.csv", "top-models.csv", "manifest.json"):
        assert (out / name).exists()
    probs = _read(out / "inclusion_probs.csv")
    assert probs[0] == ["covariate", "probability"] and [r[0] for r in probs[1:]] == ["x1", "x2", "x3"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "fit" and man["g_prior"] == "hyper-g"


def test_fixed_prior_recorded(tmp_path, regression_csv):
    path, _, _ = regression_csv
    out = tmp_path / "fixed"
    assert main(["fit", "--data", str(path), "--out", str(out), "--sweeps", "30", "--burnin", "5",
                 "--g-prior", "fixed:100"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["g_prior"] == "fixed:100"
    trace = _read(out / "trace.csv")
    col = trace[0].index("g")
    assert {float(r[col]) for r in trace[1:]} == {100.0}


def test_bad_arguments_exit_nonzero(tmp_path, regression_csv):
    path, _, _ = regression_csv
    assert main(["bf", "--data", str(path), "--out", str(tmp_path / "b"),
                 "--model-a", "10", "--model-b", "011"]) == 2
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "c")]) == 2


def test_predict_and_bf(tmp_path, regression_csv, rng):
    path, _, X = regression_csv
    new = tmp_path / "new.csv"
    io.write_regression_csv(new, np.exp(0.8 * X[:3, 0]), X[:3])
    out = tmp_path / "pred"
    assert main(["predict", "--data", str(path), "--new", str(new), "--out", str(out),
                 "--sweeps", "40", "--burnin", "10"]) == 0
    pred = _read(out / "predictions.csv")
    assert pred[0] == ["row", "mean", "log_score"] and len(pred) == 4
    assert len(_read(out / "densities.csv")) == 1 + 3 * 201
    out = tmp_path / "bf"
    assert main(["bf", "--data", str(path), "--out", str(out), "--model-a", "100",
                 "--model-b", "000"]) == 0
    bf = dict((k, float(v)) for k, v in _read(out / "bf.csv")[1:])
    assert bf["log_bf"] > 0 and 0 <= bf["r2_a"] <= 1 and bf["r2_b"] == 0


def test_fit_is_deterministic(tmp_path, regression_csv):
    path, _, _ = regression_csv
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        main(["fit", "--data", str(path), "--out", str(out), "--sweeps", "50", "--burnin", "10",
              "--seed", "9"])
        outs.append(out)
    for name in ("inclusion_probs.csv", "trace.csv", "top-models.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_fmri_fit_synthetic(tmp_path):
    out = tmp_path / "fmri"
    assert main(["fmri-fit", "--synthetic", "1", "--out", str(out), "--sweeps", "30",
                 "--burnin", "10", "--d", "10"]) == 0
    mls = _read(out / "mls.csv")
    assert [r[0] for r in mls[1:]] == ["Active", "Inactive", "Overall", "E(q|y)", "Std(q|y)"]
    prob = _read(out / "probability.csv")
    assert len(prob) == 17 and len(prob[0]) == 16
    assert (out / "probability.pgm").read_text().startswith("P2")
    again = tmp_path / "again"
    assert main(["fmri-fit", "--data", str(out / "dataset"), "--out", str(again), "--sweeps", "30",
                 "--burnin", "10", "--d", "10"]) == 0
    assert (again / "probability.csv").read_bytes() == (out / "probability.csv").read_bytes()
