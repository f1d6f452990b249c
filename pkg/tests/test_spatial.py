import math

import numpy as np
import pytest

from copulavs.errors import CopulaVSError
from copulavs.spatial import (DEFAULT_THRESHOLD, FmriDataset, IsingPrior, SpatialConfig,
                              VoxelKernels, activation_maps, activation_threshold, build_neighbors,
                              fourier_basis, ising_conditional, log_unnormalized, mls_breakdown,
                              run_spatial, synthetic_dataset, tabulate_log_partition,
                              voxel_log_kernel)
from copulavs.spatial import io as sio
from oracles import (dense_voxel_kernel, dense_voxel_R, grid_edges, ising_conditional_enum,
                     ising_enumerate, ising_log_z)


# -- voxel copula ----------------------------------------------------------

def test_zero_trend_inactive_kernel(rng):
    z = rng.normal(size=12)
    k = VoxelKernels(z[None, :], rng.normal(size=(1, 12)), fourier_basis(12, 4), d=0.0)
    assert voxel_log_kernel(k, 0, 0, 5.0) == pytest.approx(-0.5 * z @ z, abs=1e-12)


def test_two_point_scale_example():
    W = np.eye(2)
    x = np.array([[1.0, 1.0]])
    k = VoxelKernels(np.array([[0.3, -0.2]]), x, W, d=1.0)
    _, s = k.fitted(2.0)
    np.testing.assert_allclose(s[0], 3 ** -0.5, rtol=1e-14)
    _, s_dense = dense_voxel_R(x[0], W, 1.0, 1, 2.0)
    np.testing.assert_allclose(s_dense, 3 ** -0.5, rtol=1e-14)


@pytest.mark.parametrize("d", [0.5, 10.0, 100.0])
def test_kernels_match_dense(rng, d):
    T, m, N = 6, 2, 5
    W = fourier_basis(T, m)
    Z, X = rng.normal(size=(N, T)), rng.normal(size=(N, T))
    k = VoxelKernels(Z, X, W, d)
    for g in (0.3, 4.0, 250.0):
        for i in range(N):
            for gam in (0, 1):
                want = dense_voxel_kernel(Z[i], X[i], W, d, gam, g)
                assert voxel_log_kernel(k, i, gam, g) == pytest.approx(want, abs=1e-9)
            R, _ = dense_voxel_R(X[i], W, d, 1, g)
            assert np.max(np.abs(np.diag(R) - 1)) < 1e-10


def test_amplitude_and_fitted_mean_match_dense(rng):
    T, d, g = 20, 10.0, 7.0
    W = fourier_basis(T, 4)
    Z, X = rng.normal(size=(3, T)), rng.normal(size=(3, T))
    k = VoxelKernels(Z, X, W, d)
    mu, s = k.fitted(g)
    for i in range(3):
        x = X[i]
        om = np.eye(T) + d * W @ W.T + g * np.outer(x, x) / (x @ x)
        sd = np.sqrt(np.diag(om))
        u = Z[i] * sd
        oinv_u = np.linalg.solve(om, u)
        assert k.beta_hat(g)[i] == pytest.approx(g / (x @ x) * x @ oinv_u, rel=1e-10)
        np.testing.assert_allclose(mu[i], (u - oinv_u) / sd, atol=1e-10)
        np.testing.assert_allclose(s[i], 1 / sd, rtol=1e-12)


def test_zero_stimulus_voxel_never_active(rng):
    X = rng.normal(size=(2, 10))
    X[1] = 0
    k = VoxelKernels(rng.normal(size=(2, 10)), X, fourier_basis(10, 2), 10.0)
    assert not k.valid[1] and k.k1(3.0)[1] == -np.inf
    with pytest.raises(CopulaVSError):
        voxel_log_kernel(k, 1, 1, 3.0)


# -- Ising prior -----------------------------------------------------------

def test_conditional_examples():
    mask = np.ones((3, 3), bool)
    nb = build_neighbors(mask)
    prior = IsingPrior(nb, np.zeros(9), theta=0.0)
    assert ising_conditional(prior, np.zeros(9, bool), 4) == 0.5
    full = IsingPrior(nb, np.zeros(9), theta=0.45)
    gam = np.ones(9, bool)
    expected = 1 / (1 + math.exp(-0.45 * (4 + 4 / math.sqrt(2))))
    assert ising_conditional(full, gam, 4) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.9557, abs=1e-4)


@pytest.mark.parametrize("shape", [(2, 2), (3, 3)])
def test_conditionals_match_enumeration(shape, rng):
    n = shape[0] * shape[1]
    nb = build_neighbors(np.ones(shape, bool))
    edges = grid_edges(*shape)
    for _ in range(20):
        delta, theta = rng.normal(size=n), rng.uniform(0, 0.45)
        prior = IsingPrior(nb, delta, theta)
        gam = rng.random(n) < 0.5
        for i in range(n):
            want = ising_conditional_enum(gam, i, delta, theta, edges)
            assert abs(ising_conditional(prior, gam, i) - want) < 1e-12


def test_flip_symmetry_without_field():
    nb = build_neighbors(np.ones((2, 2), bool))
    prior = IsingPrior(nb, np.zeros(4), 0.3)
    states, logm = ising_enumerate(np.zeros(4), 0.3, grid_edges(2, 2))
    for s, lm in zip(states, logm):
        assert log_unnormalized(prior, s) == pytest.approx(lm, abs=1e-12)
        assert log_unnormalized(prior, s) == pytest.approx(log_unnormalized(prior, ~s), abs=1e-12)


def test_partition_table_2x2():
    nb = build_neighbors(np.ones((2, 2), bool))
    table = tabulate_log_partition(nb, np.zeros(4), np.linspace(0, 0.45, 46), seed=1)
    edges = grid_edges(2, 2)
    diff = float(table(0.3) - table(0.0))
    want = ising_log_z(np.zeros(4), 0.3, edges) - ising_log_z(np.zeros(4), 0.0, edges)
    assert abs(diff - want) < 0.01
    assert np.all(table.dlog_z >= 0)
    assert table(0.0) == pytest.approx(4 * math.log(2))


def test_prior_validation():
    nb = build_neighbors(np.ones((2, 2), bool))
    with pytest.raises(CopulaVSError):
        IsingPrior(nb, np.zeros(4), theta=0.5)
    with pytest.raises(CopulaVSError):
        IsingPrior(nb, np.zeros(3))


def test_neighbors_respect_mask():
    mask = np.array([[1, 1, 0], [0, 1, 1]], bool)
    nb = build_neighbors(mask)
    assert nb.n == 4
    deg = np.diff(nb.ptr)
    assert deg.tolist() == [2, 3, 3, 2]
    w = {round(v, 12) for v in nb.weight}
    assert w <= {1.0, round(1 / math.sqrt(2), 12)}


# -- sampler ---------------------------------------------------------------

def test_threshold():
    assert round(activation_threshold(), 4) == 0.8722
    assert DEFAULT_THRESHOLD == 0.8722


def test_decoupled_voxels_match_two_model_odds(rng):
    mask = np.ones((3, 4), bool)
    T = 30
    x = np.sin(np.arange(T))
    series = rng.normal(size=(12, T)) + np.outer(rng.uniform(0, 0.6, 12), x)
    ds = FmriDataset.from_arrays(mask, series, x, delta=-1.0)
    cfg = SpatialConfig(sweeps=20, burnin=5, d=10.0, g_prior="fixed:8", theta_init=0.0,
                        theta_fixed=True, margin="normal")
    tr = run_spatial(ds, cfg)
    from copulavs.margins import fit_margin
    for i in range(12):
        z = fit_margin(series[i], "normal").pseudo_data(series[i])
        lo = dense_voxel_kernel(z, x, ds.W, 10.0, 1, 8.0) - dense_voxel_kernel(z, x, ds.W, 10.0, 0, 8.0) - 1.0
        assert tr.prob[i] == pytest.approx(1 / (1 + math.exp(-lo)), abs=1e-9)


@pytest.fixture(scope="module")
def synthetic_fit():
    ds, truth = synthetic_dataset(seed=2)
    tr = run_spatial(ds, SpatialConfig(sweeps=400, burnin=100, seed=2, d=10.0))
    return ds, truth, tr


def test_synthetic_recovery_and_acceptance(synthetic_fit):
    ds, truth, tr = synthetic_fit
    maps = activation_maps(tr, ds)
    assert (maps.active != truth).sum() <= 2
    assert tr.g_accept_rate > 0.5
    assert np.all((tr.theta >= 0) & (tr.theta <= 0.45))
    never = (maps.probability < 1e-6) & ds.mask
    assert np.all(np.abs(maps.amplitude[never]) < 1e-6)


def test_mls_breakdown_rows(synthetic_fit):
    ds, truth, tr = synthetic_fit
    out = mls_breakdown(tr, truth, ds.mask)
    assert list(out) == ["Active", "Inactive", "Overall", "E(q|y)", "Std(q|y)"]
    assert out["Overall"] == pytest.approx((16 * out["Active"] + 240 * out["Inactive"]) / 256)


def test_spatial_deterministic():
    ds, _ = synthetic_dataset(seed=4, rows=6, cols=6, block=(1, 1, 2))
    cfg = SpatialConfig(sweeps=60, burnin=20, seed=3, d=10.0, table_sweeps=200, table_burnin=50)
    a, b = run_spatial(ds, cfg), run_spatial(ds, cfg)
    assert np.array_equal(a.prob, b.prob) and np.array_equal(a.g, b.g)


# -- dataset container -----------------------------------------------------

def test_empty_mask_rejected():
    with pytest.raises(CopulaVSError, match="no in-mask voxels"):
        FmriDataset.from_arrays(np.zeros((2, 2), bool), np.zeros((0, 5)), np.ones(5))


def test_container_round_trip(tmp_path):
    ds, _ = synthetic_dataset(seed=1, rows=5, cols=4, T=40, block=(1, 1, 2))
    sio.save_fmri_dataset(tmp_path, ds)
    back, man = sio.load_fmri_dataset(tmp_path)
    assert man["rows"] == "5" and int(man["T"]) == 40
    for name in ("mask", "series", "stimulus", "delta"):
        assert np.array_equal(getattr(ds, name), getattr(back, name))
    np.testing.assert_allclose(back.W, ds.W)


def test_pgm_writer(tmp_path):
    grid = np.array([[0.0, 0.5], [1.0, np.nan]])
    sio.write_pgm(tmp_path / "a.pgm", grid, 0.0, 1.0)
    assert sio.read_pgm(tmp_path / "a.pgm").tolist() == [[0, 128], [255, 0]]
