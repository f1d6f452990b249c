"""Compare sampler visit frequencies with the enumerated posterior for a
small fixed-g problem."""
import itertools

import numpy as np
from scipy.special import betaln

from copulavs import GPrior, RegressionData, SamplerConfig, build_factor, log_gauss_copula_kernel, run_chain


def main(n=20, p=3, g=10.0, sweeps=100_000):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(n, p))
    y = X @ rng.normal(scale=0.5, size=p) + rng.normal(size=n)
    data = RegressionData.from_arrays(y, X, z=(y - y.mean()) / y.std())
    models = [np.array(b, bool) for b in itertools.product([0, 1], repeat=p)]
    logw = np.array([log_gauss_copula_kernel(build_factor(data.X, m), g, data.z)
                     + betaln(p - m.sum() + 1, m.sum() + 1) for m in models])
    exact = np.exp(logw - logw.max())
    exact /= exact.sum()
    tr = run_chain(data, GPrior("fixed", fixed_value=g), SamplerConfig(sweeps=sweeps, burnin=1000))
    codes = tr.kept_gammas.astype(int) @ (2 ** np.arange(p)[::-1])
    freq = np.bincount(codes, minlength=2 ** p) / codes.size
    for m, e, f in zip(models, exact, freq):
        print("".join(map(str, m.astype(int))), f"{e:.4f}", f"{f:.4f}")
    print("TV", 0.5 * np.abs(freq - exact).sum())


if __name__ == "__main__":
    main()
