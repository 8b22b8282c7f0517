import os
import subprocess
import sys

import numpy as np
import pytest

from mvver import kernels

needs_numba = pytest.mark.skipif("numba" not in kernels.BACKENDS, reason="numba not installed")


def test_softmax_rows_stable():
    P = kernels.softmax_rows(np.array([[1000.0, 0.0], [-1000.0, -1000.0]]))
    np.testing.assert_allclose(P, [[1.0, 0.0], [0.5, 0.5]])


def test_unknown_backend():
    with pytest.raises(ValueError, match="unknown"):
        kernels.get_backend("cuda")


@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("", None)])
def test_env_flag_selects_default(flag, expected):
    env = dict(os.environ, MVVER_DISABLE_JIT=flag)
    code = "from mvver import kernels; print(kernels.get_backend().name)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    want = expected or ("numba" if "numba" in kernels.BACKENDS else "numpy")
    assert out.stdout.strip() == want


@needs_numba
@pytest.mark.parametrize("kind", ["softmax", "mlp"])
def test_training_kernels_agree(kind):
    rng = np.random.default_rng(0)
    d, H, C, N = 4, 6, 3, 90
    X = rng.normal(size=(N, d))
    y = rng.integers(0, C, N).astype(np.int64)
    orders = np.stack([rng.permutation(N) for _ in range(8)]).astype(np.int64)
    size = kernels.softmax_size(d, C) if kind == "softmax" else kernels.mlp_size(d, H, C)
    theta0 = rng.normal(size=size) * 0.1
    runs = {}
    for name, be in kernels.BACKENDS.items():
        theta = theta0.copy()
        args = (32, 0.01, 0.9, 0.999, 1e-8, 0.001)
        if kind == "softmax":
            losses = be.train_softmax(theta, X, y, orders, d, C, *args)
        else:
            losses = be.train_mlp(theta, X, y, orders, d, H, C, *args)
        runs[name] = (theta, losses)
    np.testing.assert_allclose(runs["numpy"][0], runs["numba"][0], rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(runs["numpy"][1], runs["numba"][1], rtol=1e-9)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.parametrize("name", sorted(kernels.BACKENDS))
def test_divergence_truncates_losses(name):
    be = kernels.BACKENDS[name]
    X = np.ones((4, 1)) * 1e200
    y = np.array([0, 1, 0, 1], dtype=np.int64)
    orders = np.tile(np.arange(4, dtype=np.int64), (3, 1))
    theta = np.ones(kernels.softmax_size(1, 2)) * 1e200
    losses = be.train_softmax(theta, X, y, orders, 1, 2, 2, 1e300, 0.9, 0.999, 1e-8, 0.0)
    assert losses.shape[0] < 3 or not np.all(np.isfinite(losses))
