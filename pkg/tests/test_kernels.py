import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from catmt import _kernels_py, kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    before = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(before)


def test_compiled_extension_is_built():
    # the editable install compiles the extension; the fallback is for bare checkouts
    importlib.import_module("catmt._kernels")


@pytest.mark.parametrize("value, expected", [("1", "python"), ("0", "compiled")])
def test_env_var_selects_backend(value, expected):
    env = {**os.environ, "CATMT_PURE_PYTHON": value}
    out = subprocess.run(
        [sys.executable, "-c", "import catmt; print(catmt.KERNEL_BACKEND)"], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == expected


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_masked_softmax_matches_reference(backend, dtype):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 5, 7)).astype(dtype)
    keep = rng.random(x.shape) > 0.4
    keep[..., 2] = True
    y = kernels.masked_softmax(x, keep)
    assert y.dtype == dtype
    assert np.all(y[~keep] == 0)
    e = np.where(keep, np.exp(x.astype(np.float64)), 0)
    np.testing.assert_allclose(y, e / e.sum(-1, keepdims=True), rtol=1e-5 if dtype == np.float32 else 1e-12)


def test_masked_softmax_rejects_empty_row(backend):
    keep = np.ones((2, 3), dtype=bool)
    keep[1] = False
    with pytest.raises(ValueError, match="row 1"):
        kernels.masked_softmax(np.zeros((2, 3)), keep)


def test_layer_norm_forward(backend):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 6))
    g, b = rng.normal(size=6), rng.normal(size=6)
    y, _, _ = kernels.layer_norm_forward(x, g, b, 1e-5)
    ref = (x - x.mean(1, keepdims=True)) / np.sqrt(x.var(1, keepdims=True) + 1e-5) * g + b
    np.testing.assert_allclose(y, ref, rtol=1e-10, atol=1e-12)


def test_backends_agree_on_float64():
    if len(kernels.available_backends()) < 2:
        pytest.skip("compiled kernels not built")
    from catmt import _kernels

    rng = np.random.default_rng(2)
    x = rng.normal(size=(8, 9))
    keep = np.ones_like(x, dtype=bool)
    keep[:, 5:] = False
    gy = rng.normal(size=x.shape)
    y1 = _kernels.masked_softmax(x, keep.view(np.uint8))
    y2 = _kernels_py.masked_softmax(x, keep)
    np.testing.assert_allclose(y1, y2, rtol=1e-14, atol=0)
    np.testing.assert_allclose(_kernels.softmax_backward(y1, gy), _kernels_py.softmax_backward(y1, gy), rtol=1e-12, atol=1e-15)
    g, b = rng.normal(size=9), rng.normal(size=9)
    f1 = _kernels.layer_norm_forward(x, g, b, 1e-5)
    f2 = _kernels_py.layer_norm_forward(x, g, b, 1e-5)
    for u, v in zip(f1, f2):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-14)
    for u, v in zip(_kernels.layer_norm_backward(gy, f1[1], f1[2], g), _kernels_py.layer_norm_backward(gy, f2[1], f2[2], g)):
        np.testing.assert_allclose(u, v, rtol=1e-10, atol=1e-12)


def lcs_brute(a, b):
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def f(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + f(i + 1, j + 1)
        return max(f(i + 1, j), f(i, j + 1))

    return f(0, 0)


def test_lcs_against_recursive_oracle(backend):
    rng = np.random.default_rng(3)
    for _ in range(200):
        a = tuple(rng.integers(0, 4, size=rng.integers(0, 9)))
        b = tuple(rng.integers(0, 4, size=rng.integers(0, 9)))
        assert kernels.lcs_length(a, b) == lcs_brute(a, b)
