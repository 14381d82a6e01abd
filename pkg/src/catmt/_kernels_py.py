"""Pure numpy versions of the compiled kernels, used when the extension is unavailable."""

from __future__ import annotations

import numpy as np


def masked_softmax(x: np.ndarray, keep: np.ndarray) -> np.ndarray:
    keep = keep.astype(bool)
    if not keep.any(axis=1).all():
        row = int(np.argmin(keep.any(axis=1)))
        raise ValueError(f"attention row {row} has no unmasked key")
    scores = np.where(keep, x, -np.inf)
    m = scores.max(axis=1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    return y * (gy - (y * gy).sum(axis=1, keepdims=True))


def layer_norm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float):
    mean = x.mean(axis=1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * rstd
    return xhat * gain + bias, xhat, rstd[:, 0]


def layer_norm_backward(gy: np.ndarray, xhat: np.ndarray, rstd: np.ndarray, gain: np.ndarray):
    g = gy * gain
    gx = rstd[:, None] * (g - g.mean(axis=1, keepdims=True) - xhat * (g * xhat).mean(axis=1, keepdims=True))
    return gx.astype(gy.dtype), (gy * xhat).sum(axis=0), gy.sum(axis=0)


def lcs_length(a: np.ndarray, b: np.ndarray) -> int:
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    row = [0] * (m + 1)
    for i in range(n):
        diag = 0
        ai = a[i]
        for j in range(m):
            tmp = row[j + 1]
            if ai == b[j]:
                row[j + 1] = diag + 1
            elif row[j] > row[j + 1]:
                row[j + 1] = row[j]
            diag = tmp
    return row[m]
