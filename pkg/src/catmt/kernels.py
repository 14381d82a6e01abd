"""Kernel backend selection.

The compiled extension ``catmt._kernels`` is used when it imports; otherwise
the numpy versions in ``catmt._kernels_py`` are. Setting ``CATMT_PURE_PYTHON=1``
forces the fallback. All callers go through the wrappers here, which handle
reshaping to 2-D, contiguity and dtype.
"""

from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _kernels_py


def _load_compiled() -> ModuleType | None:
    if os.environ.get("CATMT_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()
_impl: ModuleType = _compiled or _kernels_py
BACKEND = "compiled" if _compiled is not None else "python"


def available_backends() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def use_backend(name: str) -> None:
    """Switch the process-wide backend (``"compiled"`` or ``"python"``)."""
    global _impl, BACKEND
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        _impl = _compiled
    elif name == "python":
        _impl = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name


def _rows(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.reshape(-1, a.shape[-1]))


def masked_softmax(x: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, restricted to positions where ``keep`` is true."""
    keep = np.broadcast_to(keep, x.shape)
    out = _impl.masked_softmax(_rows(x), _rows(keep).view(np.uint8) if keep.dtype == bool else _rows(keep.astype(np.uint8)))
    return out.reshape(x.shape)


def softmax_backward(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    return _impl.softmax_backward(_rows(y), _rows(gy.astype(y.dtype, copy=False))).reshape(y.shape)


def layer_norm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5):
    y, xhat, rstd = _impl.layer_norm_forward(_rows(x), gain.astype(x.dtype, copy=False), bias.astype(x.dtype, copy=False), eps)
    return y.reshape(x.shape), xhat, rstd


def layer_norm_backward(gy: np.ndarray, xhat: np.ndarray, rstd: np.ndarray, gain: np.ndarray):
    gx, ggain, gbias = _impl.layer_norm_backward(_rows(gy.astype(xhat.dtype, copy=False)), xhat, rstd, gain.astype(xhat.dtype, copy=False))
    return gx.reshape(gy.shape), ggain.astype(xhat.dtype), gbias.astype(xhat.dtype)


def lcs_length(a, b) -> int:
    """Longest common subsequence length of two integer sequences."""
    return int(_impl.lcs_length(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)))
