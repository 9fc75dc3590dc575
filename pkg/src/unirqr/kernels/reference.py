"""Pure-numpy reference implementations of the hot numeric kernels.

These define the semantics; the compiled extension in unirqr._kernels
mirrors them exactly (up to floating-point summation order). All inputs
are float64 and row-major.
"""

from __future__ import annotations

import numpy as np

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a 2-D array."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward_rows(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    """Gradient through row-wise softmax given probs `p` and upstream `dp`."""
    inner = (dp * p).sum(axis=1, keepdims=True)
    return p * (dp - inner)


def layernorm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                      eps: float = 1e-5):
    """Row-wise layer norm; returns (y, mean, rstd) with stats cached for backward."""
    mean = x.mean(axis=1)
    var = x.var(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[:, None]) * rstd[:, None]
    return xhat * gain + bias, mean, rstd


def layernorm_backward(dy: np.ndarray, x: np.ndarray, gain: np.ndarray,
                       mean: np.ndarray, rstd: np.ndarray):
    """Returns (dx, dgain, dbias) for layernorm_forward."""
    xhat = (x - mean[:, None]) * rstd[:, None]
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = rstd[:, None] * (dxhat - m1 - xhat * m2)
    return dx, dgain, dbias


def gelu_forward(x: np.ndarray) -> np.ndarray:
    """tanh-approximated GELU (smooth, so finite-difference checks behave)."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x ** 3)))


def gelu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    u = _GELU_C * (x + _GELU_A * x ** 3)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x ** 2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * du)


def cross_entropy_forward(logits: np.ndarray, labels: np.ndarray, ignore_id: int):
    """Per-row token cross-entropy.

    Rows whose label equals `ignore_id` get loss 0 and an all-zero prob row
    marker is still returned for shape stability; returns (losses, probs).
    """
    probs = softmax_rows(logits)
    n = logits.shape[0]
    losses = np.zeros(n, dtype=np.float64)
    valid = labels != ignore_id
    idx = np.nonzero(valid)[0]
    if idx.size:
        picked = probs[idx, labels[idx]]
        losses[idx] = -np.log(picked)
    return losses, probs


def cross_entropy_backward(probs: np.ndarray, labels: np.ndarray,
                           row_scale: np.ndarray, ignore_id: int) -> np.ndarray:
    """dlogits for cross_entropy_forward; each valid row scaled by row_scale."""
    dlogits = probs * row_scale[:, None]
    valid = labels != ignore_id
    idx = np.nonzero(valid)[0]
    dlogits[idx, labels[idx]] -= row_scale[idx]
    dlogits[~valid] = 0.0
    return dlogits
