"""Small deterministic numeric kernels shared by the model, losses and decoders.

Everything operates on float64 numpy arrays.  Reductions run over the last
axis so the same functions serve single vectors and stacked batches.
"""

import numpy as np

NEG_INF = -np.inf


def _as_float(x):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        raise ValueError("expected an array, got a scalar")
    if arr.shape[-1] == 0:
        raise ValueError("empty input")
    return arr


def affine(x, weight, bias=None):
    """``x @ weight.T + bias`` with ``weight`` shaped (out, in).

    Uses einsum rather than BLAS so that a row gives bit-identical output
    whether it is evaluated alone or inside a larger batch.
    """
    out = np.einsum("...i,oi->...o", np.asarray(x, dtype=np.float64), weight)
    if bias is not None:
        out = out + bias
    return out


def softmax(logits):
    z = _as_float(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = _as_float(logits)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sigmoid(x):
    """Logistic function, stable for large |x|; accepts scalars or arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def log_sigmoid(x):
    """log(sigmoid(x)); ``log_sigmoid(-x)`` gives log(1 - sigmoid(x))."""
    x = np.asarray(x, dtype=np.float64)
    out = -np.logaddexp(0.0, -x)
    return out if np.ndim(out) else float(out)


def log_sum_exp(values, axis=-1):
    """log(sum(exp(values))) with max subtraction.

    All ``-inf`` input reduces to ``-inf`` rather than NaN.
    """
    v = _as_float(values)
    m = v.max(axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(v - safe).sum(axis=axis, keepdims=True)) + safe
    out = np.squeeze(out, axis=axis)
    return out if out.ndim else float(out)


def tanh(x):
    return np.tanh(x)
