"""Transducer, CTC and internal-LM losses plus the weighted joint objective.

Each lattice loss returns the negative log-likelihood (nats) together with
its gradient w.r.t. the input log-probabilities; :func:`joint_loss` pushes
those through :meth:`trlab.model.Model.backward`.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from trlab import kernels
from trlab.errors import ConfigError


class LossGrad(NamedTuple):
    value: float
    grad: np.ndarray
    admissible: bool = True


@dataclass(frozen=True)
class LossReport:
    rnnt: float
    ctc: float
    ilm: float
    joint: float
    alpha: float
    beta: float
    ctc_admissible: bool = True

    def row(self):
        return (self.rnnt, self.ctc, self.ilm, self.joint)


def rnnt_loss(lattice, y):
    """-log P(y|x) summed over all monotonic alignments of a (T, U+1, K) lattice."""
    lattice = np.asarray(lattice, dtype=np.float64)
    tokens = np.asarray(list(y), dtype=np.int64)
    if lattice.ndim != 3:
        raise ValueError("lattice must be (T, U+1, K)")
    T, U1, K = lattice.shape
    U = len(tokens)
    if U1 != U + 1:
        raise ValueError(f"lattice has {U1} label positions, labels need {U + 1}")
    if T == 0:
        raise ValueError("transducer loss needs at least one frame")
    log_blank = np.ascontiguousarray(lattice[:, :, 0])
    log_label = np.ascontiguousarray(lattice[:, np.arange(U), tokens]) if U else np.zeros((T, 0))
    alpha, beta, log_like = kernels.rnnt_alpha_beta(log_blank, log_label)

    grad = np.zeros_like(lattice)
    # blank moves (t, u) -> (t+1, u); the terminal blank leaves (T-1, U)
    beta_next = np.full((T, U1), -np.inf)
    beta_next[:-1] = beta[1:]
    beta_next[T - 1, U] = 0.0
    grad[:, :, 0] = -np.exp(alpha + log_blank + beta_next - log_like)
    if U:
        grad[:, np.arange(U), tokens] = -np.exp(alpha[:, :U] + log_label + beta[:, 1:] - log_like)
    return LossGrad(float(-log_like), grad)


def ctc_min_frames(y):
    """Fewest frames that can emit y under CTC (repeats need a blank between)."""
    y = list(y)
    return len(y) + sum(1 for a, b in zip(y, y[1:]) if a == b)


def ctc_loss(log_probs, y, blank=0):
    """CTC negative log-likelihood of y given (T, K) frame log-probabilities.

    Targets that cannot fit in T frames give ``value=inf, admissible=False``
    with a zero gradient instead of raising.
    """
    log_probs = np.asarray(log_probs, dtype=np.float64)
    tokens = [int(t) for t in y]
    T = log_probs.shape[0]
    if T < ctc_min_frames(tokens) or T == 0:
        return LossGrad(math.inf, np.zeros_like(log_probs), False)
    ext = np.full(2 * len(tokens) + 1, blank, dtype=np.int64)
    ext[1::2] = tokens
    alpha, beta, log_like = kernels.ctc_alpha_beta(log_probs, ext, blank)
    emit = log_probs[:, ext]
    occ = np.exp(alpha + beta - emit - log_like)
    grad = np.zeros_like(log_probs)
    np.add.at(grad.T, ext, -occ.T)
    return LossGrad(float(-log_like), grad)


def ilm_loss_from_log_probs(ilm_log_probs, y):
    """Per-token mean cross-entropy of y under (U, K-1) ILM log-probs."""
    tokens = np.asarray(list(y), dtype=np.int64)
    U = len(tokens)
    if U == 0:
        return LossGrad(0.0, np.zeros((0, ilm_log_probs.shape[-1])))
    idx = tokens - 1  # label-head index k is vocabulary token k+1
    value = -ilm_log_probs[np.arange(U), idx].sum() / U
    grad = np.zeros_like(ilm_log_probs)
    grad[np.arange(U), idx] = -1.0 / U
    return LossGrad(float(value), grad)


def ilm_loss(model, y):
    """ILM loss and parameter gradients; only prediction/joint parameters move."""
    cache = model.forward_ilm(y)
    if len(cache.tokens) == 0:
        return 0.0, model.backward(cache)
    value, grad, _ = ilm_loss_from_log_probs(cache.ilm, y)
    return value, model.backward(cache, d_ilm=grad)


def joint_loss(model, x, y, alpha=0.0, beta=0.0, need_grad=True):
    """L_RNNT + alpha * L_CTC + beta * L_ILM with parameter gradients.

    The CTC term uses the model's configured branch: a separate CTC/FCTC
    head, or the joint network itself with a zero prediction vector (IAM).
    """
    if alpha < 0 or beta < 0:
        raise ConfigError("loss weights must be non-negative")
    has_ctc = model.config.ctc_head != "none"
    if alpha > 0 and not has_ctc:
        raise ConfigError("alpha > 0 needs a CTC-style head (ctc, fctc or iam)")
    cache = model.forward(x, y, with_frames=has_ctc, with_ilm=True)
    l_rnnt, g_rnnt, _ = rnnt_loss(cache.lattice, cache.tokens)
    l_ctc, g_ctc, admissible = 0.0, None, True
    if has_ctc:
        l_ctc, g_ctc, admissible = ctc_loss(cache.frames, cache.tokens, model.config.blank_id)
    l_ilm, g_ilm = 0.0, None
    if cache.ilm is not None:
        l_ilm, g_ilm, _ = ilm_loss_from_log_probs(cache.ilm, cache.tokens)

    ctc_term = alpha * l_ctc if alpha > 0 else 0.0
    total = l_rnnt + ctc_term + beta * l_ilm
    report = LossReport(l_rnnt, l_ctc, l_ilm, total, alpha, beta, admissible)
    if not need_grad:
        return report, None
    d_frames = alpha * g_ctc if (g_ctc is not None and alpha > 0 and admissible) else None
    d_ilm = beta * g_ilm if (g_ilm is not None and beta > 0) else None
    grads = model.backward(cache, d_lattice=g_rnnt, d_frames=d_frames, d_ilm=d_ilm)
    return report, grads
