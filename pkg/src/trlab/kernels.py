"""Lattice dynamic-programming kernels.

Each kernel has a numba ``@njit`` implementation and a pure-numpy fallback
with identical signatures.  The numba path is used when numba imports and
``TRLAB_NUMBA`` is not set to ``0``; set ``TRLAB_NUMBA=0`` to force the
numpy path (e.g. for debugging or on platforms without numba).

Conventions (0-based):

* RNNT: ``log_blank`` is (T, U+1), ``log_label`` is (T, U) where
  ``log_label[t, u]`` is the log-probability of emitting ``y[u]`` at node
  (t, u).  Returns forward/backward tables of shape (T, U+1) and log P(y|x).
* CTC: ``log_probs`` is (T, K); ``ext`` is the blank-interleaved target of
  length 2U+1.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NEG_INF = -np.inf

USE_NUMBA = numba is not None and os.environ.get("TRLAB_NUMBA", "1") != "0"
BACKEND = "numba" if USE_NUMBA else "numpy"


def _njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# scalar helper

def _lae_py(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


_lae = _njit(_lae_py)


# ---------------------------------------------------------------------------
# RNNT forward-backward

def _rnnt_alpha_beta_loop(log_blank, log_label):
    T, U1 = log_blank.shape
    U = U1 - 1
    alpha = np.full((T, U1), NEG_INF)
    beta = np.full((T, U1), NEG_INF)
    alpha[0, 0] = 0.0
    for t in range(T):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            a = NEG_INF
            if t > 0:
                a = alpha[t - 1, u] + log_blank[t - 1, u]
            if u > 0:
                a = _lae(a, alpha[t, u - 1] + log_label[t, u - 1])
            alpha[t, u] = a
    beta[T - 1, U] = log_blank[T - 1, U]
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                continue
            b = NEG_INF
            if t < T - 1:
                b = beta[t + 1, u] + log_blank[t, u]
            if u < U:
                b = _lae(b, beta[t, u + 1] + log_label[t, u])
            beta[t, u] = b
    log_like = alpha[T - 1, U] + log_blank[T - 1, U]
    return alpha, beta, log_like


_rnnt_alpha_beta_nb_impl = _njit(_rnnt_alpha_beta_loop)


def rnnt_alpha_beta_nb(log_blank, log_label):
    if numba is None:
        raise RuntimeError("numba is not available")
    return _rnnt_alpha_beta_nb_impl(
        np.ascontiguousarray(log_blank, dtype=np.float64),
        np.ascontiguousarray(log_label, dtype=np.float64).reshape(log_blank.shape[0], -1),
    )


def _logcumsumexp(x):
    return np.logaddexp.accumulate(x)


def rnnt_alpha_beta_np(log_blank, log_label):
    log_blank = np.asarray(log_blank, dtype=np.float64)
    T, U1 = log_blank.shape
    U = U1 - 1
    log_label = np.asarray(log_label, dtype=np.float64).reshape(T, U)
    alpha = np.empty((T, U1))
    beta = np.empty((T, U1))
    # alpha[t, u] = c[u] + logcumsumexp(prev - c)[u], c = prefix sums of label moves
    prev = np.full(U1, NEG_INF)
    prev[0] = 0.0
    for t in range(T):
        c = np.zeros(U1)
        np.cumsum(log_label[t], out=c[1:])
        alpha[t] = c + _logcumsumexp(prev - c)
        prev = alpha[t] + log_blank[t]
    nxt = np.full(U1, NEG_INF)
    nxt[U] = log_blank[T - 1, U]
    for t in range(T - 1, -1, -1):
        if t < T - 1:
            nxt = beta[t + 1] + log_blank[t]
        d = np.zeros(U1)
        d[:U] = np.cumsum(log_label[t][::-1])[::-1]
        beta[t] = d + _logcumsumexp((nxt - d)[::-1])[::-1]
    log_like = alpha[T - 1, U] + log_blank[T - 1, U]
    return alpha, beta, float(log_like)


# ---------------------------------------------------------------------------
# CTC forward-backward

def _ctc_alpha_beta_loop(log_probs, ext, blank):
    T = log_probs.shape[0]
    S = ext.shape[0]
    alpha = np.full((T, S), NEG_INF)
    beta = np.full((T, S), NEG_INF)
    alpha[0, 0] = log_probs[0, ext[0]]
    if S > 1:
        alpha[0, 1] = log_probs[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            a = alpha[t - 1, s]
            if s >= 1:
                a = _lae(a, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                a = _lae(a, alpha[t - 1, s - 2])
            alpha[t, s] = a + log_probs[t, ext[s]]
    beta[T - 1, S - 1] = log_probs[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = log_probs[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        for s in range(S):
            b = beta[t + 1, s]
            if s + 1 < S:
                b = _lae(b, beta[t + 1, s + 1])
            if s + 2 < S and ext[s + 2] != blank and ext[s + 2] != ext[s]:
                b = _lae(b, beta[t + 1, s + 2])
            beta[t, s] = b + log_probs[t, ext[s]]
    log_like = alpha[T - 1, S - 1]
    if S > 1:
        log_like = _lae(log_like, alpha[T - 1, S - 2])
    return alpha, beta, log_like


_ctc_alpha_beta_nb_impl = _njit(_ctc_alpha_beta_loop)


def ctc_alpha_beta_nb(log_probs, ext, blank=0):
    if numba is None:
        raise RuntimeError("numba is not available")
    return _ctc_alpha_beta_nb_impl(
        np.ascontiguousarray(log_probs, dtype=np.float64),
        np.ascontiguousarray(ext, dtype=np.int64),
        int(blank),
    )


def _skip_mask(ext, blank):
    # s may be reached from s-2 iff ext[s] is a label different from ext[s-2]
    mask = np.zeros(len(ext), dtype=bool)
    mask[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return mask


def ctc_alpha_beta_np(log_probs, ext, blank=0):
    log_probs = np.asarray(log_probs, dtype=np.float64)
    ext = np.asarray(ext, dtype=np.int64)
    T = log_probs.shape[0]
    S = len(ext)
    skip = _skip_mask(ext, blank)
    emit = log_probs[:, ext]
    alpha = np.full((T, S), NEG_INF)
    beta = np.full((T, S), NEG_INF)
    alpha[0, :2] = emit[0, :2]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + emit[t]
    beta[T - 1, max(S - 2, 0):] = emit[T - 1, max(S - 2, 0):]
    skip_from = np.zeros(S, dtype=bool)
    skip_from[:-2] = skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip_from[:-2], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc + emit[t]
    log_like = np.logaddexp.reduce(alpha[T - 1, max(S - 2, 0):])
    return alpha, beta, float(log_like)


# ---------------------------------------------------------------------------
# Levenshtein alignment counts

def _edit_table_loop(ref, hyp):
    n = ref.shape[0]
    m = hyp.shape[0]
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    for i in range(n + 1):
        cost[i, 0] = i
    for j in range(m + 1):
        cost[0, j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = cost[i - 1, j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1)
            dele = cost[i - 1, j] + 1
            ins = cost[i, j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            cost[i, j] = best
    return cost


def _backtrace_loop(cost, ref, hyp):
    # diagonal first, so a substitution wins over an insertion+deletion pair
    i = ref.shape[0]
    j = hyp.shape[0]
    s = 0
    ins = 0
    dele = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            miss = 0 if ref[i - 1] == hyp[j - 1] else 1
            if cost[i, j] == cost[i - 1, j - 1] + miss:
                s += miss
                i -= 1
                j -= 1
                continue
        if i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return s, ins, dele


_edit_table_nb = _njit(_edit_table_loop)
_backtrace_nb = _njit(_backtrace_loop)


@_njit
def _edit_counts_nb_impl(ref, hyp):
    cost = _edit_table_nb(ref, hyp)
    return _backtrace_nb(cost, ref, hyp)


def edit_counts_nb(ref, hyp):
    if numba is None:
        raise RuntimeError("numba is not available")
    return _edit_counts_nb_impl(
        np.ascontiguousarray(ref, dtype=np.int64), np.ascontiguousarray(hyp, dtype=np.int64)
    )


def edit_counts_np(ref, hyp):
    ref = np.asarray(ref, dtype=np.int64)
    hyp = np.asarray(hyp, dtype=np.int64)
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[0] = np.arange(m + 1)
    cols = np.arange(m + 1)
    for i in range(1, n + 1):
        cand = np.empty(m + 1, dtype=np.int64)
        cand[0] = i
        cand[1:] = np.minimum(cost[i - 1, :-1] + (ref[i - 1] != hyp), cost[i - 1, 1:] + 1)
        # insertions chain along the row: row[j] = min_k<=j cand[k] + (j - k)
        cost[i] = np.minimum.accumulate(cand - cols) + cols
    return _backtrace_loop(cost, ref, hyp)


# ---------------------------------------------------------------------------
# dispatch

if USE_NUMBA:
    rnnt_alpha_beta = rnnt_alpha_beta_nb
    ctc_alpha_beta = ctc_alpha_beta_nb
    edit_counts = edit_counts_nb
else:
    rnnt_alpha_beta = rnnt_alpha_beta_np
    ctc_alpha_beta = ctc_alpha_beta_np
    edit_counts = edit_counts_np
