"""Brute-force reference implementations used only by the tests."""

import itertools
import math

import numpy as np


def logsumexp(values):
    values = [v for v in values if v != -math.inf]
    if not values:
        return -math.inf
    m = max(values)
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


def rnnt_enumerate(lattice, y):
    """log P(y|x) summing every alignment path explicitly.

    An alignment is T blanks and U labels in some order ending with a blank;
    it is fixed by which of the first T+U-1 slots hold labels.
    """
    T, _, _ = lattice.shape
    U = len(y)
    paths = []
    for label_slots in itertools.combinations(range(T + U - 1), U):
        slots = set(label_slots)
        t = u = 0
        total = 0.0
        for i in range(T + U):
            if i in slots:
                total += lattice[t, u, y[u]]
                u += 1
            else:
                total += lattice[t, u, 0]
                t += 1
        paths.append(total)
    return logsumexp(paths)


def collapse(path, blank=0):
    out, prev = [], None
    for k in path:
        if k != prev and k != blank:
            out.append(k)
        prev = k
    return tuple(out)


def ctc_enumerate(log_probs, y, blank=0):
    T, K = log_probs.shape
    y = tuple(y)
    paths = [
        sum(log_probs[t, k] for t, k in enumerate(path))
        for path in itertools.product(range(K), repeat=T)
        if collapse(path, blank) == y
    ]
    return logsumexp(paths)


def levenshtein(ref, hyp):
    """Plain DP edit distance (total errors only)."""
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i]
        for j, h in enumerate(hyp, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h)))
        prev = cur
    return prev[-1]


def numeric_grad(f, arr, eps=1e-6):
    """Central differences of scalar f() w.r.t. every entry of arr (in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + eps
        up = f()
        arr[idx] = old - eps
        down = f()
        arr[idx] = old
        g[idx] = (up - down) / (2 * eps)
    return g


def rel_error(analytic, numeric):
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return num / den


def best_sequence(model, x, max_symbols):
    """Exhaustive argmax of log P(y|x) over label sequences up to max_symbols."""
    from trlab.loss import rnnt_loss

    labels = range(1, model.config.vocab_size)
    scored = []
    for n in range(max_symbols + 1):
        for y in itertools.product(labels, repeat=n):
            scored.append((-rnnt_loss(model.lattice(x, y), y).value, y))
    scored.sort(key=lambda item: (-item[0], len(item[1]), item[1]))
    return scored[0][1], scored[0][0]
