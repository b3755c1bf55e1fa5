"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeats 20] [--T 100] [--U 30] [--K 17]

The first call of each numba kernel (JIT compile or cache load) is excluded.
Both paths are also checked for agreement before timing.
"""

import argparse
import time

import numpy as np

from trlab import kernels
from trlab.numkit import log_softmax


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def cases(T, U, K, rng):
    lattice = log_softmax(rng.normal(size=(T, U + 1, K)))
    y = rng.integers(1, K, size=U)
    log_blank = np.ascontiguousarray(lattice[:, :, 0])
    log_label = np.ascontiguousarray(lattice[np.arange(T)[:, None], np.arange(U)[None, :], y[None, :]])
    frames = log_softmax(rng.normal(size=(T, K)))
    ext = np.zeros(2 * U + 1, dtype=np.int64)
    ext[1::2] = y
    ref = list(rng.integers(0, K, size=4 * U))
    hyp = list(rng.integers(0, K, size=4 * U))
    return {
        "rnnt_alpha_beta": ((log_blank, log_label), kernels.rnnt_alpha_beta_nb, kernels.rnnt_alpha_beta_np),
        "ctc_alpha_beta": ((frames, ext, 0), kernels.ctc_alpha_beta_nb, kernels.ctc_alpha_beta_np),
        "edit_counts": ((ref, hyp), kernels.edit_counts_nb, kernels.edit_counts_np),
    }


def _agree(a, b):
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-10)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--U", type=int, default=30)
    p.add_argument("--K", type=int, default=17)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    if kernels.numba is None:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(args.seed)
    print(f"T={args.T} U={args.U} K={args.K} repeats={args.repeats} (best of)")
    print(f"{'kernel':<18}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, (inputs, nb, npf) in cases(args.T, args.U, args.K, rng).items():
        if not _agree(nb(*inputs), npf(*inputs)):
            raise SystemExit(f"{name}: numba and numpy results differ")
        t_nb = best_of(lambda: nb(*inputs), args.repeats)
        t_np = best_of(lambda: npf(*inputs), args.repeats)
        print(f"{name:<18}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
