"""Benchmark the fused streaming kernel against permute-then-multiply.

Sweeps skewed contractions (one huge operand, one small one, tiny shared
block) and prints wall times, speedups, and effective memory bandwidth.
The fused path reads the big operand exactly once, so its bandwidth column
approaches the machine's streaming rate as sizes grow.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from rqcsim.tensor import Tensor, contract_fused, contract_naive


def random_tensor(rng, labels: list[str]) -> Tensor:
    size = 1 << len(labels)
    vals = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return Tensor(tuple(labels), (vals / np.sqrt(size)).astype(np.complex64))


def best_of(n: int, fn) -> float:
    times = []
    for _ in range(n):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--batch-log2", type=int, default=16)
    ap.add_argument("--max-rank", type=int, default=24,
                    help="largest big-operand rank to sweep")
    opts = ap.parse_args()

    rng = np.random.default_rng(42)
    print(f"{'a rank':>6} {'b rank':>6} {'shared':>6} "
          f"{'naive s':>9} {'fused s':>9} {'speedup':>8} {'GB/s':>7}")
    for rank_a in range(18, opts.max_rank + 1, 2):
        for n_shared, rank_b in ((2, 4), (4, 6)):
            a_labels = [f"x{i}" for i in range(rank_a)]
            b_labels = a_labels[8:8 + n_shared] + [
                f"y{i}" for i in range(rank_b - n_shared)
            ]
            a = random_tensor(rng, a_labels)
            b = random_tensor(rng, b_labels)
            t_naive = best_of(opts.repeats, lambda: contract_naive(a, b))
            t_fused = best_of(
                opts.repeats,
                lambda: contract_fused(a, b, batch_log2=opts.batch_log2),
            )
            # one read of a, one write of the output, 8 bytes per element
            traffic = 8 * (a.size + (a.size >> n_shared) * (b.size >> n_shared))
            print(f"{rank_a:>6} {rank_b:>6} {n_shared:>6} "
                  f"{t_naive:>9.4f} {t_fused:>9.4f} "
                  f"{t_naive / t_fused:>8.2f} "
                  f"{traffic / t_fused / 1e9:>7.2f}")


if __name__ == "__main__":
    main()
