"""Slice-count and worker-count scaling on one fixed circuit.

Part 1 sweeps the memory bound and reports how many slices the order
search needs and the flops overhead the slicing costs versus the unsliced
optimum.  Part 2 runs the same sliced job at 1/2/4/8 workers and reports
wall times plus a bit-identity check across worker counts.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from rqcsim.circuit import generate_rqc
from rqcsim.engine import execute
from rqcsim.network import circuit_to_network, simplify
from rqcsim.order import find_order
from rqcsim.topology import builtin_topology


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--topology", default="grid(4x4)")
    ap.add_argument("--cycles", type=int, default=14)
    ap.add_argument("--seed", type=int, default=1001)
    ap.add_argument("--bounds", type=int, nargs="*",
                    default=[18, 16, 14, 12, 11, 10])
    ap.add_argument("--workers-bound", type=int, default=11,
                    help="memory bound for the worker-scaling run")
    opts = ap.parse_args()

    circuit = generate_rqc(builtin_topology(opts.topology), opts.cycles,
                           seed=opts.seed)
    net = simplify(circuit_to_network(circuit, "0" * circuit.n_qubits))
    print(f"{circuit.n_qubits} qubits, {opts.cycles} cycles, "
          f"{len(net.nodes)} nodes after simplification")

    base = find_order(net, max_size_log2=28, n_candidates=3, seed=0)
    print(f"\n{'bound':>5} {'slices':>7} {'flops':>12} {'overhead':>9}")
    print(f"{'-':>5} {1:>7} {base.cost.flops:>12} {'1.00x':>9}")
    for bound in opts.bounds:
        plan = find_order(net, max_size_log2=bound, n_candidates=3, seed=0)
        ratio = plan.cost.flops / base.cost.flops
        print(f"{bound:>5} {plan.slice_plan.n_slices:>7} "
              f"{plan.cost.flops:>12} {ratio:>8.2f}x")

    plan = find_order(net, max_size_log2=opts.workers_bound,
                      n_candidates=1, seed=0)
    print(f"\nworker scaling at bound {opts.workers_bound} "
          f"({plan.slice_plan.n_slices} slices, "
          f"cpu_count={os.cpu_count()})")
    reference = None
    for workers in (1, 2, 4, 8):
        stats: dict = {}
        t0 = time.perf_counter()
        out = execute(net, plan, workers=workers, stats_out=stats).values()
        wall = time.perf_counter() - t0
        if reference is None:
            reference = out
        identical = bool(np.array_equal(reference, out))
        print(f"  workers={workers}: {wall:6.2f}s "
              f"{stats['flops_per_s'] / 1e9:6.2f} Gflop/s "
              f"bit-identical={identical}")


if __name__ == "__main__":
    main()
