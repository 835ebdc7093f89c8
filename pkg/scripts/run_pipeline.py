"""End-to-end pipeline demo composed purely from CLI commands and files.

generate -> order -> amplitude -> sample -> xeb, everything passed between
stages as files in --outdir, so each stage can be rerun or swapped out from
the shell.  Exits nonzero if any stage does.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from rqcsim.cli import main as rqcsim_main


def run(args: list[str]) -> None:
    print("$ rqcsim " + " ".join(args))
    code = rqcsim_main(args)
    if code != 0:
        sys.exit(code)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--topology", default="grid(3x4)")
    ap.add_argument("--cycles", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--fidelity", type=float, default=1.0)
    ap.add_argument("--maxsize", type=int, default=28)
    ap.add_argument("--outdir", default="pipeline_out")
    opts = ap.parse_args()

    os.makedirs(opts.outdir, exist_ok=True)
    circuit = os.path.join(opts.outdir, "circuit.txt")
    plan = os.path.join(opts.outdir, "plan.txt")
    cost = os.path.join(opts.outdir, "cost.json")
    amps = os.path.join(opts.outdir, "amplitudes.jsonl")
    bits = os.path.join(opts.outdir, "samples.txt")
    report = os.path.join(opts.outdir, "xeb.json")
    hist = os.path.join(opts.outdir, "histogram.csv")

    run(["generate", "--topology", opts.topology, "--cycles", str(opts.cycles),
         "--seed", str(opts.seed), "-o", circuit])
    run(["order", "--circuit", circuit, "--maxsize", str(opts.maxsize),
         "--seed", str(opts.seed), "-o", plan, "--json", cost])
    run(["amplitude", "--circuit", circuit, "--plan", plan,
         "--bits", "0" * _n_qubits(circuit), "-o", amps])
    run(["sample", "--circuit", circuit, "-n", str(opts.samples),
         "--fidelity", str(opts.fidelity), "--seed", str(opts.seed),
         "-o", bits])
    run(["xeb", "--circuit", circuit, "--bitstrings", bits,
         "--seed", str(opts.seed), "--histogram", hist, "-o", report])

    with open(report, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    print(json.dumps(summary, indent=2))
    print(f"artifacts in {opts.outdir}/")


def _n_qubits(circuit_path: str) -> int:
    from rqcsim.circuit import parse_circuit

    with open(circuit_path, "r", encoding="utf-8") as fh:
        return parse_circuit(fh.read()).n_qubits


if __name__ == "__main__":
    main()
