"""Command-line front end: generate -> order -> amplitude/sample -> xeb/verify.

Commands compose through files only.  Exit codes: 0 ok, 2 usage, 3 file
format, 4 resource guard.  Failures print one JSON object to stderr:
{"error": "<exception class>", "message": "..."}.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from .analysis import (
    AnalysisError,
    BitstringFormatError,
    FrugalOverflowError,
    StateTooLargeError,
    dilute_to_fidelity,
    frugal_sample,
    statevector_simulate,
    verify_bitstrings,
)
from .circuit import (
    CircuitError,
    CircuitFormatError,
    generate_rqc,
    parse_circuit,
    serialize_circuit,
)
from .config import CONFIG_ENV_VAR, ConfigError, RunConfig, load_config
from .engine import EngineError, EngineMemoryError, OpenCapError, amplitudes_batch
from .gates import FsimParams, GateError
from .network import NetworkError, circuit_to_network, simplify
from .order import (
    BoundInfeasibleError,
    OrderError,
    PlanFormatError,
    find_order,
    load_plan,
    save_plan,
)
from .tensor import TensorError
from .topology import TopologyError, TopologyFormatError, builtin_topology

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_GUARD = 4


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="rqcsim", description=__doc__)
    p.add_argument("--config", help=f"config file (else ${CONFIG_ENV_VAR})")
    p.add_argument("--verbose", action="store_true", help="info-level logging")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a random circuit file")
    g.add_argument("--topology", required=True,
                   help="sycamore53, zuchongzhi56, or gridWxH")
    g.add_argument("--cycles", type=int, required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--fsim-theta", type=float, default=None)
    g.add_argument("--fsim-phi", type=float, default=None)
    g.add_argument("--fsim-dplus", type=float, default=0.0)
    g.add_argument("--fsim-dminus", type=float, default=0.0)
    g.add_argument("--fsim-dminus-off", type=float, default=0.0)
    g.add_argument("--no-trailing-single", action="store_true",
                   help="omit the final single-qubit layer")
    g.add_argument("-o", "--output", default=None)

    o = sub.add_parser("order", help="search a sliced contraction order")
    o.add_argument("--circuit", required=True)
    o.add_argument("--bits", default=None, help="output bitstring (default all zeros)")
    o.add_argument("--open", default=None, help="comma-separated open qubit ids")
    o.add_argument("--maxsize", type=int, default=None,
                   help="log2 of the largest allowed intermediate")
    o.add_argument("--candidates", type=int, default=None)
    o.add_argument("--seed", type=int, default=None)
    o.add_argument("--benchmark", action="store_true",
                   help="rank candidates by measured single-slice wall time")
    o.add_argument("-o", "--output", default=None, help="plan file (default plan.txt)")
    o.add_argument("--json", default=None, help="also write the cost JSON here")

    a = sub.add_parser("amplitude", help="exact amplitudes for bitstrings")
    a.add_argument("--circuit", required=True)
    a.add_argument("--bits", nargs="*", default=None)
    a.add_argument("--bits-file", default=None)
    a.add_argument("--plan", default=None, help="reuse a saved plan file")
    a.add_argument("--maxsize", type=int, default=None)
    a.add_argument("--candidates", type=int, default=None)
    a.add_argument("--workers", type=int, default=None)
    a.add_argument("--precision", choices=("single", "mixed"), default=None)
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("-o", "--output", default=None)

    s = sub.add_parser("sample", help="frugal sampling at a target fidelity")
    s.add_argument("--circuit", required=True)
    s.add_argument("-n", "--samples", type=int, required=True)
    s.add_argument("--fidelity", type=float, default=1.0)
    s.add_argument("--open-count", type=int, default=None)
    s.add_argument("--ceiling-m", type=float, default=None)
    s.add_argument("--maxsize", type=int, default=None)
    s.add_argument("--candidates", type=int, default=None)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("-o", "--output", default=None)

    x = sub.add_parser("xeb", help="XEB report for sampled bitstrings")
    x.add_argument("--circuit", required=True)
    x.add_argument("--bitstrings", required=True)
    x.add_argument("--open-count", type=int, default=None)
    x.add_argument("--maxsize", type=int, default=None)
    x.add_argument("--candidates", type=int, default=None)
    x.add_argument("--workers", type=int, default=None)
    x.add_argument("--seed", type=int, default=None)
    x.add_argument("--histogram", default=None, help="write the x-histogram CSV here")
    x.add_argument("-o", "--output", default=None, help="report JSON (default stdout)")

    v = sub.add_parser("verify", help="compare contraction against the statevector")
    v.add_argument("--circuit", default=None)
    v.add_argument("--qubits", type=int, default=None,
                   help="build a near-square grid with this many qubits")
    v.add_argument("--cycles", type=int, default=None)
    v.add_argument("--samples", type=int, default=5,
                   help="number of bitstrings in the comparison table")
    v.add_argument("--maxsize", type=int, default=None)
    v.add_argument("--candidates", type=int, default=None)
    v.add_argument("--workers", type=int, default=None)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("-o", "--output", default=None)
    return p


def _emit_error(exc: BaseException) -> None:
    record = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)


def _write_text(path, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _read_circuit(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_circuit(fh.read())


def _pick(args, cfg: RunConfig, flag: str, key: str | None = None):
    value = getattr(args, flag, None)
    return getattr(cfg, key or flag) if value is None else value


# --- subcommands -------------------------------------------------------------


def cmd_generate(args, cfg: RunConfig) -> int:
    topo = builtin_topology(args.topology)
    theta = args.fsim_theta if args.fsim_theta is not None else math.pi / 2
    phi = args.fsim_phi if args.fsim_phi is not None else math.pi / 6
    params = FsimParams(theta, phi, args.fsim_dplus, args.fsim_dminus,
                        args.fsim_dminus_off)
    circuit = generate_rqc(
        topo,
        args.cycles,
        _pick(args, cfg, "seed"),
        fsim_params=params,
        trailing_single_layer=not args.no_trailing_single,
    )
    _write_text(args.output, serialize_circuit(circuit))
    return EXIT_OK


def cmd_order(args, cfg: RunConfig) -> int:
    circuit = _read_circuit(args.circuit)
    open_qubits = ()
    if args.open:
        open_qubits = tuple(int(tok) for tok in args.open.split(","))
    bits = args.bits
    if bits is None:
        bits = "0" * (circuit.n_qubits - len(open_qubits))
    net = simplify(circuit_to_network(circuit, bits, open_qubits))
    plan = find_order(
        net,
        max_size_log2=_pick(args, cfg, "maxsize", "max_size_log2"),
        n_candidates=_pick(args, cfg, "candidates", "n_candidates"),
        seed=_pick(args, cfg, "seed"),
        benchmark=args.benchmark,
    )
    out = args.output or os.path.join(cfg.out_dir, "plan.txt")
    save_plan(plan, out)
    cost_json = json.dumps(plan.cost.to_json_dict()) + "\n"
    sys.stdout.write(cost_json)
    if args.json:
        _write_text(args.json, cost_json)
    return EXIT_OK


def cmd_amplitude(args, cfg: RunConfig) -> int:
    circuit = _read_circuit(args.circuit)
    n = circuit.n_qubits
    if args.bits_file:
        with open(args.bits_file, "r", encoding="utf-8") as fh:
            bitstrings = [ln.strip() for ln in fh if ln.strip()]
    else:
        bitstrings = list(args.bits or [])
    if not bitstrings:
        raise UsageError("no bitstrings given (use --bits or --bits-file)")
    for b in bitstrings:
        if len(b) != n or any(c not in "01" for c in b):
            raise BitstringFormatError(
                f"expected {n} characters of 0/1, got {b!r}"
            )
    plan = None
    if args.plan:
        net = simplify(circuit_to_network(circuit, bitstrings[0]))
        with open(args.plan, "r", encoding="utf-8") as fh:
            plan = load_plan(fh.read(), net)
    lines = []
    for b in bitstrings:
        batch = amplitudes_batch(
            circuit,
            b,
            max_size_log2=_pick(args, cfg, "maxsize", "max_size_log2"),
            seed=_pick(args, cfg, "seed"),
            n_candidates=_pick(args, cfg, "candidates", "n_candidates"),
            workers=_pick(args, cfg, "workers"),
            precision=_pick(args, cfg, "precision"),
            batch_log2=cfg.batch_log2,
            resident_log2=cfg.resident_log2,
            plan=plan,
        )
        plan = batch.plan
        amp = batch.amplitude("")
        lines.append(json.dumps(
            {"bitstring": b, "re": float(amp.real), "im": float(amp.imag)}
        ))
    _write_text(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_sample(args, cfg: RunConfig) -> int:
    circuit = _read_circuit(args.circuit)
    seed = _pick(args, cfg, "seed")
    result = frugal_sample(
        circuit,
        args.samples,
        open_count=_pick(args, cfg, "open_count"),
        ceiling_m=_pick(args, cfg, "ceiling_m"),
        seed=seed,
        max_size_log2=_pick(args, cfg, "maxsize", "max_size_log2"),
        n_candidates=_pick(args, cfg, "candidates", "n_candidates"),
        workers=_pick(args, cfg, "workers"),
    )
    bitstrings = result.bitstrings
    if args.fidelity < 1.0:
        bitstrings = dilute_to_fidelity(
            bitstrings, args.fidelity, circuit.n_qubits, seed
        )
    _write_text(args.output, "".join(s + "\n" for s in bitstrings))
    return EXIT_OK


def cmd_xeb(args, cfg: RunConfig) -> int:
    circuit = _read_circuit(args.circuit)
    report = verify_bitstrings(
        circuit,
        args.bitstrings,
        open_count=_pick(args, cfg, "open_count"),
        max_size_log2=_pick(args, cfg, "maxsize", "max_size_log2"),
        seed=_pick(args, cfg, "seed"),
        n_candidates=_pick(args, cfg, "candidates", "n_candidates"),
        workers=_pick(args, cfg, "workers"),
    )
    _write_text(args.output, json.dumps(report.to_json_dict(), indent=2) + "\n")
    if args.histogram:
        _write_text(args.histogram, report.histogram_csv())
    return EXIT_OK


def _near_square_grid(n: int):
    w = int(math.isqrt(n))
    while w > 1 and n % w:
        w -= 1
    return w, n // w


def cmd_verify(args, cfg: RunConfig) -> int:
    seed = _pick(args, cfg, "seed")
    if args.circuit:
        circuit = _read_circuit(args.circuit)
    else:
        if args.qubits is None or args.cycles is None:
            raise UsageError("verify needs --circuit or both --qubits and --cycles")
        w, h = _near_square_grid(args.qubits)
        circuit = generate_rqc(builtin_topology(f"grid({w}x{h})"),
                               args.cycles, seed)
    n = circuit.n_qubits
    state = statevector_simulate(circuit)
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, 1 << n, size=args.samples)

    plan = None
    rows = []
    max_rel = 0.0
    for idx in picks:
        bits = format(int(idx), f"0{n}b")
        batch = amplitudes_batch(
            circuit,
            bits,
            max_size_log2=_pick(args, cfg, "maxsize", "max_size_log2"),
            seed=seed,
            n_candidates=_pick(args, cfg, "candidates", "n_candidates"),
            workers=_pick(args, cfg, "workers"),
            plan=plan,
        )
        plan = batch.plan
        amp = batch.amplitude("")
        ref = complex(state[int(idx)])
        rel = abs(amp - ref) / abs(ref) if ref != 0 else abs(amp)
        max_rel = max(max_rel, rel)
        rows.append((bits, amp, rel))

    width = max(9, n)
    lines = [
        f"{'bitstring':<{width}}  {'re':>15}  {'im':>15}  {'relative error':>15}"
    ]
    for bits, amp, rel in rows:
        lines.append(
            f"{bits:<{width}}  {amp.real:>15.8e}  {amp.imag:>15.8e}  {rel:>15.3e}"
        )
    lines.append(f"max relative error: {max_rel:.3e}")
    _write_text(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "order": cmd_order,
    "amplitude": cmd_amplitude,
    "sample": cmd_sample,
    "xeb": cmd_xeb,
    "verify": cmd_verify,
}

_FORMAT_ERRORS = (
    CircuitFormatError,
    TopologyFormatError,
    PlanFormatError,
    BitstringFormatError,
    TensorError,
)
_GUARD_ERRORS = (
    EngineMemoryError,
    OpenCapError,
    StateTooLargeError,
    FrugalOverflowError,
    BoundInfeasibleError,
    MemoryError,
)
_USAGE_ERRORS = (
    UsageError,
    ConfigError,
    GateError,
    CircuitError,
    TopologyError,
    NetworkError,
    OrderError,
    EngineError,
    AnalysisError,
    OSError,
)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _emit_error(exc)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except _FORMAT_ERRORS as exc:
        _emit_error(exc)
        return EXIT_FORMAT
    except _GUARD_ERRORS as exc:
        _emit_error(exc)
        return EXIT_GUARD
    except _USAGE_ERRORS as exc:
        _emit_error(exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
