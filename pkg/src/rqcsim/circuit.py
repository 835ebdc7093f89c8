"""Patterned random circuits: generation, validation, and the file format.

A circuit is an alternation of single-qubit layers (one gate per enabled
qubit, i.i.d. uniform over X2/Y2/W2) and two-qubit layers (fSim on every
enabled coupler of the active pattern).  Pattern labels follow the period-8
sequence A,B,C,D,C,D,A,B truncated at the cycle count, so each coupler is
hit exactly once in every aligned window of four cycles.

File format (UTF-8, '#' comments):

    qubits <N> cycles <D> seed <S>
    layer sq
    q<i> <X2|Y2|W2>
    layer tq <A|B|C|D>
    q<i> q<j> fsim <theta> <phi> <dplus> <dminus> <dmoff>
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

from .gates import SINGLE_QUBIT_KINDS, FsimParams, GateError, fsim
from .rng import DOMAIN_GATES, substream
from .topology import Topology

PATTERN_PERIOD = ("A", "B", "C", "D", "C", "D", "A", "B")


class CircuitError(ValueError):
    pass


class CircuitFormatError(CircuitError):
    """Raised on malformed circuit files; carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def pattern_sequence(cycles: int) -> tuple[str, ...]:
    return tuple(PATTERN_PERIOD[i % 8] for i in range(cycles))


@dataclass(frozen=True)
class SqGate:
    qubit: int
    kind: str


@dataclass(frozen=True)
class TqGate:
    a: int
    b: int
    params: FsimParams


@dataclass(frozen=True)
class SingleQubitLayer:
    gates: tuple[SqGate, ...]


@dataclass(frozen=True)
class TwoQubitLayer:
    label: str
    gates: tuple[TqGate, ...]


Layer = Union[SingleQubitLayer, TwoQubitLayer]


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    cycles: int
    seed: int
    qubits: tuple[int, ...]
    layers: tuple[Layer, ...]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_qubits != len(self.qubits):
            raise CircuitError(
                f"n_qubits = {self.n_qubits} but {len(self.qubits)} qubit ids"
            )
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError("duplicate qubit ids")
        expected_len = (2 * self.cycles, 2 * self.cycles + 1)
        if len(self.layers) not in expected_len:
            raise CircuitError(
                f"{self.cycles} cycles needs {expected_len[0]} or "
                f"{expected_len[1]} layers, got {len(self.layers)}"
            )
        qubit_set = set(self.qubits)
        labels = pattern_sequence(self.cycles)
        for pos, layer in enumerate(self.layers):
            want_sq = pos % 2 == 0
            if want_sq != isinstance(layer, SingleQubitLayer):
                raise CircuitError(f"layer {pos} breaks sq/tq alternation")
            if isinstance(layer, SingleQubitLayer):
                covered = [g.qubit for g in layer.gates]
                if set(covered) != qubit_set or len(covered) != len(qubit_set):
                    raise CircuitError(
                        f"single-qubit layer {pos} must cover each qubit once"
                    )
                for g in layer.gates:
                    if g.kind not in SINGLE_QUBIT_KINDS:
                        raise CircuitError(f"unknown gate kind {g.kind!r}")
            else:
                if layer.label != labels[pos // 2]:
                    raise CircuitError(
                        f"two-qubit layer {pos // 2} has label {layer.label}, "
                        f"sequence requires {labels[pos // 2]}"
                    )
                touched: set[int] = set()
                for g in layer.gates:
                    if g.a == g.b:
                        raise CircuitError(f"gate joins qubit {g.a} to itself")
                    if g.a in touched or g.b in touched:
                        raise CircuitError(
                            f"layer {pos} touches qubit {g.a if g.a in touched else g.b} twice"
                        )
                    touched.update((g.a, g.b))
                    if not {g.a, g.b} <= qubit_set:
                        raise CircuitError(f"gate on unknown qubit in layer {pos}")
                    if not all(math.isfinite(v) for v in g.params):
                        raise CircuitError("non-finite fSim parameter")

    @property
    def has_trailing_single_layer(self) -> bool:
        return len(self.layers) == 2 * self.cycles + 1

    @property
    def two_qubit_gate_count(self) -> int:
        return sum(
            len(l.gates) for l in self.layers if isinstance(l, TwoQubitLayer)
        )


FsimTable = Union[FsimParams, Mapping[tuple[int, int], FsimParams], None]


def _params_for(pair: tuple[int, int], table: FsimTable) -> FsimParams:
    if table is None:
        return FsimParams()
    if isinstance(table, FsimParams):
        return table
    try:
        return table[pair]
    except KeyError:
        raise CircuitError(f"fSim parameter table has no entry for {pair}") from None


def generate_rqc(
    topology: Topology,
    cycles: int,
    seed: int,
    fsim_params: FsimTable = None,
    trailing_single_layer: bool = True,
) -> Circuit:
    """Seeded random circuit on a topology.

    Single-qubit kinds are drawn from a stream addressed by (layer, qubit),
    so the result does not depend on generation order.  Deterministic for
    fixed arguments.
    """
    if cycles < 1:
        raise CircuitError("cycles must be >= 1")
    qubits = topology.enabled_qubits
    if not qubits:
        raise CircuitError("topology has no enabled qubits")

    def sq_layer(index: int) -> SingleQubitLayer:
        gates = tuple(
            SqGate(q, SINGLE_QUBIT_KINDS[substream(seed, DOMAIN_GATES, index, q).integers(3)])
            for q in qubits
        )
        return SingleQubitLayer(gates)

    layers: list[Layer] = []
    for k, label in enumerate(pattern_sequence(cycles)):
        layers.append(sq_layer(k))
        gates = tuple(
            TqGate(*c.pair, _params_for(c.pair, fsim_params))
            for c in sorted(topology.enabled_couplers(label), key=lambda c: c.pair)
        )
        layers.append(TwoQubitLayer(label, gates))
    if trailing_single_layer:
        layers.append(sq_layer(cycles))
    return Circuit(len(qubits), cycles, seed, qubits, tuple(layers))


def serialize_circuit(circuit: Circuit) -> str:
    lines = [f"qubits {circuit.n_qubits} cycles {circuit.cycles} seed {circuit.seed}"]
    for layer in circuit.layers:
        if isinstance(layer, SingleQubitLayer):
            lines.append("layer sq")
            lines.extend(f"q{g.qubit} {g.kind}" for g in layer.gates)
        else:
            lines.append(f"layer tq {layer.label}")
            lines.extend(
                f"q{g.a} q{g.b} fsim {g.params.theta!r} {g.params.phi!r} "
                f"{g.params.d_plus!r} {g.params.d_minus!r} {g.params.d_minus_off!r}"
                for g in layer.gates
            )
    return "\n".join(lines) + "\n"


def _parse_qubit_token(token: str, lineno: int) -> int:
    if not token.startswith("q") or not token[1:].isdigit():
        raise CircuitFormatError(f"expected q<id>, got {token!r}", lineno)
    return int(token[1:])


def _parse_float(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise CircuitFormatError(f"bad number {token!r}", lineno) from None


def parse_circuit(text: str) -> Circuit:
    header: tuple[int, int, int] | None = None
    # layers as (kind, label, gates, header_lineno)
    blocks: list[list] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if header is None:
            if (
                len(tokens) != 6
                or tokens[0] != "qubits"
                or tokens[2] != "cycles"
                or tokens[4] != "seed"
            ):
                raise CircuitFormatError(
                    "header must be: qubits <N> cycles <D> seed <S>", lineno
                )
            try:
                header = (int(tokens[1]), int(tokens[3]), int(tokens[5]))
            except ValueError:
                raise CircuitFormatError("non-integer header field", lineno) from None
            continue
        if tokens[0] == "layer":
            want_sq = len(blocks) % 2 == 0
            if len(tokens) == 2 and tokens[1] == "sq":
                if not want_sq:
                    raise CircuitFormatError(
                        "expected a two-qubit layer here", lineno
                    )
                blocks.append(["sq", None, [], lineno])
            elif len(tokens) == 3 and tokens[1] == "tq":
                if want_sq:
                    raise CircuitFormatError(
                        "expected a single-qubit layer here", lineno
                    )
                if tokens[2] not in ("A", "B", "C", "D"):
                    raise CircuitFormatError(
                        f"unknown pattern label {tokens[2]!r}", lineno
                    )
                blocks.append(["tq", tokens[2], [], lineno])
            else:
                raise CircuitFormatError(
                    "layer must be `layer sq` or `layer tq <A|B|C|D>`", lineno
                )
            continue
        if not blocks:
            raise CircuitFormatError("gate line before any layer header", lineno)
        kind, _label, gates, _ = blocks[-1]
        if kind == "sq":
            if len(tokens) != 2:
                raise CircuitFormatError("single-qubit line needs: q<i> <kind>", lineno)
            qubit = _parse_qubit_token(tokens[0], lineno)
            if tokens[1] not in SINGLE_QUBIT_KINDS:
                raise CircuitFormatError(f"unknown gate token {tokens[1]!r}", lineno)
            if any(g.qubit == qubit for g in gates):
                raise CircuitFormatError(f"qubit {qubit} repeated in layer", lineno)
            gates.append(SqGate(qubit, tokens[1]))
        else:
            if len(tokens) != 8 or tokens[2] != "fsim":
                raise CircuitFormatError(
                    "two-qubit line needs: q<i> q<j> fsim <5 angles>", lineno
                )
            a = _parse_qubit_token(tokens[0], lineno)
            b = _parse_qubit_token(tokens[1], lineno)
            params = FsimParams(*(_parse_float(t, lineno) for t in tokens[3:8]))
            touched = {q for g in gates for q in (g.a, g.b)}
            if a in touched or b in touched or a == b:
                raise CircuitFormatError(
                    "two-qubit layer is a matching; qubit used twice", lineno
                )
            try:
                fsim(*params)
            except GateError as exc:
                raise CircuitFormatError(str(exc), lineno) from exc
            gates.append(TqGate(a, b, params))

    if header is None:
        raise CircuitFormatError("missing header line")
    n_qubits, cycles, seed = header

    qubit_ids: tuple[int, ...]
    sq_blocks = [b for b in blocks if b[0] == "sq"]
    if sq_blocks:
        qubit_ids = tuple(sorted(g.qubit for g in sq_blocks[0][2]))
    else:
        qubit_ids = tuple(range(n_qubits))
    if len(qubit_ids) != n_qubits:
        raise CircuitFormatError(
            f"header declares {n_qubits} qubits, layers use {len(qubit_ids)}",
            sq_blocks[0][3] if sq_blocks else None,
        )

    tq_count = sum(1 for b in blocks if b[0] == "tq")
    if tq_count != cycles:
        raise CircuitFormatError(
            f"header declares {cycles} cycles, file has {tq_count} two-qubit layers"
        )
    expected = pattern_sequence(cycles)
    tq_index = 0
    layers: list[Layer] = []
    for kind, label, gates, header_line in blocks:
        if kind == "sq":
            if tuple(sorted(g.qubit for g in gates)) != qubit_ids:
                raise CircuitFormatError(
                    "single-qubit layers must cover the same qubits", header_line
                )
            layers.append(SingleQubitLayer(tuple(gates)))
        else:
            if label != expected[tq_index]:
                raise CircuitFormatError(
                    f"two-qubit layer {tq_index} has label {label}, "
                    f"sequence requires {expected[tq_index]}",
                    header_line,
                )
            tq_index += 1
            layers.append(TwoQubitLayer(label, tuple(gates)))
    try:
        return Circuit(n_qubits, cycles, seed, qubit_ids, tuple(layers))
    except CircuitError as exc:
        raise CircuitFormatError(str(exc)) from exc
