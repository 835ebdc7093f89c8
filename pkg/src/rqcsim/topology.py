"""Device topologies: qubit grids, coupler patterns, and their file format.

A topology is a set of sites with integer coordinates plus couplers between
them, each coupler tagged with one of the pattern labels A, B, C, D.  The
enabled couplers of each label must form a matching (they are activated
simultaneously in a two-qubit layer).

File format, one record per line, '#' starts a comment:

    qubit <id> <x> <y> <on|off>
    coupler <id1> <id2> <A|B|C|D> <on|off>
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

PATTERN_LABELS = ("A", "B", "C", "D")


class TopologyError(ValueError):
    pass


class TopologyFormatError(TopologyError):
    """Raised on malformed topology files; carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Qubit:
    id: int
    x: int
    y: int
    enabled: bool = True


@dataclass(frozen=True)
class Coupler:
    a: int
    b: int
    label: str
    enabled: bool = True

    @property
    def pair(self) -> tuple[int, int]:
        return (self.a, self.b) if self.a < self.b else (self.b, self.a)


@dataclass(frozen=True)
class Topology:
    qubits: tuple[Qubit, ...]
    couplers: tuple[Coupler, ...]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        ids = [q.id for q in self.qubits]
        if len(set(ids)) != len(ids):
            raise TopologyError("duplicate qubit ids")
        by_id = {q.id: q for q in self.qubits}
        seen_pairs: set[tuple[int, int]] = set()
        for c in self.couplers:
            if c.a == c.b:
                raise TopologyError(f"coupler joins qubit {c.a} to itself")
            for end in (c.a, c.b):
                if end not in by_id:
                    raise TopologyError(f"coupler references unknown qubit {end}")
            if c.label not in PATTERN_LABELS:
                raise TopologyError(f"unknown coupler label {c.label!r}")
            if c.pair in seen_pairs:
                raise TopologyError(f"duplicate coupler {c.pair}")
            seen_pairs.add(c.pair)
            if c.enabled and not (by_id[c.a].enabled and by_id[c.b].enabled):
                raise TopologyError(
                    f"enabled coupler {c.pair} touches a disabled qubit"
                )
        if not any(q.enabled for q in self.qubits):
            raise TopologyError("no enabled qubits")
        # each label's enabled couplers fire together, so they must be a matching
        for label in PATTERN_LABELS:
            used: set[int] = set()
            for c in self.couplers:
                if not c.enabled or c.label != label:
                    continue
                if c.a in used or c.b in used:
                    raise TopologyError(
                        f"label {label} couplers do not form a matching at {c.pair}"
                    )
                used.update((c.a, c.b))

    @property
    def enabled_qubits(self) -> tuple[int, ...]:
        return tuple(sorted(q.id for q in self.qubits if q.enabled))

    @property
    def n_qubits(self) -> int:
        return len(self.enabled_qubits)

    def enabled_couplers(self, label: str | None = None) -> tuple[Coupler, ...]:
        return tuple(
            c
            for c in self.couplers
            if c.enabled and (label is None or c.label == label)
        )


def serialize_topology(topo: Topology) -> str:
    lines = []
    for q in topo.qubits:
        state = "on" if q.enabled else "off"
        lines.append(f"qubit {q.id} {q.x} {q.y} {state}")
    for c in topo.couplers:
        state = "on" if c.enabled else "off"
        lines.append(f"coupler {c.a} {c.b} {c.label} {state}")
    return "\n".join(lines) + "\n"


def _parse_onoff(token: str, lineno: int) -> bool:
    if token == "on":
        return True
    if token == "off":
        return False
    raise TopologyFormatError(f"expected on|off, got {token!r}", lineno)


def parse_topology(text: str) -> Topology:
    qubits: list[Qubit] = []
    couplers: list[Coupler] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0]
        if kind == "qubit":
            if len(tokens) != 5:
                raise TopologyFormatError("qubit line needs: id x y on|off", lineno)
            try:
                qid, x, y = (int(t) for t in tokens[1:4])
            except ValueError:
                raise TopologyFormatError(
                    f"non-integer qubit field in {line!r}", lineno
                ) from None
            qubits.append(Qubit(qid, x, y, _parse_onoff(tokens[4], lineno)))
        elif kind == "coupler":
            if len(tokens) != 5:
                raise TopologyFormatError(
                    "coupler line needs: id1 id2 label on|off", lineno
                )
            try:
                a, b = int(tokens[1]), int(tokens[2])
            except ValueError:
                raise TopologyFormatError(
                    f"non-integer coupler endpoint in {line!r}", lineno
                ) from None
            label = tokens[3]
            if label not in PATTERN_LABELS:
                raise TopologyFormatError(f"unknown pattern label {label!r}", lineno)
            couplers.append(Coupler(a, b, label, _parse_onoff(tokens[4], lineno)))
        else:
            raise TopologyFormatError(f"unknown record kind {kind!r}", lineno)
    try:
        return Topology(tuple(qubits), tuple(couplers))
    except TopologyError as exc:
        raise TopologyFormatError(str(exc)) from exc


def grid_topology(width: int, height: int) -> Topology:
    """Rectangular grid; ids are row-major.

    Vertical couplers alternate A/B by row parity, horizontal couplers
    alternate C/D by column parity, which makes each label a matching and
    the four labels a disjoint cover of all couplers.
    """
    if width < 1 or height < 1:
        raise TopologyError("grid dimensions must be positive")
    qubits = [Qubit(r * width + c, c, r) for r in range(height) for c in range(width)]
    couplers = []
    for r in range(height):
        for c in range(width):
            qid = r * width + c
            if r + 1 < height:
                label = "A" if r % 2 == 0 else "B"
                couplers.append(Coupler(qid, qid + width, label))
            if c + 1 < width:
                label = "C" if c % 2 == 0 else "D"
                couplers.append(Coupler(qid, qid + 1, label))
    return Topology(tuple(qubits), tuple(couplers))


_GRID_RE = re.compile(r"^grid\(?(\d+)x(\d+)\)?$")


def builtin_topology(name: str) -> Topology:
    """Look up a named topology: gridWxH, sycamore53 or zuchongzhi56."""
    match = _GRID_RE.match(name)
    if match:
        return grid_topology(int(match.group(1)), int(match.group(2)))
    if name in ("sycamore53", "zuchongzhi56"):
        data = resources.files("rqcsim.data").joinpath(f"{name}.topo").read_text()
        return parse_topology(data)
    raise TopologyError(f"unknown topology {name!r}")
