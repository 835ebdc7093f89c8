"""Tensor networks for amplitude computation, and rank-driven simplification.

A network maps node ids to tensors; index labels appearing on two nodes are
closed (contracted), labels with one endpoint are open output legs.  The
simplifier repeatedly contracts adjacent pairs whenever the result's rank
does not exceed the larger of the pair's ranks, which subsumes absorbing
rank-1/rank-2 tensors and fusing parallel edges.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from heapq import heappush, heappop
from typing import Iterable, Sequence

import numpy as np

from .circuit import Circuit, SingleQubitLayer, TwoQubitLayer
from .gates import single_qubit_gate
from .tensor import Tensor, contract_naive

logger = logging.getLogger(__name__)

_KET = {0: (1.0, 0.0), 1: (0.0, 1.0)}


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class TensorNetwork:
    nodes: dict[int, Tensor]
    open_labels: tuple[str, ...]

    def label_map(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for nid in sorted(self.nodes):
            for lab in self.nodes[nid].labels:
                out.setdefault(lab, []).append(nid)
        return out

    def validate(self) -> None:
        lmap = self.label_map()
        for lab, ends in lmap.items():
            if len(ends) > 2:
                raise NetworkError(f"label {lab} appears on {len(ends)} nodes")
        dangling = {lab for lab, ends in lmap.items() if len(ends) == 1}
        if dangling != set(self.open_labels):
            raise NetworkError(
                f"open labels {sorted(self.open_labels)} != dangling {sorted(dangling)}"
            )
        if len(set(self.open_labels)) != len(self.open_labels):
            raise NetworkError("duplicate open labels")

    def components(self) -> list[list[int]]:
        """Connected components (via shared labels), each sorted by id."""
        lmap = self.label_map()
        adj: dict[int, set[int]] = {nid: set() for nid in self.nodes}
        for ends in lmap.values():
            if len(ends) == 2:
                adj[ends[0]].add(ends[1])
                adj[ends[1]].add(ends[0])
        seen: set[int] = set()
        comps = []
        for start in sorted(self.nodes):
            if start in seen:
                continue
            stack, comp = [start], []
            seen.add(start)
            while stack:
                nid = stack.pop()
                comp.append(nid)
                for other in adj[nid]:
                    if other not in seen:
                        seen.add(other)
                        stack.append(other)
            comps.append(sorted(comp))
        return comps


def circuit_to_network(
    circuit: Circuit,
    output_bits: str,
    open_qubits: Sequence[int] = (),
) -> TensorNetwork:
    """Map a circuit to the network whose contraction is the amplitude.

    One rank-1 [1,0] tensor per input qubit, one tensor per gate, and for
    each closed qubit a rank-1 computational-basis tensor selecting its
    output bit (bit i of output_bits belongs to the i-th closed qubit in
    ascending id order).  Open qubits leave dangling labels, returned in
    open_qubits order.
    """
    open_list = list(open_qubits)
    open_set = set(open_list)
    if len(open_set) != len(open_list):
        raise NetworkError("duplicate open qubits")
    if not open_set <= set(circuit.qubits):
        raise NetworkError(f"open qubits {sorted(open_set - set(circuit.qubits))} not in circuit")
    closed = [q for q in circuit.qubits if q not in open_set]
    if len(output_bits) != len(closed):
        raise NetworkError(
            f"{len(closed)} closed qubits need {len(closed)} output bits, "
            f"got {len(output_bits)}"
        )
    if any(ch not in "01" for ch in output_bits):
        raise NetworkError("output bits must be characters 0/1")

    nodes: dict[int, Tensor] = {}
    next_node = 0
    next_label = 0
    wire: dict[int, str] = {}

    def add(tensor: Tensor) -> int:
        nonlocal next_node
        nodes[next_node] = tensor
        next_node += 1
        return next_node - 1

    def fresh() -> str:
        nonlocal next_label
        next_label += 1
        return f"e{next_label - 1}"

    for q in circuit.qubits:
        wire[q] = fresh()
        add(Tensor((wire[q],), _KET[0]))

    for layer in circuit.layers:
        if isinstance(layer, SingleQubitLayer):
            for g in layer.gates:
                out_lab = fresh()
                mat = single_qubit_gate(g.kind).entries
                add(Tensor((out_lab, wire[g.qubit]), mat.reshape(-1)))
                wire[g.qubit] = out_lab
        else:
            for g in layer.gates:
                out_a, out_b = fresh(), fresh()
                mat = g.params.matrix().entries
                add(
                    Tensor(
                        (out_a, out_b, wire[g.a], wire[g.b]),
                        mat.reshape(-1),
                    )
                )
                wire[g.a], wire[g.b] = out_a, out_b

    for q, bit in zip(closed, output_bits):
        add(Tensor((wire[q],), _KET[int(bit)]))

    return TensorNetwork(nodes, tuple(wire[q] for q in open_list))


def simplify(net: TensorNetwork) -> TensorNetwork:
    """Contract away low-rank structure; the network value is unchanged.

    A pair of adjacent nodes is merged whenever the contraction's rank is
    at most the larger of the two ranks (all parallel edges between the
    pair are contracted in one step).  Nodes are visited lowest rank first,
    ties by smallest id; the merged node takes the smaller id.  Rank-0
    leftovers (fully contracted components) are folded into the lowest-id
    survivor at the end.
    """
    nodes = dict(net.nodes)
    neighbors: dict[int, dict[int, int]] = {nid: {} for nid in nodes}
    lmap = net.label_map()
    for ends in lmap.values():
        if len(ends) == 2:
            u, v = ends
            if u != v:
                neighbors[u][v] = neighbors[u].get(v, 0) + 1
                neighbors[v][u] = neighbors[v].get(u, 0) + 1

    def rank(nid: int) -> int:
        return nodes[nid].rank

    def best_partner(nid: int) -> int | None:
        best = None
        for other, shared in neighbors[nid].items():
            res = rank(nid) + rank(other) - 2 * shared
            if res > max(rank(nid), rank(other)):
                continue
            key = (res, rank(other), other)
            if best is None or key < best[0]:
                best = (key, other)
        return None if best is None else best[1]

    heap: list[tuple[int, int]] = []
    for nid in nodes:
        heappush(heap, (rank(nid), nid))

    while heap:
        r, nid = heappop(heap)
        if nid not in nodes or rank(nid) != r:
            continue
        partner = best_partner(nid)
        if partner is None:
            continue
        lo, hi = min(nid, partner), max(nid, partner)
        merged = contract_naive(nodes[lo], nodes[hi])
        # splice: merged node reuses the smaller id
        del nodes[hi]
        nodes[lo] = merged
        hi_neighbors = neighbors.pop(hi)
        lo_neighbors = neighbors[lo]
        lo_neighbors.pop(hi, None)
        for other, count in hi_neighbors.items():
            if other == lo:
                continue
            neighbors[other].pop(hi, None)
            lo_neighbors[other] = lo_neighbors.get(other, 0) + count
            neighbors[other][lo] = lo_neighbors[other]
        heappush(heap, (rank(lo), lo))
        for other in lo_neighbors:
            heappush(heap, (rank(other), other))

    scalars = [nid for nid in sorted(nodes) if nodes[nid].rank == 0]
    if scalars and len(nodes) > len(scalars):
        target = min(nid for nid in nodes if nodes[nid].rank > 0)
        for nid in scalars:
            nodes[target] = contract_naive(nodes[target], nodes[nid])
            del nodes[nid]
    elif len(scalars) > 1:
        target = scalars[0]
        for nid in scalars[1:]:
            nodes[target] = contract_naive(nodes[target], nodes[nid])
            del nodes[nid]

    return TensorNetwork(nodes, net.open_labels)


def export_einsum(net: TensorNetwork) -> str:
    """Einsum-style text: one line per node, `<id> <label>,<label>,...`.

    Rank-0 nodes render as the bare id.  Labels with one endpoint across
    the whole listing are the open output legs.
    """
    lines = []
    for nid in sorted(net.nodes):
        labels = ",".join(net.nodes[nid].labels)
        lines.append(f"{nid} {labels}".rstrip())
    return "\n".join(lines) + "\n"
