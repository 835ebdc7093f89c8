"""Regenerate the bundled hardware topology files in src/rqcsim/data/.

sycamore53: 54-site diamond-shaped lattice with one degree-1 corner site
disabled, leaving 53 qubits and 87 enabled couplers.

zuchongzhi56: 6x11 rectangular lattice with 10 boundary sites disabled,
leaving 56 connected qubits.

Coupler labels stagger along the diagonals (vertical bonds alternate A/B by
site-diagonal parity, horizontal bonds C/D), so each label class is a
matching and the ABCDCDAB activation pattern touches every coupler.
"""

from __future__ import annotations

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from rqcsim.topology import Coupler, Qubit, Topology, serialize_topology

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "rqcsim", "data")


def _build(rows: dict[int, range], disabled: set[tuple[int, int]]) -> Topology:
    sites = [(r, c) for r in sorted(rows) for c in rows[r]]
    id_of = {rc: i for i, rc in enumerate(sites)}
    qubits = tuple(
        Qubit(id=id_of[(r, c)], x=c, y=r, enabled=(r, c) not in disabled)
        for (r, c) in sites
    )
    couplers = []
    for r, c in sites:
        for (dr, dc) in ((1, 0), (0, 1)):
            other = (r + dr, c + dc)
            if other not in id_of:
                continue
            if dr:
                label = "A" if (r + c) % 2 == 0 else "B"
            else:
                label = "C" if (r + c) % 2 == 1 else "D"
            on = (r, c) not in disabled and other not in disabled
            couplers.append(
                Coupler(a=id_of[(r, c)], b=id_of[other], label=label, enabled=on)
            )
    topo = Topology(qubits=qubits, couplers=tuple(couplers))
    topo.validate()
    return topo


def _check_connected(topo: Topology) -> None:
    enabled = {q.id for q in topo.qubits if q.enabled}
    adj: dict[int, list[int]] = {q: [] for q in enabled}
    for c in topo.couplers:
        if c.enabled:
            adj[c.a].append(c.b)
            adj[c.b].append(c.a)
    seen = set()
    stack = [next(iter(enabled))]
    while stack:
        q = stack.pop()
        if q in seen:
            continue
        seen.add(q)
        stack.extend(adj[q])
    assert seen == enabled, "enabled subgraph is disconnected"


def sycamore53() -> Topology:
    rows = {
        0: range(5, 7), 1: range(4, 8), 2: range(3, 9), 3: range(2, 10),
        4: range(1, 10), 5: range(0, 9), 6: range(1, 8), 7: range(2, 7),
        8: range(3, 6), 9: range(4, 5),
    }
    return _build(rows, disabled={(9, 4)})


def zuchongzhi56() -> Topology:
    rows = {r: range(0, 11) for r in range(6)}
    disabled = {
        (0, 0), (0, 3), (0, 7), (0, 10),
        (2, 0), (3, 10),
        (5, 0), (5, 3), (5, 7), (5, 10),
    }
    return _build(rows, disabled=disabled)


def main() -> None:
    os.makedirs(DATA_DIR, exist_ok=True)
    for name, topo in (("sycamore53", sycamore53()), ("zuchongzhi56", zuchongzhi56())):
        _check_connected(topo)
        n_enabled = sum(q.enabled for q in topo.qubits)
        n_couplers = sum(c.enabled for c in topo.couplers)
        per_label = {
            lab: sum(1 for c in topo.couplers if c.enabled and c.label == lab)
            for lab in "ABCD"
        }
        path = os.path.join(DATA_DIR, f"{name}.topo")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(serialize_topology(topo))
        print(f"{name}: {n_enabled} qubits, {n_couplers} couplers {per_label} -> {path}")


if __name__ == "__main__":
    main()
