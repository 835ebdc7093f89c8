"""Sliced contraction-order search under a memory bound.

The pipeline mirrors a partition-then-slice strategy: recursive balanced
bipartition of the network (Fiduccia-Mattheyses refinement over random
initial cuts) down to small leaf sets ordered by brute-force dynamic
programming, then greedy label slicing with brute-force reconfiguration of
small subtrees after each slice, until every intermediate fits the bound.

Cost accounting is symbolic: contracting subtrees with label sets L and R
costs 8 * 2^|L union R| real flops (one complex multiply-add = 8), and a
sliced plan costs n_slices times the per-slice sum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

from .network import TensorNetwork
from .rng import DOMAIN_ORDER, substream

logger = logging.getLogger(__name__)

DEFAULT_LEAF_SIZE = 8
DEFAULT_IMBALANCE = 0.1
DEFAULT_RECONFIGURE_SIZE = 10
DEFAULT_CANDIDATES = 100
EXHAUSTIVE_NODE_CAP = 12


class OrderError(ValueError):
    pass


class BoundInfeasibleError(OrderError):
    pass


class PlanFormatError(OrderError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TreeNode:
    """Binary contraction tree; leaves carry network node ids."""

    __slots__ = ("leaf", "left", "right")

    def __init__(self, leaf=None, left=None, right=None):
        self.leaf = leaf
        self.left = left
        self.right = right

    @property
    def is_leaf(self) -> bool:
        return self.leaf is not None

    def leaf_ids(self) -> list[int]:
        out = []
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node.leaf)
            else:
                stack.extend((node.right, node.left))
        return out

    def __repr__(self):
        if self.is_leaf:
            return f"Leaf({self.leaf})"
        return f"Node({self.left!r}, {self.right!r})"


def _leaf(nid: int) -> TreeNode:
    return TreeNode(leaf=nid)


def _join(left: TreeNode, right: TreeNode) -> TreeNode:
    return TreeNode(left=left, right=right)


@dataclass(frozen=True)
class SlicePlan:
    sliced_labels: tuple[str, ...]

    @property
    def n_slices(self) -> int:
        return 1 << len(self.sliced_labels)


@dataclass(frozen=True)
class CostSummary:
    flops: int
    max_intermediate_log2: int
    n_slices: int

    def to_json_dict(self) -> dict:
        return {
            "flops": self.flops,
            "n_slices": self.n_slices,
            "max_intermediate_log2": self.max_intermediate_log2,
        }


@dataclass
class ContractionPlan:
    tree: TreeNode
    slice_plan: SlicePlan
    cost: CostSummary
    max_size_log2: int


class _LabelBits:
    """Bitmask encoding of label sets; XOR of children gives a subtree's
    boundary labels since every closed label has exactly two endpoints."""

    def __init__(self, net: TensorNetwork):
        labels = sorted(net.label_map())
        self.bit_of = {lab: 1 << i for i, lab in enumerate(labels)}
        self.labels = labels
        self.node_mask = {
            nid: self._mask(t.labels) for nid, t in net.nodes.items()
        }
        self.open_mask = self._mask(net.open_labels)

    def _mask(self, labs: Iterable[str]) -> int:
        m = 0
        for lab in labs:
            m |= self.bit_of[lab]
        return m

    def mask_labels(self, mask: int) -> list[str]:
        return [lab for lab in self.labels if self.bit_of[lab] & mask]


def _postorder(root: TreeNode):
    """Yield nodes children-first, iteratively."""
    stack = [(root, False)]
    while stack:
        node, seen = stack.pop()
        if node.is_leaf:
            yield node
        elif seen:
            yield node
        else:
            stack.append((node, True))
            stack.append((node.right, False))
            stack.append((node.left, False))


def _tree_masks(root: TreeNode, bits: _LabelBits, sliced_mask: int) -> dict[int, int]:
    """Map id(node) -> boundary label mask with sliced labels removed."""
    masks: dict[int, int] = {}
    for node in _postorder(root):
        if node.is_leaf:
            masks[id(node)] = bits.node_mask[node.leaf] & ~sliced_mask
        else:
            masks[id(node)] = masks[id(node.left)] ^ masks[id(node.right)]
    return masks


def _flops_per_slice(root: TreeNode, masks: dict[int, int]) -> int:
    total = 0
    for node in _postorder(root):
        if not node.is_leaf:
            union = masks[id(node.left)] | masks[id(node.right)]
            total += 8 * (1 << union.bit_count())
    return total


def cost(net: TensorNetwork, tree: TreeNode, plan: "SlicePlan | Sequence[str]" = ()) -> CostSummary:
    """Symbolic cost of executing `tree` with the plan's labels sliced."""
    sliced = tuple(plan.sliced_labels if isinstance(plan, SlicePlan) else plan)
    bits = _LabelBits(net)
    smask = 0
    for lab in sliced:
        if lab not in bits.bit_of:
            raise OrderError(f"sliced label {lab!r} not in network")
        smask |= bits.bit_of[lab]
    leaf_ids = tree.leaf_ids()
    if sorted(leaf_ids) != sorted(net.nodes):
        raise OrderError("tree leaves do not match network nodes")
    masks = _tree_masks(tree, bits, smask)
    per_slice = _flops_per_slice(tree, masks)
    max_log2 = max(m.bit_count() for m in masks.values())
    n_slices = 1 << len(sliced)
    return CostSummary(flops=n_slices * per_slice, max_intermediate_log2=max_log2,
                       n_slices=n_slices)


# --- exhaustive ordering (dynamic programming over subsets) ----------------


def _dp_order(ids: Sequence[int], masks: Sequence[int]) -> tuple[TreeNode, float]:
    """Flops-optimal binary tree over the given nodes; deterministic."""
    n = len(ids)
    if n == 1:
        return _leaf(ids[0]), 0.0
    full = (1 << n) - 1
    label_of = [0] * (full + 1)
    for i in range(n):
        label_of[1 << i] = masks[i]
    cost_of = [0.0] * (full + 1)
    split_of = [0] * (full + 1)
    for s in range(3, full + 1):
        if s & (s - 1) == 0:
            continue
        low = s & -s
        label_of[s] = label_of[s & (s - 1)] ^ label_of[low]
        best, best_split = float("inf"), 0
        sub = (s - 1) & s
        while sub:
            if sub & low:
                other = s ^ sub
                c = (
                    cost_of[sub]
                    + cost_of[other]
                    + 8.0 * float(1 << (label_of[sub] | label_of[other]).bit_count())
                )
                if c < best:
                    best, best_split = c, sub
            sub = (sub - 1) & s
        cost_of[s], split_of[s] = best, best_split

    def build(s: int) -> TreeNode:
        if s & (s - 1) == 0:
            return _leaf(ids[s.bit_length() - 1])
        t = split_of[s]
        return _join(build(t), build(s ^ t))

    return build(full), cost_of[full]


def exhaustive_order(net: TensorNetwork) -> TreeNode:
    """Globally flops-optimal contraction tree; only for small networks."""
    ids = sorted(net.nodes)
    if len(ids) > EXHAUSTIVE_NODE_CAP:
        raise OrderError(
            f"exhaustive search capped at {EXHAUSTIVE_NODE_CAP} nodes, "
            f"got {len(ids)}"
        )
    if not ids:
        raise OrderError("empty network")
    bits = _LabelBits(net)
    tree, _ = _dp_order(ids, [bits.node_mask[i] for i in ids])
    return tree


# --- Fiduccia-Mattheyses bipartitioning ------------------------------------


def _fm_bipartition(ids, adj, rng, imbalance: float, restarts: int):
    """Split ids into two sides minimizing total cut-label weight.

    Random balanced starts, then repeated single-move improvement passes
    with best-prefix rollback, keeping side sizes within the imbalance
    allowance.
    """
    n = len(ids)
    hi = min(n - 1, (n + 1) // 2 + int(imbalance * n / 2) + 1)
    lo = n - hi

    def cut_weight(side) -> int:
        total = 0
        for u in range(n):
            for v, w in adj[u].items():
                if v > u and side[u] != side[v]:
                    total += w
        return total

    best_sides, best_cut = None, None
    for _ in range(max(1, restarts)):
        perm = rng.permutation(n)
        side = [0] * n
        for j in perm[n // 2 :]:
            side[j] = 1
        sizes = [side.count(0), side.count(1)]
        cur = cut_weight(side)
        improved = True
        while improved:
            improved = False
            gain = [
                sum(w if side[v] != side[u] else -w for v, w in adj[u].items())
                for u in range(n)
            ]
            locked = [False] * n
            moves: list[int] = []
            cuts: list[int] = []
            running = cur
            for _step in range(n):
                pick = -1
                for u in range(n):
                    if locked[u] or sizes[side[u]] - 1 < lo:
                        continue
                    if pick == -1 or gain[u] > gain[pick]:
                        pick = u
                if pick == -1:
                    break
                old = side[pick]
                running -= gain[pick]
                sizes[old] -= 1
                sizes[1 - old] += 1
                side[pick] = 1 - old
                locked[pick] = True
                moves.append(pick)
                cuts.append(running)
                for v, w in adj[pick].items():
                    if not locked[v]:
                        gain[v] += 2 * w if side[v] == old else -2 * w
            if cuts:
                k = min(range(len(cuts)), key=lambda i: (cuts[i], i))
                # roll back moves after the best prefix
                for u in moves[k + 1 :]:
                    sizes[side[u]] -= 1
                    side[u] = 1 - side[u]
                    sizes[side[u]] += 1
                if cuts[k] < cur:
                    cur = cuts[k]
                    improved = True
                else:
                    for u in moves[: k + 1]:
                        sizes[side[u]] -= 1
                        side[u] = 1 - side[u]
                        sizes[side[u]] += 1
        if best_cut is None or cur < best_cut:
            best_cut, best_sides = cur, side[:]
    part_a = [ids[i] for i in range(n) if best_sides[i] == 0]
    part_b = [ids[i] for i in range(n) if best_sides[i] == 1]
    return part_a, part_b


def partition_search(
    net: TensorNetwork,
    imbalance: float = DEFAULT_IMBALANCE,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    seed: int = 0,
    rng=None,
    restarts: int = 4,
) -> TreeNode:
    """Recursive bipartition down to leaf_size, then exhaustive ordering."""
    if rng is None:
        rng = substream(seed, DOMAIN_ORDER, 0)
    bits = _LabelBits(net)
    lmap = net.label_map()

    def branch(ids: list[int]) -> TreeNode:
        if len(ids) <= max(1, leaf_size):
            tree, _ = _dp_order(ids, [bits.node_mask[i] for i in ids])
            return tree
        pos = {nid: i for i, nid in enumerate(ids)}
        adj = [dict() for _ in ids]
        for ends in lmap.values():
            if len(ends) == 2 and ends[0] in pos and ends[1] in pos:
                u, v = pos[ends[0]], pos[ends[1]]
                adj[u][v] = adj[u].get(v, 0) + 1
                adj[v][u] = adj[v].get(u, 0) + 1
        part_a, part_b = _fm_bipartition(ids, adj, rng, imbalance, restarts)
        return _join(branch(part_a), branch(part_b))

    comps = net.components()
    if len(comps) > 1:
        logger.warning(
            "network is disconnected (%d parts); parts ordered independently",
            len(comps),
        )
    trees = [branch(comp) for comp in comps]
    root = trees[0]
    for t in trees[1:]:
        root = _join(root, t)
    return root


# --- slicing with subtree reconfiguration ----------------------------------


def slice_and_reconfigure(
    net: TensorNetwork,
    tree: TreeNode,
    max_size_log2: int,
    reconfigure_size: int = DEFAULT_RECONFIGURE_SIZE,
) -> tuple[TreeNode, SlicePlan]:
    """Greedily slice labels until every tree node fits the memory bound.

    Each round slices the label on the current largest node whose removal
    costs the least flops ratio (ties by lexicographic label), then re-runs
    the exhaustive solver on every maximal subtree of <= reconfigure_size
    leaves whose label sets changed (only such subtrees can improve, so the
    result matches re-optimizing all of them).
    """
    bits = _LabelBits(net)
    sliced: list[str] = []
    smask = 0
    label_ends: dict[str, list[int]] = net.label_map()

    while True:
        masks = _tree_masks(tree, bits, smask)
        worst_node, worst_pc = None, -1
        for node in _postorder(tree):
            pc = masks[id(node)].bit_count()
            if pc > worst_pc:
                worst_node, worst_pc = node, pc
        if worst_pc <= max_size_log2:
            break
        cand_mask = masks[id(worst_node)] & ~bits.open_mask
        if cand_mask == 0:
            raise BoundInfeasibleError(
                f"bound 2^{max_size_log2} infeasible: a node of rank "
                f"{worst_pc} has no sliceable labels"
            )
        best_label, best_flops = None, None
        for lab in bits.mask_labels(cand_mask):
            trial = smask | bits.bit_of[lab]
            trial_masks = _tree_masks(tree, bits, trial)
            flops = 2 * _flops_per_slice(tree, trial_masks)
            if best_flops is None or flops < best_flops:
                best_label, best_flops = lab, flops
        sliced.append(best_label)
        smask |= bits.bit_of[best_label]
        dirty = set(label_ends.get(best_label, ()))
        _reconfigure(tree, bits, smask, dirty, reconfigure_size)

    return tree, SlicePlan(tuple(sliced))


def _reconfigure(root: TreeNode, bits: _LabelBits, smask: int, dirty: set,
                 max_leaves: int) -> None:
    """Re-solve every maximal subtree of <= max_leaves leaves touching dirty
    leaf ids, in place."""

    def solve(node: TreeNode) -> TreeNode:
        ids = node.leaf_ids()
        tree, _ = _dp_order(ids, [bits.node_mask[i] & ~smask for i in ids])
        return tree

    def walk(node: TreeNode) -> tuple[int, bool]:
        if node.is_leaf:
            return 1, node.leaf in dirty
        nl, dl = walk(node.left)
        nr, dr = walk(node.right)
        count = nl + nr
        if count > max_leaves:
            if nl <= max_leaves and dl:
                node.left = solve(node.left)
            if nr <= max_leaves and dr:
                node.right = solve(node.right)
            return count, False
        return count, dl or dr

    count, dirty_root = walk(root)
    if count <= max_leaves and dirty_root:
        solved = solve(root)
        root.leaf, root.left, root.right = solved.leaf, solved.left, solved.right


def find_order(
    net: TensorNetwork,
    max_size_log2: int = 28,
    n_candidates: int = DEFAULT_CANDIDATES,
    seed: int = 0,
    benchmark: bool = False,
    imbalance: float = DEFAULT_IMBALANCE,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    reconfigure_size: int = DEFAULT_RECONFIGURE_SIZE,
    restarts: int = 4,
) -> ContractionPlan:
    """Best sliced plan over n_candidates seeded partition searches.

    Candidates are ranked by modeled flops, or by measured single-slice
    wall time when benchmark=True; argmin ties resolve to the earliest
    candidate, so results are deterministic for a fixed seed.
    """
    if n_candidates < 1:
        raise OrderError("n_candidates must be >= 1")
    best = None
    for i in range(n_candidates):
        rng = substream(seed, DOMAIN_ORDER, i)
        tree = partition_search(
            net, imbalance=imbalance, leaf_size=leaf_size, rng=rng,
            restarts=restarts,
        )
        tree, plan = slice_and_reconfigure(
            net, tree, max_size_log2, reconfigure_size=reconfigure_size
        )
        summary = cost(net, tree, plan)
        if benchmark:
            from .engine import time_single_slice

            metric = time_single_slice(net, ContractionPlan(tree, plan, summary, max_size_log2))
        else:
            metric = summary.flops
        if best is None or metric < best[0]:
            best = (metric, ContractionPlan(tree, plan, summary, max_size_log2))
    return best[1]


# --- plan file format -------------------------------------------------------
#
#   maxsize <log2>
#   slices <label>,<label>,...      (bare `slices` when nothing is sliced)
#   contract <idA> <idB> -> <idC>   (postorder; idC are fresh ids)


def save_plan(plan: ContractionPlan, path=None) -> str:
    labels = ",".join(plan.slice_plan.sliced_labels)
    lines = [f"maxsize {plan.max_size_log2}"]
    lines.append(f"slices {labels}".rstrip())
    leaf_ids = plan.tree.leaf_ids()
    next_id = max(leaf_ids, default=-1) + 1
    names: dict[int, int] = {}

    for node in _postorder(plan.tree):
        if node.is_leaf:
            names[id(node)] = node.leaf
        else:
            names[id(node)] = next_id
            lines.append(
                f"contract {names[id(node.left)]} {names[id(node.right)]} -> {next_id}"
            )
            next_id += 1
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_plan(text: str, net: TensorNetwork) -> ContractionPlan:
    max_size_log2 = None
    sliced: tuple[str, ...] | None = None
    produced: dict[int, TreeNode] = {}
    used: set[int] = set()
    roots: dict[int, TreeNode] = {}

    def node_for(nid: int, lineno: int) -> TreeNode:
        if nid in used:
            raise PlanFormatError(f"node {nid} consumed twice", lineno)
        used.add(nid)
        if nid in produced:
            roots.pop(nid, None)
            return produced[nid]
        if nid not in net.nodes:
            raise PlanFormatError(f"unknown leaf node {nid}", lineno)
        return _leaf(nid)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "maxsize":
            if max_size_log2 is not None or len(tokens) != 2:
                raise PlanFormatError("bad maxsize line", lineno)
            try:
                max_size_log2 = int(tokens[1])
            except ValueError:
                raise PlanFormatError(f"bad maxsize {tokens[1]!r}", lineno) from None
        elif tokens[0] == "slices":
            if sliced is not None or len(tokens) > 2:
                raise PlanFormatError("bad slices line", lineno)
            sliced = tuple(tokens[1].split(",")) if len(tokens) == 2 else ()
        elif tokens[0] == "contract":
            if len(tokens) != 5 or tokens[3] != "->":
                raise PlanFormatError(
                    "contract line needs: contract <idA> <idB> -> <idC>", lineno
                )
            try:
                ida, idb, idc = int(tokens[1]), int(tokens[2]), int(tokens[4])
            except ValueError:
                raise PlanFormatError("non-integer node id", lineno) from None
            if idc in produced or idc in net.nodes:
                raise PlanFormatError(f"node id {idc} already exists", lineno)
            node = _join(node_for(ida, lineno), node_for(idb, lineno))
            produced[idc] = node
            roots[idc] = node
        else:
            raise PlanFormatError(f"unknown record {tokens[0]!r}", lineno)

    if max_size_log2 is None:
        raise PlanFormatError("missing maxsize line")
    if sliced is None:
        raise PlanFormatError("missing slices line")
    if len(net.nodes) == 1 and not produced:
        tree = _leaf(next(iter(net.nodes)))
    elif len(roots) != 1:
        raise PlanFormatError(f"plan has {len(roots)} roots, expected 1")
    else:
        tree = roots.popitem()[1]
    summary = cost(net, tree, sliced)
    return ContractionPlan(tree, SlicePlan(tuple(sliced)), summary, max_size_log2)
