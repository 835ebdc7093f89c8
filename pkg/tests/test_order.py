"""Contraction-order search: costs, optimality, slicing, plan files."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tensor, small_grid_circuit
from oracles import tree_cost_oracle
from rqcsim.network import TensorNetwork, circuit_to_network, simplify
from rqcsim.order import (
    BoundInfeasibleError,
    ContractionPlan,
    OrderError,
    PlanFormatError,
    SlicePlan,
    TreeNode,
    cost,
    exhaustive_order,
    find_order,
    load_plan,
    partition_search,
    save_plan,
    slice_and_reconfigure,
)


def _ring_net(rng, n, extra_open=0):
    """n tensors in a cycle; node i shares edge label e{i} with node i+1."""
    nodes = {}
    for i in range(n):
        labels = [f"e{i}", f"e{(i - 1) % n}"]
        labels += [f"o{i}_{j}" for j in range(extra_open)]
        nodes[i] = random_tensor(rng, tuple(labels))
    open_labels = tuple(
        f"o{i}_{j}" for i in range(n) for j in range(extra_open)
    )
    net = TensorNetwork(nodes, open_labels)
    net.validate()
    return net


def _random_net(rng, n, extra_edges=2):
    """Random connected network: a spanning tree plus a few chords."""
    labels_of = {i: [] for i in range(n)}
    edges = []
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.append((j, i))
    for _ in range(extra_edges):
        i, j = rng.choice(n, size=2, replace=False)
        edges.append((min(i, j), max(i, j)))
    for k, (i, j) in enumerate(edges):
        lab = f"e{k}"
        labels_of[i].append(lab)
        labels_of[j].append(lab)
    nodes = {i: random_tensor(rng, tuple(labs)) for i, labs in labels_of.items()}
    net = TensorNetwork(nodes, ())
    net.validate()
    return net


def _all_trees(ids):
    """Every unordered binary tree over the given leaves, each once."""
    ids = list(ids)
    if len(ids) == 1:
        yield TreeNode(leaf=ids[0])
        return
    first, rest = ids[0], ids[1:]
    for pick in range(1 << len(rest)):
        left = [first] + [r for b, r in enumerate(rest) if pick >> b & 1]
        right = [r for b, r in enumerate(rest) if not pick >> b & 1]
        if not right:
            continue
        for lt in _all_trees(left):
            for rt in _all_trees(right):
                yield TreeNode(left=lt, right=rt)


def test_tree_enumeration_counts():
    # (2n-3)!! unordered binary trees over n labeled leaves
    assert sum(1 for _ in _all_trees(range(2))) == 1
    assert sum(1 for _ in _all_trees(range(3))) == 3
    assert sum(1 for _ in _all_trees(range(4))) == 15
    assert sum(1 for _ in _all_trees(range(5))) == 105


# --- cost -------------------------------------------------------------------


def test_cost_matches_oracle_unsliced(rng):
    net = _ring_net(rng, 6)
    for tree in [exhaustive_order(net), partition_search(net, leaf_size=2)]:
        got = cost(net, tree)
        flops, max_rank, n_slices = tree_cost_oracle(net, tree)
        assert got.flops == flops
        assert got.max_intermediate_log2 == max_rank
        assert got.n_slices == n_slices == 1


def test_cost_matches_oracle_sliced(rng):
    net = _ring_net(rng, 6)
    tree = exhaustive_order(net)
    for sliced in [("e0",), ("e0", "e3"), ("e1", "e2", "e4")]:
        got = cost(net, tree, SlicePlan(sliced))
        flops, max_rank, n_slices = tree_cost_oracle(net, tree, sliced)
        assert got.flops == flops
        assert got.max_intermediate_log2 == max_rank
        assert got.n_slices == n_slices == 2 ** len(sliced)


def test_cost_is_exact_int(rng):
    net = _ring_net(rng, 5)
    summary = cost(net, exhaustive_order(net))
    assert isinstance(summary.flops, int)
    assert summary.flops % 8 == 0


def test_cost_rejects_foreign_tree(rng):
    net = _ring_net(rng, 4)
    other = _ring_net(rng, 5)
    tree = exhaustive_order(other)
    with pytest.raises(OrderError):
        cost(net, tree)


def test_cost_rejects_unknown_sliced_label(rng):
    net = _ring_net(rng, 4)
    tree = exhaustive_order(net)
    with pytest.raises(OrderError):
        cost(net, tree, ("zz",))


@settings(max_examples=20)
@given(seed=st.integers(0, 2**31), n=st.integers(3, 7))
def test_cost_matches_oracle_property(seed, n):
    rng = np.random.default_rng(seed)
    net = _random_net(rng, n)
    tree = partition_search(net, leaf_size=3, seed=seed)
    got = cost(net, tree)
    flops, max_rank, _ = tree_cost_oracle(net, tree)
    assert got.flops == flops
    assert got.max_intermediate_log2 == max_rank


# --- exhaustive_order ---------------------------------------------------------


def test_exhaustive_is_optimal_over_all_trees(rng):
    for trial in range(4):
        net = _random_net(rng, 6)
        best = cost(net, exhaustive_order(net)).flops
        brute = min(
            tree_cost_oracle(net, t)[0] for t in _all_trees(sorted(net.nodes))
        )
        assert best == brute


def test_exhaustive_rejects_oversized(rng):
    net = _ring_net(rng, 13)
    with pytest.raises(OrderError):
        exhaustive_order(net)


def test_exhaustive_single_node(rng):
    net = TensorNetwork({0: random_tensor(rng, ("a",))}, ("a",))
    tree = exhaustive_order(net)
    assert tree.is_leaf and tree.leaf == 0


# --- partition_search ---------------------------------------------------------


def test_partition_search_covers_all_nodes(rng):
    c = small_grid_circuit(qubits=(3, 3), cycles=6, seed=4)
    net = simplify(circuit_to_network(c, "0" * 9))
    tree = partition_search(net)
    assert sorted(tree.leaf_ids()) == sorted(net.nodes)


def test_partition_search_deterministic(rng):
    c = small_grid_circuit(qubits=(3, 3), cycles=4, seed=5)
    net = simplify(circuit_to_network(c, "0" * 9))
    t1 = partition_search(net, seed=9)
    t2 = partition_search(net, seed=9)
    p1 = ContractionPlan(t1, SlicePlan(()), cost(net, t1), 28)
    p2 = ContractionPlan(t2, SlicePlan(()), cost(net, t2), 28)
    assert save_plan(p1) == save_plan(p2)


def test_partition_search_handles_disconnected(rng):
    nodes = {
        0: random_tensor(rng, ("a",)),
        1: random_tensor(rng, ("a",)),
        2: random_tensor(rng, ("b",)),
        3: random_tensor(rng, ("b",)),
    }
    net = TensorNetwork(nodes, ())
    tree = partition_search(net, leaf_size=1)
    assert sorted(tree.leaf_ids()) == [0, 1, 2, 3]
    assert cost(net, tree).flops == tree_cost_oracle(net, tree)[0]


# --- slice_and_reconfigure ----------------------------------------------------


def _max_node_rank(net, tree, sliced):
    _, max_rank, _ = tree_cost_oracle(net, tree, sliced)
    return max_rank


def test_slicing_enforces_bound(rng):
    c = small_grid_circuit(qubits=(3, 3), cycles=8, seed=6)
    net = simplify(circuit_to_network(c, "0" * 9))
    tree = partition_search(net, seed=1)
    unsliced_max = cost(net, tree).max_intermediate_log2
    bound = unsliced_max - 3
    tree, plan = slice_and_reconfigure(net, tree, bound)
    assert _max_node_rank(net, tree, plan.sliced_labels) <= bound
    assert plan.n_slices == 2 ** len(plan.sliced_labels)
    assert len(set(plan.sliced_labels)) == len(plan.sliced_labels)


def test_slicing_noop_when_already_under_bound(rng):
    net = _ring_net(rng, 4)
    tree = exhaustive_order(net)
    tree, plan = slice_and_reconfigure(net, tree, 28)
    assert plan.sliced_labels == ()
    assert plan.n_slices == 1


def test_slicing_never_picks_open_labels(rng):
    c = small_grid_circuit(qubits=(3, 3), cycles=6, seed=2)
    net = simplify(circuit_to_network(c, "0" * 4, open_qubits=range(4, 9)))
    assert len(net.open_labels) == 5
    tree = partition_search(net, seed=3)
    bound = max(6, len(net.open_labels) + 1)
    tree, plan = slice_and_reconfigure(net, tree, bound)
    assert not set(plan.sliced_labels) & set(net.open_labels)


def test_slicing_infeasible_bound(rng):
    net = TensorNetwork(
        {0: random_tensor(rng, ("a", "b", "c", "d"))}, ("a", "b", "c", "d")
    )
    tree = exhaustive_order(net)
    with pytest.raises(BoundInfeasibleError):
        slice_and_reconfigure(net, tree, 2)


# --- find_order ---------------------------------------------------------------


def test_find_order_deterministic():
    c = small_grid_circuit(qubits=(3, 3), cycles=6, seed=7)
    net = simplify(circuit_to_network(c, "0" * 9))
    a = find_order(net, max_size_log2=14, n_candidates=3, seed=11)
    b = find_order(net, max_size_log2=14, n_candidates=3, seed=11)
    assert save_plan(a) == save_plan(b)
    assert a.cost.flops == b.cost.flops


def test_find_order_respects_bound():
    c = small_grid_circuit(qubits=(4, 3), cycles=8, seed=8)
    net = simplify(circuit_to_network(c, "0" * 12))
    plan = find_order(net, max_size_log2=10, n_candidates=2, seed=0)
    assert plan.cost.max_intermediate_log2 <= 10
    assert plan.max_size_log2 == 10
    assert plan.cost.n_slices == plan.slice_plan.n_slices


def test_find_order_more_candidates_never_worse():
    c = small_grid_circuit(qubits=(3, 3), cycles=6, seed=9)
    net = simplify(circuit_to_network(c, "0" * 9))
    f1 = find_order(net, max_size_log2=14, n_candidates=1, seed=4).cost.flops
    f5 = find_order(net, max_size_log2=14, n_candidates=5, seed=4).cost.flops
    assert f5 <= f1


def test_find_order_benchmark_mode(rng):
    net = _ring_net(rng, 5)
    plan = find_order(net, max_size_log2=28, n_candidates=2, seed=0, benchmark=True)
    assert sorted(plan.tree.leaf_ids()) == sorted(net.nodes)


def test_find_order_rejects_zero_candidates(rng):
    net = _ring_net(rng, 4)
    with pytest.raises(OrderError):
        find_order(net, n_candidates=0)


# --- plan files ---------------------------------------------------------------


def test_plan_round_trip_byte_stable():
    c = small_grid_circuit(qubits=(3, 3), cycles=6, seed=10)
    net = simplify(circuit_to_network(c, "0" * 9))
    plan = find_order(net, max_size_log2=12, n_candidates=2, seed=0)
    text = save_plan(plan)
    loaded = load_plan(text, net)
    assert save_plan(loaded) == text
    assert loaded.slice_plan == plan.slice_plan
    assert loaded.cost == plan.cost
    assert loaded.max_size_log2 == plan.max_size_log2


def test_plan_file_round_trip(tmp_path):
    c = small_grid_circuit(qubits=(2, 2), cycles=4, seed=1)
    net = simplify(circuit_to_network(c, "0000"))
    plan = find_order(net, max_size_log2=28, n_candidates=1, seed=0)
    path = tmp_path / "plan.txt"
    text = save_plan(plan, path)
    assert path.read_text() == text
    loaded = load_plan(path.read_text(), net)
    assert save_plan(loaded) == text


def test_plan_comments_and_blanks_ignored(rng):
    net = TensorNetwork(
        {0: random_tensor(rng, ("a",)), 1: random_tensor(rng, ("a",))}, ()
    )
    text = "# header\nmaxsize 10\n\nslices\ncontract 0 1 -> 2  # fold\n"
    plan = load_plan(text, net)
    assert plan.max_size_log2 == 10
    assert plan.slice_plan.sliced_labels == ()


def test_plan_rejects_unknown_record(rng):
    net = TensorNetwork(
        {0: random_tensor(rng, ("a",)), 1: random_tensor(rng, ("a",))}, ()
    )
    with pytest.raises(PlanFormatError) as err:
        load_plan("maxsize 10\nslices\nfrobnicate 0 1\n", net)
    assert err.value.line == 3


def test_plan_rejects_double_consume(rng):
    net = TensorNetwork(
        {0: random_tensor(rng, ("a",)), 1: random_tensor(rng, ("a",))}, ()
    )
    with pytest.raises(PlanFormatError) as err:
        load_plan("maxsize 10\nslices\ncontract 0 0 -> 2\n", net)
    assert err.value.line == 3


def test_plan_rejects_unknown_leaf(rng):
    net = TensorNetwork(
        {0: random_tensor(rng, ("a",)), 1: random_tensor(rng, ("a",))}, ()
    )
    with pytest.raises(PlanFormatError):
        load_plan("maxsize 10\nslices\ncontract 7 1 -> 2\n", net)


def test_plan_rejects_missing_headers(rng):
    net = TensorNetwork(
        {0: random_tensor(rng, ("a",)), 1: random_tensor(rng, ("a",))}, ()
    )
    with pytest.raises(PlanFormatError):
        load_plan("slices\ncontract 0 1 -> 2\n", net)
    with pytest.raises(PlanFormatError):
        load_plan("maxsize 10\ncontract 0 1 -> 2\n", net)


def test_plan_rejects_multiple_roots(rng):
    nodes = {
        0: random_tensor(rng, ("a",)),
        1: random_tensor(rng, ("a",)),
        2: random_tensor(rng, ("b",)),
        3: random_tensor(rng, ("b",)),
    }
    net = TensorNetwork(nodes, ())
    text = "maxsize 10\nslices\ncontract 0 1 -> 4\ncontract 2 3 -> 5\n"
    with pytest.raises(PlanFormatError):
        load_plan(text, net)


def test_plan_rejects_id_collision(rng):
    net = TensorNetwork(
        {0: random_tensor(rng, ("a",)), 1: random_tensor(rng, ("a",))}, ()
    )
    with pytest.raises(PlanFormatError):
        load_plan("maxsize 10\nslices\ncontract 0 1 -> 1\n", net)


def test_plan_against_wrong_network(rng):
    big = _ring_net(rng, 5)
    small = _ring_net(rng, 3)
    plan = find_order(big, n_candidates=1, seed=0)
    with pytest.raises(PlanFormatError):
        load_plan(save_plan(plan), small)
