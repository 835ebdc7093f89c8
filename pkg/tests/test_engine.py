"""Sliced execution: slice indexing, reduction, checkpoints, batches."""

import numpy as np
import pytest

from conftest import random_tensor, small_grid_circuit
from oracles import circuit_state_oracle, network_fold_oracle
from rqcsim.circuit import Circuit, SingleQubitLayer, SqGate
from rqcsim.engine import (
    AmplitudeBatch,
    EngineError,
    EngineMemoryError,
    OpenCapError,
    amplitudes_batch,
    contract_slice,
    execute,
    time_single_slice,
)
from rqcsim.network import TensorNetwork, circuit_to_network, simplify
from rqcsim.order import find_order, load_plan
from rqcsim.tensor import Tensor


def _closed_net(circuit, bits):
    return simplify(circuit_to_network(circuit, bits))


def _uniform_circuit(n):
    """One sqrt-Y layer: all 2^n amplitudes equal (sqrt(2)/2)^n."""
    gates = tuple(SqGate(q, "Y2") for q in range(n))
    return Circuit(n, 0, 0, tuple(range(n)), (SingleQubitLayer(gates),))


# --- contract_slice -----------------------------------------------------------


def test_slice_index_msb_is_first_sliced_label():
    a_vals = np.arange(4, dtype=np.complex64) + 1
    b_vals = np.arange(4, dtype=np.complex64) * 1j + 2
    net = TensorNetwork(
        {0: Tensor(("s", "t"), a_vals), 1: Tensor(("s", "t"), b_vals)}, ()
    )
    plan = load_plan("maxsize 28\nslices s,t\ncontract 0 1 -> 2\n", net)
    a = a_vals.reshape(2, 2)
    b = b_vals.reshape(2, 2)
    for index in range(4):
        s, t = index >> 1, index & 1
        got = complex(contract_slice(net, plan, index).values()[0])
        assert got == pytest.approx(complex(a[s, t] * b[s, t]))


def test_slice_sum_equals_unsliced():
    c = small_grid_circuit(qubits=(3, 3), cycles=8, seed=3)
    net = _closed_net(c, "0" * 9)
    full = find_order(net, max_size_log2=28, n_candidates=2, seed=0)
    assert full.slice_plan.n_slices == 1
    whole = complex(execute(net, full).values()[0])

    sliced = find_order(net, max_size_log2=6, n_candidates=2, seed=0)
    n = sliced.slice_plan.n_slices
    assert n > 1 and n & (n - 1) == 0
    total = sum(
        complex(contract_slice(net, sliced, i).values()[0]) for i in range(n)
    )
    assert abs(total - whole) <= 1e-6 * max(1.0, abs(whole))


def test_slice_sum_matches_oracle_amplitude():
    c = small_grid_circuit(qubits=(2, 2), cycles=4, seed=5)
    state = circuit_state_oracle(c)
    net = _closed_net(c, "0101")
    plan = find_order(net, max_size_log2=5, n_candidates=2, seed=1)
    got = complex(execute(net, plan).values()[0])
    assert abs(got - state[0b0101]) < 1e-6


def test_slice_out_of_range():
    c = small_grid_circuit()
    net = _closed_net(c, "0000")
    plan = find_order(net, n_candidates=1, seed=0)
    with pytest.raises(EngineError):
        contract_slice(net, plan, plan.slice_plan.n_slices)
    with pytest.raises(EngineError):
        contract_slice(net, plan, -1)


# --- execute ------------------------------------------------------------------


def test_execute_open_labels_order():
    c = small_grid_circuit(qubits=(2, 2), cycles=4, seed=2)
    net = simplify(circuit_to_network(c, "00", open_qubits=(1, 3)))
    plan = find_order(net, n_candidates=1, seed=0)
    out = execute(net, plan)
    assert out.labels == net.open_labels
    assert out.size == 4


def test_execute_workers_bit_identical():
    c = small_grid_circuit(qubits=(3, 3), cycles=8, seed=4)
    net = _closed_net(c, "0" * 9)
    plan = find_order(net, max_size_log2=6, n_candidates=2, seed=0)
    assert plan.slice_plan.n_slices >= 4
    v1 = execute(net, plan, workers=1).values()
    v2 = execute(net, plan, workers=2).values()
    assert np.array_equal(v1, v2)


def test_execute_telemetry_exact():
    c = small_grid_circuit(qubits=(3, 3), cycles=6, seed=6)
    net = _closed_net(c, "0" * 9)
    plan = find_order(net, max_size_log2=10, n_candidates=2, seed=0)
    stats: dict = {}
    execute(net, plan, stats_out=stats)
    assert stats["flops"] == plan.cost.flops
    assert stats["flops"] == 8 * stats["macs"]
    assert stats["n_slices"] == plan.slice_plan.n_slices
    assert stats["wall_s"] > 0
    assert stats["flops_per_s"] == pytest.approx(stats["flops"] / stats["wall_s"])


def test_execute_rejects_bad_workers():
    c = small_grid_circuit()
    net = _closed_net(c, "0000")
    plan = find_order(net, n_candidates=1, seed=0)
    with pytest.raises(EngineError):
        execute(net, plan, workers=0)


def test_time_single_slice_positive():
    c = small_grid_circuit()
    net = _closed_net(c, "0000")
    plan = find_order(net, n_candidates=1, seed=0)
    assert time_single_slice(net, plan) > 0


# --- checkpointing ------------------------------------------------------------


def _sliced_job(seed=7):
    c = small_grid_circuit(qubits=(3, 3), cycles=8, seed=seed)
    net = _closed_net(c, "0" * 9)
    plan = find_order(net, max_size_log2=5, n_candidates=2, seed=0)
    assert plan.slice_plan.n_slices >= 16
    return net, plan


def test_checkpoint_removed_on_success(tmp_path):
    net, plan = _sliced_job()
    ck = tmp_path / "run.ckpt"
    out = execute(net, plan, checkpoint_path=ck, checkpoint_every_log2=1)
    assert not ck.exists()
    clean = execute(net, plan)
    assert np.array_equal(out.values(), clean.values())


def test_checkpoint_resume_bit_identical(tmp_path, monkeypatch):
    net, plan = _sliced_job(seed=8)
    ck = tmp_path / "run.ckpt"
    clean = execute(net, plan).values()

    import rqcsim.engine as eng

    real = eng.contract_slice
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 6:
            raise RuntimeError("simulated crash")
        return real(*args, **kwargs)

    monkeypatch.setattr(eng, "contract_slice", flaky)
    with pytest.raises(RuntimeError):
        execute(net, plan, checkpoint_path=ck, checkpoint_every_log2=0)
    monkeypatch.setattr(eng, "contract_slice", real)

    assert ck.exists()
    resumed = execute(net, plan, checkpoint_path=ck, checkpoint_every_log2=0)
    assert not ck.exists()
    assert np.array_equal(resumed.values(), clean)


def test_checkpoint_rejects_garbage(tmp_path):
    net, plan = _sliced_job()
    ck = tmp_path / "run.ckpt"
    ck.write_bytes(b"JUNKJUNKJUNKJUNK")
    with pytest.raises(EngineError):
        execute(net, plan, checkpoint_path=ck)


def test_checkpoint_rejects_mismatched_plan(tmp_path, monkeypatch):
    net, plan = _sliced_job(seed=9)
    ck = tmp_path / "run.ckpt"

    import rqcsim.engine as eng

    real = eng.contract_slice
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise RuntimeError("simulated crash")
        return real(*args, **kwargs)

    monkeypatch.setattr(eng, "contract_slice", flaky)
    with pytest.raises(RuntimeError):
        execute(net, plan, checkpoint_path=ck, checkpoint_every_log2=0)
    monkeypatch.setattr(eng, "contract_slice", real)

    other = find_order(net, max_size_log2=10, n_candidates=1, seed=0)
    assert other.slice_plan.n_slices != plan.slice_plan.n_slices
    with pytest.raises(EngineError):
        execute(net, other, checkpoint_path=ck)


def test_memory_error_names_the_knob(monkeypatch):
    c = small_grid_circuit(qubits=(3, 3), cycles=6, seed=1)
    net = _closed_net(c, "0" * 9)
    assert len(net.nodes) > 1
    plan = find_order(net, n_candidates=1, seed=0)

    import rqcsim.engine as eng

    def boom(*args, **kwargs):
        raise MemoryError

    monkeypatch.setattr(eng, "contract_fused", boom)
    with pytest.raises(EngineMemoryError) as err:
        execute(net, plan)
    assert "max_size_log2" in str(err.value)


# --- amplitudes_batch ---------------------------------------------------------


def test_batch_closed_single_amplitude():
    c = small_grid_circuit(qubits=(2, 2), cycles=4, seed=1)
    state = circuit_state_oracle(c)
    batch = amplitudes_batch(c, "0110", n_candidates=1)
    assert batch.amplitudes.shape == (1,)
    assert abs(batch.amplitude("") - state[0b0110]) < 1e-6


def test_batch_matches_per_amplitude_runs():
    c = small_grid_circuit(qubits=(3, 3), cycles=6, seed=2)
    open_qubits = (7, 8)
    batch = amplitudes_batch(c, "0" * 7, open_qubits, n_candidates=2)
    assert batch.amplitudes.shape == (4,)
    for value in range(4):
        bits = format(value, "02b")
        single = amplitudes_batch(c, "0" * 7 + bits, n_candidates=2)
        assert abs(batch.amplitude(bits) - single.amplitude("")) < 1e-5


def test_batch_first_open_qubit_is_msb():
    c = small_grid_circuit(qubits=(2, 2), cycles=4, seed=6)
    state = circuit_state_oracle(c)
    batch = amplitudes_batch(c, "00", open_qubits=(2, 3), n_candidates=1)
    # closed qubits 0,1 fixed to 0; amplitude index runs over qubits 2,3
    for v in range(4):
        assert abs(batch.amplitudes[v] - state[v]) < 1e-6


def test_batch_full_open_is_normalized():
    c = small_grid_circuit(qubits=(2, 3), cycles=6, seed=3)
    batch = amplitudes_batch(c, "", open_qubits=range(6), n_candidates=2)
    assert batch.amplitudes.shape == (64,)
    assert batch.probabilities.sum() == pytest.approx(1.0, abs=1e-4)


def test_batch_open_cap_guard():
    c = small_grid_circuit(qubits=(3, 3), cycles=4, seed=4)
    with pytest.raises(OpenCapError):
        amplitudes_batch(c, "00", open_qubits=range(7))
    batch = amplitudes_batch(c, "00", open_qubits=range(7), open_cap=7,
                             n_candidates=1)
    assert batch.amplitudes.shape == (128,)


def test_batch_plan_reuse_bit_identical():
    c = small_grid_circuit(qubits=(3, 3), cycles=6, seed=5)
    first = amplitudes_batch(c, "0" * 7, open_qubits=(0, 1), n_candidates=2)
    again = amplitudes_batch(c, "0" * 7, open_qubits=(0, 1), plan=first.plan)
    assert np.array_equal(first.amplitudes, again.amplitudes)
    other = amplitudes_batch(c, "1" * 7, open_qubits=(0, 1), plan=first.plan)
    assert not np.array_equal(first.amplitudes, other.amplitudes)


def test_batch_amplitude_validates_assignment():
    c = small_grid_circuit(qubits=(2, 2), cycles=4, seed=7)
    batch = amplitudes_batch(c, "00", open_qubits=(2, 3), n_candidates=1)
    with pytest.raises(EngineError):
        batch.amplitude("0")
    with pytest.raises(EngineError):
        batch.amplitude("2x")


def test_uniform_circuit_amplitudes():
    c = _uniform_circuit(4)
    batch = amplitudes_batch(c, "0000", n_candidates=1)
    assert batch.amplitude("") == pytest.approx((2 ** -0.5) ** 4, abs=1e-6)
    open_batch = amplitudes_batch(c, "00", open_qubits=(1, 2), n_candidates=1)
    np.testing.assert_allclose(
        open_batch.probabilities, np.full(4, 1 / 16), atol=1e-6
    )
