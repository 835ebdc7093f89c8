"""Executes sliced contraction plans and produces amplitude batches.

Slices are independent: slice s fixes each sliced label to the bits of s
(first sliced label = most significant bit) and contracts the tree with the
fused kernel.  Slice results are summed by a fixed binary-tree (carry-stack)
reduction over slice index order, so the result is bit-identical for any
worker count: workers own aligned power-of-two chunks, and an aligned chunk's
sum is exactly one subtree of the sequential reduction tree.

Checkpoint layout (little-endian), written every 2^c completed slices:

    magic  b"RQCK"
    u32    version (1)
    u64    n_slices
    u64    next_slice (first slice not yet folded in)
    u16    rank of the open-legs result
    u16    number of carry-stack entries
    rank * [u16 byte length, utf-8 label]
    per entry: u16 level, 2^rank * [f32 re, f32 im]
"""

from __future__ import annotations

import logging
import math
import os
import struct
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .circuit import Circuit
from .network import TensorNetwork, circuit_to_network, simplify
from .order import ContractionPlan, find_order, load_plan, save_plan
from .tensor import MacCounter, Tensor, contract_fused, permute, slice_tensor

logger = logging.getLogger(__name__)

DEFAULT_OPEN_CAP = 6


class EngineError(ValueError):
    pass


class EngineMemoryError(EngineError):
    pass


class OpenCapError(EngineError):
    """More open qubits requested than the configured batch cap."""


def _slice_bits(labels: Sequence[str], slice_index: int) -> dict[str, int]:
    n = len(labels)
    return {lab: (slice_index >> (n - 1 - j)) & 1 for j, lab in enumerate(labels)}


def contract_slice(
    net: TensorNetwork,
    plan: ContractionPlan,
    slice_index: int,
    batch_log2: int = 13,
    resident_log2: int = 24,
    precision: str = "single",
) -> Tensor:
    """Contract one slice of the plan; result legs ordered as net.open_labels.

    The larger intermediate is always streamed through the fused kernel with
    the smaller one resident; mixed precision stores intermediates of rank
    >= 12 in half-width form between steps.
    """
    n_slices = plan.slice_plan.n_slices
    if not 0 <= slice_index < n_slices:
        raise EngineError(f"slice index {slice_index} not in [0, {n_slices})")
    assign = _slice_bits(plan.slice_plan.sliced_labels, slice_index)

    stack: list[Tensor] = []
    for node in _postorder_nodes(plan.tree):
        if node.is_leaf:
            t = net.nodes[node.leaf]
            for lab in plan.slice_plan.sliced_labels:
                if lab in t.labels:
                    t = slice_tensor(t, lab, assign[lab])
            stack.append(t)
        else:
            right = stack.pop()
            left = stack.pop()
            a, b = (left, right) if left.size >= right.size else (right, left)
            # the kernel needs the shared block inside one batch; raise the
            # batch exponent for steps whose shared rank exceeds the default
            shared = len(set(a.labels) & set(b.labels))
            try:
                out = contract_fused(
                    a,
                    b,
                    batch_log2=max(batch_log2, shared),
                    resident_log2=resident_log2,
                )
            except MemoryError as exc:
                rank = len(set(a.labels) | set(b.labels)) - len(
                    set(a.labels) & set(b.labels)
                )
                raise EngineMemoryError(
                    f"out of memory on an intermediate of rank {rank}; "
                    "re-run with a smaller max_size_log2"
                ) from exc
            if precision == "mixed" and out.rank >= 12:
                out = Tensor(out.labels, out.values(), "mixed")
            stack.append(out)
    result = stack.pop()
    if net.open_labels and result.labels != net.open_labels:
        result = permute(result, net.open_labels)
    return result


def _postorder_nodes(root):
    stack = [(root, False)]
    while stack:
        node, seen = stack.pop()
        if node.is_leaf or seen:
            yield node
        else:
            stack.append((node, True))
            stack.append((node.right, False))
            stack.append((node.left, False))


# --- deterministic carry-stack reduction -----------------------------------


def _push(stack: list, values: np.ndarray, level: int) -> None:
    while stack and stack[-1][0] == level:
        _, prev = stack.pop()
        values = prev + values
        level += 1
    stack.append((level, values))


def _fold(stack: list) -> np.ndarray:
    acc = None
    for _, values in reversed(stack):
        acc = values if acc is None else values + acc
    return acc


# --- checkpointing ----------------------------------------------------------

_CKPT_MAGIC = b"RQCK"
_CKPT_VERSION = 1


def _write_checkpoint(path, n_slices: int, next_slice: int,
                      labels: Sequence[str], stack: list) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<IQQHH", _CKPT_VERSION, n_slices, next_slice,
                             len(labels), len(stack)))
        for lab in labels:
            enc = lab.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
        for level, values in stack:
            fh.write(struct.pack("<H", level))
            fh.write(values.astype("<c8").tobytes())
    os.replace(tmp, path)


def _read_checkpoint(path, n_slices: int, labels: Sequence[str]):
    with open(path, "rb") as fh:
        if fh.read(4) != _CKPT_MAGIC:
            raise EngineError(f"{path}: not a checkpoint file")
        version, ck_slices, next_slice, rank, n_stack = struct.unpack(
            "<IQQHH", fh.read(24)
        )
        if version != _CKPT_VERSION:
            raise EngineError(f"{path}: unsupported checkpoint version {version}")
        ck_labels = []
        for _ in range(rank):
            (n,) = struct.unpack("<H", fh.read(2))
            ck_labels.append(fh.read(n).decode("utf-8"))
        if ck_slices != n_slices or tuple(ck_labels) != tuple(labels):
            raise EngineError(f"{path}: checkpoint does not match this plan")
        size = 1 << rank
        stack = []
        for _ in range(n_stack):
            (level,) = struct.unpack("<H", fh.read(2))
            values = np.frombuffer(fh.read(size * 8), dtype="<c8").copy()
            stack.append((level, values))
        return next_slice, stack


# --- parallel workers -------------------------------------------------------

_WORKER: dict = {}


def _worker_init(net: TensorNetwork, plan_text: str, params: dict) -> None:
    plan = load_plan(plan_text, net)
    _WORKER.update(net=net, plan=plan, params=params)


def _worker_chunk(task: tuple[int, int]):
    start, count = task
    net, plan, params = _WORKER["net"], _WORKER["plan"], _WORKER["params"]
    stack: list = []
    counter = MacCounter()
    with counter, threadpool_limits(limits=1):
        for i in range(start, start + count):
            values = contract_slice(net, plan, i, **params).values()
            _push(stack, values, 0)
    # an aligned power-of-two chunk always folds to a single stack entry
    return _fold(stack), counter.macs


def execute(
    net: TensorNetwork,
    plan: ContractionPlan,
    workers: int = 1,
    batch_log2: int = 13,
    resident_log2: int = 24,
    precision: str = "single",
    checkpoint_path=None,
    checkpoint_every_log2: int | None = None,
    progress: bool = False,
    stats_out: dict | None = None,
) -> Tensor:
    """Sum contract_slice over all slices with the fixed-tree reduction.

    The result is independent of `workers` (bit-identical).  When a
    checkpoint path is given, partial sums are persisted every
    2^checkpoint_every_log2 slices and runs resume from a matching file.
    """
    if workers < 1:
        raise EngineError("workers must be >= 1")
    n_slices = plan.slice_plan.n_slices
    k = n_slices.bit_length() - 1
    params = dict(batch_log2=batch_log2, resident_log2=resident_log2,
                  precision=precision)
    labels = net.open_labels

    every = None
    if checkpoint_path is not None:
        every = 1 << (checkpoint_every_log2 if checkpoint_every_log2 is not None
                      else max(0, k - 4))

    start, stack = 0, []
    if checkpoint_path is not None and os.path.exists(checkpoint_path):
        start, stack = _read_checkpoint(checkpoint_path, n_slices, labels)
        logger.info("resuming from %s at slice %d/%d", checkpoint_path, start,
                    n_slices)

    t0 = time.perf_counter()
    counter = MacCounter()
    report_every = max(1, n_slices // 8)

    if workers == 1 or n_slices - start <= 1:
        with counter, threadpool_limits(limits=1):
            for i in range(start, n_slices):
                values = contract_slice(net, plan, i, **params).values()
                _push(stack, values, 0)
                done = i + 1
                if every and done % every == 0 and done < n_slices:
                    _write_checkpoint(checkpoint_path, n_slices, done, labels,
                                      stack)
                if progress and done % report_every == 0:
                    _log_rate(done, n_slices, counter.macs, t0)
        total_macs = counter.macs
    else:
        chunk_log2 = max(0, k - math.ceil(math.log2(4 * workers)))
        chunk_log2 = max(chunk_log2, k - 12)
        if every is not None:
            chunk_log2 = min(chunk_log2, every.bit_length() - 1)
        chunk = 1 << chunk_log2
        first_chunk = start >> chunk_log2
        if start % chunk:
            raise EngineError(
                "checkpoint boundary does not align with the worker chunking; "
                "resume with workers=1"
            )
        n_chunks = n_slices >> chunk_log2
        plan_text = save_plan(plan)
        total_macs = 0
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_worker_init,
            initargs=(net, plan_text, params),
        ) as pool:
            pending = {
                pool.submit(_worker_chunk, (c << chunk_log2, chunk)): c
                for c in range(first_chunk, n_chunks)
            }
            ready: dict[int, np.ndarray] = {}
            next_chunk = first_chunk
            while pending or ready:
                if pending:
                    done_set, _ = wait(pending, return_when=FIRST_COMPLETED)
                    for fut in done_set:
                        c = pending.pop(fut)
                        values, macs = fut.result()
                        ready[c] = values
                        total_macs += macs
                while next_chunk in ready:
                    _push(stack, ready.pop(next_chunk), chunk_log2)
                    next_chunk += 1
                    done = next_chunk << chunk_log2
                    if every and done % every == 0 and done < n_slices:
                        _write_checkpoint(checkpoint_path, n_slices, done,
                                          labels, stack)
                    if progress and done % report_every == 0:
                        _log_rate(done, n_slices, total_macs, t0)

    values = _fold(stack)
    wall = time.perf_counter() - t0
    if stats_out is not None:
        stats_out.update(
            macs=total_macs,
            flops=8 * total_macs,
            n_slices=n_slices,
            wall_s=wall,
            flops_per_s=(8 * total_macs / wall) if wall > 0 else float("inf"),
        )
    logger.info(
        "contracted %d slices in %.3fs (%.3g flops/s)",
        n_slices,
        wall,
        (8 * total_macs / wall) if wall > 0 else float("nan"),
    )
    if checkpoint_path is not None and os.path.exists(checkpoint_path):
        os.remove(checkpoint_path)
    return Tensor(labels, values)


def _log_rate(done: int, total: int, macs: int, t0: float) -> None:
    wall = time.perf_counter() - t0
    rate = 8 * macs / wall if wall > 0 else float("nan")
    logger.info("slice %d/%d, %.3g flops/s", done, total, rate)


def time_single_slice(net: TensorNetwork, plan: ContractionPlan) -> float:
    """Wall time of contracting slice 0; used for benchmark-ranked search."""
    with threadpool_limits(limits=1):
        t0 = time.perf_counter()
        contract_slice(net, plan, 0)
        return time.perf_counter() - t0


# --- amplitude batches ------------------------------------------------------


@dataclass
class AmplitudeBatch:
    """Amplitudes for all assignments of the open qubits, fixed_bits on the
    closed qubits.  Index: first open qubit is the most significant bit."""

    fixed_bits: str
    open_qubits: tuple[int, ...]
    amplitudes: np.ndarray
    plan: ContractionPlan

    def amplitude(self, assignment: str) -> complex:
        if len(assignment) != len(self.open_qubits) or any(
            c not in "01" for c in assignment
        ):
            raise EngineError(f"bad open-qubit assignment {assignment!r}")
        return complex(self.amplitudes[int(assignment, 2) if assignment else 0])

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes.astype(np.complex128)) ** 2


def amplitudes_batch(
    circuit: Circuit,
    fixed_bits: str,
    open_qubits: Sequence[int] = (),
    max_size_log2: int = 28,
    seed: int = 0,
    open_cap: int = DEFAULT_OPEN_CAP,
    n_candidates: int | None = None,
    workers: int = 1,
    batch_log2: int = 13,
    resident_log2: int = 24,
    precision: str = "single",
    plan: ContractionPlan | None = None,
    stats_out: dict | None = None,
) -> AmplitudeBatch:
    """One contraction pass yielding 2^k amplitudes over k open qubits.

    The open-legs tensor of the sliced contraction IS the batch; no
    per-amplitude recontraction happens.  A plan from a previous batch of
    the same circuit (and open qubits) can be reused: changing fixed_bits
    only changes leaf values, not the network structure.
    """
    if len(open_qubits) > open_cap:
        raise OpenCapError(
            f"{len(open_qubits)} open qubits exceeds the cap of {open_cap}"
        )
    net = simplify(circuit_to_network(circuit, fixed_bits, open_qubits))
    if plan is None:
        kwargs = {} if n_candidates is None else {"n_candidates": n_candidates}
        plan = find_order(net, max_size_log2, seed=seed, **kwargs)
    result = execute(
        net,
        plan,
        workers=workers,
        batch_log2=batch_log2,
        resident_log2=resident_log2,
        precision=precision,
        stats_out=stats_out,
    )
    return AmplitudeBatch(fixed_bits, tuple(open_qubits), result.values(), plan)
