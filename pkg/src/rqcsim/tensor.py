"""Dense complex tensors over binary indices and their contraction kernels.

Layout: flat array of length 2^rank, last index fastest, complex values as
interleaved (re, im) pairs.  Two kernels implement the same contraction
semantics (shared labels contracted, output = a-only then b-only labels in
source order):

* ``contract_naive`` permutes both operands into matrix layout and multiplies;
  it is the reference and the baseline the fused kernel is measured against.
* ``contract_fused`` streams the large operand A through a fixed staging
  buffer in contiguous batches of 2^batch_log2 elements while the small
  operand B is held resident, so A is read once and no permuted copy of A is
  materialized.  If B exceeds the resident budget it falls back to
  ring-partitioning B along output columns and re-streaming A per partition.

Precision modes: "single" stores complex64; "mixed" stores interleaved
float16 pairs scaled by a per-tensor float32 factor and materializes
complex64 for arithmetic (accumulation is always single precision).
"""

from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

PRECISIONS = ("single", "mixed")
DEFAULT_BATCH_LOG2 = 13
DEFAULT_RESIDENT_LOG2 = 24


class TensorError(ValueError):
    pass


class TensorContractionError(TensorError):
    pass


# --- instrumentation ------------------------------------------------------
#
# Meters record buffer elements (complex64 units) the kernels allocate;
# counters record complex multiply-adds.  Both are plain stacks: enter
# pushes, exit pops, and every kernel call reports to all active entries.

_active_meters: list["AllocationMeter"] = []
_active_counters: list["MacCounter"] = []


class AllocationMeter:
    """Tracks live and peak kernel-managed buffer elements."""

    def __init__(self):
        self.current = 0
        self.peak = 0

    def __enter__(self):
        _active_meters.append(self)
        return self

    def __exit__(self, *exc):
        _active_meters.remove(self)
        return False

    def _add(self, n: int) -> None:
        self.current += n
        self.peak = max(self.peak, self.current)

    def _release(self, n: int) -> None:
        self.current -= n


class MacCounter:
    """Counts complex multiply-add operations performed by the kernels."""

    def __init__(self):
        self.macs = 0

    @property
    def flops(self) -> int:
        # 1 complex MAC = 8 real floating-point operations
        return 8 * self.macs

    def __enter__(self):
        _active_counters.append(self)
        return self

    def __exit__(self, *exc):
        _active_counters.remove(self)
        return False


def _track_alloc(n: int) -> None:
    for m in _active_meters:
        m._add(n)


def _track_release(n: int) -> None:
    for m in _active_meters:
        m._release(n)


def _count_macs(n: int) -> None:
    for c in _active_counters:
        c.macs += n


# --- tensor type ----------------------------------------------------------


class Tensor:
    """Immutable dense tensor over binary indices.

    data is flat with the last label's index fastest.  Mixed precision keeps
    float16 (re, im) pairs plus one float32 scale; values() materializes
    complex64 either way.
    """

    __slots__ = ("labels", "precision", "_data", "_scale")

    def __init__(self, labels: Sequence[str], data, precision: str = "single"):
        labels = tuple(labels)
        if len(set(labels)) != len(labels):
            raise TensorError(f"duplicate labels in {labels}")
        if precision not in PRECISIONS:
            raise TensorError(f"unknown precision {precision!r}")
        values = np.ascontiguousarray(data, dtype=np.complex64).reshape(-1)
        if values.size != 1 << len(labels):
            raise TensorError(
                f"rank {len(labels)} needs {1 << len(labels)} entries, "
                f"got {values.size}"
            )
        self.labels = labels
        self.precision = precision
        if precision == "single":
            self._scale = None
            self._data = values
        else:
            parts = values.view(np.float32)
            amax = float(np.abs(parts).max()) if parts.size else 0.0
            scale = amax if amax > 0.0 and np.isfinite(amax) else 1.0
            self._scale = np.float32(scale)
            self._data = (parts / self._scale).astype(np.float16)
        self._data.flags.writeable = False

    @property
    def rank(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        return 1 << self.rank

    def values(self) -> np.ndarray:
        """Flat complex64 view (single) or materialization (mixed)."""
        if self.precision == "single":
            return self._data
        return (self._data.astype(np.float32) * self._scale).view(np.complex64)

    def nd(self) -> np.ndarray:
        return self.values().reshape((2,) * self.rank)

    def label_axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise TensorError(f"label {label!r} not in {self.labels}") from None

    def __repr__(self):
        return f"Tensor(labels={self.labels}, precision={self.precision})"


def permute(t: Tensor, new_label_order: Sequence[str]) -> Tensor:
    new_labels = tuple(new_label_order)
    if sorted(new_labels) != sorted(t.labels) or len(new_labels) != t.rank:
        raise TensorError(
            f"{new_labels} is not a permutation of {t.labels}"
        )
    axes = [t.labels.index(l) for l in new_labels]
    return Tensor(new_labels, np.ascontiguousarray(t.nd().transpose(axes)), t.precision)


def slice_tensor(t: Tensor, label: str, value: int) -> Tensor:
    if value not in (0, 1):
        raise TensorError(f"slice value must be 0 or 1, got {value}")
    axis = t.label_axis(label)
    remaining = t.labels[:axis] + t.labels[axis + 1 :]
    data = np.ascontiguousarray(t.nd().take(value, axis=axis))
    return Tensor(remaining, data, t.precision)


def _split_labels(a: Tensor, b: Tensor):
    b_set = set(b.labels)
    shared = [l for l in a.labels if l in b_set]
    a_only = [l for l in a.labels if l not in b_set]
    shared_set = set(shared)
    b_only = [l for l in b.labels if l not in shared_set]
    return a_only, shared, b_only


def contract_naive(a: Tensor, b: Tensor, max_output_rank: int | None = None) -> Tensor:
    """Reference contraction: explicit permute of both operands, then matmul.

    Contracts every shared label; output labels are a-only then b-only, each
    in source order.
    """
    a_only, shared, b_only = _split_labels(a, b)
    out_rank = len(a_only) + len(b_only)
    if max_output_rank is not None and out_rank > max_output_rank:
        raise TensorContractionError(
            f"output rank {out_rank} exceeds maximum {max_output_rank}; "
            "slice more indices"
        )
    p, k, q = 1 << len(a_only), 1 << len(shared), 1 << len(b_only)
    a_axes = [a.labels.index(l) for l in a_only + shared]
    b_axes = [b.labels.index(l) for l in shared + b_only]
    mat_a = np.ascontiguousarray(a.nd().transpose(a_axes)).reshape(p, k)
    mat_b = np.ascontiguousarray(b.nd().transpose(b_axes)).reshape(k, q)
    _count_macs(p * k * q)
    out = mat_a @ mat_b
    return Tensor(tuple(a_only + b_only), out.reshape(-1))


def contract_fused(
    a: Tensor,
    b: Tensor,
    batch_log2: int = DEFAULT_BATCH_LOG2,
    resident_log2: int = DEFAULT_RESIDENT_LOG2,
    stats_out: dict | None = None,
) -> Tensor:
    """Streamed contraction for skewed pairs: A read once, B held resident.

    Same contraction semantics as contract_naive (1e-6 relative).  A is
    consumed in contiguous batches of 2^batch_log2 elements through one
    staging buffer; per-batch results are multiplied straight into the
    output, with a second staging buffer (also capped at one batch) for
    accumulation tiles.  Kernel-managed allocation is therefore bounded by
    |output| + |B resident| + 2·2^batch_log2 + O(1) elements.

    If B exceeds 2^resident_log2 elements it is ring-partitioned along
    output columns; each partition holds one contiguous piece of B resident
    while A is re-streamed, rotating through all partitions.
    """
    if batch_log2 < 0:
        raise TensorContractionError("batch_log2 must be >= 0")
    if b.size > a.size:
        raise TensorContractionError(
            "b must be the smaller tensor (swap the arguments)"
        )
    a_only, shared, b_only = _split_labels(a, b)
    if len(shared) > batch_log2:
        raise TensorContractionError(
            f"batch 2^{batch_log2} smaller than shared-index block 2^{len(shared)}"
        )

    rank_a = a.rank
    f_count = min(batch_log2, rank_a)
    s_labels = a.labels[: rank_a - f_count]
    f_labels = a.labels[rank_a - f_count :]
    shared_set = set(shared)
    a_f = [l for l in f_labels if l not in shared_set]
    sh_f = [l for l in f_labels if l in shared_set]
    sh_s = [l for l in s_labels if l in shared_set]
    n_a_f, n_sh_f, n_sh_s = 1 << len(a_f), 1 << len(sh_f), 1 << len(sh_s)
    batch = 1 << f_count

    # ring partitioning along leading b_only labels when B won't fit resident
    part_bits = max(0, b.rank - resident_log2)
    if part_bits > len(b_only):
        raise TensorContractionError(
            f"resident budget 2^{resident_log2} too small for b of rank {b.rank} "
            f"with only {len(b_only)} free labels to partition"
        )
    n_parts = 1 << part_bits
    part_labels = b_only[:part_bits]
    rest_b_only = b_only[part_bits:]
    q_part = 1 << len(rest_b_only)
    q_total = 1 << len(b_only)

    out_elems = 1 << (len(a_only) + len(b_only))
    out = np.empty(out_elems, dtype=np.complex64)
    _track_alloc(out_elems)
    p_rows_total = 1 << len(a_only)
    out_mat = out.reshape(p_rows_total, q_total)

    stage_in = np.empty(batch, dtype=np.complex64)
    stage_acc = np.empty(batch, dtype=np.complex64)
    _track_alloc(stage_in.size + stage_acc.size)

    a_flat = a.values()
    # b permuted view: (part, sh_s, sh_f, rest_b_only); contiguous copies are
    # taken per partition so at most one partition is resident at a time
    b_axes = [b.labels.index(l) for l in part_labels + sh_s + sh_f + rest_b_only]
    b_view = b.nd().transpose(b_axes).reshape((n_parts, n_sh_s, n_sh_f, q_part))

    # map the (a_s index, sh_s index) pair back to a slow-block offset in A:
    # bit j of the slow config (LSB = last slow label) belongs to one of the
    # two indices depending on whether its label is shared
    n_slow_labels = len(s_labels)
    a_positions, sh_positions = [], []
    a_s_bit = sum(1 for l in s_labels if l not in shared_set)
    sh_s_bit = len(sh_s)
    for i, lab in enumerate(s_labels):
        s_bitpos = n_slow_labels - 1 - i
        if lab in shared_set:
            sh_s_bit -= 1
            sh_positions.append((s_bitpos, sh_s_bit))
        else:
            a_s_bit -= 1
            a_positions.append((s_bitpos, a_s_bit))
    n_a_slow = 1 << len(a_positions)

    def _scatter(n: int, positions) -> list[int]:
        table = []
        for v in range(n):
            x = 0
            for s_bitpos, idx_pos in positions:
                if (v >> idx_pos) & 1:
                    x |= 1 << s_bitpos
            table.append(x)
        return table

    a_bases = _scatter(n_a_slow, a_positions)
    sh_bases = _scatter(n_sh_s, sh_positions)

    perm_f = [f_labels.index(l) for l in a_f + sh_f]
    identity_f = perm_f == list(range(f_count))
    stage_nd = stage_in.reshape((2,) * f_count)
    stage_mat = stage_in.reshape(n_a_f, n_sh_f)

    a_reads = 0
    _count_macs(1 << (len(a_only) + len(b_only) + len(shared)))

    for part in range(n_parts):
        b_res = np.ascontiguousarray(b_view[part])
        _track_alloc(b_res.size)
        col0 = part * q_part
        b_sl_all = b_res.reshape(n_sh_s, n_sh_f, q_part)
        # sh_s runs innermost so each output slab stays hot across the
        # accumulation over shared bits living in the slow block
        for a_s_idx in range(n_a_slow):
            row0 = a_s_idx * n_a_f
            slab = out_mat[row0 : row0 + n_a_f, col0 : col0 + q_part]
            a_base = a_bases[a_s_idx]
            for sh_s_idx in range(n_sh_s):
                base = (a_base | sh_bases[sh_s_idx]) * batch
                if identity_f:
                    p_mat = a_flat[base : base + batch].reshape(n_a_f, n_sh_f)
                else:
                    batch_nd = a_flat[base : base + batch].reshape((2,) * f_count)
                    np.copyto(stage_nd, batch_nd.transpose(perm_f))
                    p_mat = stage_mat
                a_reads += batch
                b_sl = b_sl_all[sh_s_idx]
                first = sh_s_idx == 0
                if first and n_parts == 1:
                    np.matmul(p_mat, b_sl, out=slab)
                else:
                    _gemm_tiled(p_mat, b_sl, slab, stage_acc, first)
        _track_release(b_res.size)
        del b_res

    _track_release(stage_in.size + stage_acc.size)
    if stats_out is not None:
        stats_out.update(
            a_elements_read=a_reads,
            n_partitions=n_parts,
            batch_elements=batch,
            resident_elements=n_sh_s * n_sh_f * q_part,
        )
    result = Tensor(tuple(a_only + b_only), out)
    _track_release(out_elems)
    return result


def _gemm_tiled(p_mat, b_sl, slab, stage, first: bool) -> None:
    """Multiply through a bounded staging buffer, tile by tile.

    Used when the product must be accumulated onto (or written to a
    non-contiguous view of) the output, keeping scratch within one batch.
    """
    rows, q = p_mat.shape[0], b_sl.shape[1]
    cap = stage.size
    row_step = max(1, cap // max(q, 1))
    col_step = q if q <= cap else cap
    for r0 in range(0, rows, row_step):
        r1 = min(r0 + row_step, rows)
        for c0 in range(0, q, col_step):
            c1 = min(c0 + col_step, q)
            tile = stage[: (r1 - r0) * (c1 - c0)].reshape(r1 - r0, c1 - c0)
            np.matmul(p_mat[r0:r1], b_sl[:, c0:c1], out=tile)
            if first:
                slab[r0:r1, c0:c1] = tile
            else:
                slab[r0:r1, c0:c1] += tile


# --- binary dump ----------------------------------------------------------
#
# Byte layout (little-endian):
#   magic  b"RQT1"
#   u16    rank
#   u8     precision (0 = single, 1 = mixed)
#   u8     reserved (0)
#   rank * [u16 byte length, utf-8 label]
#   2^rank * [f32 re, f32 im]   (C order, last label fastest; mixed tensors
#                                are materialized to complex64 on dump)

_MAGIC = b"RQT1"


def dump_tensor(t: Tensor, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HBB", t.rank, PRECISIONS.index(t.precision), 0))
        for lab in t.labels:
            enc = lab.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
        fh.write(t.values().astype("<c8").tobytes())


def load_tensor(path) -> Tensor:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise TensorError(f"{path}: not a tensor dump")
        rank, prec_idx, _ = struct.unpack("<HBB", fh.read(4))
        if prec_idx >= len(PRECISIONS):
            raise TensorError(f"{path}: unknown precision flag {prec_idx}")
        labels = []
        for _ in range(rank):
            (n,) = struct.unpack("<H", fh.read(2))
            labels.append(fh.read(n).decode("utf-8"))
        payload = fh.read((1 << rank) * 8)
        if len(payload) != (1 << rank) * 8:
            raise TensorError(f"{path}: truncated payload")
        data = np.frombuffer(payload, dtype="<c8")
        return Tensor(tuple(labels), data, PRECISIONS[prec_idx])
