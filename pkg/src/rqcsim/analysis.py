"""Sampling, XEB fidelity estimation, and Porter-Thomas verification.

Bitstring convention everywhere: character j of a bitstring is the value of
circuit.qubits[j], matching the circuit file and the statevector index (the
first qubit is the most significant bit of the basis-state index).
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .circuit import Circuit, SingleQubitLayer
from .engine import AmplitudeBatch, amplitudes_batch
from .gates import single_qubit_gate
from .order import ContractionPlan
from .rng import DOMAIN_DILUTE, DOMAIN_SAMPLER, substream

logger = logging.getLogger(__name__)

STATEVECTOR_QUBIT_CAP = 26
DEFAULT_OPEN_COUNT = 6
DEFAULT_CEILING_M = 20.0


class AnalysisError(ValueError):
    pass


class StateTooLargeError(AnalysisError):
    """Statevector request beyond the desk-scale qubit cap."""


class FrugalOverflowError(AnalysisError):
    """An acceptance probability exceeded 1; the ceiling M is too small."""

    def __init__(self, np_value: float, ceiling: float):
        self.np_value = np_value
        self.ceiling = ceiling
        super().__init__(
            f"acceptance probability N*p/M > 1 (N*p = {np_value:.6g}, "
            f"M = {ceiling:g}); increase the ceiling"
        )


class BitstringFormatError(AnalysisError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


# --- statevector oracle -----------------------------------------------------


def statevector_simulate(circuit: Circuit) -> np.ndarray:
    """Full state of the circuit applied to |0...0>, as 2^n complex128.

    Gates are applied layer by layer (Schrodinger algorithm, O(m 2^n) time,
    2^n memory), hence the qubit cap.
    """
    n = circuit.n_qubits
    if n > STATEVECTOR_QUBIT_CAP:
        raise StateTooLargeError(
            f"{n} qubits exceeds the statevector cap of {STATEVECTOR_QUBIT_CAP}"
        )
    axis_of = {q: i for i, q in enumerate(circuit.qubits)}
    psi = np.zeros((2,) * n, dtype=np.complex128)
    psi[(0,) * n] = 1.0
    for layer in circuit.layers:
        if isinstance(layer, SingleQubitLayer):
            for g in layer.gates:
                u = single_qubit_gate(g.kind).entries
                ax = axis_of[g.qubit]
                psi = np.moveaxis(np.tensordot(u, psi, axes=([1], [ax])), 0, ax)
        else:
            for g in layer.gates:
                u = g.params.matrix().entries.reshape(2, 2, 2, 2)
                ax_a, ax_b = axis_of[g.a], axis_of[g.b]
                psi = np.moveaxis(
                    np.tensordot(u, psi, axes=([2, 3], [ax_a, ax_b])),
                    (0, 1),
                    (ax_a, ax_b),
                )
    return psi.reshape(-1)


# --- XEB estimator and the Porter-Thomas model ------------------------------


def xeb_fidelity(probabilities: Sequence[float], n_qubits: int) -> tuple[float, float]:
    """Linear XEB estimate (F, stderr) from sampled-bitstring probabilities.

    F = 2^n * mean(p) - 1; stderr = 2^n * std(p, ddof=1) / sqrt(m).  With a
    single sample the standard error is undefined and reported as inf.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    if p.size == 0:
        raise AnalysisError("empty sample set")
    if np.any(p < 0):
        raise AnalysisError("probabilities must be nonnegative")
    scale = float(2**n_qubits)
    f = scale * float(p.mean()) - 1.0
    if p.size == 1:
        return f, float("inf")
    stderr = scale * float(p.std(ddof=1)) / math.sqrt(p.size)
    return f, stderr


def porter_thomas_pdf(x, fidelity: float):
    """Density (F*x + (1-F)) * exp(-x) of the rescaled probability x = N*p."""
    if not 0.0 <= fidelity <= 1.0:
        raise AnalysisError(f"fidelity {fidelity} outside [0, 1]")
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise AnalysisError("x must be nonnegative")
    out = (fidelity * x + (1.0 - fidelity)) * np.exp(-x)
    return out if out.ndim else float(out)


def porter_thomas_cdf(x, fidelity: float):
    if not 0.0 <= fidelity <= 1.0:
        raise AnalysisError(f"fidelity {fidelity} outside [0, 1]")
    x = np.asarray(x, dtype=np.float64)
    out = 1.0 - np.exp(-x) * (1.0 + fidelity * x)
    return out if out.ndim else float(out)


# --- frugal sampling --------------------------------------------------------


@dataclass
class SampleResult:
    """Accepted bitstrings plus the acceptance bookkeeping of the run."""

    bitstrings: list[str]
    n_proposals: int
    n_accepted: int
    n_batches: int
    max_np: float

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposals if self.n_proposals else 0.0

    def __iter__(self):
        return iter(self.bitstrings)

    def __len__(self) -> int:
        return len(self.bitstrings)


def frugal_sample(
    circuit: Circuit,
    n_samples: int,
    open_count: int = DEFAULT_OPEN_COUNT,
    ceiling_m: float = DEFAULT_CEILING_M,
    seed: int = 0,
    max_size_log2: int = 28,
    n_candidates: int | None = None,
    workers: int = 1,
) -> SampleResult:
    """Rejection-sample bitstrings from the circuit's output distribution.

    Each round draws uniform values for the closed qubits, contracts one
    amplitude batch over the last `open_count` qubits, and accepts each of
    the 2^k batch entries with probability N*p / M against the uniform
    proposal.  Batches are cached by their closed-bit assignment, so repeat
    proposals cost nothing.
    """
    if ceiling_m <= 1:
        raise AnalysisError(f"ceiling M must exceed 1, got {ceiling_m}")
    if n_samples < 0:
        raise AnalysisError("n_samples must be nonnegative")
    n = circuit.n_qubits
    k = min(open_count, n)
    open_qubits = tuple(circuit.qubits[n - k:])
    closed_count = n - k
    big_n = float(2**n)

    rng = substream(seed, DOMAIN_SAMPLER, circuit.seed)
    cache: dict[str, AmplitudeBatch] = {}
    plan: ContractionPlan | None = None
    open_strings = [format(i, f"0{k}b") if k else "" for i in range(1 << k)]

    out: list[str] = []
    proposals = 0
    accepted = 0
    max_np = 0.0
    while len(out) < n_samples:
        bits = rng.integers(0, 2, size=closed_count) if closed_count else ()
        fixed = "".join("1" if b else "0" for b in bits)
        batch = cache.get(fixed)
        if batch is None:
            batch = amplitudes_batch(
                circuit,
                fixed,
                open_qubits,
                max_size_log2=max_size_log2,
                seed=seed,
                n_candidates=n_candidates,
                workers=workers,
                plan=plan,
            )
            plan = batch.plan
            cache[fixed] = batch
        np_values = big_n * batch.probabilities
        batch_max = float(np_values.max())
        if batch_max > ceiling_m:
            raise FrugalOverflowError(batch_max, ceiling_m)
        max_np = max(max_np, batch_max)
        unis = rng.random(1 << k)
        hits = np.nonzero(unis * ceiling_m < np_values)[0]
        proposals += 1 << k
        accepted += int(hits.size)
        for idx in hits:
            out.append(fixed + open_strings[idx])
            if len(out) == n_samples:
                break
    logger.info(
        "frugal sampling: %d samples from %d proposals (rate %.4f), "
        "%d distinct batches, max N*p = %.3f",
        len(out), proposals, accepted / proposals if proposals else 0.0,
        len(cache), max_np,
    )
    return SampleResult(out, proposals, accepted, len(cache), max_np)


def dilute_to_fidelity(
    perfect_samples: Sequence[str], f: float, n_qubits: int, seed: int = 0
) -> list[str]:
    """Keep each sample with probability f, else substitute a uniform one.

    The expected XEB fidelity of the output stream is f times that of the
    input stream.
    """
    if not 0.0 <= f <= 1.0:
        raise AnalysisError(f"fidelity {f} outside [0, 1]")
    samples = list(perfect_samples)
    rng = substream(seed, DOMAIN_DILUTE)
    keep = rng.random(len(samples)) < f
    noise = rng.integers(0, 2, size=(len(samples), n_qubits))
    out = []
    for i, s in enumerate(samples):
        if keep[i]:
            out.append(s)
        else:
            out.append("".join("1" if b else "0" for b in noise[i]))
    return out


# --- verification reports ---------------------------------------------------


@dataclass
class XebReport:
    n_qubits: int
    n_samples: int
    fidelity: float
    stderr: float
    ks_statistic: float
    bin_edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    model_density: np.ndarray = field(repr=False)

    def to_json_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "n_samples": self.n_samples,
            "fidelity": self.fidelity,
            "stderr": self.stderr,
            "ks_statistic": self.ks_statistic,
        }

    def histogram_csv(self) -> str:
        lines = ["bin_left,bin_right,count,model_density"]
        for i in range(len(self.counts)):
            lines.append(
                f"{self.bin_edges[i]:.8g},{self.bin_edges[i + 1]:.8g},"
                f"{int(self.counts[i])},{self.model_density[i]:.8g}"
            )
        return "\n".join(lines) + "\n"


def parse_bitstrings(source, n_qubits: int) -> list[str]:
    """Read one bitstring per line; blank lines are rejected, no comments."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]
    out = []
    for i, ln in enumerate(lines, start=1):
        s = ln.strip()
        if len(s) != n_qubits or any(c not in "01" for c in s):
            raise BitstringFormatError(
                f"expected {n_qubits} characters of 0/1, got {ln!r}", i
            )
        out.append(s)
    return out


def verify_bitstrings(
    circuit: Circuit,
    bitstring_file,
    plan: ContractionPlan | None = None,
    open_count: int = DEFAULT_OPEN_COUNT,
    max_size_log2: int = 28,
    seed: int = 0,
    n_candidates: int | None = None,
    workers: int = 1,
    n_bins: int = 50,
) -> XebReport:
    """Exact-amplitude XEB of a bitstring file against the circuit.

    Bitstrings sharing a closed-qubit prefix are served from one amplitude
    batch over the trailing `open_count` qubits.  The histogram of x = N*p
    is compared against the Porter-Thomas density at the fitted fidelity
    (clamped to [0, 1] for the KS test).
    """
    n = circuit.n_qubits
    samples = parse_bitstrings(bitstring_file, n)
    if not samples:
        raise AnalysisError("empty sample set")
    k = min(open_count, n)
    open_qubits = tuple(circuit.qubits[n - k:])

    groups: dict[str, list[int]] = {}
    for i, s in enumerate(samples):
        groups.setdefault(s[: n - k], []).append(i)

    probs = np.empty(len(samples), dtype=np.float64)
    for fixed, members in sorted(groups.items()):
        batch = amplitudes_batch(
            circuit,
            fixed,
            open_qubits,
            max_size_log2=max_size_log2,
            seed=seed,
            n_candidates=n_candidates,
            workers=workers,
            plan=plan,
        )
        plan = batch.plan
        p = batch.probabilities
        for i in members:
            idx = int(samples[i][n - k:], 2) if k else 0
            probs[i] = p[idx]

    f, stderr = xeb_fidelity(probs, n)
    x = float(2**n) * probs
    f_model = min(1.0, max(0.0, f))
    ks = float(stats.kstest(x, lambda v: porter_thomas_cdf(v, f_model)).statistic)

    hi = max(10.0, float(x.max()))
    counts, edges = np.histogram(x, bins=n_bins, range=(0.0, hi))
    left, right = edges[:-1], edges[1:]
    model = (
        porter_thomas_cdf(right, f_model) - porter_thomas_cdf(left, f_model)
    ) / (right - left)
    return XebReport(
        n_qubits=n,
        n_samples=len(samples),
        fidelity=f,
        stderr=stderr,
        ks_statistic=ks,
        bin_edges=edges,
        counts=counts,
        model_density=model,
    )
