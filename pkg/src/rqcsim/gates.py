"""Gate matrices for the patterned random-circuit gate set.

Single-qubit gates are the three half-turns sqrt(X), sqrt(Y) and sqrt(W)
with W = (X + Y)/sqrt(2).  The two-qubit gate is the five-parameter fSim
family; the second middle diagonal entry carries e^{i(d_plus - d_minus)} so
that the matrix is unitary for every parameter choice.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np


class GateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GateMatrix:
    """A dense unitary acting on 1 or 2 qubits, row-major entries."""

    arity: int
    entries: np.ndarray

    def __post_init__(self):
        dim = 2**self.arity
        entries = np.asarray(self.entries, dtype=complex)
        if self.arity not in (1, 2):
            raise GateError(f"arity must be 1 or 2, got {self.arity}")
        if entries.shape != (dim, dim):
            raise GateError(f"expected {dim}x{dim} entries, got {entries.shape}")
        err = np.abs(entries @ entries.conj().T - np.eye(dim)).max()
        if err > 1e-6:
            raise GateError(f"matrix is not unitary (max deviation {err:.3g})")
        object.__setattr__(self, "entries", entries)


_HS = math.sqrt(2.0) / 2.0

# Canonical file tokens for the single-qubit kinds, in draw order.
SINGLE_QUBIT_KINDS = ("X2", "Y2", "W2")

_SINGLE_QUBIT = {
    "X2": _HS * np.array([[1.0, -1.0j], [-1.0j, 1.0]]),
    "Y2": _HS * np.array([[1.0, -1.0], [1.0, 1.0]]),
    "W2": _HS * np.array([[1.0, -_HS * (1.0 + 1.0j)], [_HS * (1.0 - 1.0j), 1.0]]),
}
# Long-form aliases accepted by the API.
_SQ_ALIASES = {"sqrtX": "X2", "sqrtY": "Y2", "sqrtW": "W2"}


def single_qubit_gate(kind: str) -> GateMatrix:
    """2x2 half-turn unitary for one of the tokens X2/Y2/W2 (or sqrtX/...)."""
    token = _SQ_ALIASES.get(kind, kind)
    try:
        return GateMatrix(1, _SINGLE_QUBIT[token])
    except KeyError:
        raise GateError(f"unknown single-qubit gate kind {kind!r}") from None


def fsim(
    theta: float,
    phi: float,
    d_plus: float = 0.0,
    d_minus: float = 0.0,
    d_minus_off: float = 0.0,
) -> GateMatrix:
    """4x4 unitary of the five-parameter fSim gate.

    Basis order |00>, |01>, |10>, |11>, first qubit slower.  Diagonal:
    (1, e^{i(d+ + d-)} cos t, e^{i(d+ - d-)} cos t, e^{i(2 d+ - phi)});
    off-diagonal middle entries -i e^{i(d+ -/+ d_off)} sin t.
    """
    for value in (theta, phi, d_plus, d_minus, d_minus_off):
        if not math.isfinite(value):
            raise GateError("fsim parameters must be finite")
    ct, st = math.cos(theta), math.sin(theta)
    mat = np.zeros((4, 4), dtype=complex)
    mat[0, 0] = 1.0
    mat[1, 1] = cmath.exp(1j * (d_plus + d_minus)) * ct
    mat[2, 2] = cmath.exp(1j * (d_plus - d_minus)) * ct
    mat[1, 2] = -1j * cmath.exp(1j * (d_plus - d_minus_off)) * st
    mat[2, 1] = -1j * cmath.exp(1j * (d_plus + d_minus_off)) * st
    mat[3, 3] = cmath.exp(1j * (2 * d_plus - phi))
    return GateMatrix(2, mat)


@dataclass(frozen=True)
class FsimParams:
    """Angles of a two-qubit gate instance, in radians."""

    theta: float = math.pi / 2
    phi: float = math.pi / 6
    d_plus: float = 0.0
    d_minus: float = 0.0
    d_minus_off: float = 0.0

    def __iter__(self) -> Iterator[float]:
        yield from (self.theta, self.phi, self.d_plus, self.d_minus, self.d_minus_off)

    def matrix(self) -> GateMatrix:
        return fsim(*self)


DEFAULT_FSIM = FsimParams()
