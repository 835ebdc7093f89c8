"""Deterministic random streams on top of the Philox counter-based generator.

Every random decision in the package is drawn from a stream addressed by
``(seed, domain, *coords)``.  The address goes into the upper words of the
128-bit Philox counter, so streams at different addresses are disjoint by
construction: sequential draws only advance the lowest counter word, and a
carry into word 1 would need 2^64 blocks from a single stream.

This makes draws order-independent: the gate chosen for (layer, qubit) does
not depend on how many other gates were drawn before it.
"""

from __future__ import annotations

import numpy as np

# Domain tags keep unrelated consumers of one seed out of each other's streams.
DOMAIN_GATES = 1
DOMAIN_ORDER = 2
DOMAIN_SAMPLER = 3
DOMAIN_DILUTE = 4

_MASK64 = (1 << 64) - 1


def substream(seed: int, domain: int, *coords: int) -> np.random.Generator:
    """Return a Generator for the stream addressed by (seed, domain, coords).

    At most two coordinates: counter word 0 is reserved for sequential draws,
    word 1 carries the domain, words 2..3 carry the coordinates.
    """
    if len(coords) > 2:
        raise ValueError("substream supports at most two coordinates")
    counter = [0, domain & _MASK64]
    counter.extend(c & _MASK64 for c in coords)
    counter.extend(0 for _ in range(4 - len(counter)))
    return np.random.Generator(np.random.Philox(key=seed & _MASK64, counter=counter))


def spawn_seed(seed: int, domain: int, *coords: int) -> int:
    """A 63-bit integer seed derived from the addressed stream."""
    return int(substream(seed, domain, *coords).integers(0, 1 << 63))
