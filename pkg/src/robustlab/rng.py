"""Keyed random-number streams.

Every stochastic routine in this package draws from a stream keyed by
``(global seed, purpose string, integer indices)``. Streams with distinct
keys are statistically independent, the same key always reproduces the
same draws, and no stream ever depends on the order in which other
streams were consumed. That makes results independent of batching,
chunking, or thread scheduling.

Streams are backed by the counter-based Philox generator; the key is
hashed into the generator's seed material, so splitting a stream is just
appending indices to the key.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _purpose_words(purpose: str) -> tuple[int, int]:
    digest = hashlib.blake2b(purpose.encode("utf-8"), digest_size=16).digest()
    return (
        int.from_bytes(digest[:8], "little"),
        int.from_bytes(digest[8:], "little"),
    )


def substream(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Generator for the stream keyed by ``(seed, purpose, *indices)``.

    ``purpose`` is a short documented label such as ``"train.shuffle"``
    or ``"mc.noise"``; indices identify the work item (point index, draw
    chunk, epoch, ...). Negative seeds/indices are folded into 64 bits.
    """
    w1, w2 = _purpose_words(purpose)
    entropy = [int(seed) & _MASK64, w1, w2]
    entropy.extend(int(i) & _MASK64 for i in indices)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class RngStream:
    """A splittable handle on one keyed stream.

    Carrying the key rather than generator state lets callers pass
    streams across work items and spawn children without coordinating:
    ``stream.child(i)`` is the same stream no matter who asks for it.
    """

    seed: int
    purpose: str
    indices: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        return substream(self.seed, self.purpose, *self.indices)

    def child(self, *indices: int) -> "RngStream":
        return RngStream(self.seed, self.purpose, self.indices + tuple(int(i) for i in indices))
