"""Counter-based uniform streams.

Every random number used by mwlab is addressed by a triple
``(seed, stream, step)``: the Philox key is ``(seed, stream)`` and the
counter is the step index.  Any window of any stream can therefore be
regenerated independently, which is what makes path simulation both
bit-reproducible and trivially parallel over streams.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox

_MASK64 = (1 << 64) - 1
# Philox4x64 emits four 64-bit words per counter increment; one double per word.
_WORDS_PER_BLOCK = 4


def generator(seed: int, stream: int = 0, step: int = 0) -> Generator:
    """Return a Generator positioned at ``step`` of stream ``(seed, stream)``."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    block, skip = divmod(step, _WORDS_PER_BLOCK)
    counter = np.array([block & _MASK64, (block >> 64) & _MASK64, 0, 0], dtype=np.uint64)
    gen = Generator(Philox(key=key, counter=counter))
    if skip:
        gen.random(skip)
    return gen


def uniforms(seed: int, stream: int, step: int, count: int) -> np.ndarray:
    """Uniforms on [0, 1) for steps ``step .. step+count-1`` of one stream."""
    return generator(seed, stream, step).random(count)


def uniform_block(seed: int, streams, step: int, count: int) -> np.ndarray:
    """Stack ``uniforms`` for several streams into a (len(streams), count) array."""
    streams = list(streams)
    out = np.empty((len(streams), count))
    for row, stream in enumerate(streams):
        out[row] = generator(seed, stream, step).random(count)
    return out
