"""Counter-based random streams.

All randomness in the package flows through Philox generators keyed by
``(seed, stream tag)``.  Where a contract requires order-independent
per-sample draws (score randomization, prediction-time noise), sample index
``i`` owns Philox counter block ``i`` and its value is derived from the first
64-bit word of that block.  Batch and single-index generation are therefore
bit-identical, and disjoint index ranges can be drawn in parallel.

Sequential streams (synthetic data, Monte-Carlo sampling, splits) use plain
``numpy.random.Generator`` objects keyed the same way; they are deterministic
given the seed but make no per-index promise.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox

# Stream tags (second 64-bit key word).  Arbitrary constants, fixed forever;
# changing any of them changes every derived dataset and model.
NOISE_TAG = 0x5EED_0001
PREDICT_TAG = 0x5EED_0002
SCORE_TAG = 0x5EED_0003
LABEL_TAG = 0x5EED_0004
MC_TAG = 0x5EED_0005
SPLIT_TAG = 0x5EED_0006

_INV_2POW53 = 1.0 / (1 << 53)


def check_seed(seed) -> int:
    if seed != int(seed):
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def block_uniforms(seed: int, tag: int, start: int, count: int) -> np.ndarray:
    """Uniform [0,1) doubles for counter blocks ``start .. start+count-1``.

    Block ``i`` yields the double built from the first raw word of Philox
    counter block ``i``, so ``block_uniforms(s, t, i, 1)`` equals element
    ``i - start`` of any enclosing call.
    """
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    if count == 0:
        return np.zeros(0, dtype=np.float64)
    bg = Philox(key=[check_seed(seed), int(tag)])
    if start:
        bg.advance(int(start))
    raw = bg.random_raw(4 * count)
    return (raw[::4] >> np.uint64(11)).astype(np.float64) * _INV_2POW53


def uniform_at(seed: int, tag: int, index: int) -> float:
    """The single uniform owned by counter block ``index``."""
    return float(block_uniforms(seed, tag, index, 1)[0])


def uniforms_at(seed: int, tag: int, indices) -> np.ndarray:
    """Uniforms for an arbitrary index set, equal elementwise to uniform_at."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        return np.zeros(0, dtype=np.float64)
    if np.any(idx < 0):
        raise ValueError("sample indices must be nonnegative")
    lo = int(idx.min())
    span = int(idx.max()) - lo + 1
    if span <= 4 * idx.size:  # dense enough: one contiguous draw, then gather
        return block_uniforms(seed, tag, lo, span)[idx - lo]
    return np.array([uniform_at(seed, tag, int(i)) for i in idx])


def sequential(seed: int, tag: int, block: int = 0) -> Generator:
    """A plain Generator on the (seed, tag) stream, starting at counter block."""
    bg = Philox(key=[check_seed(seed), int(tag)])
    if block:
        bg.advance(int(block))
    return Generator(bg)
