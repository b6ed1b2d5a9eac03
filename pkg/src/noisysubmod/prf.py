"""Counter-based pseudo-random functions built on the splitmix64 mixer.

``set_uniforms`` keys the noise multiplier of a set on its bit-vector;
``keyed_uniforms`` gives each integer key tuple its own reproducible stream of
uniforms, used for algorithm randomness. The two use different domain tags so
the streams never coincide.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_NOISE_TAG = np.uint64(0x6E6F697365000001)
_ALGO_TAG = np.uint64(0x616C676F00000002)


def mix64(z):
    """splitmix64 finalizer; uint64 array arithmetic wraps mod 2**64."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _to_unit(h):
    # top 53 bits, shifted by half a step so 0 and 1 are never produced
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _seed_word(seed: int, tag) -> np.uint64:
    return mix64(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF) ^ tag)


def encode_masks(masks: np.ndarray) -> np.ndarray:
    """Pack boolean masks into little-endian uint64 words, shape (k, words)."""
    masks = np.atleast_2d(masks)
    packed = np.packbits(masks, axis=1, bitorder="little")
    pad = (-packed.shape[1]) % 8
    if pad:
        packed = np.concatenate([packed, np.zeros((packed.shape[0], pad), np.uint8)], axis=1)
    return np.ascontiguousarray(packed).view("<u8")


def _fold(h, words):
    with np.errstate(over="ignore"):
        for i in range(words.shape[1]):
            h = mix64(h ^ mix64(words[:, i] + GOLDEN * np.uint64(i + 1)))
    return h


def set_uniforms(seed: int, masks: np.ndarray) -> np.ndarray:
    """Keyed hash of each set's bit-vector mapped into the open interval (0, 1)."""
    words = encode_masks(masks)
    h = np.full(words.shape[0], _seed_word(seed, _NOISE_TAG))
    return _to_unit(_fold(h, words))


def keyed_uniforms(seed: int, keys: Sequence[Sequence[int]], width: int) -> np.ndarray:
    """Row c holds ``width`` uniforms of the stream named by ``keys[c]``.

    Each row is a splitmix64 sequence started from a hash of (seed, key), so a
    row depends only on its own key and not on the other rows in the batch.
    """
    karr = np.asarray(keys, dtype=np.int64)
    if karr.ndim == 1:
        karr = karr[:, None]
    if np.any(karr < 0):
        raise ValueError("stream keys must be nonnegative integers")
    words = karr.astype(np.uint64)
    h = np.full(words.shape[0], _seed_word(seed, _ALGO_TAG))
    h = _fold(h, words)
    with np.errstate(over="ignore"):
        h = mix64(h ^ np.uint64(words.shape[1]))
        state = h[:, None] + GOLDEN * np.arange(1, width + 1, dtype=np.uint64)[None, :]
    return _to_unit(mix64(state))
