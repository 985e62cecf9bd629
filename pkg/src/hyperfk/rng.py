"""Counter-based random streams.

Every random word consumed by a sampler is a pure function of
``(master_seed, sample_index, stream, word_index)``: it is produced by
Philox4x64-10 with key ``(master_seed, sample_index)`` and counter
``(word_index // 4, stream, 0, 0)``.  The bijection is evaluated on whole
numpy arrays at once, so a block of samples can be generated without
any sequential generator state and independently of how samples are
distributed over workers.

The block function is bit-compatible with :class:`numpy.random.Philox`
(which pre-increments its counter), and the test-suite uses numpy's
implementation as the reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_MUL0 = 0xD2E7470EE14C6C93
_MUL1 = 0xCA5A826395121157
_WEYL0 = np.uint64(0x9E3779B97F4A7C15)
_WEYL1 = np.uint64(0xBB67AE8584CAA73B)
_ROUNDS = 10

# stream identifiers; one per consumer so that samplers never share words
STREAM_LINE = 0
STREAM_PINNED = 1
STREAM_MANIFOLD = 2
STREAM_MARGINAL = 3

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeedSpec:
    """Identifies the random stream of one sample."""

    master_seed: int
    sample_index: int

    def __post_init__(self):
        for name in ("master_seed", "sample_index"):
            value = getattr(self, name)
            if not 0 <= int(value) <= _MASK64:
                raise ValueError(f"{name} must fit in 64 unsigned bits, got {value}")


def _mulhilo(a, mul):
    """High and low 64-bit halves of ``a * mul`` for uint64 arrays."""
    al = a & _M32
    ah = a >> _S32
    bl = np.uint64(mul & 0xFFFFFFFF)
    bh = np.uint64(mul >> 32)
    ll = al * bl
    lh = al * bh
    hl = ah * bl
    hh = ah * bh
    mid = (ll >> _S32) + (lh & _M32) + (hl & _M32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * np.uint64(mul)


def philox4x64(counter, key):
    """Philox4x64-10 block function.

    ``counter`` is a sequence of four uint64 arrays and ``key`` of two; all
    are broadcast together.  Returns the four output words as arrays.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in counter)
    k0 = np.asarray(key[0], dtype=np.uint64)
    k1 = np.asarray(key[1], dtype=np.uint64)
    with np.errstate(over="ignore"):
        for r in range(_ROUNDS):
            if r:
                k0 = k0 + _WEYL0
                k1 = k1 + _WEYL1
            hi0, lo0 = _mulhilo(c0, _MUL0)
            hi1, lo1 = _mulhilo(c2, _MUL1)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def random_words(master_seed, sample_indices, n_words, stream=0, offset=0):
    """Raw uint64 words ``offset .. offset + n_words - 1`` for each sample.

    Returns an array of shape ``(len(sample_indices), n_words)``.
    """
    idx = np.asarray(sample_indices, dtype=np.uint64).reshape(-1)
    if n_words <= 0:
        return np.zeros((idx.size, 0), dtype=np.uint64)
    first = offset // 4
    last = (offset + n_words - 1) // 4
    blocks = np.arange(first, last + 1, dtype=np.uint64)
    out = philox4x64(
        (blocks[None, :], np.uint64(stream), np.uint64(0), np.uint64(0)),
        (np.uint64(int(master_seed) & _MASK64), idx[:, None]),
    )
    words = np.stack(np.broadcast_arrays(*out), axis=-1).reshape(idx.size, -1)
    start = offset - 4 * first
    return words[:, start:start + n_words]


def uniforms(master_seed, sample_indices, n, stream=0, offset=0):
    """Doubles in [0, 1) with 53 random bits, one word each."""
    w = random_words(master_seed, sample_indices, n, stream, offset)
    return (w >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def uniforms32(master_seed, sample_indices, n, stream=0, offset=0):
    """Doubles in [0, 1) with 32 random bits; two per word.

    ``offset`` counts 32-bit values and must be even.
    """
    if offset % 2:
        raise ValueError("offset must be even")
    n_words = (n + 1) // 2
    w = random_words(master_seed, sample_indices, n_words, stream, offset // 2)
    halves = np.empty((w.shape[0], 2 * n_words), dtype=np.float64)
    halves[:, 0::2] = (w & _M32).astype(np.float64)
    halves[:, 1::2] = (w >> _S32).astype(np.float64)
    return halves[:, :n] * 2.0 ** -32


def sign_bits(master_seed, sample_indices, n, stream=0):
    """``n`` fair ±1 values (int8) per sample, 64 per word, LSB first."""
    n_words = (n + 63) // 64
    w = random_words(master_seed, sample_indices, n_words, stream)
    bits = np.unpackbits(np.ascontiguousarray(w, dtype="<u8").view(np.uint8), axis=1, bitorder="little")
    bits = bits[:, :n].astype(np.int8)
    return 2 * bits - 1
