"""
Bit-packed binary hypervectors, integer accumulators and the kernels the
classifier is built on: bind, hamming, accumulate, cosine, sign and
stochastic binarization.

Bit convention: bit=1 means element +1, bit=0 means element -1.
Element j lives in 64-bit word j // 64 at bit j % 64 (little-endian bit
order). Bits past `dim` in the last word are always zero.
"""
import enum
import logging
import numbers
from dataclasses import dataclass

import numpy as np

from errors import (
    AccumulatorOverflowError,
    CutoffError,
    DimensionError,
    UndefinedSimilarityError,
)

logger = logging.getLogger(__name__)

WORD_BITS = 64
INT_MIN = int(np.iinfo(np.int32).min)
INT_MAX = int(np.iinfo(np.int32).max)

# SWAR popcount constants, used when numpy has no bitwise_count (numpy < 2.0)
_S55 = np.uint64(0x5555555555555555)
_S33 = np.uint64(0x3333333333333333)
_S0F = np.uint64(0x0F0F0F0F0F0F0F0F)
_S01 = np.uint64(0x0101010101010101)
_bitwise_count = getattr(np, 'bitwise_count', None)


class StreamLabel(enum.IntEnum):
    BASE_VECTORS = 1
    LEVEL_VECTORS = 2
    FLIP_NOISE = 3
    SHUFFLE = 4
    SPLIT = 5


class RngStream:
    """
    Seeded generator dedicated to one purpose.

    Streams with the same (seed, label) replay identical draws; different
    labels are independent (distinct SeedSequence spawn keys).
    """

    def __init__(self, seed, label):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.label = StreamLabel(label)
        sequence = np.random.SeedSequence(self.seed, spawn_key=(int(self.label),))
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label.name})"


def words_for(dim):
    return (dim + WORD_BITS - 1) // WORD_BITS


def word_masks(dim):
    """All-ones words except the last, which keeps only its valid bits"""
    masks = np.full(words_for(dim), np.uint64(0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    tail = dim % WORD_BITS
    if tail:
        masks[-1] = np.uint64((1 << tail) - 1)
    return masks


def popcount(words):
    """Per-word set-bit count of a uint64 array"""
    words = np.asarray(words, dtype=np.uint64)
    if _bitwise_count is not None:
        return _bitwise_count(words)
    arr = words - ((words >> np.uint64(1)) & _S55)
    arr = (arr & _S33) + ((arr >> np.uint64(2)) & _S33)
    arr = (arr + (arr >> np.uint64(4))) & _S0F
    return (arr * _S01) >> np.uint64(56)


def pack_bits(bits):
    """Pack a (..., D) boolean array into (..., ceil(D/64)) uint64 words"""
    bits = np.asarray(bits, dtype=bool)
    dim = bits.shape[-1]
    n_words = words_for(dim)
    padded = np.zeros(bits.shape[:-1] + (n_words * WORD_BITS,), dtype=bool)
    padded[..., :dim] = bits
    packed = np.packbits(padded, axis=-1, bitorder='little')
    return np.ascontiguousarray(packed).view('<u8').astype(np.uint64)


def unpack_bits(words, dim):
    """Inverse of pack_bits: (..., W) uint64 -> (..., dim) bool"""
    as_bytes = np.ascontiguousarray(words, dtype='<u8').view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=-1, bitorder='little')
    return bits[..., :dim].astype(bool)


def _check_dim(dim):
    if not isinstance(dim, numbers.Integral) or dim < 1:
        raise DimensionError(f"Hypervector dimension must be a positive integer, got {dim!r}")
    return int(dim)


def _same_dim(a, b):
    if a.dim != b.dim:
        raise DimensionError(f"Dimension mismatch: {a.dim} vs {b.dim}")


def checked_int32(values):
    """Narrow int64 values to int32, refusing to wrap"""
    values = np.asarray(values, dtype=np.int64)
    if values.size and (values.min() < INT_MIN or values.max() > INT_MAX):
        raise AccumulatorOverflowError(
            f"Accumulator left int32 range: [{values.min()}, {values.max()}]"
        )
    return values.astype(np.int32)


@dataclass(frozen=True, eq=False)
class BinaryHV:
    dim: int
    words: np.ndarray

    def __post_init__(self):
        dim = _check_dim(self.dim)
        words = np.array(self.words, dtype=np.uint64, copy=True).reshape(-1)
        if words.shape[0] != words_for(dim):
            raise DimensionError(f"Expected {words_for(dim)} words for dim {dim}, got {words.shape[0]}")
        if np.any(words & ~word_masks(dim)):
            raise DimensionError("Bits beyond the hypervector dimension must be zero")
        words.setflags(write=False)
        object.__setattr__(self, 'dim', dim)
        object.__setattr__(self, 'words', words)

    @classmethod
    def from_bits(cls, bits):
        bits = np.asarray(bits, dtype=bool).reshape(-1)
        return cls(bits.shape[0], pack_bits(bits))

    @classmethod
    def from_bipolar(cls, elements):
        elements = np.asarray(elements).reshape(-1)
        if not np.all((elements == 1) | (elements == -1)):
            raise ValueError("Bipolar elements must be -1 or +1")
        return cls.from_bits(elements > 0)

    @classmethod
    def ones(cls, dim):
        """All-(+1) vector, the identity of bind"""
        dim = _check_dim(dim)
        return cls(dim, word_masks(dim))

    def bits(self):
        return unpack_bits(self.words, self.dim)

    def to_bipolar(self):
        return np.where(self.bits(), 1, -1).astype(np.int8)

    def to_int(self):
        return IntHV(self.dim, self.to_bipolar())

    def popcount(self):
        return int(popcount(self.words).sum())

    def complement(self):
        return BinaryHV(self.dim, ~self.words & word_masks(self.dim))

    def __eq__(self, other):
        if not isinstance(other, BinaryHV):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.dim, self.words.tobytes()))


@dataclass(eq=False)
class IntHV:
    dim: int
    values: np.ndarray

    def __post_init__(self):
        self.dim = _check_dim(self.dim)
        values = np.asarray(self.values).reshape(-1)
        if values.shape[0] != self.dim:
            raise DimensionError(f"Expected {self.dim} values, got {values.shape[0]}")
        self.values = checked_int32(values)

    @classmethod
    def zeros(cls, dim):
        dim = _check_dim(dim)
        return cls(dim, np.zeros(dim, dtype=np.int32))

    def negate(self):
        return IntHV(self.dim, -self.values.astype(np.int64))

    def __eq__(self, other):
        if not isinstance(other, IntHV):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.values, other.values)


def random_hv(dim, rng):
    """Uniform random hypervector: every element +1 or -1 with probability 1/2"""
    dim = _check_dim(dim)
    return BinaryHV.from_bits(rng.generator.random(dim) < 0.5)


def random_bits(count, dim, rng):
    """(count, dim) boolean matrix of fair coin flips, row-wise identical to random_hv draws"""
    dim = _check_dim(dim)
    return rng.generator.random((count, dim)) < 0.5


def bind(a, b):
    """Element-wise +-1 product, XNOR on the packed words"""
    _same_dim(a, b)
    return BinaryHV(a.dim, ~(a.words ^ b.words) & word_masks(a.dim))


def hamming(a, b):
    _same_dim(a, b)
    return int(popcount(a.words ^ b.words).sum(dtype=np.int64))


def hamming_matrix(queries, rows, chunk_words=1 << 22):
    """
    Hamming distances between packed queries (N, W) and packed rows (m, W).

    Returns an (N, m) int64 matrix. Queries are processed in chunks so the
    XOR intermediate stays near `chunk_words` words.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.uint64))
    rows = np.atleast_2d(np.asarray(rows, dtype=np.uint64))
    if queries.shape[1] != rows.shape[1]:
        raise DimensionError(f"Word count mismatch: {queries.shape[1]} vs {rows.shape[1]}")
    n_queries, n_rows = queries.shape[0], rows.shape[0]
    step = max(1, chunk_words // max(1, n_rows * rows.shape[1]))
    out = np.empty((n_queries, n_rows), dtype=np.int64)
    for start in range(0, n_queries, step):
        stop = min(start + step, n_queries)
        diff = queries[start:stop, None, :] ^ rows[None, :, :]
        out[start:stop] = popcount(diff).sum(axis=-1, dtype=np.int64)
    return out


def accumulate(acc, hv, weight=1):
    """acc + weight * hv with hv read as +-1; overflow past int32 raises"""
    _same_dim(acc, hv)
    if not isinstance(weight, numbers.Integral):
        raise TypeError(f"accumulate weight must be an integer, got {weight!r}")
    values = acc.values.astype(np.int64) + int(weight) * hv.to_bipolar().astype(np.int64)
    return IntHV(acc.dim, values)


def scaled_delta(values, alpha):
    """
    alpha * values as integers. Integral alpha scales exactly; otherwise each
    element is rounded half-to-even.
    """
    values = np.asarray(values, dtype=np.int64)
    alpha = float(alpha)
    if alpha.is_integer():
        return values * int(alpha)
    return np.rint(values * alpha).astype(np.int64)


def add_scaled(acc, h, alpha):
    """acc + alpha * h for integer hypervectors (retraining update)"""
    _same_dim(acc, h)
    values = acc.values.astype(np.int64) + scaled_delta(h.values, alpha)
    return IntHV(acc.dim, values)


def cosine(a, b):
    _same_dim(a, b)
    x = a.values.astype(np.float64)
    y = b.values.astype(np.float64)
    norm_x = np.linalg.norm(x)
    norm_y = np.linalg.norm(y)
    if norm_x == 0 or norm_y == 0:
        raise UndefinedSimilarityError("Cosine similarity is undefined for a zero-norm vector")
    return float(np.clip(np.dot(x, y) / (norm_x * norm_y), -1.0, 1.0))


def sign_binarize(v):
    """Deterministic binarization: +1 where v >= 0, else -1"""
    return BinaryHV.from_bits(v.values >= 0)


def sign_binarize_matrix(rows):
    return pack_bits(np.asarray(rows) >= 0)


def stochastic_bits(values, cutoff, rng):
    """
    Stochastic binarization of a real array as booleans (True = +1).

    Outside [-cutoff, cutoff] the sign decides; inside, +1 is drawn with
    probability 1/2 + x / (2 cutoff), so the expected +-1 outcome is
    x / cutoff. One uniform draw is consumed per element on every call.
    """
    cutoff = float(cutoff)
    if not np.isfinite(cutoff) or cutoff <= 0:
        raise CutoffError(f"Stochastic binarization cutoff must be positive, got {cutoff}")
    x = np.asarray(values, dtype=np.float64)
    p_plus = np.clip(0.5 + x / (2.0 * cutoff), 0.0, 1.0)
    return rng.generator.random(x.shape) < p_plus


def stochastic_binarize(v, b, rng):
    return BinaryHV.from_bits(stochastic_bits(v.values, b, rng))
