"""
Maps n-feature datapoints to D-dimensional integer hypervectors.

    H = B_1 * L_q(f_1) + B_2 * L_q(f_2) + ... + B_n * L_q(f_n)

B_i are random base (position) hypervectors, L_q are level (value)
hypervectors and * is binding (+-1 product). Levels are built by
progressively flipping a fixed random half of the positions of L_0, so
hamming(L_0, L_q) grows linearly with q up to D/2.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from errors import DimensionError
from hypervector import (
    BinaryHV,
    IntHV,
    RngStream,
    StreamLabel,
    pack_bits,
    random_bits,
    unpack_bits,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64).reshape(-1)
        maxs = np.asarray(self.maxs, dtype=np.float64).reshape(-1)
        if mins.shape != maxs.shape:
            raise DimensionError(f"Scaler min/max length mismatch: {mins.shape[0]} vs {maxs.shape[0]}")
        if np.any(mins > maxs):
            raise ValueError("Scaler minimum exceeds maximum")
        object.__setattr__(self, 'mins', mins)
        object.__setattr__(self, 'maxs', maxs)

    @property
    def n_features(self):
        return self.mins.shape[0]

    @property
    def degenerate(self):
        """Features whose training values never varied (min == max)"""
        return self.mins == self.maxs

    def __eq__(self, other):
        if not isinstance(other, FeatureScaler):
            return NotImplemented
        return np.array_equal(self.mins, other.mins) and np.array_equal(self.maxs, other.maxs)


def fit_scaler(points):
    """Per-feature min/max over the training partition"""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("fit_scaler needs at least one training point")
    scaler = FeatureScaler(points.min(axis=0), points.max(axis=0))
    n_degenerate = int(scaler.degenerate.sum())
    if n_degenerate:
        logger.info(f"{n_degenerate} of {scaler.n_features} features are constant in training data")
    return scaler


def level_flip_counts(dim, levels):
    """Number of flipped positions for every level: round(q * (D/2) / (Q-1)), half to even"""
    half = dim // 2
    return np.array([round(Fraction(q * half, levels - 1)) for q in range(levels)], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class LevelFamily:
    dim: int
    levels: int
    base_bits: np.ndarray     # L_0 as booleans (True = +1)
    flip_order: np.ndarray    # D/2 positions, flipped in this order
    flip_counts: np.ndarray = field(init=False)
    packed: np.ndarray = field(init=False)     # (Q, W) uint64
    bipolar: np.ndarray = field(init=False)    # (Q, D) int8

    def __post_init__(self):
        counts = level_flip_counts(self.dim, self.levels)
        bits = np.repeat(self.base_bits[None, :], self.levels, axis=0)
        for q, count in enumerate(counts):
            bits[q, self.flip_order[:count]] ^= True
        object.__setattr__(self, 'flip_counts', counts)
        object.__setattr__(self, 'packed', pack_bits(bits))
        object.__setattr__(self, 'bipolar', np.where(bits, 1, -1).astype(np.int8))

    def level(self, q):
        return BinaryHV(self.dim, self.packed[q])

    def __len__(self):
        return self.levels


def build_level_family(dim, levels, rng):
    if levels < 2:
        raise ValueError(f"Level count Q must be at least 2, got {levels}")
    if dim < 2 or dim % 2:
        raise DimensionError(f"Level family needs an even dimension, got {dim}")
    base_bits = random_bits(1, dim, rng)[0]
    flip_order = rng.generator.permutation(dim)[: dim // 2]
    return LevelFamily(dim, levels, base_bits, flip_order)


def quantize(value, feature_index, scaler, levels):
    """Level index of one feature value; out-of-range values clamp, constant features map to 0"""
    low = scaler.mins[feature_index]
    high = scaler.maxs[feature_index]
    if high == low:
        return 0
    clamped = min(max(float(value), low), high)
    return int(np.rint((clamped - low) / (high - low) * (levels - 1)))


def quantize_matrix(points, scaler, levels):
    """quantize() for every feature of an (N, n) matrix, as an (N, n) int array"""
    points = np.asarray(points, dtype=np.float64)
    span = scaler.maxs - scaler.mins
    safe_span = np.where(span > 0, span, 1.0)
    clamped = np.clip(points, scaler.mins, scaler.maxs)
    indices = np.rint((clamped - scaler.mins) / safe_span * (levels - 1)).astype(np.int64)
    indices[:, span == 0] = 0
    return indices


def count_out_of_range(points, scaler):
    """How many feature values fall outside the training range (they get clamped)"""
    points = np.asarray(points, dtype=np.float64)
    return int(np.count_nonzero((points < scaler.mins) | (points > scaler.maxs)))


@dataclass(frozen=True, eq=False)
class Codebook:
    dim: int
    base_packed: np.ndarray   # (n, W) uint64
    levels: LevelFamily
    scaler: FeatureScaler
    seed: int
    base_bipolar: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.levels.dim != self.dim:
            raise DimensionError(f"Level dimension {self.levels.dim} differs from codebook dimension {self.dim}")
        if self.base_packed.shape[0] != self.scaler.n_features:
            raise DimensionError("Base vector count differs from scaler feature count")
        bits = unpack_bits(self.base_packed, self.dim)
        object.__setattr__(self, 'base_bipolar', np.where(bits, 1, -1).astype(np.int8))

    @property
    def n_features(self):
        return self.base_packed.shape[0]

    @property
    def n_levels(self):
        return self.levels.levels

    def base(self, i):
        return BinaryHV(self.dim, self.base_packed[i])

    @classmethod
    def build(cls, train_points, dim, levels, seed):
        """Fit the scaler on training points and draw base and level vectors from `seed`"""
        scaler = fit_scaler(train_points)
        return cls.from_parameters(dim, levels, seed, scaler)

    @classmethod
    def from_parameters(cls, dim, levels, seed, scaler):
        """Regenerate a codebook deterministically from its seed and parameters"""
        base_rng = RngStream(seed, StreamLabel.BASE_VECTORS)
        level_rng = RngStream(seed, StreamLabel.LEVEL_VECTORS)
        base_packed = pack_bits(random_bits(scaler.n_features, dim, base_rng))
        family = build_level_family(dim, levels, level_rng)
        return cls(dim, base_packed, family, scaler, int(seed))


def encoded_dtype(n_features):
    """Narrowest signed type holding every element of an encoding (|H_j| <= n)"""
    return np.int16 if n_features <= np.iinfo(np.int16).max else np.int32


def encode(point, codebook):
    """Encode one datapoint into an IntHV; elements lie in [-n, n] with the parity of n"""
    point = np.asarray(point, dtype=np.float64).reshape(-1)
    if point.shape[0] != codebook.n_features:
        raise DimensionError(f"Point has {point.shape[0]} features, codebook expects {codebook.n_features}")
    indices = quantize_matrix(point[None, :], codebook.scaler, codebook.n_levels)[0]
    # +-1 product of B_i and L_q is exactly bind(B_i, L_q)
    bound = codebook.base_bipolar * codebook.levels.bipolar[indices]
    return IntHV(codebook.dim, bound.sum(axis=0, dtype=np.int32))


def encode_batch(points, codebook, batch_size=512):
    """
    Encode an (N, n) matrix of points into an (N, D) integer matrix.

    Every level is L_0 with the first k_q positions of the flip order
    negated, so B_i * L_q = L_0 * B_i outside the flipped set. For a flip
    position of rank r, only features whose level q satisfies k_q > r
    contribute a negated B_i. Grouping flip positions by their threshold
    level turns the whole encoding into one float32 matrix product per
    level (exact: every partial sum is an integer below 2^24).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != codebook.n_features:
        raise DimensionError(f"Points must be (N, {codebook.n_features}), got {points.shape}")
    family = codebook.levels
    base = codebook.base_bipolar.astype(np.float32)
    base_sum = codebook.base_bipolar.sum(axis=0, dtype=np.int64)
    level0 = family.bipolar[0].astype(np.int64)

    flip_positions = family.flip_order
    ranks = np.arange(flip_positions.shape[0])
    thresholds = np.searchsorted(family.flip_counts, ranks, side='right')
    groups = [(t, flip_positions[thresholds == t]) for t in np.unique(thresholds)]

    out = np.empty((points.shape[0], codebook.dim), dtype=encoded_dtype(codebook.n_features))
    for start in range(0, points.shape[0], batch_size):
        stop = min(start + batch_size, points.shape[0])
        indices = quantize_matrix(points[start:stop], codebook.scaler, codebook.n_levels)
        block = np.broadcast_to(base_sum, (stop - start, codebook.dim)).copy()
        for threshold, columns in groups:
            selected = (indices >= threshold).astype(np.float32)
            negated = selected @ base[:, columns]
            block[:, columns] -= 2 * np.rint(negated).astype(np.int64)
        out[start:stop] = block * level0
        if stop % (batch_size * 20) == 0:
            logger.info(f"Encoded {stop} points...")
    return out
