"""
Class-matrix lifecycle: one-shot training, retraining driven by the
binarized snapshot, model binarization (sign or stochastic) and inference
over the Hamming and cosine paths.
"""
import copy
import enum
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from config import Config
from distributions import matrix_row_sigmas
from encoder import encode_batch
from errors import ConfigError, DimensionError, UndefinedSimilarityError
from hypervector import (
    BinaryHV,
    RngStream,
    StreamLabel,
    checked_int32,
    hamming_matrix,
    pack_bits,
    scaled_delta,
    sign_binarize_matrix,
    stochastic_bits,
    words_for,
)

logger = logging.getLogger(__name__)


class Binarizer(str, enum.Enum):
    DETERMINISTIC = 'deterministic'
    STOCHASTIC = 'stochastic'


class Feedback(str, enum.Enum):
    BINARY = 'binary'    # retrain on predictions of the binarized snapshot
    COSINE = 'cosine'    # retrain on cosine predictions of the non-binarized rows


@dataclass
class TrainConfig:
    dim: int = 10000
    levels: int = 64
    alpha: float = 1.0
    beta: float = 0.5
    max_epochs: int = 30
    patience: int = 5
    binarizer: Binarizer = Binarizer.STOCHASTIC
    feedback: Feedback = Feedback.BINARY
    seed: int = 0
    shuffle: bool = True
    freeze_snapshot: bool = True
    validation_fraction: float = 0.1
    batch_size: int = 512

    def __post_init__(self):
        try:
            self.binarizer = Binarizer(self.binarizer)
            self.feedback = Feedback(self.feedback)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        self.validate()
        if self.beta_warning:
            logger.warning(
                f"beta={self.beta} puts the cutoff at or above the row sigma; "
                "the binarized model becomes close to random"
            )

    @classmethod
    def from_config(cls, **overrides):
        """Defaults from the environment-backed Config, then explicit overrides"""
        values = dict(
            dim=Config.DIM,
            levels=Config.LEVELS,
            alpha=Config.ALPHA,
            beta=Config.BETA,
            max_epochs=Config.MAX_EPOCHS,
            patience=Config.PATIENCE,
            binarizer=Config.BINARIZER,
            seed=Config.SEED,
            shuffle=Config.SHUFFLE,
            validation_fraction=Config.VALIDATION_FRACTION,
            batch_size=Config.BATCH_SIZE,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def validate(self):
        if self.dim < 2 or self.dim % 2:
            raise ConfigError(f"dim must be an even integer >= 2, got {self.dim}")
        if self.levels < 2:
            raise ConfigError(f"levels must be >= 2, got {self.levels}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError(f"validation_fraction must be in (0, 1), got {self.validation_fraction}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def beta_warning(self):
        return self.beta >= 1.0

    def to_dict(self):
        values = asdict(self)
        values['binarizer'] = self.binarizer.value
        values['feedback'] = self.feedback.value
        return values

    @classmethod
    def from_dict(cls, values):
        return cls(**values)


@dataclass
class TrainingStreams:
    """Random streams consumed during training, all derived from one seed"""
    shuffle: RngStream
    flip: RngStream

    @classmethod
    def from_seed(cls, seed):
        return cls(RngStream(seed, StreamLabel.SHUFFLE), RngStream(seed, StreamLabel.FLIP_NOISE))


@dataclass
class EpochStats:
    epoch: int
    train_errors: int
    train_accuracy: float
    val_accuracy: float
    val_accuracy_cosine: float
    wall_time_s: float

    def to_record(self):
        return asdict(self)


@dataclass(eq=False)
class Model:
    rows: np.ndarray        # (m, D) int32, the non-binarized class matrix C
    snapshot: np.ndarray    # (m, W) uint64, binarized rows
    sigmas: np.ndarray      # (m,) float64
    counts: np.ndarray      # (m,) points bundled per class at one-shot training
    binarizer: Binarizer = Binarizer.DETERMINISTIC
    epoch: int = 0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = checked_int32(np.atleast_2d(self.rows))
        self.snapshot = np.atleast_2d(np.asarray(self.snapshot, dtype=np.uint64))
        self.sigmas = np.asarray(self.sigmas, dtype=np.float64).reshape(-1)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        self.binarizer = Binarizer(self.binarizer)
        m, dim = self.rows.shape
        if self.snapshot.shape != (m, words_for(dim)):
            raise DimensionError(f"Snapshot shape {self.snapshot.shape} does not match rows {self.rows.shape}")
        if self.sigmas.shape[0] != m or self.counts.shape[0] != m:
            raise DimensionError("Per-row sigma/count length differs from class count")

    @property
    def n_classes(self):
        return self.rows.shape[0]

    @property
    def dim(self):
        return self.rows.shape[1]

    @property
    def empty_classes(self):
        return np.flatnonzero(self.counts == 0)

    @property
    def fallback_rows(self):
        """Rows with sigma 0, binarized by sign even in stochastic mode"""
        return np.flatnonzero(self.sigmas == 0)

    def binarized(self, k):
        return BinaryHV(self.dim, self.snapshot[k])

    def copy(self):
        return Model(
            self.rows.copy(), self.snapshot.copy(), self.sigmas.copy(), self.counts.copy(),
            self.binarizer, self.epoch, copy.deepcopy(self.info),
        )


def _as_matrix(encoded):
    """Accept an (N, D) matrix or a sequence of IntHV"""
    if isinstance(encoded, np.ndarray):
        return np.atleast_2d(encoded)
    encoded = list(encoded)
    if not encoded:
        return np.empty((0, 0), dtype=np.int32)
    return np.stack([h.values for h in encoded])


def binarize_rows(rows, sigmas, mode, beta, rng=None):
    """
    Binarize every row of an (m, D) matrix. Stochastic mode uses the cutoff
    beta * sigma_row per row; rows with sigma 0 fall back to sign.
    """
    mode = Binarizer(mode)
    rows = np.atleast_2d(rows)
    if mode is Binarizer.DETERMINISTIC:
        return sign_binarize_matrix(rows)
    if rng is None:
        raise ValueError("Stochastic binarization needs a flip-noise stream")
    bits = np.empty(rows.shape, dtype=bool)
    for k in range(rows.shape[0]):
        cutoff = beta * sigmas[k]
        if cutoff > 0:
            bits[k] = stochastic_bits(rows[k], cutoff, rng)
        else:
            bits[k] = rows[k] >= 0
    return pack_bits(bits)


def binarize_model(model, mode, beta, rng=None):
    """Fresh snapshot of the model's rows under `mode`; does not modify the model"""
    zero = model.fallback_rows
    if Binarizer(mode) is Binarizer.STOCHASTIC and zero.size:
        logger.warning(f"Rows {zero.tolist()} have zero sigma; binarizing them by sign")
    return binarize_rows(model.rows, model.sigmas, mode, beta, rng)


def initial_train(encoded, labels, n_classes, binarizer=Binarizer.DETERMINISTIC, beta=0.5, rng=None):
    """One-shot training: C_k is the sum of every encoded point labelled k"""
    encoded = _as_matrix(encoded)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if encoded.shape[0] == 0:
        raise ValueError("Cannot train on an empty dataset")
    if labels.shape[0] != encoded.shape[0]:
        raise DimensionError(f"{encoded.shape[0]} encoded points but {labels.shape[0]} labels")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"Labels must lie in [0, {n_classes}), got [{labels.min()}, {labels.max()}]")

    rows = np.zeros((n_classes, encoded.shape[1]), dtype=np.int64)
    for k in range(n_classes):
        members = encoded[labels == k]
        if members.shape[0]:
            rows[k] = members.sum(axis=0, dtype=np.int64)
    counts = np.bincount(labels, minlength=n_classes)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        logger.warning(f"Classes {empty.tolist()} have no training points; their rows stay zero")

    rows = checked_int32(rows)
    sigmas = matrix_row_sigmas(rows)
    snapshot = binarize_rows(rows, sigmas, binarizer, beta, rng)
    return Model(rows, snapshot, sigmas, counts, binarizer)


def pack_queries(encoded, batch_size=4096):
    """Sign-binarize and pack encoded queries chunk by chunk"""
    encoded = _as_matrix(encoded)
    packed = np.empty((encoded.shape[0], words_for(encoded.shape[1])), dtype=np.uint64)
    for start in range(0, encoded.shape[0], batch_size):
        packed[start:start + batch_size] = pack_bits(encoded[start:start + batch_size] >= 0)
    return packed


def hamming_scores(model, encoded):
    """(N, m) similarities 1 - 2 delta / D of sign-binarized queries against the snapshot"""
    distances = hamming_matrix(pack_queries(encoded), model.snapshot)
    return 1.0 - 2.0 * distances / model.dim


def cosine_scores(model, encoded, batch_size=512):
    """(N, m) cosine similarities against the non-binarized rows"""
    encoded = _as_matrix(encoded)
    rows = model.rows.astype(np.float64)
    row_norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(row_norms == 0)
    if zero.size:
        raise UndefinedSimilarityError(f"Class {int(zero[0])} has a zero-norm row; cosine is undefined")
    rows /= row_norms[:, None]
    scores = np.empty((encoded.shape[0], model.n_classes), dtype=np.float64)
    for start in range(0, encoded.shape[0], batch_size):
        block = encoded[start:start + batch_size].astype(np.float64)
        norms = np.linalg.norm(block, axis=1)
        norms[norms == 0] = 1.0  # zero queries score 0 everywhere
        scores[start:start + batch_size] = (block @ rows.T) / norms[:, None]
    return np.clip(scores, -1.0, 1.0)


def predict_binary_batch(model, encoded):
    scores = hamming_scores(model, encoded)
    # argmax of 1 - 2d/D is argmin of d; argmax keeps the lowest index on ties
    return np.argmax(scores, axis=1), scores


def predict_cosine_batch(model, encoded, batch_size=512):
    scores = cosine_scores(model, encoded, batch_size)
    return np.argmax(scores, axis=1), scores


def _check_query(model, query):
    if query.dim != model.dim:
        raise DimensionError(f"Query dimension {query.dim} differs from model dimension {model.dim}")


def predict_binary(model, query):
    _check_query(model, query)
    labels, scores = predict_binary_batch(model, query.values[None, :])
    return int(labels[0]), scores[0]


def predict_cosine(model, query):
    _check_query(model, query)
    if not np.any(query.values):
        raise UndefinedSimilarityError("Cosine similarity is undefined for a zero query")
    labels, scores = predict_cosine_batch(model, query.values[None, :])
    return int(labels[0]), scores[0]


def accuracy(predicted, labels):
    labels = np.asarray(labels)
    if labels.shape[0] == 0:
        return 0.0
    return float(np.mean(np.asarray(predicted) == labels))


def _feedback_predictions(model, encoded, feedback, batch_size):
    if Feedback(feedback) is Feedback.COSINE:
        return predict_cosine_batch(model, encoded, batch_size)[0]
    return predict_binary_batch(model, encoded)[0]


def _apply_frozen_updates(model, encoded, labels, predicted, alpha, batch_size):
    """Row deltas for every misclassified point, predictions taken from the frozen epoch-start model"""
    wrong = np.flatnonzero(predicted != labels)
    delta = np.zeros(model.rows.shape, dtype=np.int64)
    for start in range(0, wrong.shape[0], batch_size):
        chunk = wrong[start:start + batch_size]
        scaled = scaled_delta(encoded[chunk], alpha)
        true_k = labels[chunk]
        wrong_l = predicted[chunk]
        for k in np.union1d(true_k, wrong_l):
            delta[k] += scaled[true_k == k].sum(axis=0, dtype=np.int64)
            delta[k] -= scaled[wrong_l == k].sum(axis=0, dtype=np.int64)
    model.rows = checked_int32(model.rows.astype(np.int64) + delta)
    return wrong.shape[0]


def _apply_sequential_updates(model, encoded, labels, order, config, flip_rng):
    """Per-point updates in `order`, rows k and l re-binarized right after each update"""
    errors = 0
    rows = model.rows.astype(np.int64)
    for index in order:
        query = pack_bits(encoded[index] >= 0)[None, :]
        predicted = int(np.argmin(hamming_matrix(query, model.snapshot)[0]))
        true_k = int(labels[index])
        if predicted == true_k:
            continue
        errors += 1
        scaled = scaled_delta(encoded[index], config.alpha)
        rows[true_k] += scaled
        rows[predicted] -= scaled
        touched = [true_k, predicted]
        checked = checked_int32(rows[touched])
        model.snapshot[touched] = binarize_rows(
            checked, model.sigmas[touched], config.binarizer, config.beta, flip_rng
        )
    model.rows = checked_int32(rows)
    return errors


def retrain_epoch(model, encoded, labels, config, streams, validation=None):
    """
    One retraining pass. Misclassified points (true k, predicted l) add
    alpha * H to C_k and subtract it from C_l. Afterwards sigmas are
    recomputed and the snapshot is re-binarized with fresh noise.

    `validation` is an optional (encoded, labels) pair; without it the
    validation accuracies are measured on the training data.
    """
    started = time.perf_counter()
    encoded = _as_matrix(encoded)
    labels = np.asarray(labels, dtype=np.int64)
    order = np.arange(encoded.shape[0])
    if config.shuffle:
        order = streams.shuffle.generator.permutation(encoded.shape[0])

    if config.freeze_snapshot:
        predicted = _feedback_predictions(model, encoded, config.feedback, config.batch_size)
        errors = _apply_frozen_updates(model, encoded, labels, predicted, config.alpha, config.batch_size)
    else:
        if config.feedback is Feedback.COSINE:
            raise ConfigError("Sequential snapshot refresh applies to binary feedback only")
        errors = _apply_sequential_updates(model, encoded, labels, order, config, streams.flip)

    model.sigmas = matrix_row_sigmas(model.rows)
    model.snapshot = binarize_model(model, config.binarizer, config.beta, streams.flip)
    model.epoch += 1

    val_encoded, val_labels = validation if validation is not None else (encoded, labels)
    val_binary = accuracy(predict_binary_batch(model, val_encoded)[0], val_labels)
    val_cosine = _safe_cosine_accuracy(model, val_encoded, val_labels, config.batch_size)
    n_points = max(1, encoded.shape[0])
    return EpochStats(
        epoch=model.epoch,
        train_errors=int(errors),
        train_accuracy=1.0 - errors / n_points,
        val_accuracy=val_binary,
        val_accuracy_cosine=val_cosine,
        wall_time_s=time.perf_counter() - started,
    )


def _safe_cosine_accuracy(model, encoded, labels, batch_size):
    try:
        return accuracy(predict_cosine_batch(model, encoded, batch_size)[0], labels)
    except UndefinedSimilarityError:
        return 0.0


def tracked_accuracy(binary, cosine, feedback):
    """The accuracy early stopping follows: binary snapshot, or rows for cosine feedback"""
    return cosine if Feedback(feedback) is Feedback.COSINE else binary


@dataclass
class TrainResult:
    model: Model                # best validation snapshot
    history: list
    final_model: Model          # state after the last epoch run

    def __iter__(self):
        # unpacks as (model, history)
        return iter((self.model, self.history))


def fit_encoded(config, train_encoded, train_labels, val_encoded, val_labels, n_classes, on_epoch=None):
    """
    One-shot training followed by retraining with early stopping, on
    already encoded splits. `on_epoch(stats)` is called after every epoch.
    """
    streams = TrainingStreams.from_seed(config.seed)
    model = initial_train(train_encoded, train_labels, n_classes, config.binarizer, config.beta, streams.flip)
    one_shot_binary = accuracy(predict_binary_batch(model, val_encoded)[0], val_labels)
    one_shot_cosine = _safe_cosine_accuracy(model, val_encoded, val_labels, config.batch_size)
    # plain sign-binarized one-shot rows, the usual binary baseline
    sign_model = Model(model.rows, sign_binarize_matrix(model.rows), model.sigmas, model.counts)
    one_shot_sign = accuracy(predict_binary_batch(sign_model, val_encoded)[0], val_labels)
    logger.info(f"One-shot validation accuracy: binary {one_shot_binary:.4f}, cosine {one_shot_cosine:.4f}")

    best = model.copy()
    best_accuracy = tracked_accuracy(one_shot_binary, one_shot_cosine, config.feedback)
    stale = 0
    history = []
    for _ in range(config.max_epochs):
        stats = retrain_epoch(model, train_encoded, train_labels, config, streams, (val_encoded, val_labels))
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
        logger.info(
            f"Epoch {stats.epoch}: {stats.train_errors} errors, "
            f"val binary {stats.val_accuracy:.4f}, val cosine {stats.val_accuracy_cosine:.4f}"
        )
        current = tracked_accuracy(stats.val_accuracy, stats.val_accuracy_cosine, config.feedback)
        if current > best_accuracy:
            best = model.copy()
            best_accuracy = current
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info(f"No improvement for {stale} epochs, stopping at epoch {stats.epoch}")
                break

    last = history[-1]
    best.info.update(
        best_epoch=best.epoch,
        best_val_accuracy=best_accuracy,
        final_epoch=model.epoch,
        final_val_accuracy=last.val_accuracy,
        final_val_accuracy_cosine=last.val_accuracy_cosine,
        one_shot_val_accuracy=one_shot_binary,
        one_shot_val_accuracy_cosine=one_shot_cosine,
        one_shot_sign_val_accuracy=one_shot_sign,
    )
    model.info = dict(best.info)
    return TrainResult(best, history, model)


def train(config, train_set, validation_set, codebook, on_epoch=None):
    """
    Encode both splits, train one-shot, retrain until patience runs out
    and return the best validation snapshot with its history.

    The result unpacks as (model, history); `.final_model` holds the
    state after the last epoch.
    """
    config.validate()
    if codebook.dim != config.dim:
        raise ConfigError(f"Codebook dimension {codebook.dim} differs from config dim {config.dim}")
    logger.info(f"Encoding {len(train_set)} training and {len(validation_set)} validation points (D={config.dim})")
    train_encoded = encode_batch(train_set.points, codebook, config.batch_size)
    val_encoded = encode_batch(validation_set.points, codebook, config.batch_size)
    return fit_encoded(
        config, train_encoded, train_set.labels, val_encoded, validation_set.labels,
        train_set.n_classes, on_epoch,
    )
