"""
Experiment orchestration behind the command line: data preparation,
training summaries, evaluation (accuracy, confusion, latency, margins),
the three-variant binarizer comparison and parameter sweeps.
"""
import itertools
import logging
import time
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from classifier import (
    Binarizer,
    Feedback,
    accuracy,
    fit_encoded,
    pack_queries,
    predict_binary_batch,
    predict_cosine_batch,
    tracked_accuracy,
)
from config import Config
from dataset_loader import load_benchmark, load_csv, split_validation
from encoder import Codebook, count_out_of_range, encode_batch
from errors import DimensionError, UndefinedSimilarityError
from hypervector import popcount, words_for

logger = logging.getLogger(__name__)

MARGIN_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)
WARMUP_QUERIES = 50
CONVERGENCE_TOLERANCE = 0.01

# name -> (binarizer, feedback)
COMPARE_VARIANTS = {
    'baseline': (Binarizer.DETERMINISTIC, Feedback.COSINE),
    'deterministic': (Binarizer.DETERMINISTIC, Feedback.BINARY),
    'stochastic': (Binarizer.STOCHASTIC, Feedback.BINARY),
}


@dataclass
class DataSplits:
    name: str
    train: object
    validation: object
    test: object = None

    @property
    def digests(self):
        digests = {'train': self.train.digest}
        if self.test is not None:
            digests['test'] = self.test.digest
        return digests


def load_splits(dataset=None, train_file=None, test_file=None, data_dir=None,
                label_column='last', delimiter=',', header=False,
                validation_fraction=None, seed=0):
    """
    Load a registered benchmark (or custom CSV files) and carve a
    stratified validation split out of the training partition.
    """
    validation_fraction = validation_fraction or Config.VALIDATION_FRACTION
    if dataset:
        train_full, test = load_benchmark(dataset, data_dir)
        name = dataset
    else:
        train_full = load_csv(train_file, label_column, delimiter, header)
        test = None
        if test_file:
            test = load_csv(test_file, label_column, delimiter, header, label_names=train_full.label_names)
        name = train_full.name
    train, validation = split_validation(train_full, validation_fraction, seed)
    logger.info(f"✓ {name}: {len(train)} train, {len(validation)} validation, {len(test) if test is not None else 0} test")
    return DataSplits(name, train, validation, test)


def build_codebook(splits, config):
    return Codebook.build(splits.train.points, config.dim, config.levels, config.seed)


def _accuracies(model, encoded, labels, batch_size):
    binary = accuracy(predict_binary_batch(model, encoded)[0], labels)
    try:
        cosine = accuracy(predict_cosine_batch(model, encoded, batch_size)[0], labels)
    except UndefinedSimilarityError as e:
        logger.warning(f"Cosine accuracy unavailable: {e}")
        cosine = None
    return binary, cosine


def run_training(config, splits, codebook=None, on_epoch=None):
    """Train one configuration; returns (TrainResult, codebook, summary fields)"""
    codebook = codebook or build_codebook(splits, config)
    train_encoded = encode_batch(splits.train.points, codebook, config.batch_size)
    val_encoded = encode_batch(splits.validation.points, codebook, config.batch_size)
    started = time.perf_counter()
    result = fit_encoded(
        config, train_encoded, splits.train.labels, val_encoded, splits.validation.labels,
        splits.train.n_classes, on_epoch,
    )
    summary = dict(result.model.info)
    summary['epochs_run'] = len(result.history)
    summary['elapsed_s'] = time.perf_counter() - started
    if splits.test is not None and len(splits.test):
        test_encoded = encode_batch(splits.test.points, codebook, config.batch_size)
        binary, cosine = _accuracies(result.model, test_encoded, splits.test.labels, config.batch_size)
        summary['test_accuracy'] = binary
        summary['test_accuracy_cosine'] = cosine
    return result, codebook, summary


def confusion_counts(predicted, labels, n_classes):
    """(m, m) counts: row is the true class, column the predicted one"""
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (np.asarray(labels), np.asarray(predicted)), 1)
    return matrix


def score_margins(scores):
    """Top-1 minus top-2 similarity per query"""
    if scores.shape[1] < 2:
        return np.zeros(scores.shape[0])
    top = np.partition(scores, -2, axis=1)
    return top[:, -1] - top[:, -2]


def margin_summary(scores):
    margins = score_margins(scores)
    if margins.size == 0:
        return {'mean': None, 'quantiles': {}}
    return {
        'mean': float(margins.mean()),
        'quantiles': {str(q): float(np.quantile(margins, q)) for q in MARGIN_QUANTILES},
    }


def median_latency(classify, queries, n_queries, warmup=WARMUP_QUERIES):
    """Median per-query wall time in microseconds; queries are cycled to reach n_queries"""
    if len(queries) == 0:
        return None
    for i in range(min(warmup, n_queries)):
        classify(queries[i % len(queries)])
    timings = np.empty(n_queries)
    for i in range(n_queries):
        started = time.perf_counter()
        classify(queries[i % len(queries)])
        timings[i] = time.perf_counter() - started
    return float(np.median(timings) * 1e6)


def binary_classifier(model):
    """Per-query Hamming search over the packed snapshot"""
    snapshot = np.ascontiguousarray(model.snapshot)

    def classify(packed_query):
        return int(np.argmin(popcount(snapshot ^ packed_query).sum(axis=1)))
    return classify


def cosine_classifier(model):
    """Per-query cosine search over the non-binarized rows"""
    rows = model.rows.astype(np.float64)
    norms = np.linalg.norm(rows, axis=1)
    norms[norms == 0] = 1.0
    normalized = rows / norms[:, None]

    def classify(query):
        query = query.astype(np.float64)
        norm = np.linalg.norm(query) or 1.0
        return int(np.argmax(normalized @ query / norm))
    return classify


def operation_counts(model):
    """Per-query work of both inference paths"""
    n_words = words_for(model.dim)
    return {
        'binary_word_ops': int(2 * model.n_classes * n_words),   # XOR and popcount per word
        'cosine_multiply_adds': int(model.n_classes * model.dim + model.dim),
    }


def evaluate(model, codebook, dataset, batch_size=None, latency_queries=None):
    """
    Accuracy on both inference paths, confusion counts of the binary path,
    median per-query latency of each path and the score-margin distribution.
    """
    batch_size = batch_size or Config.BATCH_SIZE
    latency_queries = Config.LATENCY_QUERIES if latency_queries is None else latency_queries
    if dataset.n_features != codebook.n_features:
        raise DimensionError(
            f"Dataset has {dataset.n_features} features, model was trained on {codebook.n_features}"
        )
    clamped = count_out_of_range(dataset.points, codebook.scaler)
    if clamped:
        logger.info(f"{clamped} feature values outside the training range were clamped")

    encoded = encode_batch(dataset.points, codebook, batch_size)
    predicted, binary_scores = predict_binary_batch(model, encoded)
    binary = accuracy(predicted, dataset.labels)
    try:
        cosine_predicted, cosine_scores = predict_cosine_batch(model, encoded, batch_size)
        cosine = accuracy(cosine_predicted, dataset.labels)
        cosine_margins = margin_summary(cosine_scores)
    except UndefinedSimilarityError as e:
        logger.warning(f"Cosine path unavailable: {e}")
        cosine, cosine_margins = None, None

    summary = {
        'points': len(dataset),
        'accuracy_binary': binary,
        'accuracy_cosine': cosine,
        'confusion': confusion_counts(predicted, dataset.labels, model.n_classes).tolist(),
        'margins_binary': margin_summary(binary_scores),
        'margins_cosine': cosine_margins,
        'clamped_values': clamped,
        'operations': operation_counts(model),
    }
    if latency_queries > 0 and len(dataset):
        packed = pack_queries(encoded)
        binary_us = median_latency(binary_classifier(model), packed, latency_queries)
        cosine_us = median_latency(cosine_classifier(model), encoded, latency_queries)
        summary['latency_binary_us'] = binary_us
        summary['latency_cosine_us'] = cosine_us
        ratio = cosine_us / binary_us if binary_us else None
        summary['throughput_ratio'] = ratio
        ratio_text = f"{ratio:.2f}x" if ratio is not None else "n/a"
        logger.info(
            f"Median latency per query: binary {binary_us:.1f}us, cosine {cosine_us:.1f}us ({ratio_text})"
        )
    return summary


def convergence_epoch(curve, tolerance=CONVERGENCE_TOLERANCE):
    """First epoch (1-based) whose accuracy is within `tolerance` of the curve's peak"""
    curve = np.asarray(curve, dtype=np.float64)
    if curve.size == 0:
        return None
    return int(np.flatnonzero(curve >= curve.max() - tolerance)[0]) + 1


def gap_closure(accuracy_value, one_shot_binary, ceiling):
    """Share of the one-shot binary to non-binarized gap that `accuracy_value` closes"""
    gap = ceiling - one_shot_binary
    if gap <= 0:
        return float('nan')
    return (accuracy_value - one_shot_binary) / gap


def compare_variants(splits, base_config, seeds, on_record=None):
    """
    Train the baseline (cosine feedback), deterministic and stochastic
    variants over `seeds`. Variants of one seed share the codebook and the
    encodings. Early stopping is disabled so every curve runs max_epochs.

    Returns (epoch frame, summary frame, overall dict).
    """
    epoch_rows = []
    seed_rows = []
    for seed in seeds:
        config = replace(base_config, seed=seed, patience=base_config.max_epochs)
        codebook = build_codebook(splits, config)
        train_encoded = encode_batch(splits.train.points, codebook, config.batch_size)
        val_encoded = encode_batch(splits.validation.points, codebook, config.batch_size)
        for variant, (binarizer, feedback) in COMPARE_VARIANTS.items():
            logger.info(f"Training variant '{variant}' with seed {seed}")
            variant_config = replace(config, binarizer=binarizer, feedback=feedback)
            result = fit_encoded(
                variant_config, train_encoded, splits.train.labels, val_encoded,
                splits.validation.labels, splits.train.n_classes,
            )
            for stats in result.history:
                row = {
                    'variant': variant,
                    'seed': seed,
                    'epoch': stats.epoch,
                    'val_accuracy_binary': stats.val_accuracy,
                    'val_accuracy_cosine': stats.val_accuracy_cosine,
                    'val_accuracy': tracked_accuracy(stats.val_accuracy, stats.val_accuracy_cosine, feedback),
                    'train_errors': stats.train_errors,
                }
                epoch_rows.append(row)
                if on_record is not None:
                    on_record('compare_epoch', row)
            curve = [tracked_accuracy(s.val_accuracy, s.val_accuracy_cosine, feedback) for s in result.history]
            info = result.model.info
            seed_rows.append({
                'variant': variant,
                'seed': seed,
                'peak_accuracy': float(max(curve)),
                'peak_binary_accuracy': float(max(s.val_accuracy for s in result.history)),
                'peak_cosine_accuracy': float(max(s.val_accuracy_cosine for s in result.history)),
                'epochs_to_peak': convergence_epoch(curve),
                'one_shot_binary_accuracy': info['one_shot_sign_val_accuracy'],
                'one_shot_cosine_accuracy': info['one_shot_val_accuracy_cosine'],
            })

    epochs = pd.DataFrame(epoch_rows)
    per_seed = pd.DataFrame(seed_rows)
    # non-binarized ceiling per seed: peak cosine accuracy of the baseline variant
    ceilings = per_seed[per_seed['variant'] == 'baseline'].set_index('seed')['peak_cosine_accuracy']
    per_seed['gap_closure'] = [
        gap_closure(row.peak_binary_accuracy, row.one_shot_binary_accuracy, ceilings[row.seed])
        for row in per_seed.itertuples()
    ]
    summary = per_seed.groupby('variant', sort=False).median(numeric_only=True).drop(columns='seed').reset_index()
    summary['seeds'] = len(seeds)

    overall = {}
    medians = summary.set_index('variant')['epochs_to_peak']
    if medians.get('deterministic'):
        reduction = (medians['deterministic'] - medians['stochastic']) / medians['deterministic'] * 100.0
        overall['epoch_reduction_pct'] = float(reduction)
    return epochs, summary, overall


def sweep_points(base_config, betas=None, levels=None, dims=None, alphas=None):
    """Cartesian grid of configs; unspecified axes keep the base value"""
    axes = {
        'beta': betas or [base_config.beta],
        'levels': levels or [base_config.levels],
        'dim': dims or [base_config.dim],
        'alpha': alphas or [base_config.alpha],
    }
    for beta, level_count, dim, alpha in itertools.product(*axes.values()):
        yield replace(base_config, beta=beta, levels=level_count, dim=dim, alpha=alpha)


def run_sweep(splits, base_config, betas=None, levels=None, dims=None, alphas=None, on_record=None):
    """Train every grid point with the same seed; codebooks are shared across points with equal (D, Q)"""
    codebooks = {}
    rows = []
    for config in sweep_points(base_config, betas, levels, dims, alphas):
        key = (config.dim, config.levels)
        if key not in codebooks:
            codebooks[key] = build_codebook(splits, config)
        logger.info(f"Sweep point beta={config.beta} Q={config.levels} D={config.dim} alpha={config.alpha}")
        _, _, summary = run_training(config, splits, codebooks[key])
        row = {
            'beta': config.beta,
            'levels': config.levels,
            'dim': config.dim,
            'alpha': config.alpha,
            'beta_warning': config.beta_warning,
            **summary,
        }
        rows.append(row)
        if on_record is not None:
            on_record('sweep_point', row)
    return pd.DataFrame(rows)


def frame_records(frame):
    """DataFrame rows as plain dicts, NaN turned into None"""
    cleaned = frame.astype(object).where(pd.notna(frame), None)
    return cleaned.to_dict(orient='records')
