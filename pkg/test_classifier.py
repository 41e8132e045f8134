"""
Tests for one-shot training, retraining, binarization and inference
"""
import unittest

import numpy as np

from classifier import (
    Binarizer,
    Feedback,
    Model,
    TrainConfig,
    TrainingStreams,
    _apply_frozen_updates,
    accuracy,
    binarize_model,
    binarize_rows,
    fit_encoded,
    initial_train,
    predict_binary,
    predict_binary_batch,
    predict_cosine,
    predict_cosine_batch,
    retrain_epoch,
    train,
)
from dataset_loader import Dataset
from encoder import Codebook, encode_batch
from errors import ConfigError, DimensionError, UndefinedSimilarityError
from hypervector import IntHV, RngStream, StreamLabel, pack_bits, random_bits, sign_binarize_matrix


def random_encoded(count, dim, seed):
    bits = random_bits(count, dim, RngStream(seed, StreamLabel.BASE_VECTORS))
    return np.where(bits, 1, -1).astype(np.int32)


def cluster_dataset(seed, per_class=30, n_features=20, name='clusters'):
    """Two well separated clusters: class 0 near the feature minimum, class 1 near the maximum"""
    rng = np.random.default_rng(seed)
    low = rng.uniform(0.0, 0.2, size=(per_class, n_features))
    high = rng.uniform(0.8, 1.0, size=(per_class, n_features))
    points = np.vstack([low, high])
    labels = np.array([0] * per_class + [1] * per_class)
    return Dataset(name, points, labels, ['low', 'high'])


def model_from_rows(rows, binarizer=Binarizer.DETERMINISTIC):
    rows = np.asarray(rows, dtype=np.int32)
    sigmas = np.std(rows.astype(np.float64), axis=1, ddof=1)
    return Model(rows, sign_binarize_matrix(rows), sigmas, np.ones(rows.shape[0], dtype=np.int64), binarizer)


class TestTrainConfig(unittest.TestCase):
    """Test configuration validation"""

    def test_defaults(self):
        config = TrainConfig()
        self.assertEqual(config.beta, 0.5)
        self.assertEqual(config.alpha, 1.0)
        self.assertEqual(config.max_epochs, 30)
        self.assertEqual(config.patience, 5)

    def test_invalid_values_rejected(self):
        for overrides in ({'alpha': 0}, {'beta': -0.1}, {'max_epochs': 0}, {'dim': 101}, {'levels': 1}):
            with self.assertRaises(ConfigError, msg=str(overrides)):
                TrainConfig(**overrides)

    def test_unknown_mode_rejected(self):
        with self.assertRaises(ConfigError):
            TrainConfig(binarizer='random')

    def test_large_beta_warns(self):
        with self.assertLogs('classifier', level='WARNING'):
            config = TrainConfig(beta=1.0)
        self.assertTrue(config.beta_warning)

    def test_dict_round_trip(self):
        config = TrainConfig(dim=2048, binarizer='deterministic', feedback='cosine')
        self.assertEqual(TrainConfig.from_dict(config.to_dict()), config)


class TestInitialTrain(unittest.TestCase):
    """Test one-shot bundling"""

    def test_identical_points_double(self):
        h = random_encoded(1, 64, 1)
        model = initial_train(np.vstack([h, h]), [0, 0], 1)
        np.testing.assert_array_equal(model.rows[0], 2 * h[0])

    def test_one_point_per_class(self):
        h = random_encoded(3, 64, 2)
        model = initial_train(h, [0, 1, 2], 3)
        np.testing.assert_array_equal(model.rows, h)
        np.testing.assert_array_equal(model.counts, [1, 1, 1])

    def test_accepts_int_hypervectors(self):
        h = random_encoded(2, 64, 3)
        model = initial_train([IntHV(64, h[0]), IntHV(64, h[1])], [1, 0], 2)
        np.testing.assert_array_equal(model.rows[1], h[0])

    def test_empty_class_stays_zero_and_is_flagged(self):
        h = random_encoded(2, 64, 4)
        with self.assertLogs('classifier', level='WARNING'):
            model = initial_train(h, [0, 0], 2, Binarizer.STOCHASTIC, 0.5, RngStream(0, StreamLabel.FLIP_NOISE))
        self.assertEqual(model.empty_classes.tolist(), [1])
        self.assertEqual(model.fallback_rows.tolist(), [1])
        self.assertFalse(model.rows[1].any())

    def test_errors(self):
        with self.assertRaises(ValueError):
            initial_train(np.empty((0, 64), dtype=np.int32), [], 2)
        with self.assertRaises(ValueError):
            initial_train(random_encoded(1, 64, 5), [2], 2)

    def test_row_sigma_tracks_bundle_size(self):
        h = random_encoded(400, 2000, 6)
        model = initial_train(h, np.zeros(400, dtype=int), 1)
        self.assertLess(abs(model.sigmas[0] - 20.0) / 20.0, 0.25)


class TestPrediction(unittest.TestCase):
    """Test the Hamming and cosine inference paths"""

    def setUp(self):
        self.rows = random_encoded(26, 10000, 7) * 3
        self.model = model_from_rows(self.rows)

    def test_binarized_row_predicts_its_class(self):
        query = IntHV(10000, self.model.binarized(4).to_bipolar())
        label, scores = predict_binary(self.model, query)
        self.assertEqual(label, 4)
        self.assertEqual(scores[4], 1.0)

    def test_complement_scores_minus_one(self):
        model = model_from_rows(self.rows[:2])
        query = IntHV(10000, model.binarized(0).complement().to_bipolar())
        label, scores = predict_binary(model, query)
        self.assertNotEqual(label, 0)
        self.assertEqual(scores[0], -1.0)

    def test_scores_consistent_with_distances(self):
        queries = random_encoded(20, 10000, 8)
        labels, scores = predict_binary_batch(self.model, queries)
        self.assertTrue(np.all((scores >= -1) & (scores <= 1)))
        np.testing.assert_array_equal(labels, np.argmax(scores, axis=1))

    def test_ties_pick_lowest_index(self):
        model = model_from_rows(np.vstack([self.rows[0], self.rows[0]]))
        label, _ = predict_binary(model, IntHV(10000, self.rows[0]))
        self.assertEqual(label, 0)

    def test_cosine_prediction(self):
        label, scores = predict_cosine(self.model, IntHV(10000, self.rows[9]))
        self.assertEqual(label, 9)
        self.assertAlmostEqual(scores[9], 1.0)
        model = model_from_rows(self.rows[:2])
        label, _ = predict_cosine(model, IntHV(10000, -self.rows[0]))
        self.assertNotEqual(label, 0)

    def test_zero_row_names_the_class(self):
        rows = self.rows[:3].copy()
        rows[2] = 0
        model = model_from_rows(rows)
        with self.assertRaises(UndefinedSimilarityError) as context:
            predict_cosine_batch(model, self.rows[:1])
        self.assertIn('Class 2', str(context.exception))

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionError):
            predict_binary(self.model, IntHV(100, np.ones(100)))

    def test_paths_mostly_agree_on_random_queries(self):
        queries = random_encoded(500, 10000, 9)
        binary, _ = predict_binary_batch(self.model, queries)
        cosine, _ = predict_cosine_batch(self.model, queries)
        # rows are scaled +-1 vectors, so only rounding on near ties can separate the paths
        self.assertGreater(np.mean(binary == cosine), 0.95)


class TestBinarizeModel(unittest.TestCase):
    """Test sign and stochastic model binarization"""

    def test_positive_row_binarizes_to_ones(self):
        model = model_from_rows([[5, 6, 7, 8, 9, 10]])
        rng = RngStream(1, StreamLabel.FLIP_NOISE)
        for mode in Binarizer:
            snapshot = binarize_rows(model.rows, np.array([4.0]), mode, 1.0, rng)
            np.testing.assert_array_equal(snapshot, pack_bits(np.ones((1, 6), dtype=bool)))

    def test_deterministic_mode_is_pure(self):
        model = model_from_rows(random_encoded(3, 300, 2) * 5 - 1)
        first = binarize_model(model, Binarizer.DETERMINISTIC, 0.5)
        second = binarize_model(model, Binarizer.DETERMINISTIC, 0.5)
        np.testing.assert_array_equal(first, second)
        np.testing.assert_array_equal(first, sign_binarize_matrix(model.rows))

    def test_acceptance_probability_inside_cutoff(self):
        """Elements at x in [0.4b, 0.6b] become +1 with probability near 3/4"""
        rng = np.random.default_rng(3)
        row = np.rint(rng.normal(0, 1000, size=1_000_000)).astype(np.int32)
        model = model_from_rows(row[None, :])
        b = 0.5 * model.sigmas[0]
        snapshot = binarize_model(model, Binarizer.STOCHASTIC, 0.5, RngStream(4, StreamLabel.FLIP_NOISE))
        bits = np.unpackbits(snapshot.view(np.uint8), bitorder='little')[: row.shape[0]].astype(bool)
        window = (row >= 0.4 * b) & (row <= 0.6 * b)
        self.assertLess(abs(bits[window].mean() - 0.75), 0.02)

    def test_tiny_beta_matches_sign(self):
        model = model_from_rows(random_encoded(2, 500, 5) * 7)
        snapshot = binarize_model(model, Binarizer.STOCHASTIC, 1e-12, RngStream(6, StreamLabel.FLIP_NOISE))
        np.testing.assert_array_equal(snapshot, sign_binarize_matrix(model.rows))

    def test_stochastic_needs_stream(self):
        model = model_from_rows(random_encoded(2, 64, 5))
        with self.assertRaises(ValueError):
            binarize_model(model, Binarizer.STOCHASTIC, 0.5)


class TestRetrainEpoch(unittest.TestCase):
    """Test the retraining update rule"""

    def setUp(self):
        self.config = TrainConfig(dim=64, binarizer='deterministic', shuffle=False)
        self.streams = TrainingStreams.from_seed(0)

    def test_no_errors_leaves_rows_unchanged(self):
        h = random_encoded(3, 64, 10)
        model = initial_train(h, [0, 1, 2], 3)
        before = model.rows.copy()
        stats = retrain_epoch(model, h, [0, 1, 2], self.config, self.streams)
        self.assertEqual(stats.train_errors, 0)
        self.assertEqual(stats.train_accuracy, 1.0)
        np.testing.assert_array_equal(model.rows, before)

    def test_single_misclassified_point(self):
        h = random_encoded(2, 64, 11)
        point, other = h[0], h[1]
        model = model_from_rows(np.vstack([-point, point, other]))
        stats = retrain_epoch(model, point[None, :], [0], self.config, self.streams)
        self.assertEqual(stats.train_errors, 1)
        np.testing.assert_array_equal(model.rows[0], np.zeros(64))
        np.testing.assert_array_equal(model.rows[1], np.zeros(64))
        np.testing.assert_array_equal(model.rows[2], other)
        self.assertEqual(model.epoch, 1)

    def test_update_is_linear_in_alpha(self):
        h = random_encoded(1, 64, 12)
        rows = np.vstack([-h[0], h[0]])
        predicted = np.array([1])
        labels = np.array([0])
        once = model_from_rows(rows)
        _apply_frozen_updates(once, h, labels, predicted, 2.0, 16)
        twice = model_from_rows(rows)
        _apply_frozen_updates(twice, h, labels, predicted, 1.0, 16)
        _apply_frozen_updates(twice, h, labels, predicted, 1.0, 16)
        np.testing.assert_array_equal(once.rows, twice.rows)

    def test_updates_cancel_across_rows(self):
        h = random_encoded(40, 256, 13)
        labels = np.arange(40) % 4
        model = model_from_rows(random_encoded(4, 256, 14) * 4)
        before = model.rows.astype(np.int64).sum(axis=0)
        stats = retrain_epoch(model, h, labels, self.config, self.streams)
        self.assertGreater(stats.train_errors, 0)
        np.testing.assert_array_equal(model.rows.astype(np.int64).sum(axis=0), before)

    def test_stochastic_snapshot_refreshes_without_errors(self):
        """Test zero errors leave the rows untouched while the stochastic snapshot is redrawn"""
        config = TrainConfig(dim=1024, binarizer='stochastic', beta=0.9, shuffle=False)
        # each row sums three random vectors, so half the elements are +-1 and fall inside the cutoff
        h = random_encoded(12, 1024, 15).reshape(4, 3, 1024).sum(axis=1).astype(np.int32)
        labels = [0, 1, 2, 3]
        model = initial_train(h, labels, 4)
        rows_before = model.rows.copy()
        one_shot_snapshot = model.snapshot.copy()
        stats = retrain_epoch(model, h, labels, config, TrainingStreams.from_seed(1))
        self.assertEqual(stats.train_errors, 0)
        np.testing.assert_array_equal(model.rows, rows_before)
        self.assertEqual(model.snapshot.shape, (4, 16))
        self.assertFalse(np.array_equal(model.snapshot, one_shot_snapshot))
        self.assertTrue(0.0 <= stats.val_accuracy <= 1.0)

    def test_sequential_updates(self):
        config = TrainConfig(dim=64, binarizer='deterministic', shuffle=False, freeze_snapshot=False)
        h = random_encoded(2, 64, 16)
        model = model_from_rows(np.vstack([-h[0], h[0], h[1]]))
        stats = retrain_epoch(model, h[:1], [0], config, self.streams)
        self.assertEqual(stats.train_errors, 1)
        np.testing.assert_array_equal(model.rows[0], np.zeros(64))

    def test_sequential_updates_reject_cosine_feedback(self):
        config = TrainConfig(dim=64, feedback='cosine', freeze_snapshot=False)
        model = model_from_rows(random_encoded(2, 64, 17))
        with self.assertRaises(ConfigError):
            retrain_epoch(model, random_encoded(2, 64, 18), [0, 1], config, self.streams)


class TestTrain(unittest.TestCase):
    """Test the full training loop with early stopping"""

    def setUp(self):
        self.train_set = cluster_dataset(1)
        self.validation_set = cluster_dataset(2, per_class=10)

    def _fit(self, seed, **overrides):
        overrides.setdefault('max_epochs', 10)
        config = TrainConfig(dim=1024, levels=16, seed=seed, **overrides)
        codebook = Codebook.build(self.train_set.points, config.dim, config.levels, seed)
        return train(config, self.train_set, self.validation_set, codebook), codebook

    def test_separable_clusters_reach_full_accuracy(self):
        for seed in range(5):
            result, codebook = self._fit(seed)
            encoded = encode_batch(self.train_set.points, codebook)
            predicted, _ = predict_binary_batch(result.model, encoded)
            self.assertEqual(accuracy(predicted, self.train_set.labels), 1.0, f"seed={seed}")

    def test_single_epoch(self):
        (model, history), _ = self._fit(0, max_epochs=1)
        self.assertEqual(len(history), 1)
        self.assertEqual(history[0].epoch, 1)

    def test_runs_are_deterministic(self):
        first, _ = self._fit(3)
        second, _ = self._fit(3)
        strip = [{k: v for k, v in s.to_record().items() if k != 'wall_time_s'} for s in first.history]
        self.assertEqual(strip, [{k: v for k, v in s.to_record().items() if k != 'wall_time_s'} for s in second.history])
        np.testing.assert_array_equal(first.model.rows, second.model.rows)
        np.testing.assert_array_equal(first.model.snapshot, second.model.snapshot)

    def test_best_snapshot_is_returned(self):
        result, _ = self._fit(4, patience=2)
        info = result.model.info
        self.assertEqual(result.model.epoch, info['best_epoch'])
        tracked = [info['one_shot_val_accuracy']] + [s.val_accuracy for s in result.history]
        self.assertEqual(info['best_val_accuracy'], max(tracked))
        self.assertEqual(result.final_model.epoch, info['final_epoch'])

    def test_early_stopping_respects_patience(self):
        result, _ = self._fit(5, patience=1, max_epochs=30)
        self.assertLessEqual(len(result.history), 30)
        best_epoch = result.model.info['best_epoch']
        self.assertEqual(len(result.history), best_epoch + 1)

    def test_cosine_feedback_tracks_cosine_accuracy(self):
        result, _ = self._fit(6, feedback=Feedback.COSINE, binarizer=Binarizer.DETERMINISTIC)
        info = result.model.info
        tracked = [info['one_shot_val_accuracy_cosine']] + [s.val_accuracy_cosine for s in result.history]
        self.assertEqual(info['best_val_accuracy'], max(tracked))

    def test_fit_encoded_calls_back_each_epoch(self):
        config = TrainConfig(dim=256, levels=8, max_epochs=3, patience=3, seed=1)
        h = random_encoded(12, 256, 19)
        labels = np.arange(12) % 3
        seen = []
        fit_encoded(config, h, labels, h, labels, 3, on_epoch=seen.append)
        self.assertEqual([s.epoch for s in seen], [1, 2, 3])


if __name__ == '__main__':
    unittest.main()
