"""
Unit tests for dataset ingestion and validation splits
Files are written to a temporary directory per test
"""
import gzip
import os
import shutil
import struct
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

from dataset_loader import (
    Dataset,
    benchmark_available,
    benchmark_paths,
    load_benchmark,
    load_csv,
    load_idx,
    split_validation,
)
from errors import DatasetError


class TempDirTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def write(self, name, content, mode='w'):
        path = os.path.join(self.tmp, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, mode) as f:
            f.write(content)
        return path


class TestLoadCsv(TempDirTestCase):
    """Test delimited text parsing"""

    def test_header_and_string_labels(self):
        path = self.write('small.csv', "f1,f2,label\n1.0,2.0,a\n3.0,4.0,b\n")
        dataset = load_csv(path, header=True)
        self.assertEqual(dataset.n_classes, 2)
        self.assertEqual(dataset.label_names, ['a', 'b'])
        self.assertEqual(dataset.labels.tolist(), [0, 1])
        np.testing.assert_array_equal(dataset.points, [[1.0, 2.0], [3.0, 4.0]])

    def test_numeric_labels_sort_numerically(self):
        path = self.write('digits.csv', "0.1,10\n0.2,2\n0.3,1\n")
        dataset = load_csv(path)
        self.assertEqual(dataset.label_names, ['1', '2', '10'])
        self.assertEqual(dataset.labels.tolist(), [2, 1, 0])

    def test_label_first_and_whitespace(self):
        path = self.write('space.txt', "x 1 2 3\ny 4 5 6\n\n")
        dataset = load_csv(path, label_column='first', delimiter=None)
        self.assertEqual(dataset.n_features, 3)
        self.assertEqual(dataset.label_names, ['x', 'y'])

    def test_gzip_input(self):
        path = self.write('data.csv.gz', gzip.compress(b"1,2,a\n3,4,b\n"), mode='wb')
        self.assertEqual(len(load_csv(path)), 2)

    def test_ragged_row_reports_line(self):
        path = self.write('ragged.csv', "1,2,a\n3,b\n")
        with self.assertRaises(DatasetError) as context:
            load_csv(path)
        self.assertEqual(context.exception.line, 2)
        self.assertIn(':2:', str(context.exception))

    def test_non_numeric_feature_reports_line(self):
        path = self.write('bad.csv', "1,2,a\n3,x,b\n")
        with self.assertRaises(DatasetError) as context:
            load_csv(path)
        self.assertEqual(context.exception.line, 2)

    def test_unknown_test_label(self):
        path = self.write('test.csv', "1,2,a\n3,4,c\n")
        with self.assertRaises(DatasetError) as context:
            load_csv(path, label_names=['a', 'b'])
        self.assertIn("Unknown label 'c'", str(context.exception))

    def test_empty_file(self):
        path = self.write('empty.csv', "")
        with self.assertRaises(DatasetError):
            load_csv(path)

    def test_loading_is_idempotent(self):
        path = self.write('same.csv', "1,2,a\n3,4,b\n")
        first, second = load_csv(path), load_csv(path)
        self.assertEqual(first.digest, second.digest)
        np.testing.assert_array_equal(first.points, second.points)


class TestLoadIdx(TempDirTestCase):
    """Test IDX image/label parsing"""

    def write_idx(self, images, labels, image_magic=0x803, label_magic=0x801, label_count=None, gz=False):
        count, rows, cols = images.shape
        image_bytes = struct.pack('>IIII', image_magic, count, rows, cols) + images.astype(np.uint8).tobytes()
        label_bytes = struct.pack('>II', label_magic, label_count if label_count is not None else len(labels))
        label_bytes += np.asarray(labels, dtype=np.uint8).tobytes()
        suffix = '.gz' if gz else ''
        if gz:
            image_bytes, label_bytes = gzip.compress(image_bytes), gzip.compress(label_bytes)
        return (
            self.write(f'images{suffix}', image_bytes, mode='wb'),
            self.write(f'labels{suffix}', label_bytes, mode='wb'),
        )

    def setUp(self):
        super().setUp()
        self.images = np.arange(3 * 2 * 2).reshape(3, 2, 2) * 20

    def test_reads_pixels_row_major(self):
        dataset = load_idx(*self.write_idx(self.images, [7, 0, 9], gz=True))
        self.assertEqual(len(dataset), 3)
        self.assertEqual(dataset.n_features, 4)
        self.assertEqual(dataset.n_classes, 10)
        np.testing.assert_array_equal(dataset.points[1], [80, 100, 120, 140])
        self.assertEqual(dataset.labels.tolist(), [7, 0, 9])

    def test_magic_mismatch(self):
        with self.assertRaises(DatasetError):
            load_idx(*self.write_idx(self.images, [1, 2, 3], image_magic=0x801))

    def test_truncated_images(self):
        images_path, labels_path = self.write_idx(self.images, [1, 2, 3])
        with open(images_path, 'rb') as f:
            raw = f.read()
        self.write('images', raw[:-3], mode='wb')
        with self.assertRaises(DatasetError):
            load_idx(images_path, labels_path)

    def test_label_out_of_range(self):
        with self.assertRaises(DatasetError) as context:
            load_idx(*self.write_idx(self.images, [1, 10, 3]))
        self.assertIn('Label 10', str(context.exception))

    def test_count_mismatch(self):
        with self.assertRaises(DatasetError):
            load_idx(*self.write_idx(self.images, [1, 2]))


class TestSplitValidation(unittest.TestCase):
    """Test stratified validation splits"""

    def make(self, labels):
        labels = np.asarray(labels)
        points = np.arange(len(labels) * 2, dtype=float).reshape(len(labels), 2)
        return Dataset('toy', points, labels, [str(k) for k in range(labels.max() + 1)])

    def test_balanced_split(self):
        dataset = self.make([0] * 50 + [1] * 50)
        train, validation = split_validation(dataset, 0.1, seed=3)
        self.assertEqual(len(train), 90)
        self.assertEqual(len(validation), 10)
        self.assertEqual(train.class_counts().tolist(), [45, 45])
        self.assertEqual(validation.class_counts().tolist(), [5, 5])

    def test_same_seed_same_split(self):
        dataset = self.make([0] * 30 + [1] * 20)
        first = split_validation(dataset, 0.2, seed=8)[1]
        second = split_validation(dataset, 0.2, seed=8)[1]
        np.testing.assert_array_equal(first.points, second.points)

    def test_splits_are_disjoint(self):
        dataset = self.make([0] * 30 + [1] * 20)
        train, validation = split_validation(dataset, 0.3, seed=1)
        train_rows = {tuple(p) for p in train.points}
        self.assertFalse(train_rows & {tuple(p) for p in validation.points})
        self.assertEqual(len(train) + len(validation), 50)

    def test_single_point_class_stays_in_train(self):
        dataset = self.make([0, 0, 1])
        with self.assertLogs('dataset_loader', level='WARNING'):
            train, validation = split_validation(dataset, 0.5, seed=0)
        self.assertEqual(len(train), 2)
        self.assertEqual(len(validation), 1)

    def test_fraction_bounds(self):
        with self.assertRaises(ValueError):
            split_validation(self.make([0, 1]), 1.0, seed=0)


class TestBenchmarks(TempDirTestCase):
    """Test the benchmark registry layout"""

    def test_missing_files(self):
        self.assertFalse(benchmark_available('ucihar', self.tmp))

    def test_load_csv_benchmark(self):
        self.write('ucihar/train.csv', "0.1,0.2,1\n0.3,0.4,2\n")
        self.write('ucihar/test.csv', "0.5,0.6,2\n")
        self.assertTrue(benchmark_available('ucihar', self.tmp))
        train, test = load_benchmark('ucihar', self.tmp)
        self.assertEqual(train.label_names, test.label_names)
        self.assertEqual(test.labels.tolist(), [1])

    @patch('dataset_loader.Config')
    def test_data_dir_defaults_to_config(self, mock_config):
        """Test the registry resolves paths under Config.DATA_DIR"""
        mock_config.DATA_DIR = self.tmp
        self.write('ucihar/train.csv', "0.1,0.2,1\n")
        self.write('ucihar/test.csv', "0.5,0.6,1\n")
        train_paths, _ = benchmark_paths('ucihar')
        self.assertEqual(train_paths, [os.path.join(self.tmp, 'ucihar/train.csv')])
        self.assertTrue(benchmark_available('ucihar'))

    def test_gz_falls_back_to_uncompressed(self):
        self.write('mnist/train-images-idx3-ubyte', b'', mode='wb')
        train_paths, _ = benchmark_paths('mnist', self.tmp)
        self.assertEqual(train_paths[0], os.path.join(self.tmp, 'mnist/train-images-idx3-ubyte'))
        self.assertTrue(train_paths[1].endswith('.gz'))

    def test_unknown_benchmark(self):
        with self.assertRaises(DatasetError):
            load_benchmark('cifar', self.tmp)


if __name__ == '__main__':
    unittest.main()
