"""
Dataset ingestion for the benchmarks: delimited text files (ISOLET,
UCIHAR, FACE, EXTRA), IDX files (MNIST) and deterministic stratified
validation splits.
"""
import csv
import gzip
import hashlib
import logging
import os
import struct
from dataclasses import dataclass, field
from io import StringIO

import numpy as np

from config import Config
from errors import DatasetError
from hypervector import RngStream, StreamLabel

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MNIST_CLASSES = 10


@dataclass(eq=False)
class Dataset:
    name: str
    points: np.ndarray
    labels: np.ndarray
    label_names: list
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        points = np.asarray(self.points)
        if not np.issubdtype(points.dtype, np.floating):
            points = points.astype(np.float64)
        if points.ndim != 2:
            raise DatasetError(f"Dataset '{self.name}' points must be a 2-D matrix, got shape {points.shape}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != points.shape[0]:
            raise DatasetError(f"Dataset '{self.name}' has {points.shape[0]} points but {labels.shape[0]} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.label_names)):
            raise DatasetError(f"Dataset '{self.name}' has labels outside [0, {len(self.label_names)})")
        self.points = points
        self.labels = labels
        self.label_names = [str(name) for name in self.label_names]

    @property
    def n_features(self):
        return self.points.shape[1]

    @property
    def n_classes(self):
        return len(self.label_names)

    @property
    def digest(self):
        return self.provenance.get('digest')

    def __len__(self):
        return self.points.shape[0]

    def subset(self, indices, name=None):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            name or self.name,
            self.points[indices],
            self.labels[indices],
            list(self.label_names),
            dict(self.provenance),
        )

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)


def file_digest(*paths):
    """SHA-256 over the raw bytes of one or more files, in order"""
    digest = hashlib.sha256()
    for path in paths:
        with open(path, 'rb') as f:
            for block in iter(lambda: f.read(1 << 20), b''):
                digest.update(block)
    return digest.hexdigest()


def _read_bytes(path):
    with open(path, 'rb') as f:
        raw = f.read()
    if str(path).endswith('.gz'):
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise DatasetError(f"Corrupt gzip stream: {e}", path) from e
    return raw


def _label_sort_key(label):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def load_csv(path, label_column='last', delimiter=',', header=False, label_names=None, name=None):
    """
    Parse a delimited text file (optionally .gz) into a Dataset.

    `label_column` is 'first', 'last' or a column index. `delimiter=None`
    splits on runs of whitespace. Passing `label_names` (the training
    vocabulary) makes unknown labels an error; otherwise the vocabulary is
    built from the file, ordered numerically when every label is a number.
    """
    name = name or os.path.basename(str(path))
    text = _read_bytes(path).decode('utf-8')
    if delimiter is None:
        rows = ((number, line.split()) for number, line in enumerate(text.splitlines(), start=1))
    else:
        reader = csv.reader(StringIO(text), delimiter=delimiter)
        rows = ((reader.line_num, row) for row in reader)

    features = []
    raw_labels = []
    line_numbers = []
    width = None
    for number, row in rows:
        if header and number == 1:
            continue
        row = [cell.strip() for cell in row]
        if not any(row):
            continue
        if width is None:
            width = len(row)
            if width < 2:
                raise DatasetError("Rows need a label and at least one feature", path, number)
            position = {'first': 0, 'last': width - 1}.get(label_column, label_column)
            if not isinstance(position, int) or not -width <= position < width:
                raise DatasetError(f"Label column {label_column!r} outside {width} columns", path, number)
            position %= width
        elif len(row) != width:
            raise DatasetError(f"Ragged row: expected {width} columns, found {len(row)}", path, number)
        label = row[position]
        values = row[:position] + row[position + 1:]
        try:
            features.append([float(value) for value in values])
        except ValueError as e:
            raise DatasetError(f"Non-numeric feature: {e}", path, number) from e
        raw_labels.append(label)
        line_numbers.append(number)

    if not features:
        raise DatasetError("File contains no data rows", path)

    if label_names is None:
        label_names = sorted(set(raw_labels), key=_label_sort_key)
    mapping = {label: index for index, label in enumerate(label_names)}
    labels = []
    for label, number in zip(raw_labels, line_numbers):
        if label not in mapping:
            raise DatasetError(f"Unknown label '{label}'", path, number)
        labels.append(mapping[label])

    dataset = Dataset(
        name,
        np.array(features, dtype=np.float64),
        np.array(labels, dtype=np.int64),
        list(label_names),
        {'path': str(path), 'digest': file_digest(path)},
    )
    logger.info(
        f"Loaded {len(dataset)} points from {path} "
        f"(n={dataset.n_features}, m={dataset.n_classes})"
    )
    return dataset


def _unpack_header(raw, fmt, path):
    size = struct.calcsize(fmt)
    if len(raw) < size:
        raise DatasetError(f"Truncated IDX header ({len(raw)} bytes)", path)
    return struct.unpack(fmt, raw[:size]), size


def load_idx(images_path, labels_path, name='mnist'):
    """
    Read an IDX image/label file pair (big-endian, optionally gzip) into a
    Dataset with pixels flattened row-major as features in [0, 255].
    """
    images_raw = _read_bytes(images_path)
    labels_raw = _read_bytes(labels_path)

    (magic, count, n_rows, n_cols), offset = _unpack_header(images_raw, '>IIII', images_path)
    if magic != IDX_IMAGES_MAGIC:
        raise DatasetError(f"Magic number mismatch in image file ({magic:#010x})", images_path)
    n_pixels = n_rows * n_cols
    expected = offset + count * n_pixels
    if len(images_raw) != expected:
        raise DatasetError(f"Image file holds {len(images_raw)} bytes, header implies {expected}", images_path)

    (label_magic, label_count), label_offset = _unpack_header(labels_raw, '>II', labels_path)
    if label_magic != IDX_LABELS_MAGIC:
        raise DatasetError(f"Magic number mismatch in label file ({label_magic:#010x})", labels_path)
    if len(labels_raw) != label_offset + label_count:
        raise DatasetError(
            f"Label file holds {len(labels_raw) - label_offset} labels, header says {label_count}", labels_path
        )
    if label_count != count:
        raise DatasetError(f"{count} images but {label_count} labels", labels_path)

    pixels = np.frombuffer(images_raw, dtype=np.uint8, offset=offset).reshape(count, n_pixels)
    labels = np.frombuffer(labels_raw, dtype=np.uint8, offset=label_offset).astype(np.int64)
    if labels.size and labels.max() >= MNIST_CLASSES:
        bad = int(np.flatnonzero(labels >= MNIST_CLASSES)[0])
        raise DatasetError(f"Label {labels[bad]} at item {bad} outside [0, {MNIST_CLASSES})", labels_path)

    dataset = Dataset(
        name,
        pixels.astype(np.float32),
        labels,
        [str(digit) for digit in range(MNIST_CLASSES)],
        {'path': f"{images_path};{labels_path}", 'digest': file_digest(images_path, labels_path)},
    )
    logger.info(f"Loaded {count} images ({n_rows}x{n_cols}) from {images_path}")
    return dataset


def split_validation(dataset, fraction, seed):
    """
    Deterministic stratified split into (train, validation). Each class
    sends round(fraction * count) points to validation but always keeps at
    least one in train; single-point classes stay in train with a warning.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"Validation fraction must be in (0, 1), got {fraction}")
    rng = RngStream(seed, StreamLabel.SPLIT)
    train_parts = []
    val_parts = []
    for k in range(dataset.n_classes):
        members = np.flatnonzero(dataset.labels == k)
        if members.size == 0:
            continue
        members = rng.generator.permutation(members)
        if members.size == 1:
            logger.warning(f"Class '{dataset.label_names[k]}' has a single point; keeping it in train")
            train_parts.append(members)
            continue
        n_val = min(int(round(fraction * members.size)), members.size - 1)
        val_parts.append(members[:n_val])
        train_parts.append(members[n_val:])
    train_index = np.sort(np.concatenate(train_parts)) if train_parts else np.empty(0, dtype=np.int64)
    val_index = np.sort(np.concatenate(val_parts)) if val_parts else np.empty(0, dtype=np.int64)
    return (
        dataset.subset(train_index, f"{dataset.name}-train"),
        dataset.subset(val_index, f"{dataset.name}-validation"),
    )


@dataclass(frozen=True)
class BenchmarkLayout:
    kind: str                 # 'csv' or 'idx'
    train: tuple
    test: tuple
    label_column: object = 'last'
    delimiter: object = ','
    header: bool = False


BENCHMARKS = {
    'isolet': BenchmarkLayout('csv', ('isolet/isolet1+2+3+4.data',), ('isolet/isolet5.data',)),
    'ucihar': BenchmarkLayout('csv', ('ucihar/train.csv',), ('ucihar/test.csv',)),
    'mnist': BenchmarkLayout(
        'idx',
        ('mnist/train-images-idx3-ubyte.gz', 'mnist/train-labels-idx1-ubyte.gz'),
        ('mnist/t10k-images-idx3-ubyte.gz', 'mnist/t10k-labels-idx1-ubyte.gz'),
    ),
    # optional, larger sets share the CSV path
    'face': BenchmarkLayout('csv', ('face/train.csv',), ('face/test.csv',)),
    'extra': BenchmarkLayout('csv', ('extra/train.csv',), ('extra/test.csv',)),
}


def _resolve(data_dir, relative):
    path = os.path.join(data_dir, relative)
    if not os.path.exists(path) and path.endswith('.gz') and os.path.exists(path[:-3]):
        return path[:-3]
    return path


def benchmark_paths(name, data_dir=None):
    if name not in BENCHMARKS:
        raise DatasetError(f"Unknown benchmark '{name}'; choose from {sorted(BENCHMARKS)}")
    data_dir = data_dir or Config.DATA_DIR
    layout = BENCHMARKS[name]
    return (
        [_resolve(data_dir, p) for p in layout.train],
        [_resolve(data_dir, p) for p in layout.test],
    )


def benchmark_available(name, data_dir=None):
    train_paths, test_paths = benchmark_paths(name, data_dir)
    return all(os.path.exists(p) for p in train_paths + test_paths)


def load_benchmark(name, data_dir=None):
    """Load a registered benchmark as (train, test); the test set reuses the training label vocabulary"""
    layout = BENCHMARKS.get(name)
    train_paths, test_paths = benchmark_paths(name, data_dir)
    if layout.kind == 'idx':
        train = load_idx(*train_paths, name=f"{name}-train")
        test = load_idx(*test_paths, name=f"{name}-test")
        return train, test
    train = load_csv(
        train_paths[0], layout.label_column, layout.delimiter, layout.header, name=f"{name}-train"
    )
    test = load_csv(
        test_paths[0], layout.label_column, layout.delimiter, layout.header,
        label_names=train.label_names, name=f"{name}-test",
    )
    return train, test
