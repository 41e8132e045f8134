"""
Binary model file (magic "HDQB").

Layout, every multi-byte field little-endian:

    header     magic 4s | version u16 | flags u16 | dim u32 | classes u32 |
               levels u32 | features u32 | seed u64 | binarizer u8 | 3 pad |
               epoch u32 | alpha f64 | beta f64 | manifest digest 32s |
               metadata length u32
    metadata   UTF-8 JSON (label names, train config, training info)
    scaler     mins f64[n] | maxs f64[n]
    rows       i32[m * D]
    snapshot   u64[m * ceil(D/64)]
    sigmas     f64[m]
    counts     i64[m]
    trailer    SHA-256 of everything above (32 bytes)

The codebook is stored as parameters only and regenerated on load.
"""
import hashlib
import json
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from classifier import Binarizer, Model
from encoder import Codebook, FeatureScaler
from errors import DigestMismatchError, ModelFileError, TruncatedFileError, VersionError
from hypervector import words_for

logger = logging.getLogger(__name__)

MAGIC = b'HDQB'
FORMAT_VERSION = 1
HEADER = struct.Struct('<4sHHIIIIQB3xIdd32sI')
DIGEST_SIZE = 32

_BINARIZER_CODES = {Binarizer.DETERMINISTIC: 0, Binarizer.STOCHASTIC: 1}
_BINARIZER_NAMES = {code: mode for mode, code in _BINARIZER_CODES.items()}


@dataclass(eq=False)
class ModelFile:
    model: Model
    levels: int
    seed: int
    scaler: FeatureScaler
    label_names: list
    config: dict = field(default_factory=dict)
    manifest_digest: str = '0' * 64
    alpha: float = 1.0
    beta: float = 0.5

    @property
    def dim(self):
        return self.model.dim

    @property
    def n_features(self):
        return self.scaler.n_features

    def codebook(self):
        return Codebook.from_parameters(self.dim, self.levels, self.seed, self.scaler)


def _metadata(model_file):
    payload = {
        'label_names': list(model_file.label_names),
        'config': model_file.config,
        'info': model_file.model.info,
    }
    return json.dumps(payload, sort_keys=True, separators=(',', ':')).encode('utf-8')


def to_bytes(model_file):
    model = model_file.model
    metadata = _metadata(model_file)
    header = HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        0,
        model.dim,
        model.n_classes,
        model_file.levels,
        model_file.n_features,
        int(model_file.seed) & 0xFFFFFFFFFFFFFFFF,
        _BINARIZER_CODES[model.binarizer],
        model.epoch,
        float(model_file.alpha),
        float(model_file.beta),
        bytes.fromhex(model_file.manifest_digest),
        len(metadata),
    )
    body = b''.join([
        header,
        metadata,
        model_file.scaler.mins.astype('<f8').tobytes(),
        model_file.scaler.maxs.astype('<f8').tobytes(),
        model.rows.astype('<i4').tobytes(),
        model.snapshot.astype('<u8').tobytes(),
        model.sigmas.astype('<f8').tobytes(),
        model.counts.astype('<i8').tobytes(),
    ])
    return body + hashlib.sha256(body).digest()


def from_bytes(raw):
    if len(raw) < HEADER.size + DIGEST_SIZE:
        raise TruncatedFileError(f"Model file is {len(raw)} bytes, shorter than its header")
    (magic, version, _flags, dim, classes, levels, features, seed, binarizer_code,
     epoch, alpha, beta, manifest, metadata_len) = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ModelFileError(f"Not a model file (magic {magic!r})")
    if version > FORMAT_VERSION:
        raise VersionError(f"Model file format version {version} is newer than supported version {FORMAT_VERSION}")
    if version < 1:
        raise VersionError(f"Unknown model file format version {version}")

    n_words = words_for(dim)
    sections = [
        ('metadata', metadata_len, None),
        ('mins', 8 * features, '<f8'),
        ('maxs', 8 * features, '<f8'),
        ('rows', 4 * classes * dim, '<i4'),
        ('snapshot', 8 * classes * n_words, '<u8'),
        ('sigmas', 8 * classes, '<f8'),
        ('counts', 8 * classes, '<i8'),
    ]
    expected = HEADER.size + sum(size for _, size, _ in sections) + DIGEST_SIZE
    if len(raw) < expected:
        raise TruncatedFileError(f"Model file is {len(raw)} bytes, expected {expected}")
    if len(raw) > expected:
        raise ModelFileError(f"Model file has {len(raw) - expected} trailing bytes")
    body, digest = raw[:-DIGEST_SIZE], raw[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise DigestMismatchError("Model file digest mismatch; the file is corrupted")

    values = {}
    offset = HEADER.size
    for name, size, dtype in sections:
        chunk = raw[offset:offset + size]
        values[name] = chunk if dtype is None else np.frombuffer(chunk, dtype=dtype)
        offset += size
    try:
        metadata = json.loads(values['metadata'].decode('utf-8'))
    except ValueError as e:
        raise ModelFileError(f"Unreadable model metadata: {e}") from e
    if binarizer_code not in _BINARIZER_NAMES:
        raise ModelFileError(f"Unknown binarizer code {binarizer_code}")

    model = Model(
        values['rows'].astype(np.int32).reshape(classes, dim),
        values['snapshot'].astype(np.uint64).reshape(classes, n_words),
        values['sigmas'].astype(np.float64),
        values['counts'].astype(np.int64),
        _BINARIZER_NAMES[binarizer_code],
        epoch,
        metadata.get('info', {}),
    )
    return ModelFile(
        model=model,
        levels=levels,
        seed=seed,
        scaler=FeatureScaler(values['mins'].astype(np.float64), values['maxs'].astype(np.float64)),
        label_names=metadata.get('label_names', []),
        config=metadata.get('config', {}),
        manifest_digest=manifest.hex(),
        alpha=alpha,
        beta=beta,
    )


def store_model(path, model_file):
    """Write atomically: a temporary sibling is renamed over `path` once complete"""
    raw = to_bytes(model_file)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, temp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix='.hdqb')
    try:
        with os.fdopen(handle, 'wb') as f:
            f.write(raw)
        os.replace(temp_path, path)
    except Exception:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    logger.info(f"Stored model ({len(raw)} bytes) at {path}")
    return len(raw)


def load_model(path):
    with open(path, 'rb') as f:
        raw = f.read()
    return from_bytes(raw)
