"""
Run manifests and the line-delimited metrics stream.

Every record is one JSON object per line with a `record` type and the
digest of the manifest that produced it. The digest covers only what
determines the results (config, seeds, dataset digests, code version);
timestamps and timings are listed in VOLATILE_FIELDS and excluded.
"""
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

logger = logging.getLogger(__name__)

CODE_VERSION = '1.0.0'

VOLATILE_FIELDS = frozenset({
    'created_at',
    'wall_time_s',
    'elapsed_s',
    'latency_binary_us',
    'latency_cosine_us',
    'throughput_ratio',
})


def canonical_json(value):
    return json.dumps(value, sort_keys=True, separators=(',', ':'), default=_to_builtin)


def _to_builtin(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, 'value'):     # enums
        return value.value
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    dataset_digests: dict = field(default_factory=dict)
    code_version: str = CODE_VERSION
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def reproducible_fields(self):
        values = asdict(self)
        return {k: v for k, v in values.items() if k not in VOLATILE_FIELDS}

    @property
    def digest(self):
        """Hex SHA-256 over the reproducible fields"""
        return hashlib.sha256(canonical_json(self.reproducible_fields()).encode('utf-8')).hexdigest()

    def to_fields(self):
        return asdict(self)


def strip_volatile(record):
    """Copy of a record (nested dicts and lists too) without volatile fields"""
    if isinstance(record, dict):
        return {k: strip_volatile(v) for k, v in record.items() if k not in VOLATILE_FIELDS}
    if isinstance(record, list):
        return [strip_volatile(v) for v in record]
    return record


class MetricsWriter:
    """Single writer of ordered JSONL records, to a file path or stdout"""

    def __init__(self, manifest, path=None):
        self.manifest = manifest
        self.path = path
        self.count = 0
        self._owned = path not in (None, '-')
        self._stream = open(path, 'w', encoding='utf-8') if self._owned else sys.stdout

    def write(self, record_type, **fields):
        record = {'record': record_type, 'manifest_digest': self.manifest.digest}
        record.update(fields)
        self._stream.write(canonical_json(record) + '\n')
        self._stream.flush()
        self.count += 1
        return record

    def write_manifest(self):
        """The first record of every stream"""
        return self.write('manifest', **self.manifest.to_fields())

    def close(self):
        if self._owned and not self._stream.closed:
            self._stream.close()
            logger.info(f"Wrote {self.count} metrics records to {self.path}")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


def read_records(path):
    with open(path, encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]
