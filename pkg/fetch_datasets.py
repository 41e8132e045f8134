#!/usr/bin/env python3
"""
Download and lay out benchmark files under HD_DATA_DIR.

MNIST downloads from HD_MNIST_URL. ISOLET files download from
HD_ISOLET_URL when it is set (it must point at a directory serving the
uncompressed isolet1+2+3+4.data and isolet5.data). UCIHAR is converted from
an extracted copy of the original archive with --ucihar-source.
"""
import argparse
import logging
import os
import sys

import pandas as pd
import requests

from config import Config
from dataset_loader import BENCHMARKS

logger = logging.getLogger(__name__)

MNIST_URL = os.getenv('HD_MNIST_URL', 'http://yann.lecun.com/exdb/mnist/')
ISOLET_URL = os.getenv('HD_ISOLET_URL', '')
CHUNK_SIZE = 1 << 16
TIMEOUT = 60
FETCHABLE = ('mnist', 'isolet', 'ucihar')


def download(url, dest, session=None):
    """Stream `url` into `dest`; the file only appears once the transfer completed"""
    session = session or requests.Session()
    os.makedirs(os.path.dirname(dest) or '.', exist_ok=True)
    partial = f"{dest}.part"
    logger.info(f"Downloading: {url}")
    try:
        with session.get(url, stream=True, timeout=TIMEOUT) as response:
            response.raise_for_status()
            size = 0
            with open(partial, 'wb') as f:
                for chunk in response.iter_content(chunk_size=CHUNK_SIZE):
                    f.write(chunk)
                    size += len(chunk)
        os.replace(partial, dest)
    except Exception:
        if os.path.exists(partial):
            os.remove(partial)
        raise
    logger.info(f"✓ Saved {size} bytes to {dest}")
    return size


def _join(base, name):
    return base.rstrip('/') + '/' + name


def fetch_mnist(data_dir, session=None, base_url=MNIST_URL):
    layout = BENCHMARKS['mnist']
    fetched = 0
    for relative in layout.train + layout.test:
        dest = os.path.join(data_dir, relative)
        if os.path.exists(dest):
            logger.info(f"Already present: {dest}")
            continue
        download(_join(base_url, os.path.basename(relative)), dest, session)
        fetched += 1
    return fetched


def fetch_isolet(data_dir, session=None, base_url=ISOLET_URL):
    if not base_url:
        raise ValueError("HD_ISOLET_URL not set; place the ISOLET files under the data directory instead")
    layout = BENCHMARKS['isolet']
    fetched = 0
    for relative in layout.train + layout.test:
        dest = os.path.join(data_dir, relative)
        if not os.path.exists(dest):
            download(_join(base_url, os.path.basename(relative)), dest, session)
            fetched += 1
    return fetched


def convert_ucihar(source_dir, data_dir):
    """
    Turn the whitespace-separated X_<split>.txt / y_<split>.txt pairs of an
    extracted UCIHAR archive into label-last CSVs.
    """
    layout = BENCHMARKS['ucihar']
    written = 0
    for split, relative in (('train', layout.train[0]), ('test', layout.test[0])):
        features_path = os.path.join(source_dir, split, f"X_{split}.txt")
        labels_path = os.path.join(source_dir, split, f"y_{split}.txt")
        for path in (features_path, labels_path):
            if not os.path.exists(path):
                raise FileNotFoundError(f"UCIHAR file missing: {path}")
        features = pd.read_csv(features_path, sep=r'\s+', header=None)
        labels = pd.read_csv(labels_path, sep=r'\s+', header=None)
        if len(features) != len(labels):
            raise ValueError(f"{features_path} has {len(features)} rows but {labels_path} has {len(labels)}")
        frame = features.copy()
        frame[features.shape[1]] = labels[0].values
        dest = os.path.join(data_dir, relative)
        os.makedirs(os.path.dirname(dest), exist_ok=True)
        frame.to_csv(dest, header=False, index=False)
        logger.info(f"✓ Wrote {len(frame)} rows to {dest}")
        written += len(frame)
    return written


def main(argv=None):
    parser = argparse.ArgumentParser(description='Fetch benchmark datasets')
    parser.add_argument('datasets', nargs='*', help='mnist, isolet and/or ucihar (default mnist)')
    parser.add_argument('--data-dir', default=Config.DATA_DIR)
    parser.add_argument('--ucihar-source', help='Extracted UCIHAR archive directory')
    args = parser.parse_args(argv)
    unknown = sorted(set(args.datasets) - set(FETCHABLE))
    if unknown:
        parser.error(f"unknown datasets: {', '.join(unknown)}")
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    session = requests.Session()
    failures = 0
    for name in args.datasets or ['mnist']:
        try:
            if name == 'mnist':
                fetch_mnist(args.data_dir, session)
            elif name == 'isolet':
                fetch_isolet(args.data_dir, session)
            else:
                if not args.ucihar_source:
                    raise ValueError("--ucihar-source is required for ucihar")
                convert_ucihar(args.ucihar_source, args.data_dir)
        except (requests.RequestException, OSError, ValueError) as e:
            logger.error(f"✗ Error fetching {name}: {e}")
            failures += 1
    return 1 if failures else 0


if __name__ == '__main__':
    sys.exit(main())
