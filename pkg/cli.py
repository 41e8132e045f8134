#!/usr/bin/env python3
"""
Command line harness: train, eval, compare and sweep.

Metrics go to stdout (or --metrics FILE) as JSON lines; logs go to stderr.
Exit codes: 0 success, 1 component error, 2 usage error or missing data.
"""
import argparse
import logging
import os
import sys

from classifier import Binarizer, TrainConfig
from config import Config
from dataset_loader import BENCHMARKS, benchmark_available, benchmark_paths, load_benchmark, load_csv
from errors import HDError
from experiments import (
    compare_variants,
    evaluate,
    frame_records,
    load_splits,
    run_sweep,
    run_training,
)
from model_store import ModelFile, load_model, store_model
from run_metrics import MetricsWriter, RunManifest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _float_list(text):
    return [float(v) for v in text.split(',') if v.strip()]


def _int_list(text):
    return [int(v) for v in text.split(',') if v.strip()]


def _label_column(text):
    return text if text in ('first', 'last') else int(text)


def _data_options():
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group('data')
    group.add_argument('--dataset', choices=sorted(BENCHMARKS), help='Registered benchmark under --data-dir')
    group.add_argument('--train-file', help='Custom training CSV (instead of --dataset)')
    group.add_argument('--test-file', help='Custom test CSV')
    group.add_argument('--label-column', type=_label_column, default='last', help="'first', 'last' or an index")
    group.add_argument('--delimiter', default=',', help="Field delimiter, 'space' for whitespace")
    group.add_argument('--header', action='store_true', help='Skip the first line of custom CSVs')
    group.add_argument('--data-dir', default=Config.DATA_DIR)
    return parser


def _training_options():
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group('training')
    group.add_argument('--mode', choices=[b.value for b in Binarizer], default=None, help='Binarizer')
    group.add_argument('--beta', type=float, default=None)
    group.add_argument('--alpha', type=float, default=None)
    group.add_argument('--dim', type=int, default=None)
    group.add_argument('--levels', type=int, default=None)
    group.add_argument('--epochs', type=int, default=None, help='Maximum retraining epochs')
    group.add_argument('--patience', type=int, default=None)
    group.add_argument('--seed', type=int, default=None)
    group.add_argument('--validation-fraction', type=float, default=None)
    group.add_argument('--no-shuffle', action='store_true')
    group.add_argument('--sequential-updates', action='store_true',
                       help='Re-binarize the two touched rows after every update')
    return parser


def _output_options():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--metrics', default='-', help="JSONL metrics destination, '-' for stdout")
    parser.add_argument('--log-level', default=Config.LOG_LEVEL)
    return parser


def build_parser():
    data, training, output = _data_options(), _training_options(), _output_options()
    parser = argparse.ArgumentParser(prog='cli.py', description='Binarized hypervector classifier experiments')
    commands = parser.add_subparsers(dest='command', required=True)

    train = commands.add_parser('train', parents=[data, training, output], help='Train and store a model')
    train.add_argument('--model', help='Output model file (default under HD_MODEL_DIR)')

    evaluate_cmd = commands.add_parser('eval', parents=[data, output], help='Evaluate a stored model')
    evaluate_cmd.add_argument('--model', required=True)
    evaluate_cmd.add_argument('--latency-queries', type=int, default=Config.LATENCY_QUERIES)

    compare = commands.add_parser('compare', parents=[data, training, output], help='Baseline vs binarizers')
    compare.add_argument('--seeds', type=int, default=5, help='Number of seeds, starting at --seed')
    compare.add_argument('--csv', help='Write per-epoch curves here; the summary goes to <name>.summary.csv')

    sweep = commands.add_parser('sweep', parents=[data, training, output], help='Grid over beta, Q, D, alpha')
    sweep.add_argument('--betas', type=_float_list)
    sweep.add_argument('--levels-grid', type=_int_list)
    sweep.add_argument('--dims', type=_int_list)
    sweep.add_argument('--alphas', type=_float_list)
    sweep.add_argument('--csv')
    return parser


def _delimiter(args):
    return None if args.delimiter == 'space' else args.delimiter


def _check_data(args, need_train=True):
    """Missing or unknown inputs are usage errors, reported before any work starts"""
    if args.dataset:
        if not benchmark_available(args.dataset, args.data_dir):
            train_paths, test_paths = benchmark_paths(args.dataset, args.data_dir)
            missing = [p for p in train_paths + test_paths if not os.path.exists(p)]
            raise UsageError(f"Dataset '{args.dataset}' files missing: {', '.join(missing)}")
        return
    paths = [args.train_file] if need_train else []
    if args.test_file:
        paths.append(args.test_file)
    if not any(paths):
        raise UsageError('Give --dataset or --train-file' if need_train else 'Give --dataset or --test-file')
    for path in paths:
        if path and not os.path.exists(path):
            raise UsageError(f"Dataset path not found: {path}")


def _train_config(args):
    return TrainConfig.from_config(
        dim=args.dim,
        levels=args.levels,
        alpha=args.alpha,
        beta=args.beta,
        max_epochs=args.epochs,
        patience=args.patience,
        binarizer=args.mode,
        seed=args.seed,
        validation_fraction=args.validation_fraction,
        shuffle=False if args.no_shuffle else None,
        freeze_snapshot=False if args.sequential_updates else None,
    )


def _splits(args, config):
    return load_splits(
        args.dataset, args.train_file, args.test_file, args.data_dir,
        args.label_column, _delimiter(args), args.header,
        config.validation_fraction, config.seed,
    )


def _manifest(command, config, splits, **extra):
    config_values = config.to_dict()
    config_values.update(extra)
    return RunManifest(
        command=command,
        config=config_values,
        seeds={'seed': config_values.get('seed')},
        dataset_digests=splits.digests,
    )


def cmd_train(args):
    config = _train_config(args)
    splits = _splits(args, config)
    manifest = _manifest('train', config, splits, dataset=splits.name)
    model_path = args.model or os.path.join(
        Config.MODEL_DIR, f"{splits.name}-{config.binarizer.value}-seed{config.seed}.hdqb"
    )
    with MetricsWriter(manifest, args.metrics) as metrics:
        metrics.write_manifest()
        result, codebook, summary = run_training(
            config, splits, on_epoch=lambda stats: metrics.write('epoch', **stats.to_record())
        )
        model_file = ModelFile(
            model=result.model,
            levels=config.levels,
            seed=config.seed,
            scaler=codebook.scaler,
            label_names=splits.train.label_names,
            config=config.to_dict(),
            manifest_digest=manifest.digest,
            alpha=config.alpha,
            beta=config.beta,
        )
        store_model(model_path, model_file)
        metrics.write('summary', model=model_path, **summary)
    logger.info(f"✓ Model stored at {model_path} (best epoch {summary['best_epoch']})")
    return EXIT_OK


def cmd_eval(args):
    model_file = load_model(args.model)
    codebook = model_file.codebook()
    if args.dataset:
        _, test = load_benchmark(args.dataset, args.data_dir)
    else:
        path = args.test_file or args.train_file
        test = load_csv(path, args.label_column, _delimiter(args), args.header,
                        label_names=model_file.label_names)
    manifest = RunManifest(
        command='eval',
        config=dict(model_file.config, model_manifest_digest=model_file.manifest_digest),
        seeds={'seed': model_file.seed},
        dataset_digests={'test': test.digest},
    )
    summary = evaluate(model_file.model, codebook, test, latency_queries=args.latency_queries)
    with MetricsWriter(manifest, args.metrics) as metrics:
        metrics.write_manifest()
        metrics.write('eval', model=args.model, label_names=model_file.label_names, **summary)
    logger.info(
        f"✓ Test accuracy: binary {summary['accuracy_binary']:.4f}, "
        f"cosine {summary['accuracy_cosine'] if summary['accuracy_cosine'] is not None else 'n/a'}"
    )
    return EXIT_OK


def cmd_compare(args):
    config = _train_config(args)
    splits = _splits(args, config)
    seeds = list(range(config.seed, config.seed + args.seeds))
    manifest = _manifest('compare', config, splits, dataset=splits.name, compare_seeds=seeds)
    with MetricsWriter(manifest, args.metrics) as metrics:
        metrics.write_manifest()
        epochs, summary, overall = compare_variants(
            splits, config, seeds, on_record=lambda kind, row: metrics.write(kind, **row)
        )
        for row in frame_records(summary):
            metrics.write('compare_summary', **row)
        if overall:
            metrics.write('compare_summary', variant='all', **overall)
    if args.csv:
        epochs.to_csv(args.csv, index=False)
        summary.to_csv(f"{os.path.splitext(args.csv)[0]}.summary.csv", index=False)
        logger.info(f"✓ Wrote comparison curves to {args.csv}")
    if 'epoch_reduction_pct' in overall:
        logger.info(f"Stochastic binarizer needs {overall['epoch_reduction_pct']:.1f}% fewer epochs to converge")
    return EXIT_OK


def cmd_sweep(args):
    config = _train_config(args)
    splits = _splits(args, config)
    manifest = _manifest(
        'sweep', config, splits, dataset=splits.name,
        grid={'betas': args.betas, 'levels': args.levels_grid, 'dims': args.dims, 'alphas': args.alphas},
    )
    with MetricsWriter(manifest, args.metrics) as metrics:
        metrics.write_manifest()
        frame = run_sweep(
            splits, config, args.betas, args.levels_grid, args.dims, args.alphas,
            on_record=lambda kind, row: metrics.write(kind, **row),
        )
    if args.csv:
        frame.to_csv(args.csv, index=False)
        logger.info(f"✓ Wrote {len(frame)} sweep points to {args.csv}")
    return EXIT_OK


COMMANDS = {
    'train': cmd_train,
    'eval': cmd_eval,
    'compare': cmd_compare,
    'sweep': cmd_sweep,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        _check_data(args, need_train=args.command != 'eval')
        return COMMANDS[args.command](args)
    except UsageError as e:
        logger.error(f"✗ {e}")
        return EXIT_USAGE
    except (HDError, OSError) as e:
        logger.error(f"✗ {args.command} failed: {e}")
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
