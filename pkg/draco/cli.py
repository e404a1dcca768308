#!/usr/bin/env python3
"""
DRACO - Command Line Interface.

One entry point for the whole pipeline. Every subcommand reads a JSON or
YAML config (validated against the published schema before any work
starts); flags override scalar fields.

Usage:
    # Synthetic plain fingerprints, then dual-modal samples
    draco plains --out data/plains --set fingers=20
    draco synth --config synth.yaml --seed 7 --out data/train

    # Teacher pretraining, knowledge-transfer student, fine-tuning
    draco teacher --config teacher.yaml
    draco train --config train.yaml --set loss.kt_mode=relation
    draco finetune --config finetune.yaml --set init_checkpoint=runs/train/best

    # Inference, evaluation, efficiency
    draco predict --set checkpoint=runs/train/best --set dataset=data/test
    draco eval --set predictions=predictions --set ground_truth=data/test
    draco bench --set checkpoint=runs/train/best

Exit codes:
    0  success
    1  unexpected failure
    2  config / schema error
    3  data error
    4  numerical abort
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from .config import (
    Modality,
    config_hash,
    load_config,
    to_plain,
    tree_sha256,
)
from .errors import ConfigError, DataError, DracoError, NumericalError
from .events import ConsoleEventPrinter, EventEmitter, JsonEventPrinter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def exit_code(error: BaseException) -> int:
    """Map an exception to the CLI exit code of its category."""
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, DataError):
        return EXIT_DATA
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_FAILURE


# =========================================================================
# Parser
# =========================================================================

def _add_common(parser: argparse.ArgumentParser, seed: bool = True) -> None:
    parser.add_argument(
        '-c', '--config',
        type=Path,
        help='Config file (JSON or YAML)'
    )
    parser.add_argument(
        '--set',
        action='append',
        default=[],
        dest='overrides',
        metavar='KEY=VALUE',
        help='Override a config field (dotted key, repeatable)'
    )
    parser.add_argument(
        '-o', '--out',
        help='Output directory'
    )
    if seed:
        parser.add_argument(
            '--seed',
            type=int,
            help='Random seed'
        )
    parser.add_argument(
        '--dry-run',
        action='store_true',
        dest='dry_run',
        help='Validate the config and exit'
    )
    parser.add_argument(
        '-v', '--verbose',
        action='store_true',
        help='Enable verbose output'
    )
    parser.add_argument(
        '--no-color',
        action='store_true',
        dest='no_color',
        help='Disable colored output'
    )
    parser.add_argument(
        '--timestamps',
        action='store_true',
        help='Show timestamps in output'
    )
    parser.add_argument(
        '--json-events',
        action='store_true',
        dest='json_events',
        help='Output events as JSON lines'
    )


def create_parser() -> argparse.ArgumentParser:
    """Create argument parser."""
    parser = argparse.ArgumentParser(
        prog='draco',
        description='DRACO - dual-modal finger pose estimation',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate 20 synthetic fingers with 2 impressions each
  draco plains --out data/plains --set fingers=20

  # Synthesize 4 samples per plain, full rotation range
  draco synth --set plains=data/plains --out data/train --set rot_range=180

  # Check a training config without running it
  draco train --config train.yaml --dry-run

  # Continue an interrupted run
  draco train --config train.yaml --resume

  # Evaluate with matcher scores (pose-gated verification and indexing)
  draco eval --set predictions=pred --set ground_truth=data/test --set scores=scores.csv
        """
    )

    subparsers = parser.add_subparsers(dest='command', help='Commands')

    plains_parser = subparsers.add_parser(
        'plains',
        help='Generate synthetic plain fingerprints'
    )
    _add_common(plains_parser)

    synth_parser = subparsers.add_parser(
        'synth',
        help='Synthesize dual-modal samples from plain fingerprints'
    )
    _add_common(synth_parser)

    for name, help_text in (
        ('train', 'Train a pose model'),
        ('teacher', 'Pretrain the full-fingerprint teacher'),
        ('finetune', 'Fine-tune a trained checkpoint'),
    ):
        train_parser = subparsers.add_parser(name, help=help_text)
        _add_common(train_parser)
        train_parser.add_argument(
            '--resume',
            action='store_true',
            help='Continue from the last saved state in the output directory'
        )

    predict_parser = subparsers.add_parser(
        'predict',
        help='Predict poses for a dataset or one sample pair'
    )
    _add_common(predict_parser, seed=False)

    eval_parser = subparsers.add_parser(
        'eval',
        help='Pose metrics and pose-gated verification / indexing reports'
    )
    _add_common(eval_parser, seed=False)

    bench_parser = subparsers.add_parser(
        'bench',
        help='Parameter count and inference latency'
    )
    _add_common(bench_parser)

    return parser


# =========================================================================
# Helpers
# =========================================================================

def setup_logging(verbose: bool) -> None:
    if verbose:
        logging.basicConfig(
            level=logging.DEBUG,
            format='%(asctime)s [%(levelname)s] %(name)s: %(message)s'
        )
    else:
        logging.basicConfig(level=logging.WARNING)


def make_emitter(args, log_every: int = 50) -> EventEmitter:
    emitter = EventEmitter()
    if args.json_events:
        emitter.subscribe(JsonEventPrinter().handle_event)
    else:
        printer = ConsoleEventPrinter(
            verbose=args.verbose,
            color=not args.no_color,
            show_timestamps=args.timestamps,
            log_every=log_every,
        )
        emitter.subscribe(printer.handle_event)
    return emitter


def _load(kind: str, args, defaults: Optional[Dict[str, Any]] = None) -> Any:
    overrides = list(args.overrides)
    if getattr(args, 'resume', False):
        overrides.append('resume=true')
    return load_config(
        kind,
        path=args.config,
        overrides=overrides,
        seed=getattr(args, 'seed', None),
        out=args.out,
        defaults=defaults,
    )


def _dry_run(kind: str, cfg: Any, **extra) -> int:
    print(f"{kind} config OK (hash {config_hash(cfg)[:12]})")
    for key, value in extra.items():
        print(f"  {key}: {value}")
    return EXIT_OK


def _print_json(data: Dict[str, Any]) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, default=str))


# =========================================================================
# Commands
# =========================================================================

def cmd_plains(args) -> int:
    """Generate synthetic plain fingerprints."""
    from .synth import generate_plains, write_plains

    cfg = _load('plains', args)
    if args.dry_run:
        return _dry_run('plains', cfg, images=cfg.fingers * cfg.impressions)

    plains = generate_plains(
        cfg.fingers, cfg.impressions, cfg.seed,
        size=cfg.size,
        trans_jitter=cfg.trans_jitter,
        rot_jitter=cfg.rot_jitter,
    )
    manifest = write_plains(plains, Path(cfg.out))
    print(f"Wrote {len(plains)} plain fingerprints to {manifest.parent}")
    return EXIT_OK


def cmd_synth(args) -> int:
    """Synthesize a dual-modal dataset."""
    from .synth import read_plains, synthesize_samples, write_dataset

    cfg = _load('synth', args)
    if args.dry_run:
        return _dry_run('synth', cfg, plains=cfg.plains, samples_per_plain=cfg.samples_per_plain)

    emitter = make_emitter(args)
    plains = read_plains(Path(cfg.plains))
    emitter.run_started('synth', plains=len(plains), samples_per_plain=cfg.samples_per_plain,
                        rot_range=cfg.rot_range, seed=cfg.seed)
    samples, stats = synthesize_samples(
        plains,
        cfg.samples_per_plain,
        cfg.rot_range,
        cfg.trans_range,
        cfg.seed,
        patch_size=cfg.patch_size,
        cap_grid=cfg.cap_grid,
        fg_threshold=cfg.fg_threshold,
        max_retries=cfg.max_retries,
        teacher_size=cfg.teacher_size if cfg.teacher_views else None,
        max_exhausted_rate=cfg.max_rejection_rate,
        emitter=emitter,
    )
    provenance = {
        'config': to_plain(cfg),
        'config_hash': config_hash(cfg),
        'plains_sha256': tree_sha256(Path(cfg.plains)),
        'stats': stats.to_dict(),
    }
    write_dataset(samples, Path(cfg.out), provenance=provenance)
    emitter.synth_complete(stats.generated, stats.rejected_draws, stats.exhausted, cfg.out)
    return EXIT_OK


def _train_command(args, command: str) -> int:
    from .network import count_parameters, load_checkpoint
    from .training import build_model, finetune, train, train_teacher

    defaults = {'preset': 'finetune'} if command == 'finetune' else None
    cfg = _load('train', args, defaults)

    if args.dry_run:
        if command == 'finetune':
            if not cfg.init_checkpoint:
                raise ConfigError("finetune needs init_checkpoint")
            model, _ = load_checkpoint(Path(cfg.init_checkpoint), expected_codec=cfg.model.codec)
        else:
            if command == 'teacher':
                cfg.model.modality = Modality.PLAIN
            model = build_model(cfg.model, cfg.schedule.seed)
        return _dry_run(command, cfg, modality=model.modality.value,
                        parameters=count_parameters(model))

    emitter = make_emitter(args, cfg.schedule.log_every)
    runner = {'train': train, 'teacher': train_teacher, 'finetune': finetune}[command]
    result = runner(cfg, emitter)
    print(f"Best checkpoint: {result.best_dir}")
    print(f"Final checkpoint: {result.final_dir}")
    return EXIT_OK


def cmd_train(args) -> int:
    """Train a pose model."""
    return _train_command(args, 'train')


def cmd_teacher(args) -> int:
    """Pretrain the teacher on plain views."""
    return _train_command(args, 'teacher')


def cmd_finetune(args) -> int:
    """Fine-tune from init_checkpoint."""
    return _train_command(args, 'finetune')


def cmd_predict(args) -> int:
    """Predict poses."""
    from .inference import run_predict

    cfg = _load('predict', args)
    if args.dry_run:
        return _dry_run('predict', cfg, checkpoint=cfg.checkpoint)

    result = run_predict(cfg)
    if not cfg.dataset:
        _print_json(result.records[0])
    else:
        print(f"Wrote {result.count} predictions to {result.predictions_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    """Evaluate predictions (and scores, when given)."""
    from .evaluation import run_eval

    cfg = _load('eval', args)
    if args.dry_run:
        return _dry_run('eval', cfg, scores=cfg.scores or "none")

    result = run_eval(cfg)
    pose = result.pose
    print(f"Samples: {pose['count']}")
    print(f"Translation error: mean {pose['trans_mean']:.2f} px, median {pose['trans_median']:.2f} px")
    print(f"Rotation error: mean {pose['rot_mean']:.2f} deg, median {pose['rot_median']:.2f} deg")
    if result.has_gate:
        search = result.summary['gate_search']
        print(f"Pose gate: th_trans {search['th_trans']}, th_rot {search['th_rot']}")
        print(f"EER: {search['ungated_eer']:.4f} ungated, {search['eer']:.4f} gated")
    print(f"Report: {result.out_dir}")
    return EXIT_OK


def cmd_bench(args) -> int:
    """Report parameter count and batch-size-1 latency."""
    from .evaluation import benchmark
    from .evaluation.reports import write_json
    from .network import load_checkpoint
    from .training import build_model

    cfg = _load('bench', args)
    if cfg.checkpoint:
        model, _ = load_checkpoint(Path(cfg.checkpoint), map_location=cfg.device)
    else:
        model = build_model(cfg.model, cfg.seed)
    if args.dry_run:
        return _dry_run('bench', cfg, modality=model.modality.value)

    result = benchmark(model, runs=cfg.runs, warmup=cfg.warmup, device=cfg.device)
    result['config_hash'] = config_hash(cfg)
    _print_json(result)
    if cfg.out:
        out_dir = Path(cfg.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json({**result, 'config': to_plain(cfg)}, out_dir / "bench.json")
    return EXIT_OK


COMMANDS = {
    'plains': cmd_plains,
    'synth': cmd_synth,
    'train': cmd_train,
    'teacher': cmd_teacher,
    'finetune': cmd_finetune,
    'predict': cmd_predict,
    'eval': cmd_eval,
    'bench': cmd_bench,
}


def main(argv=None) -> int:
    """Main entry point."""
    parser = create_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_FAILURE

    setup_logging(args.verbose)

    try:
        return COMMANDS[args.command](args)
    except DracoError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        if args.verbose:
            logger.exception(f"{args.command} failed")
        return exit_code(e)
    except KeyboardInterrupt:
        print("\nInterrupted", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        print(f"ERROR: {args.command} failed: {e}", file=sys.stderr)
        if args.verbose:
            logger.exception(f"{args.command} failed")
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
