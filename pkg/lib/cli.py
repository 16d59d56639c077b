"""
Command-line interface for the CUPID matchmaking engine.

Subcommands:
    generate     simulate the world and write a dataset
    train        two-phase or joint training, ablations and baselines
    eval         log-domain MSE / AUROC report on a split
    delay-sweep  evaluation under delayed session updates
    ablate       train and evaluate every ablation variant
    simulate     online policy comparison on a switchback schedule
    bench        pool-scoring latency, inline encoding vs embedding memory

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv

from .checkpoint import load_checkpoint
from .config import RunConfig, apply_flag_overrides, derive_seed, load_config, save_config, validate_config
from .custom_helpers import MetricsLogger, configure_logger, get_timestamp
from .dataset_io import load_dataset, save_dataset
from .embedding import InferenceCounter
from .engine import DelayConfig, bench_latency
from .errors import ConfigError, CupidError
from .evaluation import (
    ABLATIONS,
    default_threshold,
    evaluate,
    prediction_shape,
    reports_frame,
    run_ablations,
    run_delay_sweep,
    write_report,
)
from .training import BASELINES, CupidModel, Trainer, build_variant
from .worldsim import ModelPolicy, Policy, RandomPolicy, generate_dataset, run_online, run_switchback

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "model.ckpt"
METRICS_FILE = "metrics.jsonl"
CONFIG_ECHO_FILE = "config.json"


class CupidArgumentParser(argparse.ArgumentParser):
    """Usage errors raise ConfigError so they map to exit code 1."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', type=str, default=None,
                        help='Run configuration JSON file (defaults when omitted)')
    common.add_argument('--seed', type=int, default=None, help='Root seed')
    common.add_argument('--output', '-o', type=str, default=None, help='Output directory')
    common.add_argument('--threads', type=int, default=None, help='Worker threads (1 = fully deterministic)')
    common.add_argument('--verbose', '-v', action='store_true', help='Debug logging')
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = CupidArgumentParser(
        prog="runner.py",
        description="CUPID - session-based reciprocal recommendation engine",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python runner.py generate --users 1000 --horizon-hours 24
  python runner.py train --mode two-phase
  python runner.py train --mode joint --output runs/joint
  python runner.py eval --checkpoint runs/model.ckpt
  python runner.py simulate --policy switchback --checkpoint runs/model.ckpt
  python runner.py bench --checkpoint runs/model.ckpt --pool-sizes 16 64 256
        """
    )
    parser.add_argument('--create-config', action='store_true',
                        help='Create a sample configuration file and exit')
    commands = parser.add_subparsers(dest="command")

    generate = commands.add_parser("generate", parents=[common], help="Generate a dataset")
    generate.add_argument('--users', type=int, default=None, help='Number of users')
    generate.add_argument('--horizon-hours', type=float, default=None, help='Simulated hours')
    generate.add_argument('--dataset', type=str, default=None, help='Dataset directory (default <output>/dataset)')
    generate.set_defaults(func=cmd_generate)

    train = commands.add_parser("train", parents=[common], help="Train a model")
    train.add_argument('--dataset', type=str, default=None, help='Dataset directory')
    train.add_argument('--mode', choices=["two-phase", "joint"], default="two-phase")
    train.add_argument('--ablate', choices=["none", "no-session", "no-sp", "no-et"], default="none")
    train.add_argument('--baseline', choices=list(BASELINES), default=None,
                       help='Train a feature-only baseline instead of CUPID')
    train.add_argument('--checkpoint', type=str, default=None, help='Checkpoint path (default <output>/model.ckpt)')
    train.add_argument('--resume', action='store_true', help='Resume from the checkpoint')
    train.set_defaults(func=cmd_train)

    eval_cmd = commands.add_parser("eval", parents=[common], help="Evaluate a checkpoint")
    eval_cmd.add_argument('--dataset', type=str, default=None)
    eval_cmd.add_argument('--checkpoint', type=str, default=None)
    eval_cmd.add_argument('--split', choices=["train", "validation", "test"], default="test")
    eval_cmd.add_argument('--threshold-ms', type=int, default=None, help='AUROC label threshold')
    eval_cmd.set_defaults(func=cmd_eval)

    delay = commands.add_parser("delay-sweep", parents=[common], help="Evaluate under delayed session updates")
    delay.add_argument('--dataset', type=str, default=None)
    delay.add_argument('--checkpoint', type=str, default=None)
    delay.add_argument('--delays', type=int, nargs='+', default=None, help="Delays t' in ms")
    delay.add_argument('--no-never', action='store_true', help='Skip the never-updated row')
    delay.set_defaults(func=cmd_delay)

    ablate = commands.add_parser("ablate", parents=[common], help="Train and evaluate ablation variants")
    ablate.add_argument('--dataset', type=str, default=None)
    ablate.add_argument('--variants', nargs='+', choices=list(ABLATIONS + BASELINES), default=list(ABLATIONS))
    ablate.set_defaults(func=cmd_ablate)

    simulate = commands.add_parser("simulate", parents=[common], help="Online policy comparison")
    simulate.add_argument('--policy', choices=["random", "feature-only", "cupid", "switchback"], default="switchback")
    simulate.add_argument('--checkpoint', type=str, default=None, help='CUPID checkpoint')
    simulate.add_argument('--feature-checkpoint', type=str, default=None, help='Feature-only model checkpoint')
    simulate.add_argument('--horizon-hours', type=float, default=None)
    simulate.add_argument('--window-minutes', type=float, default=None)
    simulate.set_defaults(func=cmd_simulate)

    bench = commands.add_parser("bench", parents=[common], help="Pool-scoring latency benchmark")
    bench.add_argument('--checkpoint', type=str, default=None)
    bench.add_argument('--pool-sizes', type=int, nargs='+', default=None)
    bench.add_argument('--reps', type=int, default=None)
    bench.set_defaults(func=cmd_bench)
    return parser


# ----------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------

def resolve_config(args: argparse.Namespace, **flags) -> RunConfig:
    config = load_config(args.config)
    config = apply_flag_overrides(config, seed=args.seed, output_dir=args.output, threads=args.threads, **flags)
    for issue in validate_config(config):
        logger.warning(f"Config issue: {issue}")
    return config


def _output(config: RunConfig) -> Path:
    path = Path(config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dataset_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    return Path(args.dataset) if args.dataset else Path(config.output_dir) / "dataset"


def _checkpoint(path: Optional[str], config: RunConfig) -> Path:
    return Path(path) if path else Path(config.output_dir) / CHECKPOINT_FILE


def _provenance(config: RunConfig) -> str:
    return f"run={config.run_name} seed={config.seed} generated={get_timestamp()}"


def _load_model(path: Path) -> CupidModel:
    model, metadata = CupidModel.load(path)
    logger.info(f"Loaded {metadata.get('variant', 'model')} from {path} (head={model.head_mode.value})")
    return model


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def cmd_generate(args: argparse.Namespace) -> int:
    config = resolve_config(args, **{"world.num_users": args.users, "world.horizon_hours": args.horizon_hours})
    target = _dataset_dir(args, config)
    dataset = generate_dataset(config.world, derive_seed(config.seed, "world"))
    save_dataset(dataset, target, config.model_dump())
    save_config(config, _output(config) / CONFIG_ECHO_FILE)
    logger.info(f"Dataset written to {target}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if args.baseline and args.ablate != "none":
        raise ConfigError("--baseline and --ablate are mutually exclusive")
    variant = args.baseline or ("full" if args.ablate == "none" else args.ablate)
    if args.mode == "joint" and variant != "full":
        raise ConfigError("joint training is only defined for the full model")

    dataset = load_dataset(_dataset_dir(args, config))
    output = _output(config)
    checkpoint = _checkpoint(args.checkpoint, config)
    counter = InferenceCounter()
    model = build_variant(variant, config, counter)

    resume, tensors = None, None
    if args.resume:
        tensors, resume = load_checkpoint(checkpoint)
        expected_mode = "joint" if args.mode == "joint" else ("phase1-only" if variant == "no-sp" else "two-phase")
        if resume.get("variant") != variant or resume.get("mode") != expected_mode:
            raise ConfigError(f"checkpoint {checkpoint} was trained as {resume.get('variant')}/{resume.get('mode')}")
        model.load_weights(tensors)
        counter.increment(int(resume.get("transformer_forward_count", 0)))
        logger.info(f"Resuming from {checkpoint} at epoch {resume.get('global_epoch')}")

    save_config(config, output / CONFIG_ECHO_FILE)
    metrics = MetricsLogger(output / METRICS_FILE, append=args.resume)
    trainer = Trainer(model, dataset, config, metrics, checkpoint, variant,
                      threshold_ms=config.eval.quality_threshold_ms)
    if args.mode == "joint":
        summary = trainer.fit_joint(resume, tensors)
    else:
        summary = trainer.fit_two_phase(phase1_only=variant == "no-sp", resume=resume, resume_tensors=tensors)
    logger.info(f"=== Training done: {summary.epochs_run} epochs, "
                f"{summary.transformer_forward_count} transformer passes ===")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    dataset = load_dataset(_dataset_dir(args, config))
    model = _load_model(_checkpoint(args.checkpoint, config))
    threshold = args.threshold_ms or config.eval.quality_threshold_ms or default_threshold(dataset)
    report = evaluate(model, dataset, args.split, threshold, config=config.model_dump())
    shape = prediction_shape(model, dataset, args.split)
    summary = "\n".join([
        _provenance(config), report.summary(),
        f"prediction skewness={shape.skewness:.4f} excess_kurtosis={shape.excess_kurtosis:.4f} "
        f"ks={shape.ks_statistic:.4f}",
    ])
    write_report(reports_frame({"model": report}, "variant"), _output(config) / "eval.csv", summary)
    print(report.summary())
    return 0


def cmd_delay(args: argparse.Namespace) -> int:
    config = resolve_config(args, **{"eval.delays_ms": args.delays})
    dataset = load_dataset(_dataset_dir(args, config))
    model = _load_model(_checkpoint(args.checkpoint, config))
    threshold = config.eval.quality_threshold_ms or default_threshold(dataset)
    include_never = config.eval.include_never_updated and not args.no_never
    reports = run_delay_sweep(model, dataset, config.eval.delays_ms, "test", threshold, include_never)
    summary = "\n".join([_provenance(config)] + [r.summary() for r in reports])
    write_report(reports_frame(reports, "delay_ms"), _output(config) / "delay_sweep.csv", summary)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    dataset = load_dataset(_dataset_dir(args, config))
    output = _output(config)
    save_config(config, output / CONFIG_ECHO_FILE)
    result = run_ablations(dataset, config, args.variants, threshold_ms=config.eval.quality_threshold_ms,
                           output_dir=output / "ablation")
    lines = [_provenance(config)]
    for variant, report in result.reports.items():
        shape = result.shapes[variant]
        lines.append(f"[{variant}] transformer_forward_count={result.forward_counts[variant]} "
                     f"skewness={shape.skewness:.4f} excess_kurtosis={shape.excess_kurtosis:.4f} "
                     f"ks={shape.ks_statistic:.4f}")
        lines.append(report.summary())
    lines.append(f"best variant by Entire MSE: {result.best_variant()}")
    write_report(reports_frame(result.reports, "variant"), output / "ablation.csv", "\n".join(lines))
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    window_ms = int(args.window_minutes * 60 * 1000) if args.window_minutes else None
    config = resolve_config(args, **{"eval.online_hours": args.horizon_hours,
                                     "eval.switchback_window_ms": window_ms})
    arms = _policies(args, config)
    if args.policy == "switchback":
        report = run_switchback(config, arms)
    else:
        report = run_online(config, arms[args.policy])
    output = _output(config)
    report.write(output / f"online_{args.policy}.csv")
    if args.policy == "switchback":
        arm_names = list(arms)
        significant = report.significant_difference(arm_names[0], arm_names[1])
        logger.info(f"Difference {arm_names[0]} vs {arm_names[1]} significant at 2 SE: {significant}")
    print(report.summary())
    return 0


def _policies(args: argparse.Namespace, config: RunConfig) -> Dict[str, Policy]:
    policy_seed = derive_seed(config.seed, "online-policy")
    if args.policy == "random":
        return {"random": RandomPolicy(policy_seed)}
    if args.policy == "feature-only":
        if not args.feature_checkpoint:
            raise ConfigError("--policy feature-only needs --feature-checkpoint")
        return {"feature-only": ModelPolicy(_load_model(Path(args.feature_checkpoint)), config.engine)}
    model = _load_model(_checkpoint(args.checkpoint, config))
    cupid = ModelPolicy(model, config.engine, DelayConfig(), name="cupid")
    if args.policy == "cupid":
        return {"cupid": cupid}
    return {"random": RandomPolicy(policy_seed), "cupid": cupid}


def cmd_bench(args: argparse.Namespace) -> int:
    config = resolve_config(args, **{"eval.bench_pool_sizes": args.pool_sizes, "eval.bench_reps": args.reps})
    model = _load_model(_checkpoint(args.checkpoint, config))
    report = bench_latency(model, config.eval.bench_pool_sizes, config.eval.bench_reps,
                           seed=derive_seed(config.seed, "bench"))
    report.write_csv(_output(config) / "latency.csv")
    print(report.to_frame().to_string(index=False))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.create_config:
            from .config import create_sample_config
            path = create_sample_config()
            print(f"Sample configuration created: {path}")
            return 0
        if not args.command:
            raise ConfigError("no command given (see --help)")
        log_dir = Path(args.output) / "logs" if args.output else Path("logs")
        configure_logger(args.command, log_dir, logging.DEBUG if args.verbose else logging.INFO)
        logger.info(f"=== {args.command} started ===")
        code = args.func(args)
        logger.info(f"=== {args.command} finished ===")
        return code
    except CupidError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("Run interrupted by user")
        return 1
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        raise
