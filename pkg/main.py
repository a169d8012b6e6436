import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List

from config import app_config
from config.settings_file import parse_pair, read_settings, split_list
from core.errors import ConfigError, ShapeSplineError, UsageError, exit_code_for
from core.simulation import TRUTHS, SimDesign, truth_for
from schemas import (
    ConstraintMode,
    ModelConfig,
    RunManifest,
    SamplerConfig,
    load_dataset_schema,
    load_model_settings,
)
from services import (
    FitService,
    OutputWriter,
    PreprocessService,
    SimulationService,
    default_contrasts,
    merge_reports,
    read_manifest,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'
BOTH_KNOT_RANGES = [(30.0, 90.0), (0.0, 120.0)]


def configure_logging(out_dir: Path, level: str) -> List[logging.Handler]:
    out_dir.mkdir(parents=True, exist_ok=True)
    handlers = [
        logging.StreamHandler(sys.stdout),
        logging.FileHandler(out_dir / app_config.LOG_FILE_NAME),
    ]
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
    return handlers


def release_logging(handlers: List[logging.Handler]) -> None:
    """Detach and close the handlers configured by one invocation."""
    root = logging.getLogger()
    for handler in handlers:
        root.removeHandler(handler)
        handler.close()


# ============================================================================
# ARGUMENTS
# ============================================================================

class CliParser(argparse.ArgumentParser):
    """Argument errors become UsageError so they share the one-line error path."""

    def error(self, message):
        raise UsageError(message)


def common_arguments() -> argparse.ArgumentParser:
    # SUPPRESS keeps subcommand defaults from overwriting flags given before the subcommand
    common = CliParser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS, help="Output directory")
    common.add_argument("--model", default=argparse.SUPPRESS, help="Model config file (key = value)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="Seed for all randomness")
    common.add_argument("--iters", type=int, default=argparse.SUPPRESS, help="Gibbs iterations")
    common.add_argument("--burnin", type=int, default=argparse.SUPPRESS, help="Burn-in iterations")
    common.add_argument("--grid-step", type=float, default=argparse.SUPPRESS, help="Summary grid spacing (years)")
    common.add_argument("--knot-range", default=argparse.SUPPRESS, help="Spline boundaries lo,hi")
    common.add_argument("--variant", default=argparse.SUPPRESS,
                        help="S_SHAPED, MONOTONE_ONLY or LOGISTIC_PARAMETRIC (simulate: comma-separated list)")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="Worker threads")
    common.add_argument("--chains", type=int, default=argparse.SUPPRESS, help="Independent chains (fit)")
    common.add_argument("--log-level", default=argparse.SUPPRESS, help="DEBUG, INFO, WARNING or ERROR")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = common_arguments()
    parser = CliParser(
        description="Bayesian shape-constrained spline regression for biomarker progression",
        parents=[common],
    )
    parser.add_argument("--from-manifest", default=argparse.SUPPRESS,
                        help="Re-run the command recorded in a manifest (requires --out)")
    commands = parser.add_subparsers(dest="command")

    fit = commands.add_parser("fit", parents=[common], help="Fit a long-format biomarker CSV")
    fit.add_argument("--data", required=True, help="Long-format CSV")
    fit.add_argument("--schema", required=True, help="Dataset schema config file")

    simulate = commands.add_parser("simulate", parents=[common], help="Run the synthetic-data comparison")
    simulate.add_argument("--truth", default="both", choices=["logit", "asym", "both"], help="Ground-truth curve")
    simulate.add_argument("--replicates", type=int, default=1, help="Replicates per cell")
    simulate.add_argument("--metric-range", default="30,90", help="Age range for curve metrics lo,hi")
    simulate.add_argument("--noise-sd", action="store_true", help="Read the noise level 0.5 as a standard deviation")
    simulate.add_argument("--both-ranges", action="store_true", help="Sweep knot ranges 30,90 and 0,120")
    simulate.add_argument("--no-datasets", action="store_true", help="Do not write the simulated datasets")

    report = commands.add_parser("report", parents=[common], help="Merge simulation reports")
    report.add_argument("inputs", nargs="*", help="Report CSVs or simulate output directories")

    prep = commands.add_parser("preprocess", parents=[common], help="Preprocess a dataset only")
    prep.add_argument("--data", required=True, help="Long-format CSV")
    prep.add_argument("--schema", required=True, help="Dataset schema config file")
    return parser


def args_from_manifest(args: argparse.Namespace) -> argparse.Namespace:
    manifest = read_manifest(args.from_manifest)
    out = getattr(args, "out", None)
    if not out:
        raise UsageError("--from-manifest needs --out for the new run")
    recorded = dict(manifest.arguments)
    recorded["out"] = out
    logger.debug(f"Replaying '{manifest.command}' from {args.from_manifest}")
    return argparse.Namespace(**recorded)


def parse_variants(value: str):
    try:
        return [ConstraintMode(v.upper()) for v in split_list(value)]
    except ValueError:
        raise ConfigError(f"unknown variant in '{value}' (expected {', '.join(m.value for m in ConstraintMode)})")


def resolve_configs(args: argparse.Namespace, variant_override: bool = True):
    """Built-in defaults -> model config file -> command-line flags."""
    settings = read_settings(args.model) if getattr(args, "model", None) else {}
    model, sampler, contrasts = load_model_settings(settings)

    model_updates, sampler_updates = {}, {}
    if getattr(args, "knot_range", None):
        model_updates["knot_range"] = parse_pair(args.knot_range, "--knot-range")
    if variant_override and getattr(args, "variant", None):
        variants = parse_variants(args.variant)
        if len(variants) != 1:
            raise UsageError("fit takes exactly one --variant")
        model_updates["variant"] = variants[0]
    for flag, key in (("seed", "seed"), ("iters", "n_iter"), ("burnin", "burn_in"), ("jobs", "jobs")):
        if getattr(args, flag, None) is not None:
            sampler_updates[key] = getattr(args, flag)
    if "n_iter" in sampler_updates and "burn_in" not in sampler_updates and "burn_in" not in settings:
        sampler_updates["burn_in"] = sampler_updates["n_iter"] // 2
        logger.info(f"Burn-in set to half of the iterations ({sampler_updates['burn_in']})")

    try:
        model = ModelConfig(**{**model.model_dump(), **model_updates})
        sampler = SamplerConfig(**{**sampler.model_dump(), **sampler_updates})
    except ValueError as e:
        raise ConfigError(f"invalid configuration: {e}")
    return model, sampler, contrasts


def start_manifest(args: argparse.Namespace, model: ModelConfig, sampler: SamplerConfig) -> RunManifest:
    arguments = {k: v for k, v in vars(args).items() if k != "from_manifest"}
    manifest = RunManifest(
        command=args.command,
        arguments=arguments,
        config={"model": model.model_dump(mode="json"), "sampler": sampler.model_dump(mode="json")},
        seeds=[sampler.seed],
    )
    manifest.stamp_start()
    return manifest


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_fit(args: argparse.Namespace) -> int:
    schema = load_dataset_schema(read_settings(args.schema))
    model, sampler, contrasts = resolve_configs(args)
    writer = OutputWriter(args.out, start_manifest(args, model, sampler))
    writer.record_input(args.schema)
    if getattr(args, "model", None):
        writer.record_input(args.model)

    started = time.perf_counter()
    service = FitService(
        model,
        sampler,
        contrasts or default_contrasts(schema),
        n_chains=getattr(args, "chains", None) or 1,
        grid_step=getattr(args, "grid_step", None),
    )
    service.run(args.data, schema, writer)
    writer.manifest.timings["total"] = time.perf_counter() - started
    writer.write_manifest()
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    model, sampler, _ = resolve_configs(args, variant_override=False)
    variants = parse_variants(args.variant) if getattr(args, "variant", None) else list(ConstraintMode)
    truths = list(TRUTHS.values()) if args.truth == "both" else [truth_for(args.truth)]
    if args.replicates < 0:
        raise UsageError("--replicates must be >= 0")
    knot_ranges = BOTH_KNOT_RANGES if args.both_ranges else [model.knot_range]

    writer = OutputWriter(args.out, start_manifest(args, model, sampler))
    if getattr(args, "model", None):
        writer.record_input(args.model)
    service = SimulationService(
        model,
        sampler,
        design=SimDesign(noise_is_sd=args.noise_sd),
        metric_range=parse_pair(args.metric_range, "--metric-range"),
        jobs=getattr(args, "jobs", None) or 1,
        save_datasets=not args.no_datasets,
    )
    service.run(truths, variants, args.replicates, writer, knot_ranges)
    writer.write_manifest()
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    merged = merge_reports(args.inputs)
    manifest = RunManifest(command="report", arguments={k: v for k, v in vars(args).items() if k != "from_manifest"})
    manifest.stamp_start()
    writer = OutputWriter(args.out, manifest)
    for source in args.inputs:
        path = Path(source)
        writer.record_input(path / "report.csv" if path.is_dir() else path)
    writer.write_table("report.csv", merged)
    writer.write_manifest()
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    schema = load_dataset_schema(read_settings(args.schema))
    manifest = RunManifest(command="preprocess", arguments={k: v for k, v in vars(args).items() if k != "from_manifest"})
    manifest.stamp_start()
    writer = OutputWriter(args.out, manifest)
    writer.record_input(args.schema)
    PreprocessService().run(args.data, schema, writer)
    writer.write_manifest()
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "preprocess": cmd_preprocess,
}


def main(argv=None) -> int:
    handlers: List[logging.Handler] = []
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "from_manifest", None):
            args = args_from_manifest(args)
        if getattr(args, "command", None) not in COMMANDS:
            raise UsageError(f"a command is required ({', '.join(COMMANDS)})")
        if not getattr(args, "out", None):
            raise UsageError("--out is required")
        handlers = configure_logging(Path(args.out), getattr(args, "log_level", None) or app_config.LOG_LEVEL)
        logger.info(f"Running '{args.command}' (version {app_config.SOFTWARE_VERSION})")
        return COMMANDS[args.command](args)
    except ShapeSplineError as e:
        if handlers:
            logger.error(e.one_line())
        print(e.one_line(), file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        if handlers:
            logger.exception("Unexpected failure")
        print(f"ERROR INTERNAL: {' '.join(str(e).split())}", file=sys.stderr)
        return 1
    finally:
        release_logging(handlers)


if __name__ == "__main__":
    sys.exit(main())
