"""
Command-line entry point: ``python -m expcp <command>``.

Commands:
    critvals  simulate critical values (CSV table, optional Markdown)
    size      empirical sizes with binomial accuracy flags
    power     empirical powers over (tau, theta1) scenarios
    detect    single change-point test on one series
    segment   binary segmentation of one series

Exit codes: 0 success, 2 input error, 3 missing critical values, 4 internal failure.
"""

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

from pydantic import ValidationError

from .asymptotics import asymptotic_critical_value
from .config import config
from .exceptions import InputError, MissingCriticalValueError
from .models import (
    CriticalValueTable,
    DetectionReport,
    LookupPolicy,
    PowerScenario,
    RunConfig,
    Sample,
    SegmentationConfig,
    SegmentationReport,
    SimulationPlan,
    StatisticKind,
    StatisticSpec,
)
from .montecarlo import MonteCarloEngine, estimate_critical_values, power_study, size_study
from .reports import (
    comparison_markdown,
    critical_values_markdown,
    frame_to_csv,
    power_markdown,
    size_markdown,
    study_frame,
    to_json,
)
from .segmentation import CriticalValueSource, binary_segment
from .statistics import evaluate, prefix_means
from .tablestore import format_table, read_table, write_table
from .telemetry_simple import TracedOperation, instrument_logging, set_span_attribute

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MISSING_TABLE = 3
EXIT_INTERNAL = 4

DEFAULT_LAMBDAS = [round(-1.0 + 0.1 * i, 10) for i in range(11)]
CRITVALS_K = [40, 50, 60, 64, 100, 200, 300, 400, 500]
SIZE_K = [40, 50, 60, 64, 100, 200, 300, 500]
POWER_K = [40, 50, 100, 200]
DEFAULT_ALPHAS = [0.1, 0.05, 0.01]
POWER_ALPHAS = [0.05, 0.01]
DEFAULT_TAUS = [0.2, 0.3, 0.5]
DEFAULT_THETA1 = [5.0, 4.0, 3.0, 2.0, 1 / 2, 1 / 3, 1 / 4, 1 / 5]
STUDY_STATS = ["t-phi", "lrt-norm", "s"]
SERIES_STATS = ["s"]


def parse_rate(text: str) -> float:
    """Parse a rate such as '3', '0.25' or '1/4'."""
    try:
        value = float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid rate {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"rates must be positive, got {text!r}")
    return value


def _add_stat_arguments(parser: argparse.ArgumentParser, default_help: str) -> None:
    parser.add_argument(
        "--stat",
        action="append",
        choices=[kind.value for kind in StatisticKind],
        help=f"Statistic (repeatable; default {default_help})",
    )
    parser.add_argument(
        "--lambda",
        dest="lambdas",
        type=float,
        nargs="+",
        help="Lambda values for t-phi (default -1, -0.9, ..., 0)",
    )
    parser.add_argument(
        "--epsilon", type=float, default=config.DEFAULT_EPSILON, help="Trimming for t-phi"
    )


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    tables = config.tables_path()
    parser.add_argument("--B", type=int, default=config.DEFAULT_REPLICATIONS, help="Replications")
    parser.add_argument("--seed", type=int, default=config.DEFAULT_SEED, help="Master seed")
    parser.add_argument("--threads", type=int, default=config.THREADS, help="Worker threads")
    parser.add_argument(
        "--tables",
        default=str(tables) if tables else None,
        help="Critical-value table (default $EXPCP_TABLES)",
    )
    parser.add_argument("--out", help="Output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subparser per command."""
    parser = argparse.ArgumentParser(
        prog="expcp",
        description="Change-point tests for exponential sequences: phi-divergence, LRT and S scans",
    )
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="Logging level")
    subparsers = parser.add_subparsers(dest="command", required=True)

    critvals = subparsers.add_parser("critvals", help="Simulate critical values")
    _add_stat_arguments(critvals, "all t-phi lambdas, lrt-norm and s")
    _add_run_arguments(critvals)
    critvals.add_argument("--K", type=int, nargs="+", default=CRITVALS_K)
    critvals.add_argument("--alpha", type=float, nargs="+", default=DEFAULT_ALPHAS)
    critvals.add_argument("--markdown", action="store_true", help="Also write a Markdown table")
    critvals.add_argument(
        "--compare", action="store_true", help="Also write differences to published values"
    )

    size = subparsers.add_parser("size", help="Empirical sizes")
    _add_stat_arguments(size, "all t-phi lambdas, lrt-norm and s")
    _add_run_arguments(size)
    size.add_argument("--K", type=int, nargs="+", default=SIZE_K)
    size.add_argument("--alpha", type=float, nargs="+", default=DEFAULT_ALPHAS)
    size.add_argument("--fresh-seed", type=int, help="Seed of the fresh null samples")
    size.add_argument(
        "--shared-samples",
        action="store_true",
        help="Re-use the replications behind the critical values",
    )
    size.add_argument("--simulate-tables", action="store_true", help="Simulate missing critical values")
    size.add_argument("--markdown", action="store_true", help="Also write a Markdown table")

    power = subparsers.add_parser("power", help="Empirical powers")
    _add_stat_arguments(power, "all t-phi lambdas, lrt-norm and s")
    _add_run_arguments(power)
    power.add_argument("--K", type=int, nargs="+", default=POWER_K)
    power.add_argument("--alpha", type=float, nargs="+", default=POWER_ALPHAS)
    power.add_argument("--tau", type=float, nargs="+", default=DEFAULT_TAUS)
    power.add_argument("--theta1", type=parse_rate, nargs="+", default=DEFAULT_THETA1)
    power.add_argument("--simulate-tables", action="store_true", help="Simulate missing critical values")
    power.add_argument("--markdown", action="store_true", help="Also write Markdown tables")

    for name, help_text in (("detect", "Test one series for a change"), ("segment", "Binary segmentation")):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("input", help="File with one positive number per line")
        _add_stat_arguments(sub, "s")
        _add_run_arguments(sub)
        sub.add_argument("--alpha", type=float, nargs="+", default=[0.05])
        sub.add_argument(
            "--simulate-tables", action="store_true", help="Simulate missing critical values"
        )
        sub.add_argument(
            "--nearest-k", action="store_true", help="Fall back to the nearest tabulated K"
        )

    subparsers.choices["detect"].add_argument(
        "--profile", action="store_true", help="Include the per-k statistic profile"
    )
    subparsers.choices["segment"].add_argument("--min-segment", type=int, default=config.MIN_SEGMENT)
    subparsers.choices["segment"].add_argument("--max-depth", type=int, default=config.MAX_DEPTH)
    return parser


def resolve_specs(args: argparse.Namespace, default: Sequence[str]) -> list[StatisticSpec]:
    """Statistic specifications from --stat/--lambda/--epsilon."""
    kinds = [StatisticKind(stat) for stat in dict.fromkeys(args.stat or default)]
    if args.lambdas and StatisticKind.PHI_FAMILY not in kinds:
        raise InputError("--lambda applies only to --stat t-phi")
    specs = []
    for kind in kinds:
        if kind is StatisticKind.PHI_FAMILY:
            lambdas = args.lambdas or DEFAULT_LAMBDAS
            specs.extend(StatisticSpec.phi(lam, args.epsilon) for lam in dict.fromkeys(lambdas))
        else:
            specs.append(StatisticSpec(kind=kind))
    return specs


def run_config(args: argparse.Namespace, specs: Sequence[StatisticSpec]) -> RunConfig:
    """Resolved configuration echoed into every artifact."""
    phi = [s.lambda_ for s in specs if s.kind is StatisticKind.PHI_FAMILY]
    return RunConfig(
        command=args.command,
        stats=list(dict.fromkeys(s.kind.value for s in specs)),
        lambdas=phi or None,
        epsilon=args.epsilon,
        K=getattr(args, "K", None),
        alpha=args.alpha,
        B=args.B,
        seed=args.seed,
        fresh_seed=getattr(args, "fresh_seed", None),
        tau=getattr(args, "tau", None),
        theta1=getattr(args, "theta1", None),
        tables=args.tables,
        input=getattr(args, "input", None),
        out=args.out,
        shared_samples=getattr(args, "shared_samples", False),
        simulate_tables=getattr(args, "simulate_tables", False),
        nearest_k=getattr(args, "nearest_k", False),
        markdown=getattr(args, "markdown", False),
        compare=getattr(args, "compare", False),
        profile=getattr(args, "profile", False),
        min_segment=getattr(args, "min_segment", None),
        max_depth=getattr(args, "max_depth", None),
        threads=args.threads,
    )


def artifact_metadata(run: RunConfig) -> dict[str, str]:
    """Header metadata: tool version, echoed config and an optional reproducible date."""
    metadata = {
        "tool_version": config.APP_VERSION,
        "config": json.dumps(run.echo(), sort_keys=True),
    }
    source_date = os.getenv("SOURCE_DATE_EPOCH")
    if source_date:
        created = datetime.fromtimestamp(int(source_date), tz=timezone.utc)
        metadata["created"] = created.isoformat()
    return metadata


def read_series(path: str) -> Sample:
    """
    Read one positive number per line.

    Blank lines and lines starting with '#' are skipped; a trailing comma
    (single-column CSV) is tolerated.

    Raises:
        InputError: On an unreadable file or a bad value, naming the line
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise InputError(f"Cannot read input {path}: {e}") from e

    values = []
    for number, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        text = text.rstrip(",").strip()
        try:
            value = float(text)
        except ValueError:
            raise InputError(f"{path}:{number}: {raw.strip()!r} is not a number") from None
        if not value > 0 or value == float("inf"):
            raise InputError(f"{path}:{number}: observations must be positive and finite, got {text}")
        values.append(value)

    if len(values) < 2:
        raise InputError(f"{path}: need at least 2 observations, found {len(values)}")
    return Sample(values=values)


def _load_table(path: Optional[str]) -> CriticalValueTable:
    if path and Path(path).exists():
        return read_table(path)
    if path:
        logger.info(f"Table {path} does not exist yet; starting from an empty table")
    return CriticalValueTable()


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    config.ensure_directories(target)
    target.write_text(text, encoding="utf-8")
    logger.info(f"Wrote {target}")


def _emit(args: argparse.Namespace, csv_text: str, markdown_text: Optional[str]) -> None:
    """CSV to --out (Markdown beside it as .md); without --out, one of them to stdout."""
    if args.out:
        _write(args.out, csv_text)
        if markdown_text is not None:
            _write(str(Path(args.out).with_suffix(".md")), markdown_text)
    else:
        _write(None, markdown_text if markdown_text is not None else csv_text)


def _complete_table(
    table: CriticalValueTable,
    plan: SimulationPlan,
    engine: MonteCarloEngine,
    args: argparse.Namespace,
    run: RunConfig,
) -> CriticalValueTable:
    """Check the table covers the plan; simulate the gaps when allowed."""
    missing = [
        (spec, K)
        for K in plan.K_grid
        for spec in plan.specs
        if any(table.get(spec, K, alpha) is None for alpha in plan.alphas)
    ]
    if not missing:
        return table
    if not args.simulate_tables:
        spec, K = missing[0]
        alpha = next(a for a in plan.alphas if table.get(spec, K, a) is None)
        raise MissingCriticalValueError(
            f"{len(missing)} (statistic, K) pairs have no critical values, e.g. {spec.label}, "
            f"K={K}, alpha={alpha:g}; run `critvals` first or pass --simulate-tables"
        )

    for K in sorted({K for _, K in missing}):
        specs = [spec for spec, k in missing if k == K]
        sub_plan = SimulationPlan(
            specs=specs, K_grid=[K], alphas=plan.alphas, B=args.B, master_seed=args.seed
        )
        simulated = estimate_critical_values(sub_plan, engine)
        table = table.with_entries(simulated.entries, simulated.warnings)

    if not table.metadata:
        table = CriticalValueTable(
            entries=table.entries, warnings=table.warnings, metadata=artifact_metadata(run)
        )
    if args.tables:
        write_table(table, args.tables)
    return table


def cmd_critvals(args: argparse.Namespace) -> None:
    specs = resolve_specs(args, STUDY_STATS)
    run = run_config(args, specs)
    plan = SimulationPlan(specs=specs, K_grid=args.K, alphas=args.alpha, B=args.B, master_seed=args.seed)
    engine = MonteCarloEngine(n_jobs=args.threads)

    table = estimate_critical_values(plan, engine, metadata=artifact_metadata(run))
    destination = args.out or args.tables
    if destination:
        write_table(table, destination)
    else:
        sys.stdout.write(format_table(table))

    if args.markdown or args.compare:
        sections = []
        if args.markdown:
            sections.append(critical_values_markdown(table))
        if args.compare:
            sections.append("### Simulated minus published\n\n" + comparison_markdown(table))
        markdown = "\n".join(sections)
        _write(str(Path(destination).with_suffix(".md")) if destination else None, markdown)


def cmd_size(args: argparse.Namespace) -> None:
    specs = resolve_specs(args, STUDY_STATS)
    run = run_config(args, specs)
    plan = SimulationPlan(specs=specs, K_grid=args.K, alphas=args.alpha, B=args.B, master_seed=args.seed)
    engine = MonteCarloEngine(n_jobs=args.threads)

    table = _complete_table(_load_table(args.tables), plan, engine, args, run)
    report = size_study(
        table, plan, fresh_seed=args.fresh_seed, shared_samples=args.shared_samples, engine=engine
    )
    metadata = {**artifact_metadata(run), **report.metadata}
    _emit(args, frame_to_csv(study_frame(report), metadata), size_markdown(report) if args.markdown else None)


def cmd_power(args: argparse.Namespace) -> None:
    specs = resolve_specs(args, STUDY_STATS)
    run = run_config(args, specs)
    try:
        scenarios = [
            PowerScenario(K=K, tau=tau, theta1=theta1)
            for tau in args.tau
            for K in args.K
            for theta1 in args.theta1
        ]
    except ValidationError as e:
        raise InputError(f"Invalid scenario: {e.errors()[0]['msg']}") from e
    plan = SimulationPlan(specs=specs, K_grid=args.K, alphas=args.alpha, B=args.B, master_seed=args.seed)
    engine = MonteCarloEngine(n_jobs=args.threads)

    table = _complete_table(_load_table(args.tables), plan, engine, args, run)
    report = power_study(table, scenarios, specs, args.alpha, args.B, args.seed, engine=engine)
    metadata = {**artifact_metadata(run), **report.metadata}
    _emit(args, frame_to_csv(study_frame(report), metadata), power_markdown(report) if args.markdown else None)


def _single_spec(args: argparse.Namespace) -> tuple[StatisticSpec, float]:
    specs = resolve_specs(args, SERIES_STATS)
    if len(specs) != 1:
        raise InputError(f"{args.command} needs exactly one statistic, got {len(specs)}")
    if len(args.alpha) != 1:
        raise InputError(f"{args.command} needs exactly one --alpha")
    return specs[0], args.alpha[0]


def _persist_source(source: CriticalValueSource, args: argparse.Namespace, run: RunConfig) -> None:
    if source.simulated and args.tables:
        table = source.table
        if not table.metadata:
            table = CriticalValueTable(
                entries=table.entries, warnings=table.warnings, metadata=artifact_metadata(run)
            )
        write_table(table, args.tables)


def _segmentation_config(args: argparse.Namespace, spec: StatisticSpec, alpha: float) -> SegmentationConfig:
    extra = {}
    if args.command == "segment":
        extra = {"min_segment": args.min_segment, "max_depth": args.max_depth}
    return SegmentationConfig(
        spec=spec,
        alpha=alpha,
        simulate_on_demand=args.simulate_tables,
        B=args.B,
        seed=args.seed,
        lookup_policy=LookupPolicy.NEAREST_K_WARN if args.nearest_k else LookupPolicy.EXACT,
        **extra,
    )


def cmd_detect(args: argparse.Namespace) -> None:
    spec, alpha = _single_spec(args)
    run = run_config(args, [spec])
    sample = read_series(args.input)
    source = CriticalValueSource(
        _segmentation_config(args, spec, alpha),
        table=_load_table(args.tables),
        engine=MonteCarloEngine(n_jobs=args.threads),
    )

    result = evaluate(sample, spec)
    critical_value, provenance = source.critical_value(sample.K)
    means = prefix_means(sample)
    report = DetectionReport(
        tool_version=config.APP_VERSION,
        config=run.echo(),
        statistic=spec,
        label=spec.label,
        K=sample.K,
        max_value=result.max_value,
        k_hat=result.k_hat,
        critical_value=critical_value,
        provenance=provenance,
        asymptotic_critical_value=asymptotic_critical_value(spec, sample.K, alpha),
        reject=result.max_value > critical_value,
        theta_hat_before=1.0 / means.head(result.k_hat),
        theta_hat_after=1.0 / means.tail(result.k_hat),
        profile=result.per_k if args.profile else None,
    )
    set_span_attribute("detect.reject", report.reject)
    _persist_source(source, args, run)
    _write(args.out, to_json(report))


def cmd_segment(args: argparse.Namespace) -> None:
    spec, alpha = _single_spec(args)
    run = run_config(args, [spec])
    sample = read_series(args.input)
    seg_config = _segmentation_config(args, spec, alpha)
    source = CriticalValueSource(
        seg_config, table=_load_table(args.tables), engine=MonteCarloEngine(n_jobs=args.threads)
    )

    change_points = binary_segment(sample, seg_config, source)
    _persist_source(source, args, run)
    report = SegmentationReport(
        tool_version=config.APP_VERSION, config=run.echo(), change_points=change_points
    )
    _write(args.out, to_json(report))


COMMANDS: dict[str, Callable[[argparse.Namespace], None]] = {
    "critvals": cmd_critvals,
    "size": cmd_size,
    "power": cmd_power,
    "detect": cmd_detect,
    "segment": cmd_segment,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 for --help
        return e.code if isinstance(e.code, int) else EXIT_INPUT

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    instrument_logging()

    try:
        with TracedOperation(f"cli_{args.command}", {"component": "cli"}):
            COMMANDS[args.command](args)
        return EXIT_OK
    except MissingCriticalValueError as e:
        logger.error(f"Missing critical values: {e}")
        return EXIT_MISSING_TABLE
    except (InputError, ValidationError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_INPUT
    except Exception as e:
        logger.exception(f"Internal failure in {args.command}: {e}")
        return EXIT_INTERNAL
