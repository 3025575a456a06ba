"""
Main entry point for the tcsim command-line utility.
"""

import argparse
import dataclasses
import logging
import sys
from typing import Callable, Dict, List, Optional

from tcsim import __version__
from tcsim.chanbench import BenchConfig, ChannelMatrix, resolve_seed, run_bench
from tcsim.config import Config, load_config
from tcsim.errors import ConfigError, MatrixFormatError, PadOverrunError, TcsimError
from tcsim.fence import (
    FenceConfig,
    FenceStep,
    FenceVariant,
    adversarial_state,
    parse_variant,
    run_fence,
    worst_case_raw_cycles,
)
from tcsim.formatter import ReportFormatter
from tcsim.kernel import parse_component
from tcsim.leakage import detect
from tcsim.matrix_io import matrix_from_csv, matrix_to_csv, matrix_to_pgm
from tcsim.overhead import make_workload, parse_workload_kind, run_overhead, sweep, sweep_csv
from tcsim.uarch.state import ArchState
from tcsim.utils import atomic_write, format_units

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_PAD_OVERRUN = 3
EXIT_LEAKY = 10

MITIGATION_CHOICES = [variant.value for variant in FenceVariant if variant is not FenceVariant.CUSTOM]
COMPONENT_CHOICES = ["l1d", "l1i", "bht", "rat"]
WORKLOAD_CHOICES = ["pointer_chase", "streaming", "branch_heavy", "mixed"]


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def fence_from_args(args: argparse.Namespace, config: Config) -> FenceConfig:
    """Apply --mitigation, --pad and --no-pad on top of the configured fence."""
    fence = config.fence
    if getattr(args, "mitigation", None):
        fence = FenceConfig(parse_variant(args.mitigation), fence.pad_target)
    if getattr(args, "pad", None) is not None:
        fence = dataclasses.replace(fence, pad_target=args.pad)
    if getattr(args, "no_pad", False) and fence.pad_enabled:
        steps = [step for step in fence.steps if step is not FenceStep.PAD]
        fence = FenceConfig.custom(steps, fence.pad_target)
    worst_case_raw_cycles(fence, config.uarch)
    return fence


def draw_seed(args: argparse.Namespace, config: Config) -> int:
    """--seed, then the configured seed, then fresh entropy (reported on stderr)."""
    if args.seed is not None:
        return args.seed
    if config.seed is not None:
        return config.seed
    seed = resolve_seed(None)
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def emit(data, out: Optional[str]) -> None:
    """Write a result atomically to --out, or to stdout."""
    if out:
        atomic_write(out, data)
    elif isinstance(data, bytes):
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        sys.stdout.write(data)


def read_matrix(path: str) -> ChannelMatrix:
    try:
        with open(path, encoding="ascii", newline="") as stream:
            text = stream.read()
    except OSError as error:
        raise ConfigError(f"cannot read matrix {path}: {error.strerror}") from None
    except UnicodeDecodeError:
        raise MatrixFormatError(f"{path} is not an ASCII CSV file") from None
    return matrix_from_csv(text)


def cmd_channel(args: argparse.Namespace, config: Config) -> int:
    settings = config.bench
    bench = BenchConfig(
        component=parse_component(args.component or settings.component),
        secret_count=args.secrets if args.secrets is not None else settings.secret_count,
        samples_per_secret=args.samples if args.samples is not None else settings.samples_per_secret,
        mitigation=fence_from_args(args, config),
        seed=draw_seed(args, config),
        noise_cycles=args.noise if args.noise is not None else settings.noise_cycles,
        observe_switch=args.observe_switch or settings.observe_switch,
        workers=args.workers if args.workers is not None else settings.workers,
        bucket_width=args.bucket if args.bucket is not None else settings.bucket_width,
        uarch=config.uarch,
    )
    matrix = run_bench(bench)
    emit(matrix_to_csv(matrix), args.out)

    summary = ReportFormatter().channel_summary(matrix, bench)
    print(summary, file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace, config: Config) -> int:
    matrix = read_matrix(args.matrix)
    trials = args.trials if args.trials is not None else config.leakage.trials
    confidence = args.confidence if args.confidence is not None else config.leakage.confidence
    report = detect(matrix, trials, confidence, draw_seed(args, config))

    rendered = ReportFormatter().json_report(report.to_dict())
    if args.out:
        atomic_write(args.out, rendered)
    sys.stdout.write(rendered)
    return EXIT_LEAKY if report.leaky else EXIT_OK


def cmd_overhead(args: argparse.Namespace, config: Config) -> int:
    settings = config.overhead
    fence = fence_from_args(args, config)
    kind = parse_workload_kind(args.workload) if args.workload else settings.workload
    working_set = args.working_set if args.working_set is not None else settings.working_set
    workload = make_workload(kind, config.uarch, working_set, draw_seed(args, config))
    total_slices = args.slices if args.slices is not None else settings.total_slices
    scale = args.scale if args.scale is not None else settings.scale
    fence_every = args.fence_every if args.fence_every is not None else settings.fence_every

    if args.sweep:
        lengths = parse_sweep(args.sweep)
        reports = sweep(workload, lengths, fence, total_slices, scale, fence_every, config.uarch)
        emit(sweep_csv(reports), args.out)
        return EXIT_OK

    slice_cycles = args.slice if args.slice is not None else settings.slice_cycles
    report = run_overhead(workload, slice_cycles, fence, total_slices, scale, fence_every, config.uarch)
    formatter = ReportFormatter()
    emit(formatter.json_report(report.to_dict()), args.out)
    print(formatter.overhead_summary(report, workload.name), file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def cmd_heatmap(args: argparse.Namespace, config: Config) -> int:
    matrix = read_matrix(args.matrix)
    if args.bucket:
        matrix = ChannelMatrix.from_counts(matrix.rows(), matrix.secret_count, args.bucket)
    emit(matrix_to_pgm(matrix), args.out)
    return EXIT_OK


def cmd_fence(args: argparse.Namespace, config: Config) -> int:
    """Run the configured fence once on the worst-case core and show its cost."""
    fence = fence_from_args(args, config)
    arch = ArchState()
    uarch = adversarial_state(config.uarch, arch)
    result = run_fence(arch, uarch, fence)

    pairs = [
        ("variant", fence.variant.value),
        ("steps", ", ".join(step.value for step in fence.steps) or "-"),
        ("pad target", format_units(fence.pad_target, "cycle") if fence.pad_enabled else "off"),
        ("worst-case bound", format_units(worst_case_raw_cycles(fence, config.uarch, check=False), "cycle")),
        ("adversarial raw", format_units(result.raw_cycles, "cycle")),
        ("returned", format_units(result.padded_cycles, "cycle")),
        ("corrupted", "yes" if result.corrupted else "no"),
    ]
    pairs.extend((f"  {name}", format_units(cost, "cycle")) for name, cost in result.step_costs.items())
    print(ReportFormatter().aligned(pairs))
    return EXIT_OK


def parse_sweep(value: str) -> List[int]:
    try:
        lengths = [int(item) for item in value.split(",") if item.strip()]
    except ValueError:
        raise ConfigError(f"--sweep expects comma-separated slice lengths, got {value!r}") from None
    if not lengths:
        raise ConfigError("--sweep needs at least one slice length")
    return lengths


COMMAND_TO_HANDLER: Dict[str, Callable[[argparse.Namespace, Config], int]] = {
    "channel": cmd_channel,
    "analyze": cmd_analyze,
    "overhead": cmd_overhead,
    "heatmap": cmd_heatmap,
    "fence": cmd_fence,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="JSON configuration (default: $TCSIM_CONFIG)")
    common.add_argument("--seed", type=int, help="RNG seed; drawn from entropy and printed when omitted")
    common.add_argument("--out", metavar="FILE", help="write the result here instead of stdout")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug")

    fence_flags = argparse.ArgumentParser(add_help=False)
    fence_flags.add_argument("--mitigation", choices=MITIGATION_CHOICES)
    fence_flags.add_argument("--pad", type=int, metavar="N", help="pad target in cycles")
    fence_flags.add_argument("--no-pad", action="store_true", help="run the fence steps without padding")

    parser = argparse.ArgumentParser(
        prog="tcsim",
        description="tcsim - temporal-fence timing-channel lab.",
        epilog="Examples:\n"
        "  tcsim channel --component l1d --mitigation none --seed 42 --out m.csv\n"
        "  tcsim analyze m.csv\n"
        "  tcsim overhead --workload mixed --slice 10000000 --pad 15000\n"
        "  tcsim heatmap m.csv --out m.pgm\n"
        "  tcsim fence --mitigation fence.t.s",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"tcsim {__version__}")
    commands = parser.add_subparsers(dest="command", metavar="command")

    channel = commands.add_parser("channel", parents=[common, fence_flags], help="run a trojan/spy bench")
    channel.add_argument("--component", choices=COMPONENT_CHOICES)
    channel.add_argument("--secrets", type=int, metavar="N")
    channel.add_argument("--samples", type=int, metavar="N", help="samples per secret")
    channel.add_argument("--noise", type=int, metavar="N", help="uniform jitter amplitude in cycles")
    channel.add_argument("--bucket", type=int, metavar="N", help="time bucket width in cycles")
    channel.add_argument("--observe-switch", action="store_true", help="spy also times the switch")
    channel.add_argument("--workers", type=int, metavar="N")

    analyze = commands.add_parser("analyze", parents=[common], help="compute M, M0 and the verdict")
    analyze.add_argument("matrix", help="channel-matrix CSV")
    analyze.add_argument("--trials", type=int, metavar="N", help="zero-leakage resamples")
    analyze.add_argument("--confidence", type=float, metavar="Q", help="quantile for M0")

    overhead = commands.add_parser("overhead", parents=[common, fence_flags], help="time-slicing overhead")
    overhead.add_argument("--workload", choices=WORKLOAD_CHOICES)
    overhead.add_argument("--working-set", type=int, metavar="N")
    overhead.add_argument("--slice", type=int, metavar="N", help="time slice in cycles")
    overhead.add_argument("--slices", type=int, metavar="N", help="foreground slices to simulate")
    overhead.add_argument("--scale", type=int, metavar="N", help="divide slice and pad by N")
    overhead.add_argument("--fence-every", type=int, metavar="N", help="fence every N-th switch")
    overhead.add_argument("--sweep", metavar="LIST", help="comma-separated slice lengths; emits CSV")

    heatmap = commands.add_parser("heatmap", parents=[common], help="render a matrix as PGM")
    heatmap.add_argument("matrix", help="channel-matrix CSV")
    heatmap.add_argument("--bucket", type=int, metavar="N", help="time bucket width in cycles")

    commands.add_parser("fence", parents=[common, fence_flags], help="cost of one worst-case fence")
    return parser


def main(argv: Optional[List[str]] = None) -> None:
    """
    Main entry point for the tcsim CLI application.

    Exit codes: 0 success or no leak, 2 configuration error, 3 pad overrun,
    10 leak detected, 1 any other failure.
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(EXIT_ERROR)

    configure_logging(args.verbose)
    try:
        config = load_config(args.config)
        code = COMMAND_TO_HANDLER[args.command](args, config)
    except MatrixFormatError as error:
        print(f"Error: malformed matrix: {error}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)
    except ConfigError as error:
        print(f"Error: {error}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)
    except PadOverrunError as error:
        print(f"Error: {error}", file=sys.stderr)
        sys.exit(EXIT_PAD_OVERRUN)
    except TcsimError as error:
        print(f"Error: {error}", file=sys.stderr)
        sys.exit(EXIT_ERROR)
    sys.exit(code)


if __name__ == "__main__":
    main()
