"""
Command-line interface.

    leap-prune train   --config run.json [--method M] [--profile P] [--target-density R] ...
    leap-prune report  --checkpoint runs/leap/checkpoint.bin [--csv densities.csv]
    leap-prune sweep   --config run.json --axis temperature --values 16,32,48,64
    leap-prune teacher --config run.json

Results go to stdout as JSON (or a table for `report`); failures print
`{"error", "message", "field", "line"}` as JSON on stderr and exit with status 1
(2 for usage errors).
"""

import sys
import json
import argparse
from typing import NoReturn

from .          import (
    __title__,
    __license__,
    __copyright__,
    __display_version__,
    errors
)
from .config    import load_config
from .constants import granularity_profiles, methods, sweep_axes
from .report    import report_layer_densities, sweep
from .trainer   import run_training, train_teacher

def main(args: argparse.Namespace) -> None:
    if args.version:
        print(__display_version__)
    elif args.information:
        print(__display_version__)
        print(__copyright__)
        print("License: " + __license__)
    else:
        parser.print_usage()

def _print_json(data: object) -> None:
    print(json.dumps(data, indent=2))

def train_subcommand(args: argparse.Namespace) -> None:
    config = load_config(args.config).override(
        method = args.method,
        profile = args.profile,
        target_density = args.target_density,
        temperature = args.temperature,
        lambda_max = args.lambda_max,
        lambda_min = args.lambda_min,
        alpha = args.alpha,
        epochs = args.epochs,
        seed = args.seed,
        out = args.out,
        progress = True if args.progress else None
    )
    _print_json(run_training(config, debug=args.debug))

def report_subcommand(args: argparse.Namespace) -> None:
    report = report_layer_densities(args.checkpoint)
    print(report.rows.to_string(index=False))
    print()
    print(report.groups.to_string(index=False))
    print(f"\noverall density: {report.overall:.6f}")
    if args.csv:
        rows_path, groups_path = report.to_csv(args.csv)
        print(f"written: {rows_path}, {groups_path}")

def sweep_subcommand(args: argparse.Namespace) -> None:
    config = load_config(args.config).override(out=args.out, progress=True if args.progress else None)
    frame = sweep(config, args.axis, args.values, debug=args.debug)
    print(frame.to_csv(index=False), end="")

def teacher_subcommand(args: argparse.Namespace) -> None:
    config = load_config(args.config).override(out=args.out, seed=args.seed)
    _, summary = train_teacher(config, debug=args.debug)
    _print_json(summary)

class ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as `UsageError` so they get the JSON payload too."""

    def error(self, message: str) -> NoReturn:
        raise errors.UsageError(f"{self.prog}: {message}")

parser = ArgumentParser(
    prog = __title__,
    description = f"{__display_version__}\n"
                  f"{__copyright__}\n"
                  f"License: {__license__}",
    allow_abbrev = False,
    formatter_class = argparse.RawDescriptionHelpFormatter
)

parser.add_argument(
    "-V", "--version",
    action = "store_true",
    help = "display the version and exit"
)

parser.add_argument(
    "-I", "--information",
    action = "store_true",
    help = "display program information and exit"
)

parser.set_defaults(func=main)
subparser = parser.add_subparsers(help="subcommands")

def _common(command: argparse.ArgumentParser) -> None:
    command.add_argument(
        "-d", "--debug",
        action = "store_true",
        help = "print debug logs"
    )

train = subparser.add_parser(
    "train",
    prog = "train",
    description = "prune a model as described by a JSON run configuration",
    allow_abbrev = False
)

train.add_argument("-c", "--config", required=True, help="Path to the JSON run configuration")
train.add_argument("--method", choices=methods, help="Pruning method")
train.add_argument("--profile", choices=tuple(granularity_profiles), help="Block granularity profile")
train.add_argument("--target-density", type=float, help="Target remaining ratio R_target")
train.add_argument("--temperature", type=float, help="Threshold temperature T")
train.add_argument("--lambda-max", type=float, help="Upper bound of the adaptive lambda")
train.add_argument("--lambda-min", type=float, help="Lower bound of the adaptive lambda")
train.add_argument("--alpha", type=float, help="Weight of the distillation term")
train.add_argument("--epochs", type=int, help="Number of training epochs")
train.add_argument("--seed", type=int, help="Random seed")
train.add_argument("-o", "--out", help="Output directory")
train.add_argument("--progress", action="store_true", help="Show a progress bar")
_common(train)
train.set_defaults(func=train_subcommand)

report = subparser.add_parser(
    "report",
    prog = "report",
    description = "per-matrix density table of a checkpoint, grouped MHA vs FC per layer",
    allow_abbrev = False
)

report.add_argument("-k", "--checkpoint", required=True, help="Path to checkpoint.bin")
report.add_argument("--csv", help="Also write the tables as CSV (rows and <stem>_groups.csv)")
report.set_defaults(func=report_subcommand)

sweep_parser = subparser.add_parser(
    "sweep",
    prog = "sweep",
    description = "one training run per value of a configuration field",
    allow_abbrev = False
)

sweep_parser.add_argument("-c", "--config", required=True, help="Path to the template run configuration")
sweep_parser.add_argument("--axis", required=True, choices=sweep_axes, help="Field to sweep")
sweep_parser.add_argument("--values", required=True, help="Comma-separated values, e.g. 16,32,48,64")
sweep_parser.add_argument("-o", "--out", help="Output directory of the sweep")
sweep_parser.add_argument("--progress", action="store_true", help="Show progress bars")
_common(sweep_parser)
sweep_parser.set_defaults(func=sweep_subcommand)

teacher = subparser.add_parser(
    "teacher",
    prog = "teacher",
    description = "train the dense teacher used for distillation",
    allow_abbrev = False
)

teacher.add_argument("-c", "--config", required=True, help="Path to the JSON run configuration")
teacher.add_argument("--seed", type=int, help="Random seed")
teacher.add_argument("-o", "--out", help="Output directory")
_common(teacher)
teacher.set_defaults(func=teacher_subcommand)

def _fail(error: Exception, status: int = 1) -> NoReturn:
    print(json.dumps(errors.error_payload(error)), file=sys.stderr)
    sys.exit(status)

def parse(argv: list[str] | None = None) -> None:
    try:
        args = parser.parse_args(argv)
    except errors.UsageError as e:
        _fail(e, status=2)
    try:
        args.func(args)
    except errors.BaseException as e:
        _fail(e)
    except OSError as e:
        target = f" '{e.filename}'" if e.filename else ""
        _fail(errors.FileAccessError(f"cannot access{target}: {e.strerror or e}"))

if __name__ == "__main__":
    parse()
