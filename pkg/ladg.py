# -*- coding: utf-8 -*-

import argparse
import sys

import ladgpy.cli
from ladgpy.config import (
    ACCEPTANCE_ENV_VAR,
    METHODS,
    OUTPUT_DIR_ENV_VAR,
    SPLITS,
    TASK_KINDS,
)
from ladgpy.errors import ConfigurationError, LadgError


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per ladgpy.cli command"""

    parser = argparse.ArgumentParser(
        prog="ladg",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description=r"""
  _      _   ___   ___
 | |    /_\ |   \ / __|   localized adversarial
 | |__ / _ \| |) | (_ |   domain generalization
 |____/_/ \_\___/ \___|   on toy multi-domain data

    Train ERM, DANN or LADG, evaluate checkpoints, and inspect label
    propagation and feature-space compactness.
    """,
        epilog=f"runs are written under ${OUTPUT_DIR_ENV_VAR} unless --out is "
        + f"given; set {ACCEPTANCE_ENV_VAR}=1 to run the long test studies",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    # synth
    synth = commands.add_parser("synth", help="generate a dataset CSV")
    synth.add_argument(
        "--generator", choices=("moons", "gaussians"), required=True
    )
    synth.add_argument("--out", type=str, required=True, metavar="PATH")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--n-per-domain", type=int)
    synth.add_argument(
        "--angles",
        type=float,
        nargs="+",
        help="moons: rotation of each domain in degrees",
    )
    synth.add_argument("--noise-sd", type=float)
    synth.add_argument("--n-ood", type=int, help="held-out domains")
    synth.add_argument("--val-fraction", type=float)
    synth.add_argument("--n-classes", type=int)
    synth.add_argument("--n-domains", type=int)
    synth.add_argument("--class-sep", type=float)
    synth.add_argument("--domain-shift-scale", type=float)
    synth.add_argument("--n-features", type=int)
    synth.add_argument(
        "--task-kind", choices=TASK_KINDS, default="classification"
    )
    synth.add_argument("--collapsed-pairs", action="store_true")
    synth.set_defaults(func=ladgpy.cli.cmd_synth)

    # train
    train = commands.add_parser("train", help="train one method")
    _add_config_flags(train)
    train.add_argument("--method", choices=METHODS)
    train.add_argument(
        "--data",
        type=str,
        metavar="CSV",
        help="dataset CSV, defaults to rotated moons with the run seed",
    )
    train.add_argument("--out", type=str, metavar="DIR")
    train.add_argument("--dump-interval", type=int, dest="dump_interval")
    train.set_defaults(func=ladgpy.cli.cmd_train)

    # eval
    evaluate = commands.add_parser("eval", help="evaluate a checkpoint")
    evaluate.add_argument("--checkpoint", type=str, required=True, metavar="DIR")
    evaluate.add_argument("--data", type=str, required=True, metavar="CSV")
    evaluate.add_argument("--split", choices=SPLITS, default="ood")
    evaluate.add_argument("--task-kind", choices=TASK_KINDS)
    evaluate.add_argument("--out", type=str, metavar="PATH")
    evaluate.add_argument(
        "--embedding",
        type=str,
        metavar="CSV",
        help="write a 2-D PCA embedding of the split's features",
    )
    evaluate.set_defaults(func=ladgpy.cli.cmd_eval)

    # propagate
    propagate = commands.add_parser(
        "propagate", help="domain probabilities of a feature CSV"
    )
    propagate.add_argument("--features", type=str, required=True)
    propagate.add_argument("--alpha", type=float, default=0.8)
    propagate.add_argument("--tau", type=float, default=2.0)
    propagate.add_argument("--k", type=int, default=10)
    propagate.add_argument("--iterative", action="store_true")
    propagate.add_argument("--max-steps", type=int)
    propagate.add_argument("--leave-one-out", action="store_true")
    propagate.add_argument("--no-symmetrize", action="store_true")
    propagate.add_argument("--domain-column", type=str, default="domain")
    propagate.add_argument("--out", type=str, required=True, metavar="CSV")
    propagate.set_defaults(func=ladgpy.cli.cmd_propagate)

    # compactness
    compactness = commands.add_parser(
        "compactness", help="V_k, R and R_C of features"
    )
    compactness.add_argument("--features", type=str, metavar="CSV")
    compactness.add_argument(
        "--labels", type=str, metavar="COLUMN", help="class label column"
    )
    compactness.add_argument("--epsilon", type=float, default=0.5)
    compactness.add_argument("--k", type=int, default=10)
    compactness.add_argument(
        "--series",
        type=str,
        metavar="DIR",
        help="run directory or directory of step_<n>.csv feature dumps",
    )
    compactness.add_argument("--series-out", type=str, metavar="CSV")
    compactness.add_argument("--out", type=str, metavar="PATH")
    compactness.set_defaults(func=ladgpy.cli.cmd_compactness)

    # plot
    plot = commands.add_parser("plot", help="plot one metric of runs")
    plot.add_argument("runs", nargs="+", help="run directories or jsonl files")
    plot.add_argument("--field", type=str, default="r")
    plot.add_argument("--phase", type=str)
    plot.add_argument("--title", type=str)
    plot.add_argument("--out", type=str, required=True, metavar="PNG")
    plot.add_argument(
        "--csv", type=str, metavar="CSV", help="also write the plotted series"
    )
    plot.set_defaults(func=ladgpy.cli.cmd_plot)

    # summary
    summary = commands.add_parser("summary", help="xlsx comparison of runs")
    summary.add_argument("runs", nargs="+")
    summary.add_argument("--out", type=str, required=True, metavar="XLSX")
    summary.set_defaults(func=ladgpy.cli.cmd_summary)

    # experiment
    experiment = commands.add_parser(
        "experiment", help="collapse or local-mixing study"
    )
    experiment.add_argument("study", choices=("collapse", "mixing"))
    _add_config_flags(experiment)
    experiment.add_argument("--seeds", type=int, default=5)
    experiment.add_argument("--out", type=str, metavar="DIR")
    experiment.set_defaults(func=ladgpy.cli.cmd_experiment)

    return parser


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """TrainConfig file plus the flags that override it"""
    parser.add_argument("--config", type=str, metavar="PATH")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--total-steps", type=int)
    parser.add_argument("--pretrain-steps", type=int)
    parser.add_argument("--lambda", type=float, dest="lam")
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--k-nn", type=int)
    parser.add_argument("--progress", action="store_true")


def main(argv: list[str] | None = None) -> int:
    """Parse, dispatch, and map failures to exit codes

    Returns:
        int: 0 on success, 1 on a runtime error, 2 on a usage or
            configuration error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    if (
        args.command == "compactness"
        and args.features is None
        and args.series is None
    ):
        parser.print_usage(sys.stderr)
        print("Error: compactness needs --features or --series", file=sys.stderr)
        return 2

    try:
        args.func(args)
    except ConfigurationError as exc:
        for problem in exc.problems:
            print(f"Error: {problem}", file=sys.stderr)
        return 2
    except (LadgError, OSError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
