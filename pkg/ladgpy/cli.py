# -*- coding: utf-8 -*-

"""cli.py
Desc: Implementations of the `ladg.py` subcommands. Each takes the parsed
argparse namespace, prints a JSON summary to stdout and returns it.
"""

import argparse
import csv
import dataclasses
import datetime
import glob
import json
import logging
import os
import re
from typing import Any

import numpy as np

from . import __version__
from .compactness import compactness_report
from .config import TrainConfig, load_config, output_dir
from .data import (
    DomainDataset,
    TabularSchema,
    dump_tabular,
    gen_rotated_moons,
    gen_shifted_gaussians,
    load_tabular,
    read_feature_csv,
)
from .errors import CheckpointMismatchError, SchemaError
from .experiments import collapse_study, mixing_study
from .graph import build_affinity, knn_neighbors
from .labelprop import (
    default_max_steps,
    fixed_point_residual,
    propagate_closed_form,
    propagate_iterative,
)
from .losses import one_hot
from .model import load_checkpoint
from .reports import (
    extract_series,
    pca_embedding,
    plot_series,
    pretraining_end,
    write_embedding_csv,
    write_series_csv,
    write_summary_workbook,
)
from .trainer import Trainer, evaluate, read_metrics

logger = logging.getLogger(__name__)

# flag attribute -> TrainConfig field
TRAIN_OVERRIDES: dict[str, str] = {
    "method": "method",
    "seed": "seed",
    "total_steps": "total_steps",
    "pretrain_steps": "pretrain_steps",
    "lam": "lam",
    "gamma": "gamma",
    "alpha": "alpha",
    "k_nn": "k_nn",
    "dump_interval": "dump_interval",
    "progress": "progress",
}


def _print(summary: dict[str, Any]) -> None:
    print(json.dumps(summary, indent=2, sort_keys=True))


def _write_json(path: str, payload: dict[str, Any]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as json_file:
        json.dump(payload, json_file, indent=2, sort_keys=True)


def _timestamp() -> str:
    return datetime.datetime.now().strftime("%Y-%m-%d-%H-%M-%S")


def _metrics_path(path: str) -> str:
    """A run directory or a metrics file"""
    if os.path.isdir(path):
        return os.path.join(path, "metrics.jsonl")
    return path


def _run_name(path: str) -> str:
    path = os.path.normpath(path)
    if os.path.basename(path) == "metrics.jsonl":
        path = os.path.dirname(path)
    return os.path.basename(path)


"""Data
"""


def cmd_synth(args: argparse.Namespace) -> dict[str, Any]:
    """Generate a synthetic dataset CSV"""
    if args.generator == "moons":
        kwargs: dict[str, Any] = {"seed": args.seed}
        if args.n_per_domain is not None:
            kwargs["n_per_domain"] = args.n_per_domain
        if args.angles is not None:
            kwargs["domain_angles"] = args.angles
        if args.noise_sd is not None:
            kwargs["noise_sd"] = args.noise_sd
        if args.n_ood is not None:
            kwargs["n_ood"] = args.n_ood
        if args.val_fraction is not None:
            kwargs["val_fraction"] = args.val_fraction
        dataset = gen_rotated_moons(**kwargs)
    else:
        kwargs = {
            "seed": args.seed,
            "collapsed_pairs": args.collapsed_pairs,
            "task_kind": args.task_kind,
        }
        for flag, key in (
            ("n_per_domain", "n_per_domain"),
            ("n_classes", "n_classes"),
            ("n_domains", "n_domains"),
            ("class_sep", "class_sep"),
            ("domain_shift_scale", "domain_shift_scale"),
            ("n_features", "n_features"),
            ("noise_sd", "noise_sd"),
            ("n_ood", "n_ood_domains"),
            ("val_fraction", "val_fraction"),
        ):
            if getattr(args, flag) is not None:
                kwargs[key] = getattr(args, flag)
        dataset = gen_shifted_gaussians(**kwargs)

    dump_tabular(dataset, args.out)
    summary = {
        "out": args.out,
        "n": len(dataset),
        "n_features": dataset.n_features,
        "task_kind": dataset.task_kind,
        "train_domains": dataset.train_domains,
        "ood_domains": dataset.ood_domains,
        "descriptor": dataset.descriptor,
    }
    logger.info("Synthesized %s dataset: %s", args.generator, args.out)
    _print(summary)
    return summary


"""Training
"""


def resolve_train_config(
    args: argparse.Namespace,
) -> tuple[TrainConfig, list[str], dict[str, dict[str, Any]]]:
    """Config file (or defaults) with command-line flags applied on top

    Returns:
        tuple[TrainConfig, list[str], dict[str, dict[str, Any]]]:
            Effective config, defaulted keys, and per overridden key the
            file value and the flag value
    """
    if args.config is not None:
        config, defaulted = load_config(args.config)
    else:
        config = TrainConfig()
        defaulted = sorted(field.name for field in dataclasses.fields(config))

    overrides: dict[str, dict[str, Any]] = {}
    changes: dict[str, Any] = {}
    for flag, key in TRAIN_OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is None or (flag == "progress" and not value):
            continue
        overrides[key] = {"config": getattr(config, key), "flag": value}
        changes[key] = value
        if key in defaulted:
            defaulted.remove(key)
    if overrides:
        logger.info("Command-line overrides: %s", sorted(overrides))
    return dataclasses.replace(config, **changes), defaulted, overrides


def cmd_train(args: argparse.Namespace) -> dict[str, Any]:
    """Train one method and write manifest, metrics and checkpoint"""
    config, defaulted, overrides = resolve_train_config(args)

    if args.data is not None:
        dataset = load_tabular(
            args.data, TabularSchema(task_kind=config.task_kind)
        )
    else:
        dataset = gen_rotated_moons(seed=config.seed)

    out_dir = (
        args.out
        if args.out is not None
        else os.path.join(output_dir, f"{config.method}_{_timestamp()}")
    )
    trainer = Trainer(dataset, config, out_dir)
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "version": __version__,
            "config": config.to_dict(),
            "defaulted": defaulted,
            "overrides": overrides,
            "dataset": dataset.descriptor,
        },
    )
    result = trainer.run()

    summary = {
        "out": out_dir,
        "method": config.method,
        "steps": config.total_steps,
        "evaluations": {
            split: {
                "metric_name": report["metric_name"],
                "metric": report["metric"],
                "worst_group": report["worst_group"],
                "mixing_entropy": report["mixing_entropy"],
            }
            for split, report in result.evaluations.items()
        },
    }
    _print(summary)
    return summary


"""Evaluation
"""


def load_eval_dataset(
    path: str, manifest: dict[str, Any], task_kind: str | None = None
) -> DomainDataset:
    """Read a dataset CSV and check it against the checkpoint

    Labels are read as reals first; a classification checkpoint then needs
    integer labels below its class count.

    Raises:
        CheckpointMismatchError: Task kind, input width or class count
            disagree with the checkpoint
    """
    expected = manifest.get("task_kind", "classification")
    if task_kind is not None and task_kind != expected:
        raise CheckpointMismatchError(
            f"task-kind mismatch: checkpoint is {expected}, "
            + f"requested {task_kind}"
        )
    dataset = load_tabular(path, TabularSchema(task_kind="regression"))
    if dataset.n_features != manifest["n_features"]:
        raise CheckpointMismatchError(
            f"dataset has {dataset.n_features} features, checkpoint expects "
            + f"{manifest['n_features']}"
        )
    if expected == "regression":
        return dataset

    labels = dataset.task_labels
    if not (np.all(labels == np.round(labels)) and np.all(labels >= 0)):
        raise CheckpointMismatchError(
            "task-kind mismatch: checkpoint is classification, dataset "
            + "labels are real-valued"
        )
    if labels.max() >= manifest["n_classes"]:
        raise CheckpointMismatchError(
            f"dataset has label {int(labels.max())}, checkpoint predicts "
            + f"{manifest['n_classes']} classes"
        )
    return DomainDataset(
        inputs=dataset.inputs,
        task_labels=labels.astype(np.int64),
        domain_ids=dataset.domain_ids,
        splits=dataset.splits,
        task_kind="classification",
        descriptor=dataset.descriptor,
    )


def cmd_eval(args: argparse.Namespace) -> dict[str, Any]:
    """Evaluate the featurizer and predictor of a checkpoint on one split"""
    models, manifest = load_checkpoint(
        args.checkpoint, ["featurizer", "predictor"]
    )
    dataset = load_eval_dataset(args.data, manifest, args.task_kind)
    report = evaluate(
        models,
        dataset,
        args.split,
        manifest.get("k_nn", TrainConfig.k_nn),
        manifest.get("epsilon", TrainConfig.epsilon),
    )

    if args.embedding is not None:
        subset = dataset.subset(args.split)
        features = models["featurizer"].forward(subset.inputs, frozen=True)
        write_embedding_csv(
            args.embedding,
            pca_embedding(features.value),
            subset.task_labels,
            subset.domain_ids,
        )
        report["embedding"] = args.embedding

    out = (
        args.out
        if args.out is not None
        else os.path.join(args.checkpoint, f"eval_{args.split}.json")
    )
    _write_json(out, report)
    _print(report)
    return report


"""Analysis
"""


def cmd_propagate(args: argparse.Namespace) -> dict[str, Any]:
    """Domain pseudo-probabilities of a feature CSV by label propagation"""
    features, _, domain_ids = read_feature_csv(
        args.features, label_column=None, domain_column=args.domain_column
    )
    if domain_ids is None:
        raise SchemaError(
            f"{args.features} has no '{args.domain_column}' column"
        )
    domains_seen = sorted(set(domain_ids.tolist()))
    column = {domain: i for i, domain in enumerate(domains_seen)}
    seeds = one_hot(
        np.array([column[d] for d in domain_ids.tolist()]), len(domains_seen)
    )

    neighbors = knn_neighbors(features, args.k)
    graph = build_affinity(
        features, neighbors, args.tau, symmetrize=not args.no_symmetrize
    )
    result = propagate_closed_form(
        graph, seeds, args.alpha, leave_one_out=args.leave_one_out
    )
    summary: dict[str, Any] = {
        "n": graph.n,
        "domains": domains_seen,
        "alpha": args.alpha,
        "tau": args.tau,
        "k": neighbors.k,
        "residual": fixed_point_residual(
            graph, seeds, args.alpha, result.r_star
        ),
        "iterative_gap": None,
        "iterative_steps": None,
    }
    if args.iterative:
        max_steps = (
            args.max_steps
            if args.max_steps is not None
            else default_max_steps(args.alpha)
        )
        iterated = propagate_iterative(graph, seeds, args.alpha, max_steps)
        summary["iterative_gap"] = float(
            np.abs(iterated.r_star.value - result.r_star.value).max()
        )
        summary["iterative_steps"] = iterated.steps

    with open(args.out, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow([f"p{domain}" for domain in domains_seen] + ["domain"])
        for row, domain in zip(result.probs.value, domain_ids):
            writer.writerow([repr(float(p)) for p in row] + [int(domain)])
    summary["out"] = args.out
    _print(summary)
    return summary


def _step_of(path: str) -> int:
    match = re.search(r"step_(\d+)\.csv$", path)
    if match is None:
        raise SchemaError(f"{path} is not a step_<n>.csv feature dump")
    return int(match.group(1))


def compactness_series(
    directory: str, epsilon: float, k: int, label_column: str | None
) -> list[dict[str, Any]]:
    """Compactness report of every `step_<n>.csv` dump, in step order"""
    features_dir = os.path.join(directory, "features")
    if os.path.isdir(features_dir):
        directory = features_dir
    paths = sorted(
        glob.glob(os.path.join(directory, "step_*.csv")), key=_step_of
    )
    if not paths:
        raise SchemaError(f"no step_<n>.csv feature dumps in {directory}")
    series = []
    for path in paths:
        features, labels, _ = read_feature_csv(
            path, label_column=label_column, domain_column=None
        )
        report = compactness_report(features, labels, epsilon, k).to_dict()
        series.append(dict(report, step=_step_of(path)))
    return series


def cmd_compactness(args: argparse.Namespace) -> dict[str, Any]:
    """V_k, R and R_C of a feature CSV, or a series over training dumps"""
    summary: dict[str, Any] = {}
    if args.features is not None:
        features, labels, _ = read_feature_csv(
            args.features, label_column=args.labels, domain_column=None
        )
        summary["report"] = compactness_report(
            features, labels, args.epsilon, args.k
        ).to_dict()

    if args.series is not None:
        series = compactness_series(
            args.series, args.epsilon, args.k, args.labels
        )
        series_out = (
            args.series_out
            if args.series_out is not None
            else os.path.join(args.series, "compactness_series.csv")
        )
        columns = ("step", "v_k", "coding_rate", "classwise_rate")
        with open(series_out, "w", encoding="utf-8", newline="") as csv_file:
            writer = csv.writer(csv_file, lineterminator="\n")
            writer.writerow(columns)
            for row in series:
                writer.writerow(
                    "" if row[column] is None else repr(row[column])
                    for column in columns
                )
        summary["series"] = series_out
        summary["series_steps"] = [row["step"] for row in series]

    if args.out is not None:
        _write_json(args.out, summary)
    _print(summary)
    return summary


"""Reports
"""


def cmd_plot(args: argparse.Namespace) -> dict[str, Any]:
    """One metric of several runs on a shared step axis"""
    series, runs = {}, {}
    boundary = None
    for run in args.runs:
        records = read_metrics(_metrics_path(run))
        runs[_run_name(run)] = records
        series[_run_name(run)] = extract_series(records, args.field, args.phase)
        if boundary is None:
            boundary = pretraining_end(records)
    plot_series(
        series,
        title=args.title if args.title is not None else args.field,
        ylabel=args.field,
        boundary=boundary,
        path=args.out,
    )
    if args.csv is not None:
        write_series_csv(args.csv, runs, fields=(args.field,), phase=args.phase)
    summary = {
        "out": args.out,
        "csv": args.csv,
        "runs": list(series),
        "field": args.field,
    }
    _print(summary)
    return summary


def cmd_summary(args: argparse.Namespace) -> dict[str, Any]:
    """Workbook comparing several runs"""
    runs = {
        _run_name(run): read_metrics(_metrics_path(run)) for run in args.runs
    }
    write_summary_workbook(args.out, runs)
    summary = {"out": args.out, "runs": list(runs)}
    _print(summary)
    return summary


def cmd_experiment(args: argparse.Namespace) -> dict[str, Any]:
    """Run the collapse or mixing study and write its JSON result"""
    config, _, _ = resolve_train_config(args)
    out_dir = (
        args.out
        if args.out is not None
        else os.path.join(output_dir, f"{args.study}_{_timestamp()}")
    )
    os.makedirs(out_dir, exist_ok=True)

    if args.study == "collapse":
        results = collapse_study(
            config=config, out_dir=out_dir, progress=args.progress
        )
        plot_series(
            {
                arm: extract_series(result["records"], "r")
                for arm, result in results.items()
            },
            title="Coding rate R(H)",
            ylabel="R(H)",
            boundary=config.pretrain_steps + 1,
            path=os.path.join(out_dir, "collapse_r.png"),
        )
        summary: dict[str, Any] = {
            arm: {
                key: value
                for key, value in result.items()
                if key != "records"
            }
            for arm, result in results.items()
        }
    else:
        summary = mixing_study(
            seeds=range(args.seeds),
            config=config,
            out_dir=out_dir,
            progress=args.progress,
        )

    _write_json(os.path.join(out_dir, f"{args.study}.json"), summary)
    _print(summary)
    return summary
