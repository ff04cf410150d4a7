# -*- coding: utf-8 -*-

"""reports.py
Desc: Plot-ready series, compactness plots, run summary workbooks and 2-D
embeddings of evaluated features
"""

import csv
import io
import logging
import os
from typing import Any, Sequence

import numpy as np
import openpyxl
from openpyxl.styles import Font
from PIL import Image

from .errors import DegenerateInputError, SchemaError

logger = logging.getLogger(__name__)

SERIES_FIELDS = (
    "l_t",
    "l_dom",
    "l_prior",
    "l_cr",
    "r",
    "r_bar",
    "r_c",
    "v_k",
    "mixing_entropy",
    "train_metric",
    "val_metric",
    "ood_metric",
)

SUMMARY_COLUMNS = (
    "run",
    "method",
    "steps",
    "val_metric",
    "ood_metric",
    "ood_worst_group",
    "ood_mixing_entropy",
    "pretrain_r",
    "final_r",
    "r_drift",
)


def training_records(records: Sequence[dict[str, Any]]) -> list[dict]:
    """Per-step records of a metrics stream, evaluation records dropped"""
    return [record for record in records if record.get("kind") == "train"]


def eval_records(records: Sequence[dict[str, Any]]) -> dict[str, dict]:
    """Final evaluation records keyed by split"""
    return {
        record["split"]: record
        for record in records
        if record.get("kind") == "eval"
    }


def extract_series(
    records: Sequence[dict[str, Any]], field: str, phase: str | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Steps and values of one field; missing values become NaN

    Raises:
        SchemaError: The field is not a logged metric
    """
    if field not in SERIES_FIELDS:
        raise SchemaError(
            f"unknown metric '{field}', expected one of {SERIES_FIELDS}"
        )
    rows = [
        record
        for record in training_records(records)
        if phase is None or record["phase"] == phase
    ]
    steps = np.array([record["step"] for record in rows], dtype=np.int64)
    values = np.array(
        [
            np.nan if record.get(field) is None else record[field]
            for record in rows
        ],
        dtype=np.float64,
    )
    return steps, values


def pretraining_end(records: Sequence[dict[str, Any]]) -> int | None:
    """Step of the first adversarial record, None for ERM runs"""
    for record in training_records(records):
        if record["phase"] == "adversarial":
            return int(record["step"])
    return None


def rate_drift(records: Sequence[dict[str, Any]]) -> dict[str, Any]:
    """Relative change of R(H) after pretraining

    The reference is the mean R over the logged pretraining records (the
    first fifth of the run for ERM). `max_drop` is the largest relative fall
    below it, `max_rise` the largest rise, `final` the relative change of
    the last record.
    """
    steps, rates = extract_series(records, "r")
    if rates.size == 0:
        raise DegenerateInputError("no logged coding rates")
    boundary = pretraining_end(records)
    if boundary is None:
        phases = {record["phase"] for record in training_records(records)}
        if phases != {"erm"}:
            raise DegenerateInputError(
                "run stopped before its adversarial phase, no drift to report"
            )
        boundary = int(steps[max(1, steps.size // 5) - 1]) + 1
    before, after = rates[steps < boundary], rates[steps >= boundary]
    if before.size == 0 or after.size == 0:
        raise DegenerateInputError(
            "coding-rate drift needs records on both sides of step "
            + f"{boundary}"
        )
    reference = float(before.mean())
    relative = (after - reference) / reference
    return {
        "reference": reference,
        "boundary": boundary,
        "final": float(relative[-1]),
        "max_drop": float(max(0.0, -relative.min())),
        "max_rise": float(max(0.0, relative.max())),
    }


def write_series_csv(
    path: str,
    runs: dict[str, Sequence[dict[str, Any]]],
    fields: Sequence[str] = SERIES_FIELDS,
    phase: str | None = None,
) -> None:
    """Tidy `run,step,phase,<fields>` table of the training records of
    several runs

    Raises:
        SchemaError: A field is not a logged metric
    """
    unknown = [field for field in fields if field not in SERIES_FIELDS]
    if unknown:
        raise SchemaError(f"unknown metrics {unknown}")
    with open(path, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(["run", "step", "phase"] + list(fields))
        for name, records in runs.items():
            for record in training_records(records):
                if phase is not None and record["phase"] != phase:
                    continue
                writer.writerow(
                    [name, record["step"], record["phase"]]
                    + [
                        ""
                        if record.get(field) is None
                        else repr(record[field])
                        for field in fields
                    ]
                )
    logger.debug("Wrote %s of %d runs to %s", list(fields), len(runs), path)


def plot_series(
    series: dict[str, tuple[np.ndarray, np.ndarray]],
    title: str,
    ylabel: str,
    boundary: int | None = None,
    path: str | None = None,
    show_plot: bool = False,
) -> Image.Image:
    """Line plot of one metric for several runs

    Args:
        series (dict[str, tuple[np.ndarray, np.ndarray]]):
            Label -> (steps, values), NaN values are skipped
        title (str): Plot title
        ylabel (str): y-axis label
        boundary (int | None, optional): Step where pretraining ended, drawn
            as a vertical line. Defaults to None.
        path (str | None, optional): Also save the PNG here. Defaults to None.
        show_plot (bool, optional): Show plot when done. Defaults to False.

    Returns:
        Image.Image: The plot as a PNG image
    """
    import matplotlib

    if not show_plot:
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots()
    ax.set_title(title)
    ax.set_xlabel("Step")
    ax.set_ylabel(ylabel)
    ax.grid()

    for label, (steps, values) in series.items():
        mask = np.isfinite(values)
        ax.plot(steps[mask], values[mask], label=label)
    if boundary is not None:
        ax.axvline(boundary, color="gray", linestyle="--", label="ADG starts")
    ax.legend()

    buff = io.BytesIO()
    fig.savefig(buff, format="PNG")
    buff.seek(0)

    if show_plot:
        plt.show()
    plt.close(fig)

    image = Image.open(buff)
    if path is not None:
        image.save(path)
        logger.info("Plot written: %s", path)
    return image


def summary_row(name: str, records: Sequence[dict[str, Any]]) -> dict:
    """One Summary-sheet row of a run's metrics stream"""
    train = training_records(records)
    evals = eval_records(records)
    row: dict[str, Any] = {column: None for column in SUMMARY_COLUMNS}
    row["run"] = name
    if train:
        row["method"] = train[-1]["method"]
        row["steps"] = train[-1]["step"]
        row["final_r"] = train[-1]["r"]
    if "val" in evals:
        row["val_metric"] = evals["val"]["metric"]
    if "ood" in evals:
        row["ood_metric"] = evals["ood"]["metric"]
        row["ood_worst_group"] = evals["ood"]["worst_group"]
        row["ood_mixing_entropy"] = evals["ood"]["mixing_entropy"]
    try:
        drift = rate_drift(records)
        row["pretrain_r"] = drift["reference"]
        row["r_drift"] = drift["final"]
    except DegenerateInputError as exc:
        logger.debug("No drift for %s: %s", name, exc)
    return row


def write_summary_workbook(
    path: str, runs: dict[str, Sequence[dict[str, Any]]]
) -> str:
    """Workbook with a Summary sheet and one metric-series sheet per run

    Args:
        path (str): Target .xlsx path
        runs (dict[str, Sequence[dict[str, Any]]]): Run name -> records of
            its metrics.jsonl

    Returns:
        str: The path written
    """
    workbook = openpyxl.Workbook()
    worksheet = workbook.active
    worksheet.title = "Summary"

    for j, column in enumerate(SUMMARY_COLUMNS):
        cell = worksheet.cell(row=1, column=1 + j, value=column)
        cell.font = Font(bold=True)
    for i, (name, records) in enumerate(runs.items()):
        row = summary_row(name, records)
        for j, column in enumerate(SUMMARY_COLUMNS):
            worksheet.cell(row=2 + i, column=1 + j, value=row[column])

    for name, records in runs.items():
        # sheet titles are capped at 31 characters
        sheet = workbook.create_sheet(title=name[:31])
        header = ["step", "phase"] + list(SERIES_FIELDS)
        for j, column in enumerate(header):
            sheet.cell(row=1, column=1 + j, value=column).font = Font(bold=True)
        for i, record in enumerate(training_records(records)):
            for j, column in enumerate(header):
                sheet.cell(row=2 + i, column=1 + j, value=record.get(column))

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    workbook.save(path)
    logger.info("Summary workbook written: %s (%d runs)", path, len(runs))
    return path


"""Embeddings
"""


def pca_embedding(features: np.ndarray, n_components: int = 2) -> np.ndarray:
    """Project centered features on their leading principal axes

    Each axis is signed so its largest-magnitude loading is positive, which
    makes the output deterministic.

    Raises:
        DegenerateInputError: Fewer rows or columns than components

    Returns:
        np.ndarray: n x n_components coordinates
    """
    features = np.asarray(features, dtype=np.float64)
    n, d = features.shape
    if n < 2 or min(n, d) < n_components:
        raise DegenerateInputError(
            f"cannot take {n_components} components of a {n} x {d} matrix"
        )
    centered = features - features.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:n_components]
    signs = np.sign(axes[np.arange(n_components), np.abs(axes).argmax(axis=1)])
    signs[signs == 0.0] = 1.0
    return centered @ (axes * signs[:, None]).T


def write_embedding_csv(
    path: str,
    embedding: np.ndarray,
    labels: np.ndarray,
    domain_ids: np.ndarray,
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(
            [f"pc{i}" for i in range(embedding.shape[1])] + ["label", "domain"]
        )
        for row, label, domain in zip(embedding, labels, domain_ids):
            writer.writerow(
                [repr(float(value)) for value in row]
                + [label.item() if hasattr(label, "item") else label, domain]
            )
    logger.debug("Embedding written: %s", path)
