# -*- coding: utf-8 -*-

"""data.py
Desc: Synthetic multi-domain datasets and CSV ingestion.

All randomness comes from numpy's PCG64 bit generator seeded with the given
integer, so a (generator, parameters, seed) triple always yields the same
arrays. CSV layout: `f0..f{p-1},label,domain[,split]`.
"""

import csv
import logging
import math
from typing import Sequence

import numpy as np

from .config import SPLITS, TASK_KINDS
from .errors import (
    ConfigurationError,
    DataParseError,
    EmptySplitError,
    SchemaError,
)

logger = logging.getLogger(__name__)


class DomainDataset:
    """Inputs, task labels, domain ids and split tags of one dataset"""

    def __init__(
        self,
        inputs: np.ndarray,
        task_labels: np.ndarray,
        domain_ids: np.ndarray,
        splits: Sequence[str] | np.ndarray,
        task_kind: str = "classification",
        descriptor: dict | None = None,
    ) -> None:
        self.inputs: np.ndarray = np.asarray(inputs, dtype=np.float64)
        self.task_kind: str = task_kind
        self.task_labels: np.ndarray = (
            np.asarray(task_labels, dtype=np.int64)
            if task_kind == "classification"
            else np.asarray(task_labels, dtype=np.float64)
        )
        self.domain_ids: np.ndarray = np.asarray(domain_ids, dtype=np.int64)
        self.splits: np.ndarray = np.asarray(splits, dtype=object)
        self.descriptor: dict = descriptor if descriptor is not None else {}

        n = self.inputs.shape[0]
        assert task_kind in TASK_KINDS, f"unknown task kind {task_kind}"
        assert self.inputs.ndim == 2, "inputs must be n x p"
        assert self.task_labels.shape == (n,), "one task label per row"
        assert self.domain_ids.shape == (n,), "one domain id per row"
        assert self.splits.shape == (n,), "one split tag per row"
        assert set(self.splits.tolist()) <= set(SPLITS), "unknown split tag"
        assert not (
            set(self.train_domains) & set(self.ood_domains)
        ), "OOD domains must be disjoint from train domains"

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_classes(self) -> int:
        """Class count for classification, 1 output for regression"""
        if self.task_kind == "regression" or len(self) == 0:
            return 1
        return int(self.task_labels.max()) + 1

    @property
    def train_domains(self) -> list[int]:
        return sorted(set(self.domain_ids[self.splits == "train"].tolist()))

    @property
    def ood_domains(self) -> list[int]:
        return sorted(set(self.domain_ids[self.splits == "ood"].tolist()))

    def subset(self, split: str) -> "DomainDataset":
        """Rows tagged with `split`

        Raises:
            EmptySplitError: No row carries the tag
        """
        mask = self.splits == split
        if not mask.any():
            raise EmptySplitError(f"split '{split}' has no rows")
        return DomainDataset(
            inputs=self.inputs[mask],
            task_labels=self.task_labels[mask],
            domain_ids=self.domain_ids[mask],
            splits=self.splits[mask],
            task_kind=self.task_kind,
            descriptor=dict(self.descriptor, split=split),
        )

    def domain_rows(self, domain: int, split: str = "train") -> np.ndarray:
        return np.flatnonzero(
            (self.domain_ids == domain) & (self.splits == split)
        )


def _assign_splits(
    n_per_domain: int,
    is_ood: bool,
    val_fraction: float,
    rng: np.random.Generator,
) -> np.ndarray:
    if is_ood:
        return np.array(["ood"] * n_per_domain, dtype=object)
    splits = np.array(["train"] * n_per_domain, dtype=object)
    n_val = int(math.floor(n_per_domain * val_fraction))
    if n_val:
        splits[rng.permutation(n_per_domain)[:n_val]] = "val"
    return splits


def _moons(n_per_domain: int) -> tuple[np.ndarray, np.ndarray]:
    """Two interleaved half circles centered at the origin"""
    n_half = n_per_domain // 2
    t = np.linspace(0.0, np.pi, n_half)
    outer = np.column_stack([np.cos(t), np.sin(t)])
    inner = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    points = np.vstack([outer, inner]) - np.array([0.5, 0.25])
    labels = np.repeat([0, 1], n_half)
    return points, labels


def rotation(degrees: float) -> np.ndarray:
    theta = np.deg2rad(degrees)
    return np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )


def gen_rotated_moons(
    n_per_domain: int = 200,
    domain_angles: Sequence[float] = (0.0, 20.0, 40.0, 60.0, 80.0),
    noise_sd: float = 0.1,
    seed: int = 0,
    n_ood: int = 1,
    val_fraction: float = 0.2,
) -> DomainDataset:
    """Two-moons binary task rotated per domain; the last `n_ood` angles are
    held out as the OOD test domains

    Args:
        n_per_domain (int, optional): Even sample count per domain.
        domain_angles (Sequence[float], optional): Rotation per domain in
            degrees.
        noise_sd (float, optional): Gaussian noise added after rotation.
        seed (int, optional): RNG seed.
        n_ood (int, optional): Held-out trailing angles. Defaults to 1.
        val_fraction (float, optional): Share of each train domain tagged
            "val". Defaults to 0.2.

    Raises:
        ConfigurationError: Fewer than 2 train angles, no held-out angle,
            odd sample count or negative noise

    Returns:
        DomainDataset: Classification dataset with 2 features
    """
    angles = [float(angle) for angle in domain_angles]
    problems = []
    if n_ood < 1:
        problems.append("at least one held-out angle is required")
    if len(angles) - n_ood < 2:
        problems.append(
            f"need >= 2 training angles plus {n_ood} held out, "
            + f"got {len(angles)} angles"
        )
    if not all(math.isfinite(angle) for angle in angles):
        problems.append("angles must be finite")
    if n_per_domain < 2 or n_per_domain % 2:
        problems.append("n_per_domain must be even and >= 2")
    if noise_sd < 0.0:
        problems.append("noise_sd must be >= 0")
    if not 0.0 <= val_fraction < 1.0:
        problems.append("val_fraction must lie in [0, 1)")
    if problems:
        raise ConfigurationError(problems)

    rng = np.random.default_rng(seed)
    base_points, base_labels = _moons(n_per_domain)

    inputs, labels, domains, splits = [], [], [], []
    for domain, angle in enumerate(angles):
        points = base_points @ rotation(angle).T
        if noise_sd > 0.0:
            points = points + rng.normal(0.0, noise_sd, size=points.shape)
        inputs.append(points)
        labels.append(base_labels)
        domains.append(np.full(n_per_domain, domain))
        splits.append(
            _assign_splits(
                n_per_domain, domain >= len(angles) - n_ood, val_fraction, rng
            )
        )

    logger.debug(
        "Generated rotated moons: %d domains x %d, angles %s",
        len(angles),
        n_per_domain,
        angles,
    )
    return DomainDataset(
        inputs=np.vstack(inputs),
        task_labels=np.concatenate(labels),
        domain_ids=np.concatenate(domains),
        splits=np.concatenate(splits),
        descriptor={
            "name": "moons",
            "n_per_domain": n_per_domain,
            "domain_angles": angles,
            "noise_sd": noise_sd,
            "seed": seed,
            "n_ood": n_ood,
            "val_fraction": val_fraction,
        },
    )


def simplex_means(n_classes: int, n_features: int) -> np.ndarray:
    """Vertices of a regular simplex with unit distance from its centroid"""
    assert n_features >= n_classes, "need at least one feature per class"
    vertices = np.eye(n_classes, n_features)
    vertices = vertices - vertices.mean(axis=0)
    if n_classes == 1:
        return vertices
    return vertices / np.linalg.norm(vertices[0])


def gen_shifted_gaussians(
    n_per_domain: int = 200,
    n_classes: int = 3,
    n_domains: int = 4,
    class_sep: float = 4.0,
    domain_shift_scale: float = 1.5,
    seed: int = 0,
    n_features: int | None = None,
    noise_sd: float = 1.0,
    n_ood_domains: int = 1,
    collapsed_pairs: bool = False,
    task_kind: str = "classification",
    val_fraction: float = 0.2,
) -> DomainDataset:
    """Gaussian class clusters with per-domain sub-cluster offsets

    Class means sit on a simplex scaled by `class_sep`. Every (domain, class)
    pair gets its own offset of length `domain_shift_scale`, which makes
    domains form localized clusters inside each class. `n_domains` train
    domains are followed by `n_ood_domains` held-out ones.

    With `collapsed_pairs` (4 train domains A, B, C, D) domain B repeats A's
    samples exactly and D repeats C's.

    With task_kind "regression" the target is the projection of the class
    mean on a fixed random direction plus unit-variance noise, so the input
    still carries the signal through its cluster.

    Raises:
        ConfigurationError: Invalid counts or scales

    Returns:
        DomainDataset: Dataset with max(n_classes, 2) features by default
    """
    n_features = n_features if n_features is not None else max(n_classes, 2)
    problems = []
    if n_per_domain < 1:
        problems.append("n_per_domain must be >= 1")
    if n_classes < 1:
        problems.append("n_classes must be >= 1")
    if n_domains < 1 or n_ood_domains < 0:
        problems.append("n_domains must be >= 1 and n_ood_domains >= 0")
    if class_sep < 0.0 or domain_shift_scale < 0.0 or noise_sd < 0.0:
        problems.append("class_sep, domain_shift_scale, noise_sd must be >= 0")
    if n_features < n_classes:
        problems.append("n_features must be >= n_classes")
    if collapsed_pairs and n_domains != 4:
        problems.append("collapsed_pairs needs exactly 4 train domains")
    if task_kind not in TASK_KINDS:
        problems.append(f"task_kind must be one of {TASK_KINDS}")
    if not 0.0 <= val_fraction < 1.0:
        problems.append("val_fraction must lie in [0, 1)")
    if problems:
        raise ConfigurationError(problems)

    rng = np.random.default_rng(seed)
    means = class_sep * simplex_means(n_classes, n_features)
    direction = rng.normal(size=n_features)
    direction /= np.linalg.norm(direction)

    total_domains = n_domains + n_ood_domains
    class_of_row = np.arange(n_per_domain) % n_classes

    inputs, labels, domains, splits = [], [], [], []
    for domain in range(total_domains):
        offsets = rng.normal(size=(n_classes, n_features))
        offsets *= domain_shift_scale / np.linalg.norm(
            offsets, axis=1, keepdims=True
        )
        points = (
            means[class_of_row]
            + offsets[class_of_row]
            + rng.normal(0.0, noise_sd, size=(n_per_domain, n_features))
        )
        if task_kind == "regression":
            targets = means[class_of_row] @ direction + rng.normal(
                size=n_per_domain
            )
        else:
            targets = class_of_row.copy()
        if collapsed_pairs and domain in (1, 3):
            points, targets = inputs[-1].copy(), labels[-1].copy()
        inputs.append(points)
        labels.append(targets)
        domains.append(np.full(n_per_domain, domain))
        splits.append(
            _assign_splits(
                n_per_domain, domain >= n_domains, val_fraction, rng
            )
        )
        if collapsed_pairs and domain in (1, 3):
            splits[-1] = splits[-2].copy()

    logger.debug(
        "Generated shifted gaussians: %d+%d domains, %d classes",
        n_domains,
        n_ood_domains,
        n_classes,
    )
    return DomainDataset(
        inputs=np.vstack(inputs),
        task_labels=np.concatenate(labels),
        domain_ids=np.concatenate(domains),
        splits=np.concatenate(splits),
        task_kind=task_kind,
        descriptor={
            "name": "gaussians",
            "n_per_domain": n_per_domain,
            "n_classes": n_classes,
            "n_domains": n_domains,
            "class_sep": class_sep,
            "domain_shift_scale": domain_shift_scale,
            "seed": seed,
            "n_features": n_features,
            "noise_sd": noise_sd,
            "n_ood_domains": n_ood_domains,
            "collapsed_pairs": collapsed_pairs,
            "task_kind": task_kind,
            "val_fraction": val_fraction,
        },
    )


"""CSV ingestion
"""


class TabularSchema:
    """Column layout of a dataset CSV"""

    def __init__(
        self,
        label_column: str = "label",
        domain_column: str = "domain",
        split_column: str = "split",
        feature_prefix: str = "f",
        task_kind: str = "classification",
    ) -> None:
        self.label_column: str = label_column
        self.domain_column: str = domain_column
        self.split_column: str = split_column
        self.feature_prefix: str = feature_prefix
        self.task_kind: str = task_kind

        assert task_kind in TASK_KINDS, f"unknown task kind {task_kind}"

    def feature_columns(self, header: Sequence[str]) -> list[str]:
        """f0, f1, ... in index order; the run must start at f0 and be
        contiguous"""
        columns = []
        while f"{self.feature_prefix}{len(columns)}" in header:
            columns.append(f"{self.feature_prefix}{len(columns)}")
        return columns


def _parse_float(raw: str, column: str, line: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise DataParseError(f"column '{column}': {raw!r} is not a number", line)
    if not math.isfinite(value):
        raise DataParseError(f"column '{column}': non-finite value {raw!r}", line)
    return value


def _parse_int(raw: str, column: str, line: int) -> int:
    value = _parse_float(raw, column, line)
    if not value.is_integer() or value < 0:
        raise DataParseError(
            f"column '{column}': {raw!r} is not a nonnegative integer", line
        )
    return int(value)


def load_tabular(path: str, schema: TabularSchema | None = None) -> DomainDataset:
    """Read a dataset CSV

    Args:
        path (str): CSV path
        schema (TabularSchema | None, optional): Column layout. Defaults to
            the `f0..f{p-1},label,domain[,split]` layout for classification.

    Raises:
        SchemaError: Missing columns, or no data rows
        DataParseError: A malformed row, carries the file line number

    Returns:
        DomainDataset: Rows without a split column are all "train"
    """
    schema = schema if schema is not None else TabularSchema()
    logger.debug("Loading dataset CSV: %s", path)
    with open(path, "r", encoding="utf-8", newline="") as csv_file:
        reader = csv.reader(csv_file)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path} is empty")
        header = [column.strip() for column in header]

        feature_columns = schema.feature_columns(header)
        missing = [
            column
            for column in (schema.label_column, schema.domain_column)
            if column not in header
        ]
        if not feature_columns:
            missing.insert(0, f"{schema.feature_prefix}0")
        if missing:
            raise SchemaError(f"{path} is missing columns: {', '.join(missing)}")
        position = {column: i for i, column in enumerate(header)}
        has_split = schema.split_column in position

        inputs, labels, domains, splits = [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataParseError(
                    f"expected {len(header)} fields, got {len(row)}", line
                )
            inputs.append(
                [
                    _parse_float(row[position[column]], column, line)
                    for column in feature_columns
                ]
            )
            raw_label = row[position[schema.label_column]]
            labels.append(
                _parse_int(raw_label, schema.label_column, line)
                if schema.task_kind == "classification"
                else _parse_float(raw_label, schema.label_column, line)
            )
            domains.append(
                _parse_int(
                    row[position[schema.domain_column]],
                    schema.domain_column,
                    line,
                )
            )
            split = (
                row[position[schema.split_column]].strip()
                if has_split
                else "train"
            )
            if split not in SPLITS:
                raise DataParseError(
                    f"unknown split tag {split!r}, expected one of {SPLITS}",
                    line,
                )
            splits.append(split)

    if not inputs:
        raise SchemaError(f"{path} has a header but zero samples")
    try:
        return DomainDataset(
            inputs=np.array(inputs),
            task_labels=np.array(labels),
            domain_ids=np.array(domains),
            splits=np.array(splits, dtype=object),
            task_kind=schema.task_kind,
            descriptor={"name": "csv", "path": path},
        )
    except AssertionError as exc:
        raise SchemaError(f"{path}: {exc}")


def dump_tabular(dataset: DomainDataset, path: str) -> None:
    """Write a dataset CSV whose floats round-trip exactly"""
    with open(path, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(
            [f"f{i}" for i in range(dataset.n_features)]
            + ["label", "domain", "split"]
        )
        for features, label, domain, split in zip(
            dataset.inputs,
            dataset.task_labels,
            dataset.domain_ids,
            dataset.splits,
        ):
            writer.writerow(
                [repr(float(value)) for value in features]
                + [
                    (
                        str(int(label))
                        if dataset.task_kind == "classification"
                        else repr(float(label))
                    ),
                    str(int(domain)),
                    split,
                ]
            )
    logger.debug("Wrote %d rows to %s", len(dataset), path)


def write_feature_csv(
    path: str,
    features: np.ndarray,
    labels: np.ndarray,
    domain_ids: np.ndarray,
) -> None:
    """Write an n x d feature matrix as `f0..f{d-1},label,domain`"""
    with open(path, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(
            [f"f{i}" for i in range(features.shape[1])] + ["label", "domain"]
        )
        for row, label, domain in zip(features, labels, domain_ids):
            writer.writerow(
                [repr(float(value)) for value in row]
                + [
                    (
                        str(int(label))
                        if float(label).is_integer()
                        else repr(float(label))
                    ),
                    str(int(domain)),
                ]
            )


def read_feature_csv(
    path: str,
    label_column: str | None = "label",
    domain_column: str | None = "domain",
    feature_prefix: str = "f",
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Read a feature matrix written by write_feature_csv (or any CSV with
    `f0..` columns)

    Label and domain columns are optional; a column that is absent, or
    passed as None, comes back as None. Labels are read as floats.

    Raises:
        SchemaError: No feature columns, or no rows
        DataParseError: A malformed value, carries the file line number

    Returns:
        tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
            Features, labels and domain ids
    """
    schema = TabularSchema(feature_prefix=feature_prefix)
    with open(path, "r", encoding="utf-8", newline="") as csv_file:
        reader = csv.reader(csv_file)
        header = [column.strip() for column in next(reader, [])]
        feature_columns = schema.feature_columns(header)
        if not feature_columns:
            raise SchemaError(f"{path} has no '{feature_prefix}0' column")
        position = {column: i for i, column in enumerate(header)}
        label_at = position.get(label_column) if label_column else None
        domain_at = position.get(domain_column) if domain_column else None

        features, labels, domains = [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataParseError(
                    f"expected {len(header)} fields, got {len(row)}", line
                )
            features.append(
                [
                    _parse_float(row[position[column]], column, line)
                    for column in feature_columns
                ]
            )
            if label_at is not None:
                labels.append(_parse_float(row[label_at], label_column, line))
            if domain_at is not None:
                domains.append(_parse_int(row[domain_at], domain_column, line))

    if not features:
        raise SchemaError(f"{path} has a header but zero samples")
    return (
        np.array(features),
        np.array(labels) if label_at is not None else None,
        np.array(domains, dtype=np.int64) if domain_at is not None else None,
    )
