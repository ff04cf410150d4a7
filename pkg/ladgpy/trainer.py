# -*- coding: utf-8 -*-

"""trainer.py
Desc: Stratified minibatches, the ERM / DANN / localized-ADG training loops
and evaluation
"""

import dataclasses
import json
import logging
import os
from typing import Any

import numpy as np
from tqdm import tqdm

from .compactness import (
    RateTracker,
    avg_knn_degree,
    classwise_coding_rate,
    coding_rate,
    coding_rate_loss,
    compactness_report,
    initial_rate,
    mixing_entropy,
)
from .config import TrainConfig
from .data import DomainDataset, write_feature_csv
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    EmptySplitError,
    LadgError,
    TrainingError,
)
from .graph import build_affinity, knn_neighbors
from .labelprop import (
    PropagationResult,
    fixed_point_residual,
    propagate_closed_form,
)
from .losses import (
    PriorDistribution,
    dann_adversarial_loss,
    domain_disc_loss,
    generator_objective,
    one_hot,
    prior_matching_loss,
    task_loss,
)
from .model import (
    SGD,
    Discriminator,
    DomainHead,
    Featurizer,
    LinearPredictor,
    MultiLayerPerceptron,
    featurize,
    predict,
    project,
    save_checkpoint,
)
from .numerics import (
    Node,
    backward,
    reverse_gradient,
    scale,
    stop_gradient,
)

logger = logging.getLogger(__name__)

RESIDUAL_WARNING = 1e-8


class Minibatch:
    """One stratified minibatch

    `domains` is the one-hot matrix E over the K domains drawn for this
    batch (columns in ascending domain id); `domain_ids` keeps the dataset's
    own ids.
    """

    def __init__(
        self,
        inputs: np.ndarray,
        task_labels: np.ndarray,
        domain_ids: np.ndarray,
        selected: list[int],
    ) -> None:
        self.inputs: np.ndarray = inputs
        self.task_labels: np.ndarray = task_labels
        self.domain_ids: np.ndarray = domain_ids
        self.selected: list[int] = selected

        column = {domain: i for i, domain in enumerate(selected)}
        self.domains: np.ndarray = one_hot(
            np.array([column[d] for d in domain_ids.tolist()]), len(selected)
        )
        self.prior: PriorDistribution = PriorDistribution.from_domains(
            self.domains
        )

    def __len__(self) -> int:
        return self.inputs.shape[0]


def sample_minibatch(
    dataset: DomainDataset, config: TrainConfig, rng: np.random.Generator
) -> Minibatch:
    """Draw K train domains, then `samples_per_domain` rows from each

    Rows are drawn without replacement when the domain has enough of them,
    with replacement otherwise.

    Raises:
        ConfigurationError: Fewer than 2 train domains for an adversarial
            method, or K larger than the number of train domains
    """
    train_domains = dataset.train_domains
    if config.method in ("dann", "ladg") and len(train_domains) < 2:
        raise ConfigurationError(
            f"method '{config.method}' needs >= 2 train domains, "
            + f"dataset has {len(train_domains)}"
        )
    k = config.batch_domains(len(train_domains))
    if k > len(train_domains):
        raise ConfigurationError(
            f"domains_per_batch={k} exceeds {len(train_domains)} train domains"
        )
    selected = sorted(
        int(d) for d in rng.choice(train_domains, size=k, replace=False)
    )

    rows = []
    for domain in selected:
        candidates = dataset.domain_rows(domain, "train")
        replace = candidates.shape[0] < config.samples_per_domain
        if replace:
            logger.debug(
                "Domain %d has %d rows < %d, sampling with replacement",
                domain,
                candidates.shape[0],
                config.samples_per_domain,
            )
        rows.append(
            rng.choice(candidates, size=config.samples_per_domain, replace=replace)
        )
    rows = np.concatenate(rows)
    return Minibatch(
        inputs=dataset.inputs[rows],
        task_labels=dataset.task_labels[rows],
        domain_ids=dataset.domain_ids[rows],
        selected=selected,
    )


@dataclasses.dataclass
class MetricsRecord:
    """Diagnostics of one logged step

    `r_bar` is the moving average the step's L_cr was computed against,
    i.e. its value before the step's own update.
    """

    step: int
    phase: str
    method: str
    l_t: float
    l_dom: float | None = None
    l_prior: float | None = None
    l_cr: float | None = None
    r: float | None = None
    r_bar: float | None = None
    r_c: float | None = None
    v_k: float | None = None
    mixing_entropy: float | None = None
    train_metric: float | None = None
    val_metric: float | None = None
    ood_metric: float | None = None
    kind: str = "train"

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


class MetricsWriter:
    """Appends one JSON object per line; records are flushed in order"""

    def __init__(self, path: str, buffer_size: int = 20) -> None:
        self.path: str = path
        self.buffer_size: int = buffer_size
        self._buffer: list[str] = []
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._file = open(path, "a", encoding="utf-8")

    def write(self, record: dict[str, Any]) -> None:
        self._buffer.append(json.dumps(_jsonable(record), sort_keys=True))
        if len(self._buffer) >= self.buffer_size:
            self.flush()

    def flush(self) -> None:
        if self._buffer:
            self._file.write("\n".join(self._buffer) + "\n")
            self._buffer = []
        self._file.flush()

    def close(self) -> None:
        self.flush()
        self._file.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {key: _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def read_metrics(path: str) -> list[dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as metrics_file:
        return [json.loads(line) for line in metrics_file if line.strip()]


"""Evaluation
"""


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float((logits.argmax(axis=1) == labels).mean())


def pearson_r(outputs: np.ndarray, targets: np.ndarray) -> float | None:
    """Pearson correlation, None when either side is constant"""
    outputs = np.asarray(outputs, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if outputs.size < 2 or outputs.std() == 0.0 or targets.std() == 0.0:
        return None
    return float(np.corrcoef(outputs, targets)[0, 1])


def task_metric(
    outputs: np.ndarray, targets: np.ndarray, task_kind: str
) -> float | None:
    if task_kind == "classification":
        return accuracy(outputs, targets)
    return pearson_r(outputs, targets)


def evaluate(
    models: dict[str, MultiLayerPerceptron],
    dataset: DomainDataset,
    split: str | None = None,
    k_nn: int = TrainConfig.k_nn,
    epsilon: float = TrainConfig.epsilon,
) -> dict[str, Any]:
    """Task metric, per-domain metrics, mixing entropy and compactness on a
    split, using only the featurizer and predictor

    Args:
        models (dict[str, MultiLayerPerceptron]): Needs "featurizer" and
            "predictor"; anything else is ignored
        dataset (DomainDataset): Dataset to evaluate
        split (str | None, optional): Split tag, the whole dataset when
            None. Defaults to None.
        k_nn (int, optional): Neighborhood size for the diagnostics.
        epsilon (float, optional): Coding-rate precision.

    Raises:
        EmptySplitError: The split has no rows

    Returns:
        dict[str, Any]: metric, metric_name, per_domain, worst_group,
            mixing_entropy, compactness, n
    """
    data = dataset.subset(split) if split is not None else dataset
    if len(data) == 0:
        raise EmptySplitError("cannot evaluate an empty split")
    featurizer, predictor = models["featurizer"], models["predictor"]
    features = featurizer.forward(data.inputs, frozen=True).value
    outputs = predictor.forward(features, frozen=True).value

    per_domain = {}
    for domain in sorted(set(data.domain_ids.tolist())):
        mask = data.domain_ids == domain
        per_domain[str(domain)] = task_metric(
            outputs[mask], data.task_labels[mask], data.task_kind
        )
    scored = [value for value in per_domain.values() if value is not None]

    report: dict[str, Any] = {
        "split": split,
        "n": len(data),
        "task_kind": data.task_kind,
        "metric_name": (
            "accuracy" if data.task_kind == "classification" else "pearson_r"
        ),
        "metric": task_metric(outputs, data.task_labels, data.task_kind),
        "per_domain": per_domain,
        "worst_group": min(scored) if scored else None,
        "mixing_entropy": None,
        "compactness": None,
    }
    if len(data) >= 2:
        try:
            report["mixing_entropy"] = mixing_entropy(
                features, data.domain_ids, k_nn
            )
            report["compactness"] = compactness_report(
                features,
                (
                    data.task_labels
                    if data.task_kind == "classification"
                    else None
                ),
                epsilon,
                k_nn,
            ).to_dict()
        except DegenerateInputError as exc:
            logger.warning("Skipping feature diagnostics: %s", exc)
    return report


"""Training
"""


class TrainingResult:
    """Models, logged history and final evaluations of one run"""

    def __init__(
        self,
        models: dict[str, MultiLayerPerceptron],
        history: list[MetricsRecord],
        tracker: RateTracker,
        evaluations: dict[str, dict[str, Any]],
        out_dir: str | None = None,
    ) -> None:
        self.models: dict[str, MultiLayerPerceptron] = models
        self.history: list[MetricsRecord] = history
        self.tracker: RateTracker = tracker
        self.evaluations: dict[str, dict[str, Any]] = evaluations
        self.out_dir: str | None = out_dir

    def series(self, field: str, phase: str | None = None) -> np.ndarray:
        """Values of one MetricsRecord field over the logged steps"""
        return np.array(
            [
                getattr(record, field)
                for record in self.history
                if phase is None or record.phase == phase
            ],
            dtype=np.float64,
        )


class Trainer:
    """Runs one method end to end

    Three independent RNG streams are spawned from the seed: minibatch
    sampling, featurizer/predictor initialization, and adversary
    initialization. ERM therefore sees the same batches and the same initial
    (phi, w) as the adversarial methods under a shared seed.
    """

    def __init__(
        self,
        dataset: DomainDataset,
        config: TrainConfig,
        out_dir: str | None = None,
    ) -> None:
        problems = config.validate(len(dataset.train_domains))
        if config.task_kind != dataset.task_kind:
            problems.append(
                f"config task_kind '{config.task_kind}' does not match the "
                + f"dataset's '{dataset.task_kind}'"
            )
        if problems:
            for problem in problems:
                logger.error("Config problem: %s", problem)
            raise ConfigurationError(problems)

        self.dataset: DomainDataset = dataset
        self.config: TrainConfig = config
        self.out_dir: str | None = out_dir
        self.train_domains: list[int] = dataset.train_domains

        sampling_seed, model_seed, adversary_seed = np.random.SeedSequence(
            config.seed
        ).spawn(3)
        self.rng = np.random.default_rng(sampling_seed)
        model_rng = np.random.default_rng(model_seed)
        adversary_rng = np.random.default_rng(adversary_seed)

        self.featurizer = Featurizer(
            [dataset.n_features] + list(config.featurizer_widths), model_rng
        )
        d = self.featurizer.out_width
        self.predictor = LinearPredictor(d, dataset.n_classes, model_rng)
        self.optimizer = SGD(
            self.featurizer.parameters() + self.predictor.parameters(),
            config.lr,
            config.weight_decay,
            config.momentum,
        )

        self.adversary: MultiLayerPerceptron | None = None
        if config.method == "ladg":
            self.adversary = Discriminator(
                [d] + list(config.discriminator_widths), adversary_rng
            )
        elif config.method == "dann":
            self.adversary = DomainHead(
                [d]
                + list(config.domain_head_widths)
                + [len(self.train_domains)],
                adversary_rng,
            )
        self.adversary_optimizer = (
            SGD(
                self.adversary.parameters(),
                config.disc_lr,
                config.weight_decay,
                config.momentum,
            )
            if self.adversary is not None
            else None
        )

        self.tracker = RateTracker(config.xi)
        self.pretrain_rates: list[float] = []
        self.history: list[MetricsRecord] = []
        self.writer: MetricsWriter | None = None

    @property
    def models(self) -> dict[str, MultiLayerPerceptron]:
        models: dict[str, MultiLayerPerceptron] = {
            "featurizer": self.featurizer,
            "predictor": self.predictor,
        }
        if isinstance(self.adversary, Discriminator):
            models["discriminator"] = self.adversary
        elif isinstance(self.adversary, DomainHead):
            models["domain_head"] = self.adversary
        return models

    def phase(self, step: int) -> str:
        """"erm" for every ERM step, otherwise "pretrain" then "adversarial" """
        if self.config.method == "erm":
            return "erm"
        if step <= self.config.pretrain_steps:
            return "pretrain"
        return "adversarial"

    def run(self) -> TrainingResult:
        config = self.config
        logger.info(
            "Training %s: %d steps (%d pretraining), seed %d",
            config.method,
            config.total_steps,
            config.pretrain_steps,
            config.seed,
        )
        if self.out_dir is not None:
            os.makedirs(self.out_dir, exist_ok=True)
            self.writer = MetricsWriter(
                os.path.join(self.out_dir, "metrics.jsonl")
            )
        try:
            for step in tqdm(
                range(1, config.total_steps + 1),
                desc=config.method,
                disable=not config.progress,
            ):
                self.train_step(step)
            evaluations = self.final_evaluations()
            if self.out_dir is not None:
                self.save(os.path.join(self.out_dir, "checkpoint"))
        finally:
            if self.writer is not None:
                self.writer.close()
                self.writer = None

        return TrainingResult(
            models=self.models,
            history=self.history,
            tracker=self.tracker,
            evaluations=evaluations,
            out_dir=self.out_dir,
        )

    def train_step(self, step: int) -> dict[str, Any]:
        """Sample a batch and apply one update of the step's phase

        Raises:
            TrainingError: Any numerical failure, with step context
        """
        phase = self.phase(step)
        batch = sample_minibatch(self.dataset, self.config, self.rng)
        if phase == "adversarial" and not self.tracker.initialized:
            self._initialize_tracker(batch)

        try:
            if phase == "erm":
                stats = self._erm_step(batch)
            elif phase == "pretrain":
                stats = self._erm_step(batch)
                self.pretrain_rates.append(stats["r"])
            elif self.config.method == "ladg":
                stats = self._ladg_step(batch)
            else:
                stats = self._dann_step(batch)
        except LadgError as exc:
            logger.error("Step %d (%s) failed: %s", step, phase, exc)
            raise TrainingError(
                str(exc), step, f"{self.config.method}/{phase}"
            ) from exc

        if self._should_log(step):
            self._log(step, phase, batch, stats)
        if self.config.dump_interval and step % self.config.dump_interval == 0:
            self._dump_features(step, batch, stats["features"])
        return stats

    def _initialize_tracker(self, batch: Minibatch) -> None:
        if self.pretrain_rates:
            value = initial_rate(self.pretrain_rates)
        else:
            features = featurize(self.featurizer, batch.inputs).value
            value = coding_rate(features, self.config.epsilon).item()
        self.tracker.initialize(value)
        logger.info("Pretraining done, adversarial phase starts")

    """Update rules
    """

    def _task_loss(self, batch: Minibatch, features: Node) -> Node:
        return task_loss(
            predict(self.predictor, features),
            batch.task_labels,
            self.config.task_kind,
        )

    def _generator_update(self, objective: Node) -> None:
        self.optimizer.zero_grad()
        backward(objective)
        self.optimizer.step()

    def _adversary_update(self, objective: Node) -> None:
        self.adversary_optimizer.zero_grad()
        backward(objective)
        self.adversary_optimizer.step()

    def _erm_step(self, batch: Minibatch) -> dict[str, Any]:
        features = featurize(self.featurizer, batch.inputs)
        loss_t = self._task_loss(batch, features)
        rate = coding_rate(features.value, self.config.epsilon).item()
        self._generator_update(loss_t)
        return {"features": features.value, "l_t": loss_t.item(), "r": rate}

    def propagate(self, projected: Node, domains: np.ndarray) -> PropagationResult:
        """Graph over the projected batch, then closed-form propagation"""
        config = self.config
        neighbors = knn_neighbors(projected, config.k_nn)
        graph = build_affinity(
            projected, neighbors, config.tau, symmetrize=config.symmetrize
        )
        result = propagate_closed_form(
            graph, domains, config.alpha, leave_one_out=config.leave_one_out
        )
        residual = fixed_point_residual(
            graph, domains, config.alpha, result.r_star
        )
        if residual > RESIDUAL_WARNING:
            logger.warning("Propagation fixed-point residual %g", residual)
        return result

    def _ladg_step(self, batch: Minibatch) -> dict[str, Any]:
        config = self.config
        features = featurize(self.featurizer, batch.inputs)
        detached = stop_gradient(features)

        for _ in range(config.disc_steps):
            result = self.propagate(
                project(self.adversary, detached), batch.domains
            )
            loss_dom = domain_disc_loss(result.probs, batch.domains)
            self._adversary_update(loss_dom)

        # re-propagate with the updated discriminator, which stays frozen
        result = self.propagate(
            project(self.adversary, features, frozen=True), batch.domains
        )
        loss_prior = prior_matching_loss(result.probs, batch.prior)
        if config.generator_loss == "prior":
            adversarial_term = loss_prior
        else:
            adversarial_term = scale(
                domain_disc_loss(result.probs, batch.domains), -1.0
            )

        loss_t = self._task_loss(batch, features)
        rate = coding_rate(features, config.epsilon)
        r_bar = self.tracker.r_bar
        loss_cr = coding_rate_loss(
            features, self.tracker, config.rho, config.epsilon, rate=rate
        )
        self._generator_update(
            generator_objective(
                loss_t, adversarial_term, loss_cr, config.lam, config.gamma
            )
        )
        self.tracker.update(rate.item())
        return {
            "features": features.value,
            "l_t": loss_t.item(),
            "l_dom": loss_dom.item(),
            "l_prior": loss_prior.item(),
            "l_cr": loss_cr.item(),
            "r": rate.item(),
            "r_bar": r_bar,
        }

    def _dann_step(self, batch: Minibatch) -> dict[str, Any]:
        config = self.config
        column = {domain: i for i, domain in enumerate(self.train_domains)}
        domains = one_hot(
            np.array([column[d] for d in batch.domain_ids.tolist()]),
            len(self.train_domains),
        )
        features = featurize(self.featurizer, batch.inputs)
        detached = stop_gradient(features)

        for _ in range(config.disc_steps):
            loss_dom = dann_adversarial_loss(
                self.adversary(detached), domains, from_logits=True
            )
            self._adversary_update(loss_dom)

        # reversal scales the head's adjoint by -lambda on the way to phi
        reversed_loss = dann_adversarial_loss(
            self.adversary(
                reverse_gradient(features, config.lam), frozen=True
            ),
            domains,
            from_logits=True,
        )
        loss_t = self._task_loss(batch, features)
        rate = coding_rate(features, config.epsilon)
        r_bar = self.tracker.r_bar
        loss_cr = coding_rate_loss(
            features, self.tracker, config.rho, config.epsilon, rate=rate
        )
        self._generator_update(
            generator_objective(
                loss_t,
                reversed_loss,
                loss_cr,
                lam=1.0 if config.lam != 0.0 else 0.0,
                gamma=config.gamma if config.dann_with_cr else 0.0,
            )
        )
        self.tracker.update(rate.item())
        return {
            "features": features.value,
            "l_t": loss_t.item(),
            "l_dom": loss_dom.item(),
            "l_cr": loss_cr.item(),
            "r": rate.item(),
            "r_bar": r_bar,
        }

    """Logging
    """

    def _should_log(self, step: int) -> bool:
        config = self.config
        return (
            step % config.log_interval == 0
            or step == config.total_steps
            or step == config.pretrain_steps + 1
        )

    def _log(
        self, step: int, phase: str, batch: Minibatch, stats: dict[str, Any]
    ) -> None:
        config = self.config
        features = stats["features"]
        outputs = self.predictor.forward(features, frozen=True).value
        record = MetricsRecord(
            step=step,
            phase=phase,
            method=config.method,
            l_t=stats["l_t"],
            l_dom=stats.get("l_dom"),
            l_prior=stats.get("l_prior"),
            l_cr=stats.get("l_cr"),
            r=stats["r"],
            r_bar=stats.get("r_bar"),
            train_metric=task_metric(
                outputs, batch.task_labels, config.task_kind
            ),
        )
        try:
            record.v_k = avg_knn_degree(features, config.k_nn)
            record.mixing_entropy = mixing_entropy(
                features, batch.domain_ids, config.k_nn
            )
            if config.task_kind == "classification":
                record.r_c = classwise_coding_rate(
                    features, batch.task_labels, config.epsilon
                )
        except DegenerateInputError as exc:
            logger.warning("Step %d diagnostics skipped: %s", step, exc)

        if config.eval_interval and step % config.eval_interval == 0:
            for split, field in (("val", "val_metric"), ("ood", "ood_metric")):
                if (self.dataset.splits == split).any():
                    report = evaluate(
                        self.models,
                        self.dataset,
                        split,
                        config.k_nn,
                        config.epsilon,
                    )
                    setattr(record, field, report["metric"])

        self.history.append(record)
        if self.writer is not None:
            self.writer.write(record.to_dict())
        logger.debug(
            "step %d [%s] L_t=%.4f R=%.4f R_bar=%s mix=%s",
            step,
            phase,
            record.l_t,
            record.r,
            record.r_bar,
            record.mixing_entropy,
        )

    def _dump_features(
        self, step: int, batch: Minibatch, features: np.ndarray
    ) -> None:
        if self.out_dir is None:
            return
        directory = os.path.join(self.out_dir, "features")
        os.makedirs(directory, exist_ok=True)
        write_feature_csv(
            os.path.join(directory, f"step_{step:06d}.csv"),
            features,
            batch.task_labels,
            batch.domain_ids,
        )

    def final_evaluations(self) -> dict[str, dict[str, Any]]:
        evaluations = {}
        for split in ("val", "ood"):
            if not (self.dataset.splits == split).any():
                continue
            report = evaluate(
                self.models,
                self.dataset,
                split,
                self.config.k_nn,
                self.config.epsilon,
            )
            evaluations[split] = report
            if self.writer is not None:
                self.writer.write(
                    dict(report, kind="eval", step=self.config.total_steps)
                )
            logger.info(
                "Final %s %s = %s", split, report["metric_name"], report["metric"]
            )
        return evaluations

    def save(self, directory: str) -> str:
        """Checkpoint every model, one npz each"""
        return save_checkpoint(
            directory,
            self.models,
            extra={
                "method": self.config.method,
                "task_kind": self.dataset.task_kind,
                "n_features": self.dataset.n_features,
                "n_classes": self.dataset.n_classes,
                "k_nn": self.config.k_nn,
                "epsilon": self.config.epsilon,
                "seed": self.config.seed,
            },
        )


def _run(
    dataset: DomainDataset,
    config: TrainConfig,
    method: str,
    out_dir: str | None,
) -> TrainingResult:
    config = dataclasses.replace(config, method=method)
    return Trainer(dataset, config, out_dir).run()


def train_erm(
    dataset: DomainDataset, config: TrainConfig, out_dir: str | None = None
) -> TrainingResult:
    """Plain minimization of the task loss"""
    return _run(dataset, config, "erm", out_dir)


def train_dann(
    dataset: DomainDataset, config: TrainConfig, out_dir: str | None = None
) -> TrainingResult:
    """ERM pretraining, then a global softmax domain head trained against a
    gradient-reversed featurizer; `dann_with_cr` adds gamma L_cr"""
    return _run(dataset, config, "dann", out_dir)


def train_ladg(
    dataset: DomainDataset, config: TrainConfig, out_dir: str | None = None
) -> TrainingResult:
    """ERM pretraining, then alternating discriminator / generator updates
    through label propagation on each minibatch graph"""
    return _run(dataset, config, "ladg", out_dir)
