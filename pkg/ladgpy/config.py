# -*- coding: utf-8 -*-

"""config.py
Desc: Configurable variables used by the project
"""
import dataclasses
import json
import logging
import os
from typing import Any, Mapping

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.8  # restart probability of the propagation recurrence
DEFAULT_RHO = 0.2  # log-cosh smoothing of the compactness loss
DEFAULT_XI = 0.99  # decay of the coding-rate moving average
DEFAULT_TAU = 2.0  # affinity scale, exponent becomes exactly the cosine
DEFAULT_EPSILON = 0.5  # coding-rate precision
DEFAULT_K_NN = 10

DEGREE_FLOOR = 1e-12  # keeps isolated nodes from dividing by zero
PROPAGATION_TOL = 1e-8
PROPAGATION_MAX_STEPS = 1000
SOLVE_MAX_CONDITION = 1e12  # condition numbers above this count as singular
TRACKER_INIT_FRACTION = 0.2  # tail of pretraining used to seed R-bar

METHODS = ("erm", "dann", "ladg")
TASK_KINDS = ("classification", "regression")
GENERATOR_LOSSES = ("prior", "adversarial")
SPLITS = ("train", "val", "ood")

ACCEPTANCE_ENV_VAR = "LADG_RUN_ACCEPTANCE"
OUTPUT_DIR_ENV_VAR = "LADG_OUTPUT_DIR"

# keys accepted in config files that differ from the dataclass field name
CONFIG_ALIASES: dict[str, str] = {"lambda": "lam"}


@dataclasses.dataclass
class TrainConfig:
    """Every hyperparameter of a training run"""

    method: str = "ladg"
    task_kind: str = "classification"
    seed: int = 0

    alpha: float = DEFAULT_ALPHA
    rho: float = DEFAULT_RHO
    xi: float = DEFAULT_XI
    tau: float = DEFAULT_TAU
    epsilon: float = DEFAULT_EPSILON
    lam: float = 1.0
    gamma: float = 0.1
    k_nn: int = DEFAULT_K_NN

    domains_per_batch: int | None = None  # None means every train domain
    samples_per_domain: int = 16
    pretrain_steps: int = 600
    total_steps: int = 2600  # includes pretraining

    lr: float = 0.05
    disc_lr: float = 0.05
    momentum: float = 0.0
    weight_decay: float = 0.0
    disc_steps: int = 1

    featurizer_widths: list[int] = dataclasses.field(
        default_factory=lambda: [64, 64]
    )
    discriminator_widths: list[int] = dataclasses.field(
        default_factory=lambda: [64, 32]
    )
    domain_head_widths: list[int] = dataclasses.field(
        default_factory=lambda: [64]
    )

    symmetrize: bool = True
    leave_one_out: bool = False
    generator_loss: str = "prior"
    dann_with_cr: bool = False

    log_interval: int = 10
    eval_interval: int = 100
    dump_interval: int = 0
    progress: bool = False

    def validate(self, n_train_domains: int | None = None) -> list[str]:
        """Collect every problem with the configuration

        Args:
            n_train_domains (int | None, optional):
                Number of training domains of the dataset the config will run
                on, enables the batch-size checks. Defaults to None.

        Returns:
            list[str]: Problems found, empty when the config is valid
        """
        problems: list[str] = []

        def check(ok: bool, message: str) -> None:
            if not ok:
                problems.append(message)

        check(self.method in METHODS, f"method must be one of {METHODS}")
        check(
            self.task_kind in TASK_KINDS,
            f"task_kind must be one of {TASK_KINDS}",
        )
        check(
            self.generator_loss in GENERATOR_LOSSES,
            f"generator_loss must be one of {GENERATOR_LOSSES}",
        )
        check(0.0 < self.alpha < 1.0, "alpha must lie in (0, 1)")
        check(self.rho > 0.0, "rho must be > 0")
        check(0.0 < self.xi < 1.0, "xi must lie in (0, 1)")
        check(self.tau > 0.0, "tau must be > 0")
        check(self.epsilon > 0.0, "epsilon must be > 0")
        check(self.lam >= 0.0, "lambda must be >= 0")
        check(self.gamma >= 0.0, "gamma must be >= 0")
        check(self.k_nn >= 1, "k_nn must be >= 1")
        check(self.samples_per_domain >= 1, "samples_per_domain must be >= 1")
        check(
            self.domains_per_batch is None or self.domains_per_batch >= 1,
            "domains_per_batch must be >= 1",
        )
        check(self.pretrain_steps >= 0, "pretrain_steps must be >= 0")
        check(self.total_steps >= 1, "total_steps must be >= 1")
        check(
            self.total_steps >= self.pretrain_steps,
            "total_steps must be >= pretrain_steps",
        )
        check(self.lr > 0.0, "lr must be > 0")
        check(self.disc_lr > 0.0, "disc_lr must be > 0")
        check(0.0 <= self.momentum < 1.0, "momentum must lie in [0, 1)")
        check(self.weight_decay >= 0.0, "weight_decay must be >= 0")
        check(self.disc_steps >= 1, "disc_steps must be >= 1")
        for name in (
            "featurizer_widths",
            "discriminator_widths",
            "domain_head_widths",
        ):
            widths = getattr(self, name)
            check(
                len(widths) >= 1 and all(int(w) >= 1 for w in widths),
                f"{name} must be a non-empty list of positive widths",
            )
        check(self.log_interval >= 1, "log_interval must be >= 1")
        check(self.eval_interval >= 0, "eval_interval must be >= 0")
        check(self.dump_interval >= 0, "dump_interval must be >= 0")

        if n_train_domains is not None:
            if self.method in ("dann", "ladg"):
                check(
                    n_train_domains >= 2,
                    f"adversarial method '{self.method}' needs >= 2 train "
                    + f"domains, dataset has {n_train_domains}",
                )
            k = self.batch_domains(n_train_domains)
            check(
                k <= n_train_domains,
                f"domains_per_batch={k} exceeds the {n_train_domains} "
                + "train domains",
            )
            check(
                k * self.samples_per_domain >= self.k_nn + 1,
                f"batch size {k * self.samples_per_domain} must be >= "
                + f"k_nn + 1 = {self.k_nn + 1}",
            )
        return problems

    def batch_domains(self, n_train_domains: int) -> int:
        """Number of domains K drawn per minibatch"""
        if self.domains_per_batch is None:
            return n_train_domains
        return self.domains_per_batch

    def adversarial_steps(self) -> int:
        return self.total_steps - self.pretrain_steps

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(
        cls, mapping: Mapping[str, Any]
    ) -> tuple["TrainConfig", list[str]]:
        """Build a config from a key-value mapping, missing keys take their
        documented default

        Args:
            mapping (Mapping[str, Any]): Raw key-value pairs

        Raises:
            ConfigurationError: Unknown keys or values of the wrong type,
                every problem listed

        Returns:
            tuple[TrainConfig, list[str]]:
                The config and the names of the fields that were defaulted
        """
        fields = {field.name: field for field in dataclasses.fields(cls)}
        problems: list[str] = []
        values: dict[str, Any] = {}
        for raw_key, raw_value in mapping.items():
            key = CONFIG_ALIASES.get(raw_key, raw_key)
            if key not in fields:
                problems.append(f"unknown config key '{raw_key}'")
                continue
            try:
                values[key] = _coerce(fields[key], raw_value)
            except (TypeError, ValueError) as exc:
                problems.append(f"{raw_key}: {exc}")
        if problems:
            # range checks of the keys that did parse
            problems.extend(cls(**values).validate())
            raise ConfigurationError(problems)

        defaulted = sorted(set(fields) - set(values))
        for key in defaulted:
            logger.warning("Config key '%s' missing, using default", key)
        return cls(**values), defaulted


def _coerce(field: dataclasses.Field, value: Any) -> Any:
    """Convert a raw config value to the field's declared type"""
    default = (
        field.default
        if field.default is not dataclasses.MISSING
        else field.default_factory()  # type: ignore[misc]
    )
    if field.name == "domains_per_batch":
        return None if value is None else _as_int(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        return _as_int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise TypeError(f"expected a list, got {value!r}")
        return [_as_int(item) for item in value]
    if not isinstance(value, str):
        raise TypeError(f"expected a string, got {value!r}")
    return value


def _as_int(value: Any) -> int:
    if isinstance(value, bool):
        raise TypeError(f"expected an integer, got {value!r}")
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if not isinstance(value, int):
        raise TypeError(f"expected an integer, got {value!r}")
    return value


def load_config(path: str) -> tuple[TrainConfig, list[str]]:
    """Read a JSON object of TrainConfig keys, or a run manifest

    Args:
        path (str): Path to the config file

    Raises:
        ConfigurationError: File is not a JSON object or holds invalid keys

    Returns:
        tuple[TrainConfig, list[str]]: Config and defaulted field names
    """
    logger.debug("Loading config from: %s", path)
    with open(path, "r", encoding="utf-8") as config_file:
        try:
            raw = json.load(config_file)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path} must hold a JSON object")
    # a run manifest carries the effective config under "config"
    if isinstance(raw.get("config"), dict) and "dataset" in raw:
        raw = raw["config"]
    return TrainConfig.from_mapping(raw)


"""Path variables
"""

proj_root_dir: str = os.path.abspath(
    os.path.join(os.path.dirname(__file__), "..")
)
assert os.path.isdir(proj_root_dir), f"{proj_root_dir}, is not a dir"

output_dir: str = os.path.abspath(
    os.environ.get(OUTPUT_DIR_ENV_VAR, os.path.join(proj_root_dir, "runs"))
)
os.makedirs(output_dir, exist_ok=True)
assert os.path.isdir(output_dir), f"{output_dir}, is not a dir"

logs_dir: str = os.path.join(output_dir, "logs")
os.makedirs(logs_dir, exist_ok=True)
assert os.path.isdir(logs_dir), f"{logs_dir}, is not a dir"
