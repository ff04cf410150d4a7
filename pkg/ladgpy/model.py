# -*- coding: utf-8 -*-

"""model.py
Desc: Featurizer, linear predictor, discriminator and their optimizer
"""

import json
import logging
import os
from typing import Iterable, Sequence

import numpy as np

from .errors import CheckpointMismatchError, ShapeError
from .numerics import (
    Node,
    add,
    constant,
    matmul,
    parameter,
    relu,
    to_node,
    zero_grad,
)

logger = logging.getLogger(__name__)

CHECKPOINT_MANIFEST = "manifest.json"


class MultiLayerPerceptron:
    """Affine layers with ReLU between them; the last layer stays linear

    Parameters are drawn uniformly from (-1/sqrt(fan_in), 1/sqrt(fan_in)).
    """

    kind = "mlp"

    def __init__(
        self,
        widths: Sequence[int],
        rng: np.random.Generator | None = None,
    ) -> None:
        self.widths: list[int] = [int(width) for width in widths]
        assert len(self.widths) >= 2, "need an input and an output width"
        assert all(width >= 1 for width in self.widths), "widths must be > 0"

        self.weights: list[Node] = []
        self.biases: list[Node] = []
        for layer, (fan_in, fan_out) in enumerate(
            zip(self.widths[:-1], self.widths[1:])
        ):
            bound = 1.0 / np.sqrt(fan_in)
            if rng is None:
                weight = np.zeros((fan_in, fan_out))
                bias = np.zeros((1, fan_out))
            else:
                weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                bias = rng.uniform(-bound, bound, size=(1, fan_out))
            self.weights.append(parameter(weight, name=f"{self.kind}.w{layer}"))
            self.biases.append(parameter(bias, name=f"{self.kind}.b{layer}"))

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]

    def parameters(self) -> list[Node]:
        params: list[Node] = []
        for weight, bias in zip(self.weights, self.biases):
            params.extend((weight, bias))
        return params

    def forward(self, inputs: Node | np.ndarray, frozen: bool = False) -> Node:
        """Apply the network

        Args:
            inputs (Node | np.ndarray): n x in_width rows
            frozen (bool, optional): Use constant copies of the parameters
                so none of them receives a gradient. Defaults to False.

        Raises:
            ShapeError: Input width does not match

        Returns:
            Node: n x out_width outputs
        """
        hidden = to_node(inputs)
        if hidden.shape[1] != self.in_width:
            raise ShapeError(
                f"{type(self).__name__} expects width {self.in_width}, "
                + f"got {hidden.shape[1]}"
            )
        last = len(self.weights) - 1
        for layer, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            if frozen:
                weight, bias = constant(weight.value), constant(bias.value)
            hidden = add(matmul(hidden, weight), bias)
            if layer < last:
                hidden = relu(hidden)
        return hidden

    def __call__(self, inputs: Node | np.ndarray, frozen: bool = False) -> Node:
        return self.forward(inputs, frozen=frozen)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {}
        for layer, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            state[f"w{layer}"] = weight.value.copy()
            state[f"b{layer}"] = bias.value.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for layer, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            for node, key in ((weight, f"w{layer}"), (bias, f"b{layer}")):
                if key not in state:
                    raise CheckpointMismatchError(f"missing array '{key}'")
                array = np.asarray(state[key], dtype=np.float64)
                if array.shape != node.shape:
                    raise CheckpointMismatchError(
                        f"array '{key}' has shape {array.shape}, "
                        + f"expected {node.shape}"
                    )
                node.value = array.copy()
                node.grad = np.zeros_like(array)


class Featurizer(MultiLayerPerceptron):
    """phi: inputs -> features H (default input -> 64 -> 64)"""

    kind = "featurizer"


class LinearPredictor(MultiLayerPerceptron):
    """w: a single affine layer from features to task outputs"""

    kind = "predictor"

    def __init__(
        self, d: int, n_outputs: int, rng: np.random.Generator | None = None
    ) -> None:
        super().__init__([d, n_outputs], rng)


class Discriminator(MultiLayerPerceptron):
    """eta: projects features into the space the affinity graph is built in
    (default d -> 64 -> 32)"""

    kind = "discriminator"


class DomainHead(MultiLayerPerceptron):
    """Global softmax domain classifier for the DANN baseline"""

    kind = "domain_head"


def featurize(f: Featurizer, batch_inputs: Node | np.ndarray) -> Node:
    return f.forward(batch_inputs)


def predict(w: LinearPredictor, h: Node | np.ndarray) -> Node:
    return w.forward(h)


def project(
    eta: Discriminator, h: Node | np.ndarray, frozen: bool = False
) -> Node:
    """g_i = eta(h_i); with `frozen` only h receives gradients"""
    return eta.forward(h, frozen=frozen)


def sgd_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    lr: float,
    weight_decay: float = 0.0,
    momentum: float = 0.0,
    velocities: Sequence[np.ndarray] | None = None,
) -> list[np.ndarray]:
    """p <- p - lr (g + weight_decay p), with optional heavy-ball momentum

    Args:
        params (Sequence[np.ndarray]): Current values
        grads (Sequence[np.ndarray]): Matching gradients
        lr (float): Learning rate
        weight_decay (float, optional): L2 coefficient. Defaults to 0.0.
        momentum (float, optional): Momentum factor. Defaults to 0.0.
        velocities (Sequence[np.ndarray] | None, optional): Momentum buffers,
            updated in place. Defaults to None.

    Raises:
        ShapeError: Parameter and gradient shapes differ

    Returns:
        list[np.ndarray]: Updated values
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters, {len(grads)} gradients")
    updated = []
    for i, (value, grad) in enumerate(zip(params, grads)):
        if value.shape != grad.shape:
            raise ShapeError(
                f"parameter {i} is {value.shape}, gradient {grad.shape}"
            )
        step = grad + weight_decay * value if weight_decay else grad
        if momentum and velocities is not None:
            velocities[i][...] = momentum * velocities[i] + step
            step = velocities[i]
        updated.append(value - lr * step)
    return updated


class SGD:
    """Plain SGD over a fixed list of parameter nodes"""

    def __init__(
        self,
        params: Iterable[Node],
        lr: float,
        weight_decay: float = 0.0,
        momentum: float = 0.0,
    ) -> None:
        self.params: list[Node] = list(params)
        self.lr: float = lr
        self.weight_decay: float = weight_decay
        self.momentum: float = momentum
        self.velocities: list[np.ndarray] = [
            np.zeros_like(param.value) for param in self.params
        ]

    def zero_grad(self) -> None:
        zero_grad(self.params)

    def step(self) -> None:
        updated = sgd_step(
            [param.value for param in self.params],
            [param.grad for param in self.params],
            self.lr,
            self.weight_decay,
            self.momentum,
            self.velocities,
        )
        for param, value in zip(self.params, updated):
            param.value = value


"""Checkpoints
"""


def save_checkpoint(
    directory: str,
    models: dict[str, MultiLayerPerceptron],
    extra: dict | None = None,
) -> str:
    """Write `<name>.npz` per model plus a shape manifest

    Args:
        directory (str): Target directory, created if missing
        models (dict[str, MultiLayerPerceptron]): Models by name
        extra (dict | None, optional): Additional manifest entries.
            Defaults to None.

    Returns:
        str: Path of the manifest
    """
    os.makedirs(directory, exist_ok=True)
    manifest: dict = {"models": {}}
    for name, net in models.items():
        state = net.state_dict()
        np.savez(os.path.join(directory, f"{name}.npz"), **state)
        manifest["models"][name] = {
            "kind": net.kind,
            "widths": net.widths,
            "file": f"{name}.npz",
            "arrays": {key: list(array.shape) for key, array in state.items()},
        }
    manifest.update(extra or {})
    manifest_path = os.path.join(directory, CHECKPOINT_MANIFEST)
    with open(manifest_path, "w", encoding="utf-8") as manifest_file:
        json.dump(manifest, manifest_file, indent=2, sort_keys=True)
    logger.info("Checkpoint written: %s (%s)", directory, ", ".join(models))
    return manifest_path


MODEL_KINDS: dict[str, type[MultiLayerPerceptron]] = {
    "featurizer": Featurizer,
    "predictor": LinearPredictor,
    "discriminator": Discriminator,
    "domain_head": DomainHead,
}


def load_checkpoint(
    directory: str, names: Sequence[str] | None = None
) -> tuple[dict[str, MultiLayerPerceptron], dict]:
    """Rebuild models from a checkpoint directory

    Args:
        directory (str): Directory written by save_checkpoint
        names (Sequence[str] | None, optional): Models to load, all when
            None. Defaults to None.

    Raises:
        CheckpointMismatchError: Manifest missing or inconsistent

    Returns:
        tuple[dict[str, MultiLayerPerceptron], dict]: Models and manifest
    """
    manifest_path = os.path.join(directory, CHECKPOINT_MANIFEST)
    if not os.path.isfile(manifest_path):
        raise CheckpointMismatchError(f"no checkpoint manifest in {directory}")
    with open(manifest_path, "r", encoding="utf-8") as manifest_file:
        manifest = json.load(manifest_file)

    models: dict[str, MultiLayerPerceptron] = {}
    for name in names if names is not None else manifest["models"]:
        if name not in manifest["models"]:
            raise CheckpointMismatchError(f"checkpoint has no model '{name}'")
        entry = manifest["models"][name]
        widths = entry["widths"]
        if entry["kind"] == "predictor":
            net: MultiLayerPerceptron = LinearPredictor(widths[0], widths[1])
        else:
            net = MODEL_KINDS[entry["kind"]](widths)
        with np.load(os.path.join(directory, entry["file"])) as arrays:
            net.load_state_dict({key: arrays[key] for key in arrays.files})
        models[name] = net
    logger.debug("Loaded %s from %s", ", ".join(models), directory)
    return models, manifest
