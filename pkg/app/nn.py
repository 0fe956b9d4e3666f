#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Dense neural-network engine: forward, softmax cross-entropy, backprop, SGD.

Everything works on a single sample (1-D vectors); training in every protocol
is per-sample SGD. Matrices are float64 numpy arrays, weights are (out, in).
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, InputError, NumericalError, ProtocolError, ShapeError
from .models import Activation

LOSS_EPSILON = 1e-12
CHECKPOINT_VERSION = 1


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray   # (out,)
    activation: Activation

    def __post_init__(self):
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ShapeError(
                "bias length must equal weight rows",
                weights=self.weights.shape, biases=self.biases.shape,
            )

    @property
    def in_width(self) -> int:
        return self.weights.shape[1]

    @property
    def out_width(self) -> int:
        return self.weights.shape[0]


@dataclass
class Mlp:
    layers: List[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("an Mlp needs at least one layer")
        for k in range(len(self.layers) - 1):
            if self.layers[k].out_width != self.layers[k + 1].in_width:
                raise ConfigurationError(
                    "consecutive layers are not width-compatible",
                    layer=k, out=self.layers[k].out_width, next_in=self.layers[k + 1].in_width,
                )
            if self.layers[k].activation is Activation.softmax:
                raise ConfigurationError("only the last layer may use softmax", layer=k)

    @property
    def input_width(self) -> int:
        return self.layers[0].in_width

    @property
    def output_width(self) -> int:
        return self.layers[-1].out_width

    @property
    def ends_in_softmax(self) -> bool:
        return self.layers[-1].activation is Activation.softmax

    @property
    def shapes(self) -> List[Tuple[int, int]]:
        return [layer.weights.shape for layer in self.layers]

    @property
    def n_parameters(self) -> int:
        return sum(layer.weights.size + layer.biases.size for layer in self.layers)

    def copy(self) -> "Mlp":
        return Mlp([
            DenseLayer(layer.weights.copy(), layer.biases.copy(), layer.activation)
            for layer in self.layers
        ])

    def same_parameters(self, other: "Mlp") -> bool:
        """Bit-exact parameter equality"""
        if self.shapes != other.shapes:
            return False
        return all(
            np.array_equal(a.weights, b.weights) and np.array_equal(a.biases, b.biases)
            for a, b in zip(self.layers, other.layers)
        )


@dataclass
class LayerCache:
    inputs: np.ndarray
    pre: np.ndarray
    post: np.ndarray


@dataclass
class ForwardCache:
    shapes: List[Tuple[int, int]]
    layers: List[LayerCache] = field(default_factory=list)


@dataclass
class GradientSet:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @classmethod
    def zeros_like(cls, mlp: Mlp) -> "GradientSet":
        return cls(
            [np.zeros_like(layer.weights) for layer in mlp.layers],
            [np.zeros_like(layer.biases) for layer in mlp.layers],
        )

    def is_congruent(self, mlp: Mlp) -> bool:
        if len(self.weights) != len(mlp.layers) or len(self.biases) != len(mlp.layers):
            return False
        return all(
            gw.shape == layer.weights.shape and gb.shape == layer.biases.shape
            for gw, gb, layer in zip(self.weights, self.biases, mlp.layers)
        )


@dataclass(frozen=True)
class GradientTap:
    """Scales a participant's SGD updates; multiplier 1 is honest"""
    multiplier: float = 1.0
    target: Union[int, str] = "all"

    def __post_init__(self):
        if not np.isfinite(self.multiplier):
            raise ConfigurationError("gradient tap multiplier must be finite", multiplier=self.multiplier)

    def applies_to(self, participant_id: int) -> bool:
        return self.target == "all" or self.target == participant_id


# =============================================================================
# ACTIVATIONS
# =============================================================================

def softmax(z: np.ndarray) -> np.ndarray:
    shifted = np.exp(z - np.max(z))
    return shifted / np.sum(shifted)


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.relu:
        return np.maximum(z, 0.0)
    if activation is Activation.softmax:
        return softmax(z)
    return z


def _activation_backward(da: np.ndarray, cache: LayerCache, activation: Activation) -> np.ndarray:
    if activation is Activation.relu:
        return da * (cache.pre > 0.0)
    if activation is Activation.softmax:
        p = cache.post
        return p * (da - np.dot(da, p))
    return da


# =============================================================================
# OPERATIONS
# =============================================================================

def init_mlp(layer_widths: Sequence[int], activations: Sequence[Activation], rng_seed: int) -> Mlp:
    """Scaled-uniform init in ±sqrt(6 / (fan_in + fan_out)), zero biases"""
    widths = list(layer_widths)
    if len(widths) < 2:
        raise ConfigurationError("layer_widths needs an input width and at least one layer", widths=widths)
    if len(activations) != len(widths) - 1:
        raise ConfigurationError(
            "one activation per layer is required",
            layers=len(widths) - 1, activations=len(activations),
        )
    if any(w < 1 for w in widths):
        raise ConfigurationError("layer widths must be positive", widths=widths)

    rng = np.random.default_rng(rng_seed)
    layers = []
    for fan_in, fan_out, activation in zip(widths[:-1], widths[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(DenseLayer(weights, np.zeros(fan_out), Activation(activation)))
    return Mlp(layers)


def forward(mlp: Mlp, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (mlp.input_width,):
        raise ShapeError("input does not match first layer width", expected=mlp.input_width, got=x.shape)

    cache = ForwardCache(shapes=mlp.shapes)
    a = x
    for layer in mlp.layers:
        z = layer.weights @ a + layer.biases
        out = _activate(z, layer.activation)
        cache.layers.append(LayerCache(inputs=a, pre=z, post=out))
        a = out

    if not np.all(np.isfinite(a)):
        raise NumericalError("forward pass produced non-finite values")
    return a, cache


def loss_softmax_ce(probabilities: np.ndarray, label: int) -> float:
    p = np.asarray(probabilities, dtype=np.float64)
    if not 0 <= label < p.shape[0]:
        raise InputError("label out of range", label=label, classes=p.shape[0])
    if abs(float(np.sum(p)) - 1.0) > 1e-6:
        raise InputError("probabilities do not sum to 1", total=float(np.sum(p)))
    return float(-np.log(max(p[label], LOSS_EPSILON)))


def backward(
    mlp: Mlp,
    cache: ForwardCache,
    label: Optional[int] = None,
    upstream_grad: Optional[np.ndarray] = None,
) -> Tuple[GradientSet, np.ndarray]:
    """Backpropagate from a label (softmax + CE) or from an upstream gradient.

    Returns the GradientSet and the gradient with respect to the component
    input, which is what gets handed to the previous participant.
    """
    if (label is None) == (upstream_grad is None):
        raise ProtocolError("exactly one of label / upstream_grad must be supplied")
    if label is not None and not mlp.ends_in_softmax:
        raise ProtocolError("a label can only terminate a softmax component")
    if cache.shapes != mlp.shapes or len(cache.layers) != len(mlp.layers):
        raise ShapeError("cache was produced by a different component", cache=cache.shapes, mlp=mlp.shapes)

    grads = GradientSet([], [])
    n_layers = len(mlp.layers)

    if label is not None:
        p = cache.layers[-1].post
        if not 0 <= label < p.shape[0]:
            raise InputError("label out of range", label=label, classes=p.shape[0])
        dz = p.copy()
        dz[label] -= 1.0
    else:
        upstream = np.asarray(upstream_grad, dtype=np.float64)
        if upstream.shape != (mlp.output_width,):
            raise ShapeError("upstream gradient does not match output width",
                             expected=mlp.output_width, got=upstream.shape)
        dz = _activation_backward(upstream, cache.layers[-1], mlp.layers[-1].activation)

    for k in range(n_layers - 1, -1, -1):
        layer, layer_cache = mlp.layers[k], cache.layers[k]
        grads.weights.append(np.outer(dz, layer_cache.inputs))
        grads.biases.append(dz.copy())
        da = layer.weights.T @ dz
        if k > 0:
            dz = _activation_backward(da, cache.layers[k - 1], mlp.layers[k - 1].activation)

    grads.weights.reverse()
    grads.biases.reverse()
    return grads, da


def apply_sgd(
    mlp: Mlp,
    grads: GradientSet,
    learning_rate: float,
    tap: Optional[GradientTap] = None,
) -> Mlp:
    """p <- p - (lr * m) * g, in place; m is the tap multiplier (1 without a tap)"""
    if learning_rate < 0:
        raise ConfigurationError("learning rate must be non-negative", learning_rate=learning_rate)
    if not grads.is_congruent(mlp):
        raise ShapeError("gradients are not shape-congruent with the component", mlp=mlp.shapes)

    multiplier = 1.0 if tap is None else tap.multiplier
    step = learning_rate * multiplier
    for layer, gw, gb in zip(mlp.layers, grads.weights, grads.biases):
        layer.weights -= step * gw
        layer.biases -= step * gb
    return mlp


def forward_batch(mlp: Mlp, inputs: np.ndarray) -> np.ndarray:
    """Inference on a (n, in) batch; rows match `forward` on each sample"""
    a = np.asarray(inputs, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != mlp.input_width:
        raise ShapeError("batch does not match first layer width", expected=mlp.input_width, got=a.shape)
    for layer in mlp.layers:
        z = a @ layer.weights.T + layer.biases
        if layer.activation is Activation.relu:
            a = np.maximum(z, 0.0)
        elif layer.activation is Activation.softmax:
            shifted = np.exp(z - z.max(axis=1, keepdims=True))
            a = shifted / shifted.sum(axis=1, keepdims=True)
        else:
            a = z
    return a


# =============================================================================
# CHECKPOINTS
# =============================================================================

def save_checkpoint(mlp: Mlp, path: Path) -> Path:
    """Write shapes, activations and row-major parameters to a versioned .npz"""
    arrays = {
        "version": np.array(CHECKPOINT_VERSION),
        "activations": np.array([layer.activation.value for layer in mlp.layers]),
    }
    for k, layer in enumerate(mlp.layers):
        arrays[f"w{k}"] = layer.weights
        arrays[f"b{k}"] = layer.biases
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path: Path) -> Mlp:
    with np.load(Path(path), allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ConfigurationError("unsupported checkpoint version", version=version)
        activations = [Activation(str(a)) for a in data["activations"]]
        layers = [
            DenseLayer(data[f"w{k}"].copy(), data[f"b{k}"].copy(), activation)
            for k, activation in enumerate(activations)
        ]
    return Mlp(layers)
