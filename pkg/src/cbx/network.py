"""Sequential networks: shape inference, traced forward, batch-norm folding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CannotFold, NonFiniteValue, ShapeMismatch
from .layers import (
    BatchNorm2D,
    Conv2D,
    Flatten,
    Layer,
    Linear,
    MaxPool2D,
    ReLU,
    Sigmoid,
    Softmax,
    batchnorm_forward,
    conv2d_forward,
    conv_out_hw,
    linear_forward,
    maxpool_forward,
    pool_out_hw,
    sigmoid,
    softmax,
)

Shape = tuple[int, ...]


def _layer_out_shape(layer: Layer, shape: Shape, i: int) -> Shape:
    if isinstance(layer, Conv2D):
        oc, ic = layer.weights.shape[0], layer.weights.shape[1]
        if len(shape) != 3 or shape[0] != ic:
            raise ShapeMismatch(i, f"[{ic}, H, W]", shape)
        oh, ow = conv_out_hw(layer, shape[1], shape[2], i)
        return (oc, oh, ow)
    if isinstance(layer, Linear):
        n_out, n_in = layer.weights.shape
        if shape != (n_in,):
            raise ShapeMismatch(i, (n_in,), shape)
        return (n_out,)
    if isinstance(layer, MaxPool2D):
        if len(shape) != 3:
            raise ShapeMismatch(i, "[C, H, W]", shape)
        oh, ow = pool_out_hw(layer, shape[1], shape[2], i)
        return (shape[0], oh, ow)
    if isinstance(layer, BatchNorm2D):
        ch = layer.gamma.shape[0]
        if len(shape) != 3 or shape[0] != ch:
            raise ShapeMismatch(i, f"[{ch}, H, W]", shape)
        return shape
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, Softmax):
        if len(shape) != 1:
            raise ShapeMismatch(i, "[n]", shape)
        return shape
    # ReLU / Sigmoid are elementwise
    return shape


@dataclass(frozen=True)
class Network:
    layers: tuple[Layer, ...]
    input_shape: Shape

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        # composition is validated up front, before any forward runs
        infer_shapes(self, self.input_shape)

    @property
    def output_shape(self) -> Shape:
        return infer_shapes(self, self.input_shape)[-1]

    @property
    def output_arity(self) -> int:
        out = self.output_shape
        return int(np.prod(out))


@dataclass
class ActivationTrace:
    """Every intermediate of one forward pass.

    outputs[i] is the same object as inputs[i+1]; switches holds the
    max-pool argmax indices keyed by layer index.
    """

    inputs: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)
    switches: dict[int, np.ndarray] = field(default_factory=dict)


def infer_shapes(network: Network, input_shape) -> list[Shape]:
    """Per-layer output shapes; raises ShapeMismatch on the first bad layer."""
    shape = tuple(int(d) for d in input_shape)
    out: list[Shape] = []
    for i, layer in enumerate(network.layers):
        shape = _layer_out_shape(layer, shape, i)
        out.append(shape)
    return out


def forward(network: Network, x: np.ndarray) -> tuple[np.ndarray, ActivationTrace]:
    """Run all layers on one sample, recording every intermediate."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if tuple(x.shape) != network.input_shape:
        raise ShapeMismatch(0, network.input_shape, tuple(x.shape))
    trace = ActivationTrace()
    cur = x
    for i, layer in enumerate(network.layers):
        trace.inputs.append(cur)
        if isinstance(layer, Conv2D):
            cur = conv2d_forward(layer, cur, i)
        elif isinstance(layer, Linear):
            cur = linear_forward(layer, cur, i)
        elif isinstance(layer, MaxPool2D):
            cur, sw = maxpool_forward(layer, cur, i)
            trace.switches[i] = sw
        elif isinstance(layer, BatchNorm2D):
            cur = batchnorm_forward(layer, cur, i)
        elif isinstance(layer, ReLU):
            cur = np.maximum(cur, 0.0)
        elif isinstance(layer, Sigmoid):
            cur = sigmoid(cur)
        elif isinstance(layer, Softmax):
            cur = softmax(cur)
        elif isinstance(layer, Flatten):
            cur = cur.reshape(-1)
        else:
            raise ShapeMismatch(i, "known layer type", type(layer).__name__)
        if not np.all(np.isfinite(cur)):
            raise NonFiniteValue(i)
        trace.outputs.append(cur)
    return cur, trace


def fold_batchnorm(network: Network) -> Network:
    """Fuse each batch-norm into its preceding conv; output is equivalent.

    Rewrites w' = w * g / sqrt(var + eps) and b' = (b - mean) * g /
    sqrt(var + eps) + beta per output channel.
    """
    layers = list(network.layers)
    out: list[Layer] = []
    for i, layer in enumerate(layers):
        if isinstance(layer, BatchNorm2D):
            if not out or not isinstance(out[-1], Conv2D):
                raise CannotFold(i)
            conv = out[-1]
            scale = layer.gamma / np.sqrt(layer.running_var + layer.eps)
            w = conv.weights * scale[:, None, None, None]
            b = (conv.bias - layer.running_mean) * scale + layer.beta
            out[-1] = Conv2D(w, b, conv.stride, conv.padding)
        else:
            out.append(layer)
    return Network(tuple(out), network.input_shape)


def is_canonized(network: Network) -> bool:
    return not any(isinstance(l, BatchNorm2D) for l in network.layers)
