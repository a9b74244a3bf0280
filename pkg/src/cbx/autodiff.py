"""Reverse-mode gradients of a scalar loss through a sequential network.

Gradients flow over the activations recorded by a traced forward pass.
Max-pool routes through the recorded switch indices, ReLU gates on the
forward sign (subgradient 0 at exactly 0), and inference-mode batch-norm
contributes its fixed per-channel scale. A central-difference oracle is
provided for checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import IndexOutOfRange, LengthMismatch, NonFiniteValue
from .layers import (
    BatchNorm2D,
    Conv2D,
    Flatten,
    Linear,
    MaxPool2D,
    ReLU,
    Sigmoid,
    Softmax,
    batchnorm_scale_shift,
    col2im,
    im2col,
    pool_scatter,
    sigmoid,
    softmax,
)
from .network import ActivationTrace, Network, forward


@dataclass(frozen=True)
class SelectOutput:
    index: int


@dataclass(frozen=True)
class BinaryCrossEntropyPerOutput:
    targets: np.ndarray  # {0,1}^k

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=np.float64)
        if not np.all((t == 0.0) | (t == 1.0)):
            raise ValueError("targets must be 0 or 1")
        object.__setattr__(self, "targets", t)


@dataclass(frozen=True)
class SoftmaxCrossEntropy:
    target_class: int


LossSpec = Union[SelectOutput, BinaryCrossEntropyPerOutput, SoftmaxCrossEntropy]


@dataclass
class GradientBundle:
    input_grad: np.ndarray
    param_grads: list[dict[str, np.ndarray]]  # one dict per layer, empty if parameter-free


def loss_and_output_grad(loss: LossSpec, output: np.ndarray) -> tuple[float, np.ndarray]:
    """Scalar loss value and its gradient with respect to the network output."""
    if isinstance(loss, SelectOutput):
        if not 0 <= loss.index < output.shape[0]:
            raise IndexOutOfRange(loss.index, output.shape[0])
        g = np.zeros_like(output)
        g[loss.index] = 1.0
        return float(output[loss.index]), g
    if isinstance(loss, BinaryCrossEntropyPerOutput):
        t = loss.targets
        if t.shape != output.shape:
            raise LengthMismatch(t.shape[0], output.shape[0])
        # summed over outputs, computed from logits in stable form
        val = float(np.sum(np.maximum(output, 0) - output * t + np.log1p(np.exp(-np.abs(output)))))
        return val, sigmoid(output) - t
    if isinstance(loss, SoftmaxCrossEntropy):
        y = loss.target_class
        if not 0 <= y < output.shape[0]:
            raise IndexOutOfRange(y, output.shape[0])
        m = np.max(output)
        lse = m + np.log(np.sum(np.exp(output - m)))
        g = softmax(output)
        g[y] -= 1.0
        return float(lse - output[y]), g
    raise TypeError(f"unknown loss spec {loss!r}")


def backward(network: Network, trace: ActivationTrace, out_grad: np.ndarray,
             want_params: bool = False) -> GradientBundle:
    """Backpropagate a gradient at the network output down to the input."""
    g = np.asarray(out_grad, dtype=np.float64)
    param_grads: list[dict[str, np.ndarray]] = [dict() for _ in network.layers]
    for i in range(len(network.layers) - 1, -1, -1):
        layer = network.layers[i]
        a = trace.inputs[i]
        out = trace.outputs[i]
        if isinstance(layer, Linear):
            if want_params:
                param_grads[i] = {"weights": np.outer(g, a), "bias": g.copy()}
            g = layer.weights.T @ g
        elif isinstance(layer, Conv2D):
            oc, ic, kh, kw = layer.weights.shape
            (sh, sw), (ph, pw) = layer.stride, layer.padding
            oh, ow = out.shape[1], out.shape[2]
            gflat = g.reshape(oc, oh * ow)
            if want_params:
                a_pad = np.pad(a, ((0, 0), (ph, ph), (pw, pw))) if (ph or pw) else a
                cols = im2col(a_pad, kh, kw, sh, sw, oh, ow)
                param_grads[i] = {
                    "weights": (gflat @ cols.T).reshape(oc, ic, kh, kw),
                    "bias": gflat.sum(axis=1),
                }
            cols_g = layer.weights.reshape(oc, -1).T @ gflat
            hp, wp = a.shape[1] + 2 * ph, a.shape[2] + 2 * pw
            g = col2im(cols_g, ic, hp, wp, kh, kw, sh, sw, oh, ow, ph, pw)
        elif isinstance(layer, MaxPool2D):
            g = pool_scatter(layer, trace.switches[i], g, a.shape)
        elif isinstance(layer, BatchNorm2D):
            scale, _ = batchnorm_scale_shift(layer)
            if want_params:
                inv = 1.0 / np.sqrt(layer.running_var + layer.eps)
                xhat = (a - layer.running_mean[:, None, None]) * inv[:, None, None]
                param_grads[i] = {
                    "gamma": np.sum(g * xhat, axis=(1, 2)),
                    "beta": np.sum(g, axis=(1, 2)),
                }
            g = g * scale[:, None, None]
        elif isinstance(layer, ReLU):
            g = g * (a > 0)
        elif isinstance(layer, Sigmoid):
            g = g * out * (1.0 - out)
        elif isinstance(layer, Softmax):
            g = out * (g - np.dot(g, out))
        elif isinstance(layer, Flatten):
            g = g.reshape(a.shape)
    if not np.all(np.isfinite(g)):
        raise NonFiniteValue(0, "gradient")
    return GradientBundle(input_grad=g, param_grads=param_grads)


def input_gradient(network: Network, x: np.ndarray, loss: LossSpec) -> np.ndarray:
    output, trace = forward(network, x)
    _, out_grad = loss_and_output_grad(loss, output)
    return backward(network, trace, out_grad).input_grad


def param_gradients(network: Network, x: np.ndarray, loss: LossSpec) -> GradientBundle:
    output, trace = forward(network, x)
    _, out_grad = loss_and_output_grad(loss, output)
    return backward(network, trace, out_grad, want_params=True)


def finite_difference_gradient(network: Network, x: np.ndarray, loss: LossSpec,
                               h: float = 1e-4) -> np.ndarray:
    """Central differences (L(x+h e_i) - L(x-h e_i)) / 2h per coordinate."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=np.float64)  # private copy; perturbed in place
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.shape[0]):
        orig = xf[i]
        xf[i] = orig + h
        lp, _ = loss_and_output_grad(loss, forward(network, x)[0])
        xf[i] = orig - h
        lm, _ = loss_and_output_grad(loss, forward(network, x)[0])
        xf[i] = orig
        flat[i] = (lp - lm) / (2.0 * h)
    return grad
