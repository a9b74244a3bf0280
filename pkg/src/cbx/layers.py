"""Layer types and single-sample forward primitives.

All arithmetic is 64-bit float. Layers are frozen dataclasses holding
read-only numpy arrays; a network is an ordered stack of them. Forward
functions operate on one sample at a time (no batch axis); batch loops
belong to callers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ShapeMismatch


def as_param(a) -> np.ndarray:
    """Convert to a read-only float64 array."""
    arr = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Conv2D:
    weights: np.ndarray  # [out_ch, in_ch, kh, kw]
    bias: np.ndarray  # [out_ch]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, "weights", as_param(self.weights))
        object.__setattr__(self, "bias", as_param(self.bias))
        if self.weights.ndim != 4:
            raise ValueError("conv weights must be [out_ch, in_ch, kh, kw]")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError("conv bias must match out_ch")
        if min(self.stride) < 1:
            raise ValueError("stride must be >= 1")
        if min(self.padding) < 0:
            raise ValueError("padding must be >= 0")


@dataclass(frozen=True)
class Linear:
    weights: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]

    def __post_init__(self):
        object.__setattr__(self, "weights", as_param(self.weights))
        object.__setattr__(self, "bias", as_param(self.bias))
        if self.weights.ndim != 2:
            raise ValueError("linear weights must be [out, in]")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError("linear bias must match out")


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Sigmoid:
    pass


@dataclass(frozen=True)
class Softmax:
    pass


@dataclass(frozen=True)
class MaxPool2D:
    kernel: tuple[int, int]
    stride: tuple[int, int]

    def __post_init__(self):
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise ValueError("pool kernel and stride must be >= 1")


@dataclass(frozen=True)
class BatchNorm2D:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        for name in ("gamma", "beta", "running_mean", "running_var"):
            object.__setattr__(self, name, as_param(getattr(self, name)))
        ch = self.gamma.shape
        if not (self.beta.shape == self.running_mean.shape == self.running_var.shape == ch):
            raise ValueError("batch-norm parameter shapes must agree")
        if np.any(self.running_var < 0):
            raise ValueError("running_var must be >= 0")


@dataclass(frozen=True)
class Flatten:
    pass


Layer = Union[Conv2D, Linear, ReLU, Sigmoid, Softmax, MaxPool2D, BatchNorm2D, Flatten]

PARAMETRIC = (Conv2D, Linear, BatchNorm2D)


def conv_out_hw(layer: Conv2D, h: int, w: int, layer_index: int) -> tuple[int, int]:
    kh, kw = layer.weights.shape[2], layer.weights.shape[3]
    (sh, sw), (ph, pw) = layer.stride, layer.padding
    dh, dw = h + 2 * ph - kh, w + 2 * pw - kw
    if dh < 0 or dw < 0 or dh % sh or dw % sw:
        raise ShapeMismatch(layer_index, f"spatial dims consumable by {kh}x{kw}/s{sh},{sw}/p{ph},{pw}", (h, w))
    return dh // sh + 1, dw // sw + 1


def pool_out_hw(layer: MaxPool2D, h: int, w: int, layer_index: int) -> tuple[int, int]:
    (kh, kw), (sh, sw) = layer.kernel, layer.stride
    dh, dw = h - kh, w - kw
    if dh < 0 or dw < 0 or dh % sh or dw % sw:
        raise ShapeMismatch(layer_index, f"spatial dims consumable by pool {kh}x{kw}/s{sh},{sw}", (h, w))
    return dh // sh + 1, dw // sw + 1


def _pad2d(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (ph, ph), (pw, pw)))


def im2col(x_pad: np.ndarray, kh: int, kw: int, sh: int, sw: int, oh: int, ow: int) -> np.ndarray:
    """Extract conv patches: [C, Hp, Wp] -> [C*kh*kw, oh*ow]."""
    c = x_pad.shape[0]
    s0, s1, s2 = x_pad.strides
    windows = np.lib.stride_tricks.as_strided(
        x_pad, (c, kh, kw, oh, ow), (s0, s1, s2, s1 * sh, s2 * sw)
    )
    return windows.reshape(c * kh * kw, oh * ow)


def col2im(cols: np.ndarray, c: int, hp: int, wp: int, kh: int, kw: int,
           sh: int, sw: int, oh: int, ow: int, ph: int, pw: int) -> np.ndarray:
    """Scatter-add conv patches back: inverse map of im2col."""
    x_pad = np.zeros((c, hp, wp))
    cols5 = cols.reshape(c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            x_pad[:, i:i + sh * oh:sh, j:j + sw * ow:sw] += cols5[:, i, j]
    if ph or pw:
        return x_pad[:, ph:hp - ph, pw:wp - pw]
    return x_pad


def conv2d_forward(layer: Conv2D, x: np.ndarray, layer_index: int = -1) -> np.ndarray:
    oc, ic, kh, kw = layer.weights.shape
    if x.ndim != 3 or x.shape[0] != ic:
        raise ShapeMismatch(layer_index, f"[{ic}, H, W]", tuple(x.shape))
    oh, ow = conv_out_hw(layer, x.shape[1], x.shape[2], layer_index)
    (sh, sw), (ph, pw) = layer.stride, layer.padding
    cols = im2col(_pad2d(x, ph, pw), kh, kw, sh, sw, oh, ow)
    y = layer.weights.reshape(oc, -1) @ cols + layer.bias[:, None]
    return y.reshape(oc, oh, ow)


def linear_forward(layer: Linear, x: np.ndarray, layer_index: int = -1) -> np.ndarray:
    n_out, n_in = layer.weights.shape
    if x.shape != (n_in,):
        raise ShapeMismatch(layer_index, (n_in,), tuple(x.shape))
    return layer.weights @ x + layer.bias


def maxpool_forward(layer: MaxPool2D, x: np.ndarray, layer_index: int = -1
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Returns (output, switches).

    switches[c, i, j] is the row-major flat index within the kernel window
    of the maximal element; ties resolve to the lowest index.
    """
    if x.ndim != 3:
        raise ShapeMismatch(layer_index, "[C, H, W]", tuple(x.shape))
    c, h, w = x.shape
    oh, ow = pool_out_hw(layer, h, w, layer_index)
    (kh, kw), (sh, sw) = layer.kernel, layer.stride
    s0, s1, s2 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, (c, oh, ow, kh, kw), (s0, s1 * sh, s2 * sw, s1, s2)
    ).reshape(c, oh, ow, kh * kw)
    switches = np.argmax(windows, axis=3)
    out = np.take_along_axis(windows, switches[..., None], axis=3)[..., 0]
    return out, switches


def pool_scatter(layer: MaxPool2D, switches: np.ndarray, values: np.ndarray,
                 input_shape: tuple[int, ...]) -> np.ndarray:
    """Place each pooled-output value at its switch position in the input.

    Shared by gradient routing and relevance redistribution; overlapping
    windows accumulate.
    """
    c, h, w = input_shape
    oh, ow = values.shape[1], values.shape[2]
    (kh, kw), (sh, sw) = layer.kernel, layer.stride
    ci, oi, oj = np.meshgrid(np.arange(c), np.arange(oh), np.arange(ow), indexing="ij")
    rows = oi * sh + switches // kw
    cols = oj * sw + switches % kw
    flat = np.zeros(c * h * w)
    np.add.at(flat, (ci * h + rows) * w + cols, values)
    return flat.reshape(c, h, w)


def batchnorm_scale_shift(layer: BatchNorm2D) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel (scale, shift) of the inference-mode affine map."""
    scale = layer.gamma / np.sqrt(layer.running_var + layer.eps)
    shift = layer.beta - layer.running_mean * scale
    return scale, shift


def batchnorm_forward(layer: BatchNorm2D, x: np.ndarray, layer_index: int = -1) -> np.ndarray:
    ch = layer.gamma.shape[0]
    if x.ndim != 3 or x.shape[0] != ch:
        raise ShapeMismatch(layer_index, f"[{ch}, H, W]", tuple(x.shape))
    scale, shift = batchnorm_scale_shift(layer)
    return x * scale[:, None, None] + shift[:, None, None]


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - np.max(x))
    return z / z.sum()


def layer_params(layer: Layer) -> dict[str, np.ndarray]:
    """Trainable parameters of a layer, empty for parameter-free ones."""
    if isinstance(layer, (Conv2D, Linear)):
        return {"weights": layer.weights, "bias": layer.bias}
    if isinstance(layer, BatchNorm2D):
        return {"gamma": layer.gamma, "beta": layer.beta}
    return {}


def replace_params(layer: Layer, new: dict[str, np.ndarray]) -> Layer:
    """Rebuild a layer with some parameters swapped out."""
    if isinstance(layer, Conv2D):
        return Conv2D(new.get("weights", layer.weights), new.get("bias", layer.bias),
                      layer.stride, layer.padding)
    if isinstance(layer, Linear):
        return Linear(new.get("weights", layer.weights), new.get("bias", layer.bias))
    if isinstance(layer, BatchNorm2D):
        return BatchNorm2D(new.get("gamma", layer.gamma), new.get("beta", layer.beta),
                           layer.running_mean, layer.running_var, layer.eps)
    return layer
