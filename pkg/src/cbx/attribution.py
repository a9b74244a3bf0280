"""Attribution methods behind one interface: relevance propagation,
plain gradient saliency, and integrated gradients, each optionally wrapped
in a Gaussian-noise averaging tunnel. Also the channel reduction used by
the pointing metric and the signed red/blue map renderer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .autodiff import SelectOutput, input_gradient
from .errors import ShapeMismatch
from .lrp import RuleMap, default_rule_map, lrp_attribute
from .network import Network, forward
from .rng import Rng


@dataclass(frozen=True)
class LrpMethod:
    rule_map: Optional[RuleMap] = None  # None: derive the default for the network


@dataclass(frozen=True)
class GradientMethod:
    pass


@dataclass(frozen=True)
class IntegratedGradientsMethod:
    steps: int = 50
    baseline: Optional[np.ndarray] = None  # None: all-zeros input

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


Method = Union[LrpMethod, GradientMethod, IntegratedGradientsMethod]


@dataclass(frozen=True)
class SmoothGradSpec:
    n_samples: int = 25
    sigma: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class AttributionConfig:
    method: Method
    smoothgrad: Optional[SmoothGradSpec] = None


@dataclass
class AttributionMap:
    values: np.ndarray
    target_index: int
    method: str


def gradient_saliency(network: Network, x: np.ndarray, target_index: int) -> AttributionMap:
    """Raw signed gradient of the target score with respect to the input."""
    g = input_gradient(network, x, SelectOutput(target_index))
    return AttributionMap(g, target_index, "grad")


def integrated_gradients(network: Network, x: np.ndarray, target_index: int,
                         steps: int = 50, baseline: Optional[np.ndarray] = None
                         ) -> AttributionMap:
    """Midpoint-rule path integral of the gradient from baseline to input."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    base = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if base.shape != x.shape:
        raise ShapeMismatch(0, tuple(x.shape), tuple(base.shape))
    delta = x - base
    acc = np.zeros_like(x)
    for t in range(1, steps + 1):
        point = base + ((t - 0.5) / steps) * delta
        acc += input_gradient(network, point, SelectOutput(target_index))
    return AttributionMap(delta * acc / steps, target_index, "ig")


def _lrp_map(network: Network, x: np.ndarray, target_index: int,
             rule_map: Optional[RuleMap]) -> np.ndarray:
    rules = default_rule_map(network) if rule_map is None else rule_map
    _, trace = forward(network, x)
    values, _ = lrp_attribute(network, trace, target_index, rules)
    return values


def attribute(config: AttributionConfig, network: Network, x: np.ndarray,
              target_index: int) -> AttributionMap:
    """Dispatch one attribution request, applying the noise tunnel if set."""
    if config.smoothgrad is not None:
        inner = AttributionConfig(config.method, None)
        return smoothgrad(inner, network, x, target_index,
                          config.smoothgrad.n_samples, config.smoothgrad.sigma,
                          config.smoothgrad.seed)
    m = config.method
    if isinstance(m, GradientMethod):
        return gradient_saliency(network, x, target_index)
    if isinstance(m, IntegratedGradientsMethod):
        return integrated_gradients(network, x, target_index, m.steps, m.baseline)
    if isinstance(m, LrpMethod):
        return AttributionMap(_lrp_map(network, x, target_index, m.rule_map),
                              target_index, "lrp")
    raise TypeError(f"unknown method {m!r}")


def smoothgrad(base: AttributionConfig, network: Network, x: np.ndarray,
               target_index: int, n_samples: int = 25, sigma: float = 0.2,
               seed: int = 0) -> AttributionMap:
    """Average the base method over n Gaussian-perturbed copies of the input.

    Noise is drawn elementwise from one deterministic stream (sample-major,
    row-major within a sample), so a fixed seed reproduces the map bitwise.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0.0:
        # the mean of n identical draws is the base map: identity wrapper
        m = attribute(AttributionConfig(base.method, None), network, x, target_index)
        return AttributionMap(m.values, target_index, f"smoothgrad-{m.method}")
    rng = Rng(seed)
    acc = np.zeros_like(x)
    tag = ""
    for _ in range(n_samples):
        noise = rng.normal_block(x.size).reshape(x.shape) * sigma
        m = attribute(AttributionConfig(base.method, None), network, x + noise, target_index)
        acc += m.values
        tag = m.method
    return AttributionMap(acc / n_samples, target_index, f"smoothgrad-{tag}")


def channel_reduce(values: np.ndarray) -> np.ndarray:
    """Positive-part channel sum: S[h, w] = sum_c max(values[c, h, w], 0)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 2:
        return np.maximum(v, 0.0)
    if v.ndim == 3:
        return np.maximum(v, 0.0).sum(axis=0)
    raise ShapeMismatch(-1, "[C, H, W] or [H, W]", tuple(v.shape))


def render_signed_map(values: np.ndarray, normalization: Optional[float] = None
                      ) -> np.ndarray:
    """Render a signed map as uint8 RGB: positive red, negative blue, zero white.

    Multi-channel maps are summed over channels (signed) first. Intensity is
    value / max|value| unless an explicit positive normalization is given,
    which makes renders invariant to positive rescaling of the map.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 3:
        v = v.sum(axis=0)
    if v.ndim != 2:
        raise ShapeMismatch(-1, "[C, H, W] or [H, W]", tuple(v.shape))
    scale = float(np.max(np.abs(v))) if normalization is None else float(normalization)
    if scale <= 0:
        return np.full(v.shape + (3,), 255, dtype=np.uint8)
    t = np.clip(v / scale, -1.0, 1.0)
    fade = np.floor(255.0 * (1.0 - np.abs(t)) + 0.5).astype(np.uint8)
    img = np.empty(v.shape + (3,), dtype=np.uint8)
    pos = t >= 0
    img[..., 0] = np.where(pos, 255, fade)
    img[..., 1] = fade
    img[..., 2] = np.where(pos, fade, 255)
    return img


def render_class_strip(relevance: np.ndarray, segment_width: int = 8,
                       height: int = 24) -> np.ndarray:
    """Render a concept-relevance vector as a segmented strip image."""
    r = np.asarray(relevance, dtype=np.float64).reshape(-1)
    strip = render_signed_map(r[None, :])  # 1 x k signed render
    return np.repeat(np.repeat(strip, height, axis=0), segment_width, axis=1)
