"""Layer-wise relevance propagation with composite per-layer rules.

A prediction score is redistributed backwards layer by layer. Linear and
conv layers apply one of the proportional rules (basic, epsilon-stabilized,
or alpha/beta split into positive and negative contribution parts);
max-pool hands each output's relevance entirely to the winning input
(winner-takes-all); activations and flatten pass relevance through
unchanged. Bias terms participate in denominators and their share is
absorbed and reported per layer, never redistributed, so the conservation
ledger stays explicit: score = sum(relevance at any layer) + absorbed above
it + whatever the epsilon stabilizer swallowed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import NotCanonized, ShapeMismatch
from .layers import (
    BatchNorm2D,
    Conv2D,
    Flatten,
    Linear,
    MaxPool2D,
    Sigmoid,
    Softmax,
    col2im,
    im2col,
    pool_scatter,
)
from .network import ActivationTrace, Network


@dataclass(frozen=True)
class Zero:
    pass


@dataclass(frozen=True)
class Epsilon:
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class AlphaBeta:
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if abs(self.alpha - self.beta - 1.0) > 1e-12:
            raise ValueError("alpha - beta must equal 1")


@dataclass(frozen=True)
class Passthrough:
    pass


LrpRule = Union[Zero, Epsilon, AlphaBeta, Passthrough]
RuleMap = tuple[LrpRule, ...]


@dataclass
class RelevanceTrace:
    """Relevance at every layer boundary plus per-layer bias absorption.

    relevances[i] is the relevance at the *input* of layer i;
    relevances[L] is the seed placed on the network output.
    """

    relevances: list[np.ndarray] = field(default_factory=list)
    bias_absorbed: list[float] = field(default_factory=list)


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """num/den with zero denominators yielding zero (their relevance is dropped)."""
    out = np.zeros_like(num)
    nz = den != 0
    out[nz] = num[nz] / den[nz]
    return out


def _stabilized(z: np.ndarray, eps: float) -> np.ndarray:
    s = np.where(z >= 0, 1.0, -1.0)  # sign(0) = +1
    return z + eps * s


def lrp_linear_rule(a: np.ndarray, w: np.ndarray, b: np.ndarray,
                    relevance_out: np.ndarray, rule: LrpRule
                    ) -> tuple[np.ndarray, float]:
    """Redistribute relevance through y = w @ a + b.

    w is [out, in]. Returns (relevance over a, scalar bias share absorbed
    at this layer).
    """
    a = np.asarray(a, dtype=np.float64)
    r = np.asarray(relevance_out, dtype=np.float64)
    if w.ndim != 2 or a.shape != (w.shape[1],) or r.shape != (w.shape[0],):
        raise ShapeMismatch(-1, f"a[{w.shape[1]}], R[{w.shape[0]}]",
                            (tuple(a.shape), tuple(r.shape)))
    contrib = w * a[None, :]  # [out, in], a_j * w_kj
    if isinstance(rule, (Zero, Epsilon)):
        z = contrib.sum(axis=1) + b
        if isinstance(rule, Epsilon):
            s = r / _stabilized(z, rule.epsilon)
        else:
            s = _safe_div(r, z)
        relevance_in = contrib.T @ s
        bias_absorbed = float(np.dot(b, s))
        return relevance_in, bias_absorbed
    if isinstance(rule, AlphaBeta):
        pos = np.maximum(contrib, 0.0)
        neg = np.minimum(contrib, 0.0)
        zp = pos.sum(axis=1) + np.maximum(b, 0.0)
        zn = neg.sum(axis=1) + np.minimum(b, 0.0)
        sp = rule.alpha * _safe_div(r, zp)
        sn = -rule.beta * _safe_div(r, zn)
        relevance_in = pos.T @ sp + neg.T @ sn
        bias_absorbed = float(np.dot(np.maximum(b, 0.0), sp) + np.dot(np.minimum(b, 0.0), sn))
        return relevance_in, bias_absorbed
    raise ValueError(f"rule {rule!r} not applicable to a parametric layer")


def _conv_geometry(layer: Conv2D, a: np.ndarray, r: np.ndarray):
    oc, ic, kh, kw = layer.weights.shape
    (sh, sw), (ph, pw) = layer.stride, layer.padding
    if a.ndim != 3 or a.shape[0] != ic:
        raise ShapeMismatch(-1, f"[{ic}, H, W]", tuple(a.shape))
    oh, ow = r.shape[1], r.shape[2]
    hp, wp = a.shape[1] + 2 * ph, a.shape[2] + 2 * pw
    return oc, ic, kh, kw, sh, sw, ph, pw, oh, ow, hp, wp


def _conv_apply(layer_w: np.ndarray, a: np.ndarray, geometry) -> np.ndarray:
    """Convolution of a with an alternative weight tensor, no bias."""
    oc, ic, kh, kw, sh, sw, ph, pw, oh, ow, hp, wp = geometry
    a_pad = np.pad(a, ((0, 0), (ph, ph), (pw, pw))) if (ph or pw) else a
    cols = im2col(a_pad, kh, kw, sh, sw, oh, ow)
    return (layer_w.reshape(oc, -1) @ cols).reshape(oc, oh, ow)


def _conv_redistribute(layer_w: np.ndarray, s: np.ndarray, a_part: np.ndarray,
                       geometry) -> np.ndarray:
    """a_part elementwise-times the transposed convolution of s with layer_w."""
    oc, ic, kh, kw, sh, sw, ph, pw, oh, ow, hp, wp = geometry
    cols = layer_w.reshape(oc, -1).T @ s.reshape(oc, oh * ow)
    back = col2im(cols, ic, hp, wp, kh, kw, sh, sw, oh, ow, ph, pw)
    return a_part * back


def lrp_conv_rule(layer: Conv2D, input_activation: np.ndarray,
                  relevance_out: np.ndarray, rule: LrpRule
                  ) -> tuple[np.ndarray, float]:
    """Conv counterpart of lrp_linear_rule (the conv seen as a patch-wise linear map)."""
    a = np.asarray(input_activation, dtype=np.float64)
    r = np.asarray(relevance_out, dtype=np.float64)
    geom = _conv_geometry(layer, a, r)
    b = layer.bias
    if isinstance(rule, (Zero, Epsilon)):
        z = _conv_apply(layer.weights, a, geom) + b[:, None, None]
        if isinstance(rule, Epsilon):
            s = r / _stabilized(z, rule.epsilon)
        else:
            s = _safe_div(r, z)
        relevance_in = _conv_redistribute(layer.weights, s, a, geom)
        bias_absorbed = float(np.dot(b, s.sum(axis=(1, 2))))
        return relevance_in, bias_absorbed
    if isinstance(rule, AlphaBeta):
        ap, an = np.maximum(a, 0.0), np.minimum(a, 0.0)
        wp, wn = np.maximum(layer.weights, 0.0), np.minimum(layer.weights, 0.0)
        bp, bn = np.maximum(b, 0.0), np.minimum(b, 0.0)
        # (a*w)+ = a+w+ + a-w-  and  (a*w)- = a+w- + a-w+
        zp = _conv_apply(wp, ap, geom) + _conv_apply(wn, an, geom) + bp[:, None, None]
        zn = _conv_apply(wn, ap, geom) + _conv_apply(wp, an, geom) + bn[:, None, None]
        sp = rule.alpha * _safe_div(r, zp)
        sn = -rule.beta * _safe_div(r, zn)
        relevance_in = (
            _conv_redistribute(wp, sp, ap, geom)
            + _conv_redistribute(wn, sp, an, geom)
            + _conv_redistribute(wn, sn, ap, geom)
            + _conv_redistribute(wp, sn, an, geom)
        )
        bias_absorbed = float(
            np.dot(bp, sp.sum(axis=(1, 2))) + np.dot(bn, sn.sum(axis=(1, 2)))
        )
        return relevance_in, bias_absorbed
    raise ValueError(f"rule {rule!r} not applicable to a parametric layer")


def lrp_maxpool(layer: MaxPool2D, switches: np.ndarray, relevance_out: np.ndarray,
                input_shape: tuple[int, ...]) -> np.ndarray:
    """Winner-takes-all: each output's relevance lands on its switch index."""
    return pool_scatter(layer, switches, relevance_out, input_shape)


def default_rule_map(network: Network) -> RuleMap:
    """Composite assignment: the first ceil(7C/13) convs get the
    positive-part rule, remaining convs the epsilon rule, linear layers the
    basic rule, parameter-free layers pass through. For a 13-conv/3-linear
    stack this is the 7/6/3 split.
    """
    n_conv = sum(isinstance(l, Conv2D) for l in network.layers)
    n_alpha = -(-7 * n_conv // 13)  # ceil
    rules: list[LrpRule] = []
    seen_conv = 0
    for i, layer in enumerate(network.layers):
        if isinstance(layer, BatchNorm2D):
            raise NotCanonized(i)
        if isinstance(layer, Conv2D):
            seen_conv += 1
            rules.append(AlphaBeta(1.0, 0.0) if seen_conv <= n_alpha else Epsilon())
        elif isinstance(layer, Linear):
            rules.append(Zero())
        else:
            rules.append(Passthrough())
    return tuple(rules)


def _seed_relevance(network: Network, trace: ActivationTrace, target_index: int
                    ) -> np.ndarray:
    """One-hot seed carrying the raw pre-sigmoid/pre-softmax target score."""
    idx = len(network.layers) - 1
    while idx >= 0 and isinstance(network.layers[idx], (Sigmoid, Softmax)):
        idx -= 1
    pre = trace.outputs[idx] if idx >= 0 else trace.inputs[0]
    out = trace.outputs[-1]
    if not 0 <= target_index < out.reshape(-1).shape[0]:
        raise ShapeMismatch(len(network.layers) - 1,
                            f"target < {out.reshape(-1).shape[0]}", target_index)
    seed = np.zeros_like(out)
    seed.reshape(-1)[target_index] = pre.reshape(-1)[target_index]
    return seed


def lrp_attribute(network: Network, trace: ActivationTrace, target_index: int,
                  rule_map: RuleMap) -> tuple[np.ndarray, RelevanceTrace]:
    """Propagate the target's score from the output back to the input.

    Returns the input-shaped relevance map and the full per-layer trace.
    The network must contain no batch-norm layers (fold first) and the
    trace must come from a forward pass of this same network.
    """
    n = len(network.layers)
    if len(rule_map) != n:
        raise ShapeMismatch(-1, f"rule map of length {n}", len(rule_map))
    for i, layer in enumerate(network.layers):
        if isinstance(layer, BatchNorm2D):
            raise NotCanonized(i)
        if isinstance(layer, (Conv2D, Linear)) and isinstance(rule_map[i], Passthrough):
            raise ValueError(f"layer {i} is parametric but mapped to Passthrough")
    r = _seed_relevance(network, trace, target_index)
    rtrace = RelevanceTrace(relevances=[None] * (n + 1), bias_absorbed=[0.0] * n)
    rtrace.relevances[n] = r
    for i in range(n - 1, -1, -1):
        layer = network.layers[i]
        rule = rule_map[i]
        absorbed = 0.0
        if isinstance(layer, Linear):
            r, absorbed = lrp_linear_rule(trace.inputs[i], layer.weights, layer.bias, r, rule)
        elif isinstance(layer, Conv2D):
            r, absorbed = lrp_conv_rule(layer, trace.inputs[i], r, rule)
        elif isinstance(layer, MaxPool2D):
            r = lrp_maxpool(layer, trace.switches[i], r, trace.inputs[i].shape)
        elif isinstance(layer, Flatten):
            r = r.reshape(trace.inputs[i].shape)
        else:
            # ReLU / Sigmoid / Softmax: relevance passes through unchanged
            r = r
        rtrace.bias_absorbed[i] = absorbed
        rtrace.relevances[i] = r
    return rtrace.relevances[0], rtrace


def conservation_report(relevance_trace: RelevanceTrace, output_score: float
                        ) -> list[dict[str, float]]:
    """Per layer boundary: total relevance, bias absorbed at that layer, and
    the deficit against the seeded score after crediting all absorption in
    the layers above. Epsilon-stabilized layers show their swallowed share
    here rather than hiding it.
    """
    n = len(relevance_trace.bias_absorbed)
    report = []
    absorbed_above = 0.0
    for l in range(n, -1, -1):
        total = float(np.sum(relevance_trace.relevances[l]))
        report.append({
            "layer": l,
            "sum_relevance": total,
            "bias_absorbed": relevance_trace.bias_absorbed[l] if l < n else 0.0,
            "deficit": output_score - (total + absorbed_above),
        })
        if l > 0:
            absorbed_above += relevance_trace.bias_absorbed[l - 1]
    report.reverse()
    return report
