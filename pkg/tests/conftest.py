"""Shared builders for randomized networks used across the test suite."""

import numpy as np
import pytest

from cbx.layers import BatchNorm2D, Conv2D, Flatten, Linear, MaxPool2D, ReLU
from cbx.network import Network


def random_conv(rng, in_ch, out_ch, k=3, stride=1, pad=0, zero_bias=False, scale=0.5):
    w = rng.standard_normal((out_ch, in_ch, k, k)) * scale
    b = np.zeros(out_ch) if zero_bias else rng.standard_normal(out_ch) * scale
    return Conv2D(w, b, (stride, stride), (pad, pad))


def random_linear(rng, n_in, n_out, zero_bias=False, scale=0.5):
    w = rng.standard_normal((n_out, n_in)) * scale
    b = np.zeros(n_out) if zero_bias else rng.standard_normal(n_out) * scale
    return Linear(w, b)


def random_convnet(rng, in_shape=(2, 6, 6), zero_bias=False, with_pool=False):
    """conv -> relu -> [pool] -> flatten -> linear, randomly weighted."""
    c, h, w = in_shape
    layers = [random_conv(rng, c, 3, k=3, pad=1, zero_bias=zero_bias), ReLU()]
    hh, ww = h, w
    if with_pool:
        layers.append(MaxPool2D((2, 2), (2, 2)))
        hh, ww = h // 2, w // 2
    layers += [Flatten(), random_linear(rng, 3 * hh * ww, 4, zero_bias=zero_bias)]
    return Network(tuple(layers), in_shape)


def random_bn(rng, ch):
    return BatchNorm2D(
        gamma=rng.standard_normal(ch) * 0.5 + 1.0,
        beta=rng.standard_normal(ch) * 0.3,
        running_mean=rng.standard_normal(ch) * 0.2,
        running_var=np.abs(rng.standard_normal(ch)) + 0.5,
        eps=1e-5,
    )


def sample_ig_friendly_relu_net(rng, n_in=6, hidden=6, n_out=3):
    """Random 2-layer ReLU net and input with completeness headroom.

    Keeps only (net, x) pairs where at least one ReLU unit flips along the
    baseline-to-input path (so the test exercises real discretization
    error) and the total slope jump stays below 0.8 * |score delta|: the
    midpoint rule's worst-case completeness error is
    (jump sum) / (2 * steps), so kept pairs satisfy the 1e-3 relative
    bound at 512 steps by construction.
    """
    from cbx.network import forward as _forward

    while True:
        w1 = rng.standard_normal((hidden, n_in)) * 0.5
        b1 = rng.standard_normal(hidden)
        w2 = rng.standard_normal((n_out, hidden)) * 0.7
        b2 = rng.standard_normal(n_out) * 0.5
        net = Network((Linear(w1, b1), ReLU(), Linear(w2, b2)), (n_in,))
        x = rng.standard_normal(n_in)
        sx, _ = _forward(net, x)
        sb, _ = _forward(net, np.zeros(n_in))
        delta = float(sx[0] - sb[0])
        crossing = np.sign(b1) != np.sign(w1 @ x + b1)
        jump_sum = float(np.sum(np.abs(w2[0]) * np.abs(w1 @ x) * crossing))
        if abs(delta) >= 0.2 and np.any(crossing) and jump_sum <= 0.8 * abs(delta):
            return net, x, delta


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
