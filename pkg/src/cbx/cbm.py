"""Concept-bottleneck models: composition, prediction, intervention, and
the independent / sequential / joint training regimes.

The concept network maps an image to concept logits; the class network
maps the concept vector to class logits. When the model carries an
inter-part sigmoid, the class network consumes sigmoid(concept logits),
otherwise the raw logits. Training is plain SGD with momentum over
per-sample gradients, every random choice drawn from one seeded stream, so
a fixed seed reproduces the final weights bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import (
    BinaryCrossEntropyPerOutput,
    SoftmaxCrossEntropy,
    backward,
    loss_and_output_grad,
)
from .errors import EmptyDataset, IndexOutOfRange, LengthMismatch, ShapeMismatch
from .layers import (
    Conv2D,
    Flatten,
    Linear,
    MaxPool2D,
    ReLU,
    layer_params,
    replace_params,
    sigmoid,
    softmax,
)
from .network import Network, forward
from .rng import Rng


@dataclass(frozen=True)
class CbmModel:
    g: Network  # input -> concept logits
    f: Network  # concept vector -> class logits
    sigmoid_between: bool
    concept_names: tuple[str, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "concept_names", tuple(self.concept_names))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        k_out = self.g.output_arity
        k_in = self.f.input_shape
        if k_in != (k_out,):
            raise ShapeMismatch(0, (k_out,), k_in)

    @property
    def n_concepts(self) -> int:
        return self.g.output_arity

    @property
    def n_classes(self) -> int:
        return self.f.output_arity


@dataclass
class ConceptPrediction:
    logits: np.ndarray
    values: np.ndarray  # sigmoid(logits)
    presence: np.ndarray  # values >= 0.5


@dataclass(frozen=True)
class TrainConfig:
    regime: str  # "independent" | "sequential" | "joint"
    joint_lambda: float = 1.0
    epochs: int = 10
    batch_size: int = 16
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.regime not in ("independent", "sequential", "joint"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.joint_lambda < 0:
            raise ValueError("joint lambda must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def bottleneck_values(model: CbmModel, concept_logits: np.ndarray) -> np.ndarray:
    """The vector the class network actually consumes."""
    return sigmoid(concept_logits) if model.sigmoid_between else concept_logits


def predict(model: CbmModel, x: np.ndarray
            ) -> tuple[ConceptPrediction, np.ndarray, np.ndarray]:
    """Returns (concept prediction, class logits, class probabilities)."""
    logits, _ = forward(model.g, x)
    values = sigmoid(logits)
    pred = ConceptPrediction(logits, values, values >= 0.5)
    class_logits, _ = forward(model.f, bottleneck_values(model, logits))
    return pred, class_logits, softmax(class_logits)


def intervene(model: CbmModel, concept_values: np.ndarray,
              overrides: dict[int, float]) -> tuple[np.ndarray, np.ndarray]:
    """Re-run the class network on an overridden concept vector.

    Returns (new class probabilities, per-class probability change against
    the unmodified vector). The concept network is untouched.
    """
    c = np.asarray(concept_values, dtype=np.float64)
    k = c.shape[0]
    for idx, val in overrides.items():
        if not 0 <= idx < k:
            raise IndexOutOfRange(idx, k)
        if not np.isfinite(val):
            raise ValueError("override values must be finite")
    old_logits, _ = forward(model.f, c)
    new_c = c.copy()
    for idx, val in overrides.items():
        new_c[idx] = val
    new_logits, _ = forward(model.f, new_c)
    old_probs, new_probs = softmax(old_logits), softmax(new_logits)
    return new_probs, new_probs - old_probs


def he_uniform_init(network: Network, rng: Rng) -> Network:
    """Fresh U(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases."""
    layers = []
    for layer in network.layers:
        if isinstance(layer, Conv2D):
            oc, ic, kh, kw = layer.weights.shape
            fan_in = ic * kh * kw
            bound = np.sqrt(6.0 / fan_in)
            w = (rng.uniform_block(oc * ic * kh * kw).reshape(oc, ic, kh, kw) * 2 - 1) * bound
            layers.append(Conv2D(w, np.zeros(oc), layer.stride, layer.padding))
        elif isinstance(layer, Linear):
            n_out, n_in = layer.weights.shape
            bound = np.sqrt(6.0 / n_in)
            w = (rng.uniform_block(n_out * n_in).reshape(n_out, n_in) * 2 - 1) * bound
            layers.append(Linear(w, np.zeros(n_out)))
        else:
            layers.append(layer)
    return Network(tuple(layers), network.input_shape)


class _SgdState:
    """Momentum buffers keyed by (layer index, parameter name)."""

    def __init__(self, network: Network):
        self.velocity = {
            (i, name): np.zeros_like(p)
            for i, layer in enumerate(network.layers)
            for name, p in layer_params(layer).items()
        }

    def step(self, network: Network, grads: list[dict[str, np.ndarray]],
             lr: float, momentum: float) -> Network:
        layers = list(network.layers)
        for i, layer in enumerate(layers):
            params = layer_params(layer)
            if not params:
                continue
            new = {}
            for name, p in params.items():
                g = grads[i].get(name)
                if g is None:
                    continue
                v = momentum * self.velocity[(i, name)] + g
                self.velocity[(i, name)] = v
                new[name] = p - lr * v
            layers[i] = replace_params(layer, new)
        return Network(tuple(layers), network.input_shape)


def _zero_grads(network: Network) -> list[dict[str, np.ndarray]]:
    return [{name: np.zeros_like(p) for name, p in layer_params(l).items()}
            for l in network.layers]


def _accumulate(total, part, scale=1.0):
    for acc, new in zip(total, part):
        for name, g in new.items():
            acc[name] += scale * g


def _scale_grads(grads, factor):
    for layer_grads in grads:
        for name in layer_grads:
            layer_grads[name] *= factor


def _epoch_batches(n: int, batch_size: int, rng: Rng):
    order = list(range(n))
    rng.shuffle(order)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _train_single(network: Network, inputs, make_loss, config: TrainConfig,
                  rng: Rng, epochs: int, history: list, phase: str) -> Network:
    """SGD over one network; make_loss(i) builds the loss for sample i."""
    state = _SgdState(network)
    n = len(inputs)
    for epoch in range(epochs):
        epoch_loss = 0.0
        for batch in _epoch_batches(n, config.batch_size, rng):
            grads = _zero_grads(network)
            for i in batch:
                out, trace = forward(network, inputs[i])
                loss_val, out_grad = loss_and_output_grad(make_loss(i), out)
                bundle = backward(network, trace, out_grad, want_params=True)
                _accumulate(grads, bundle.param_grads)
                epoch_loss += loss_val
            _scale_grads(grads, 1.0 / len(batch))
            network = state.step(network, grads, config.learning_rate, config.momentum)
        history.append({"phase": phase, "epoch": epoch, "loss": epoch_loss / n})
    return network


def _train_joint(model: CbmModel, images, concepts, labels, config: TrainConfig,
                 rng: Rng, history: list) -> CbmModel:
    g, f = model.g, model.f
    g_state, f_state = _SgdState(g), _SgdState(f)
    n = len(images)
    lam = config.joint_lambda
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        for batch in _epoch_batches(n, config.batch_size, rng):
            g_grads, f_grads = _zero_grads(g), _zero_grads(f)
            for i in batch:
                c_logits, g_trace = forward(g, images[i])
                bottleneck = sigmoid(c_logits) if model.sigmoid_between else c_logits
                class_logits, f_trace = forward(f, bottleneck)
                y_loss, y_grad = loss_and_output_grad(
                    SoftmaxCrossEntropy(labels[i]), class_logits)
                c_loss, c_grad = loss_and_output_grad(
                    BinaryCrossEntropyPerOutput(concepts[i]), c_logits)
                f_bundle = backward(f, f_trace, y_grad, want_params=True)
                _accumulate(f_grads, f_bundle.param_grads)
                g_out_grad = f_bundle.input_grad
                if model.sigmoid_between:
                    g_out_grad = g_out_grad * bottleneck * (1.0 - bottleneck)
                g_bundle = backward(g, g_trace, g_out_grad + lam * c_grad,
                                    want_params=True)
                _accumulate(g_grads, g_bundle.param_grads)
                epoch_loss += y_loss + lam * c_loss
            _scale_grads(g_grads, 1.0 / len(batch))
            _scale_grads(f_grads, 1.0 / len(batch))
            g = g_state.step(g, g_grads, config.learning_rate, config.momentum)
            f = f_state.step(f, f_grads, config.learning_rate, config.momentum)
        history.append({"phase": "joint", "epoch": epoch, "loss": epoch_loss / n})
    return replace(model, g=g, f=f)


def train(model: CbmModel, dataset, config: TrainConfig
          ) -> tuple[CbmModel, list[dict]]:
    """Train per the configured regime; parameters are re-initialized from
    the seeded stream so results depend only on (architecture, data, config).
    """
    samples = dataset.samples
    if not samples:
        raise EmptyDataset("cannot train on an empty dataset")
    rng = Rng(config.seed)
    model = replace(model, g=he_uniform_init(model.g, rng),
                    f=he_uniform_init(model.f, rng))
    images = [s.image for s in samples]
    concepts = [np.asarray(s.concepts, dtype=np.float64) for s in samples]
    labels = [int(s.class_label) for s in samples]
    history: list[dict] = []

    if config.regime == "joint":
        model = _train_joint(model, images, concepts, labels, config, rng, history)
        return model, history

    g = _train_single(model.g, images,
                      lambda i: BinaryCrossEntropyPerOutput(concepts[i]),
                      config, rng, config.epochs, history, "g")
    model = replace(model, g=g)
    if config.regime == "independent":
        f_inputs = concepts
    else:  # sequential: class net consumes what the trained concept net emits
        f_inputs = [bottleneck_values(model, forward(g, img)[0]) for img in images]
    f = _train_single(model.f, f_inputs,
                      lambda i: SoftmaxCrossEntropy(labels[i]),
                      config, rng, config.epochs, history, "f")
    return replace(model, f=f), history


def concept_binary_accuracy(values_list, labels_list) -> float:
    """Fraction of (sample, concept) cells where (value >= 0.5) == label."""
    if len(values_list) != len(labels_list):
        raise LengthMismatch(len(values_list), len(labels_list))
    if not values_list:
        raise EmptyDataset("no predictions")
    hits = total = 0
    for values, labels in zip(values_list, labels_list):
        v = np.asarray(values, dtype=np.float64)
        t = np.asarray(labels, dtype=bool)
        if v.shape != t.shape:
            raise LengthMismatch(v.shape[0], t.shape[0])
        hits += int(np.sum((v >= 0.5) == t))
        total += v.shape[0]
    return hits / total


def top1_accuracy(class_logits_list, labels) -> float:
    """Mean exact-match of argmax (ties to the lowest class index)."""
    if len(class_logits_list) != len(labels):
        raise LengthMismatch(len(class_logits_list), len(labels))
    if not class_logits_list:
        raise EmptyDataset("no predictions")
    hits = sum(int(np.argmax(lg)) == int(y)
               for lg, y in zip(class_logits_list, labels))
    return hits / len(labels)


def conv_pool_concept_network(input_shape, n_concepts: int,
                              channels: tuple[int, int] = (12, 24)) -> Network:
    """Small conv stack used as the default image-to-concepts architecture."""
    c, h, w = input_shape
    c1, c2 = channels
    rng = Rng(0)  # placeholder weights; train() re-initializes
    layers = [
        MaxPool2D((2, 2), (2, 2)),
        Conv2D(np.zeros((c1, c, 3, 3)), np.zeros(c1), (1, 1), (1, 1)),
        ReLU(),
        MaxPool2D((2, 2), (2, 2)),
        Conv2D(np.zeros((c2, c1, 3, 3)), np.zeros(c2), (1, 1), (1, 1)),
        ReLU(),
        MaxPool2D((2, 2), (2, 2)),
        Flatten(),
        Linear(np.zeros((n_concepts, c2 * (h // 8) * (w // 8))), np.zeros(n_concepts)),
    ]
    net = Network(tuple(layers), tuple(input_shape))
    return he_uniform_init(net, rng)


def single_linear_class_network(n_concepts: int, n_classes: int) -> Network:
    """The class head: one fully connected layer over the concept vector."""
    net = Network((Linear(np.zeros((n_classes, n_concepts)), np.zeros(n_classes)),),
                  (n_concepts,))
    return he_uniform_init(net, Rng(0))


def build_default_model(input_shape, concept_names, class_names,
                        sigmoid_between: bool) -> CbmModel:
    g = conv_pool_concept_network(input_shape, len(concept_names))
    f = single_linear_class_network(len(concept_names), len(class_names))
    return CbmModel(g, f, sigmoid_between, tuple(concept_names), tuple(class_names))
