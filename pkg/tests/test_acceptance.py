"""Acceptance gate: one test per release criterion, tolerances pinned.

Each test prints one PASS line (visible with `pytest -s` or on failure);
the test names carry the criterion numbers. Criteria 1-10 need only the
Python package; criterion 11 exercises the HTTP service in-process. The
companion browser client has its own suite under frontend/.
"""

import math
import os
import time

import numpy as np
import pytest

from cbx.attribution import (
    AttributionConfig,
    LrpMethod,
    attribute,
    channel_reduce,
    integrated_gradients,
)
from cbx.autodiff import (
    BinaryCrossEntropyPerOutput,
    SelectOutput,
    SoftmaxCrossEntropy,
    finite_difference_gradient,
    input_gradient,
)
from cbx.cbm import (
    CbmModel,
    TrainConfig,
    bottleneck_values,
    build_default_model,
    intervene,
    predict,
    train,
)
from cbx.cli import main as cli
from cbx.dataio import blob_path, load_dataset, load_model, save_dataset, save_model
from cbx.errors import BadMagic, CorruptOffsets
from cbx.evalkit import (
    PartKeypoint,
    concept_contributions,
    contribution_report,
    most_salient_point,
    pointing_distance,
    shortest_fraction_mean,
)
from cbx.layers import Conv2D, Flatten, Linear, MaxPool2D, ReLU, layer_params, sigmoid
from cbx.lrp import AlphaBeta, Passthrough, Zero, conservation_report, lrp_attribute
from cbx.network import Network, forward
from cbx.synthetic import GeneratorConfig, generate_dataset

from conftest import sample_ig_friendly_relu_net


def _report(name: str, detail: str) -> None:
    print(f"PASS {name}: {detail}")


# ---------------------------------------------------------------------------
# criterion 1: reverse-mode gradients against central differences
# ---------------------------------------------------------------------------

def _random_small_net(rng, kind: int):
    """Up to three parametric layers, mixed conv/linear/pool shapes."""
    if kind == 0:
        layers = (Linear(rng.standard_normal((6, 8)) * 0.6, rng.standard_normal(6) * 0.4),
                  ReLU(),
                  Linear(rng.standard_normal((4, 6)) * 0.6, rng.standard_normal(4) * 0.4))
        return Network(layers, (8,)), (8,)
    if kind == 1:
        layers = (Conv2D(rng.standard_normal((3, 2, 3, 3)) * 0.5,
                         rng.standard_normal(3) * 0.3, (1, 1), (1, 1)),
                  ReLU(), Flatten(),
                  Linear(rng.standard_normal((4, 75)) * 0.4, rng.standard_normal(4) * 0.3))
        return Network(layers, (2, 5, 5)), (2, 5, 5)
    layers = (Conv2D(rng.standard_normal((3, 2, 3, 3)) * 0.5,
                     rng.standard_normal(3) * 0.3, (1, 1), (1, 1)),
              ReLU(), MaxPool2D((2, 2), (2, 2)), Flatten(),
              Linear(rng.standard_normal((4, 27)) * 0.5, rng.standard_normal(4) * 0.3))
    return Network(layers, (2, 6, 6)), (2, 6, 6)


def _kink_free(net, x, margin=1e-6):
    _, trace = forward(net, x)
    for i, layer in enumerate(net.layers):
        if isinstance(layer, ReLU) and np.min(np.abs(trace.inputs[i])) < margin:
            return False
    return True


def test_criterion_01_gradient_oracle():
    rng = np.random.default_rng(20240801)
    started = time.monotonic()
    losses = [SelectOutput(0), SelectOutput(2),
              BinaryCrossEntropyPerOutput(np.array([1.0, 0.0, 1.0, 0.0])),
              SoftmaxCrossEntropy(1)]
    worst = 0.0
    checked = 0
    while checked < 100:
        net, shape = _random_small_net(rng, checked % 3)
        x = rng.standard_normal(shape)
        if not _kink_free(net, x):
            continue
        loss = losses[checked % len(losses)]
        if isinstance(loss, BinaryCrossEntropyPerOutput) and net.output_arity != 4:
            continue
        g = input_gradient(net, x, loss)
        fd = finite_difference_gradient(net, x, loss, h=1e-4)
        rel = np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12)
        worst = max(worst, rel)
        assert rel <= 1e-5
        checked += 1
    elapsed = time.monotonic() - started
    assert elapsed < 30.0
    _report("criterion 1", f"{checked} gradient checks, worst rel err "
            f"{worst:.2e} <= 1e-5, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: integrated-gradients completeness and step convergence
# ---------------------------------------------------------------------------

def test_criterion_02_ig_completeness():
    rng = np.random.default_rng(20240802)
    started = time.monotonic()
    worst = 0.0
    improved = 0
    for _ in range(20):
        net, x, delta = sample_ig_friendly_relu_net(rng)
        err512 = abs(integrated_gradients(net, x, 0, steps=512).values.sum() - delta)
        err8 = abs(integrated_gradients(net, x, 0, steps=8).values.sum() - delta)
        assert err512 <= 1e-3 * abs(delta) + 1e-6
        worst = max(worst, err512 / (1e-3 * abs(delta) + 1e-6))
        improved += err512 <= err8
    elapsed = time.monotonic() - started
    assert improved >= 18
    assert elapsed < 30.0
    _report("criterion 2", f"20 nets complete at 512 steps (worst ratio "
            f"{worst:.2f}), {improved}/20 improved vs 8 steps, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 3: relevance conservation with explicit absorption accounting
# ---------------------------------------------------------------------------

def _conv_stack(rng, zero_bias: bool):
    def bias(n):
        return np.zeros(n) if zero_bias else rng.standard_normal(n) * 0.3

    layers = (
        Conv2D(rng.standard_normal((3, 2, 3, 3)) * 0.6, bias(3), (1, 1), (1, 1)),
        ReLU(),
        MaxPool2D((2, 2), (2, 2)),
        Conv2D(rng.standard_normal((4, 3, 3, 3)) * 0.5, bias(4), (1, 1), (1, 1)),
        ReLU(),
        Flatten(),
        Linear(rng.standard_normal((5, 36)) * 0.5, bias(5)),
    )
    return Network(layers, (2, 6, 6))


def _rule_map_for(net, rule):
    return tuple(rule if hasattr(l, "weights") else Passthrough() for l in net.layers)


def test_criterion_03_lrp_conservation():
    rng = np.random.default_rng(20240803)
    started = time.monotonic()
    worst_deficit = 0.0
    worst_account = 0.0
    for trial in range(50):
        x = np.abs(rng.standard_normal((2, 6, 6)))
        # zero-bias: per-layer deficit vanishes under both exact rules
        net = _conv_stack(rng, zero_bias=True)
        out, trace = forward(net, x)
        target = int(np.argmax(np.abs(out)))
        score = float(out[target])
        for rule in (Zero(), AlphaBeta(1.0, 0.0)):
            _, rtrace = lrp_attribute(net, trace, target, _rule_map_for(net, rule))
            report = conservation_report(rtrace, score)
            for entry in report:
                rel = abs(entry["deficit"]) / max(abs(score), 1e-12)
                worst_deficit = max(worst_deficit, rel)
                assert rel <= 1e-9
        # with biases: score equals input relevance plus all absorbed shares
        net = _conv_stack(rng, zero_bias=False)
        out, trace = forward(net, x)
        target = int(np.argmax(np.abs(out)))
        score = float(out[target])
        for rule in (Zero(), AlphaBeta(1.0, 0.0)):
            _, rtrace = lrp_attribute(net, trace, target, _rule_map_for(net, rule))
            total = float(rtrace.relevances[0].sum()) + sum(rtrace.bias_absorbed)
            rel = abs(total - score) / max(abs(score), 1e-12)
            worst_account = max(worst_account, rel)
            assert rel <= 1e-9
    elapsed = time.monotonic() - started
    assert elapsed < 30.0
    _report("criterion 3", f"50 nets conserve (worst per-layer deficit "
            f"{worst_deficit:.2e}, worst bias accounting {worst_account:.2e}), "
            f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 4: basic rule equals gradient-times-input on zero-bias ReLU nets
# ---------------------------------------------------------------------------

def test_criterion_04_lrp0_gradient_times_input():
    rng = np.random.default_rng(20240804)
    worst = 0.0
    for _ in range(50):
        net = _conv_stack(rng, zero_bias=True)
        x = np.abs(rng.standard_normal((2, 6, 6))) + 0.05
        out, trace = forward(net, x)
        target = int(np.argmax(np.abs(out)))
        values, _ = lrp_attribute(net, trace, target, _rule_map_for(net, Zero()))
        gxi = x * input_gradient(net, x, SelectOutput(target))
        err = np.abs(values - gxi)
        bound = 1e-8 * np.maximum(np.abs(values), np.abs(gxi)) + 1e-12
        assert np.all(err <= bound)
        scale = max(float(np.max(np.abs(gxi))), 1e-12)
        worst = max(worst, float(np.max(err)) / scale)
    _report("criterion 4", f"50 zero-bias ReLU nets, worst elementwise "
            f"rel err {worst:.2e} <= 1e-8")


# ---------------------------------------------------------------------------
# criterion 5: closed-form relevance on the single-linear class head
# ---------------------------------------------------------------------------

def test_criterion_05_class_head_closed_form():
    rng = np.random.default_rng(20240805)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 12))
        n_cls = int(rng.integers(2, 6))
        w = rng.standard_normal((n_cls, k))
        b = rng.standard_normal(n_cls)
        chat = rng.uniform(size=k) * (rng.uniform(size=k) > 0.3)
        target = int(rng.integers(0, n_cls))
        f = Network((Linear(w, b),), (k,))
        _, trace = forward(f, chat)
        r, _ = lrp_attribute(f, trace, target, (Zero(),))
        denom = float(w[target] @ chat + b[target])
        logit = denom
        expected = np.zeros(k) if denom == 0 else chat * w[target] / denom * logit
        err = float(np.max(np.abs(r - expected)))
        worst = max(worst, err)
        assert err <= 1e-12
        assert np.all(r[chat == 0.0] == 0.0)
    _report("criterion 5", f"1000 heads match the closed form, worst abs err "
            f"{worst:.2e} <= 1e-12; zero-value concepts get exactly zero")


# ---------------------------------------------------------------------------
# criterion 6: pointing-game primitives against exhaustive scans
# ---------------------------------------------------------------------------

def test_criterion_06_pointing_oracle():
    rng = np.random.default_rng(20240806)
    for _ in range(1000):
        grid = rng.standard_normal((16, 16))
        best = (0, 0)
        for r in range(16):
            for c in range(16):
                if grid[r, c] > grid[best]:
                    best = (r, c)
        assert most_salient_point(grid) == best
        x, y = int(rng.integers(0, 16)), int(rng.integers(0, 16))
        got = pointing_distance(grid, PartKeypoint(0, x=x, y=y, visible=True))
        assert got == math.hypot(best[0] - y, best[1] - x)
    assert shortest_fraction_mean(list(range(1, 11)), 0.1) == 1.0
    assert shortest_fraction_mean([4.0, 1.0, 7.0], 1.0) == 4.0
    assert shortest_fraction_mean(list(range(15, 0, -1)), 0.1) == 1.5  # ceil(1.5)=2
    _report("criterion 6", "1000 grids match exhaustive argmax and distance; "
            "shortest-fraction means match hand values incl. ceil boundary")


# ---------------------------------------------------------------------------
# criterion 7: contribution percentages
# ---------------------------------------------------------------------------

def test_criterion_07_contributions():
    rng = np.random.default_rng(20240807)
    for _ in range(1000):
        r = rng.standard_normal(int(rng.integers(1, 25)))
        pct, all_zero = concept_contributions(r)
        assert not all_zero
        assert np.all(pct >= 0.0)
        assert abs(pct.sum() - 100.0) <= 1e-9
        scaled, _ = concept_contributions(r * 7.25)
        assert np.allclose(pct, scaled, atol=1e-9)
    # deterministic, stable report ordering
    w = np.array([[1.0, 1.0, 2.0, 1.0]])
    model = CbmModel(
        Network((Linear(np.eye(4), np.zeros(4)),), (4,)),
        Network((Linear(w, np.zeros(1)),), (4,)),
        False, ("a", "b", "c", "d"), ("y",))
    from cbx.cbm import ConceptPrediction
    chat = np.array([1.0, 1.0, 1.0, 1.0])
    pred = ConceptPrediction(chat, sigmoid(chat), sigmoid(chat) >= 0.5)
    first = contribution_report(model, pred, 0)
    second = contribution_report(model, pred, 0)
    assert [r.concept_id for r in first.rows] == [2, 0, 1, 3]
    assert [(r.concept_id, r.contribution_percent) for r in first.rows] == \
           [(r.concept_id, r.contribution_percent) for r in second.rows]
    _report("criterion 7", "1000 vectors: nonnegative, sum 100 +/- 1e-9, "
            "scale-invariant; report order deterministic")


# ---------------------------------------------------------------------------
# criterion 8: desk-scale end-to-end pipeline, repeated byte-identically
# ---------------------------------------------------------------------------

def _run_pipeline(root: str) -> dict[str, bytes]:
    data = os.path.join(root, "data")
    model = os.path.join(root, "model.json")
    pointing = os.path.join(root, "pointing.csv")
    assert cli(["gen", "--out", data, "--seed", "7", "--samples", "2500"]) == 0
    started = time.monotonic()
    assert cli(["train", "--data", data, "--regime", "independent",
                "--sigmoid", "true", "--epochs", "14", "--seed", "1",
                "--out", model]) == 0
    train_seconds = time.monotonic() - started
    assert train_seconds < 300.0
    assert cli(["pointing", "--model", model, "--data", data,
                "--methods", "lrp,grad,ig", "--map", "0=0,1=1,2=2",
                "--limit", "12", "--steps", "16", "--out", pointing]) == 0
    files = {}
    for path in (os.path.join(data, "train.json"), os.path.join(data, "test.json"),
                 blob_path(os.path.join(data, "train.json")),
                 blob_path(os.path.join(data, "test.json")),
                 model, blob_path(model), pointing):
        with open(path, "rb") as fh:
            files[os.path.relpath(path, root)] = fh.read()
    files["__train_seconds__"] = str(train_seconds).encode()
    return files


def test_criterion_08_desk_scale_end_to_end(tmp_path):
    first_root = str(tmp_path / "run1")
    second_root = str(tmp_path / "run2")
    os.makedirs(first_root)
    os.makedirs(second_root)
    first = _run_pipeline(first_root)
    train_seconds = float(first.pop("__train_seconds__"))

    data = os.path.join(first_root, "data")
    dataset = load_dataset(os.path.join(data, "test.json"))
    train_split = load_dataset(os.path.join(data, "train.json"))
    assert len(train_split) == 2000 and len(dataset) == 500
    model = load_model(os.path.join(first_root, "model.json"))
    values, logits = [], []
    for s in dataset.samples:
        cp, cl, _ = predict(model, s.image)
        values.append(cp.values)
        logits.append(cl)
    from cbx.cbm import concept_binary_accuracy, top1_accuracy
    concept_acc = concept_binary_accuracy(values, [s.concepts for s in dataset.samples])
    class_acc = top1_accuracy(logits, [s.class_label for s in dataset.samples])
    assert concept_acc >= 0.90
    assert class_acc >= 0.80

    csv_lines = first["pointing.csv"].decode().strip().split("\n")
    assert csv_lines[0] == ("method,part_id,n_samples,n_skipped,"
                            "mean_distance,shortest10_mean")
    assert {line.split(",")[0] for line in csv_lines[1:]} == {"lrp", "grad", "ig"}

    second = _run_pipeline(second_root)
    second.pop("__train_seconds__")
    assert set(first) == set(second)
    for name in first:
        assert first[name] == second[name], f"{name} differs between runs"
    _report("criterion 8", f"2000/500 split, concept acc {concept_acc:.4f} "
            f">= 0.90, top-1 {class_acc:.4f} >= 0.80, train {train_seconds:.0f}s "
            f"< 300s, rerun byte-identical ({len(first)} files)")


# ---------------------------------------------------------------------------
# criterion 9: sign-pattern reporting across all four training variants
# ---------------------------------------------------------------------------

def test_criterion_09_sign_patterns_all_regimes(tmp_path, capsys):
    data = str(tmp_path / "data")
    assert cli(["gen", "--out", data, "--seed", "11", "--samples", "150"]) == 0
    variants = [("independent", "true"), ("sequential", "false"),
                ("joint", "true"), ("joint", "false")]
    summaries = []
    for regime, sigmoid_flag in variants:
        model_path = str(tmp_path / f"{regime}_{sigmoid_flag}.json")
        assert cli(["train", "--data", data, "--regime", regime,
                    "--sigmoid", sigmoid_flag, "--epochs", "2", "--seed", "3",
                    "--out", model_path]) == 0
        strip = str(tmp_path / f"{regime}_{sigmoid_flag}.ppm")
        assert cli(["attribute", "--model", model_path, "--data", data,
                    "--sample", "0", "--target", "class:0", "--method", "lrp",
                    "--out", strip]) == 0
        printed = capsys.readouterr().out
        line = next(l for l in printed.splitlines() if l.startswith("sign_pattern"))
        counts = dict(tok.split("=") for tok in line.split()[1:])
        assert set(counts) == {"present_pos", "present_neg", "absent_pos",
                               "absent_neg", "zero"}
        assert sum(int(v) for v in counts.values()) == 12
        summaries.append(f"{regime}/sigmoid={sigmoid_flag}: {line.split(' ', 1)[1]}")
    _report("criterion 9", "; ".join(summaries))


# ---------------------------------------------------------------------------
# criterion 10: serialization round-trips and declared corruption errors
# ---------------------------------------------------------------------------

def test_criterion_10_serialization(tmp_path):
    import json

    train_split, _ = generate_dataset(GeneratorConfig(samples=15, seed=23))
    model = build_default_model((3, 64, 64), train_split.concept_names,
                                train_split.class_names, sigmoid_between=False)
    from cbx.cbm import he_uniform_init
    from cbx.rng import Rng
    model = CbmModel(he_uniform_init(model.g, Rng(1)),
                     he_uniform_init(model.f, Rng(2)),
                     model.sigmoid_between, model.concept_names, model.class_names)

    model_path = str(tmp_path / "m.json")
    save_model(model, model_path)
    loaded = load_model(model_path)
    for l1, l2 in zip(model.g.layers + model.f.layers,
                      loaded.g.layers + loaded.f.layers):
        for name, p in layer_params(l1).items():
            assert np.array_equal(p, layer_params(l2)[name])
    assert loaded.concept_names == model.concept_names
    assert loaded.sigmoid_between == model.sigmoid_between

    data_path = str(tmp_path / "d.json")
    save_dataset(train_split, data_path)
    loaded_ds = load_dataset(data_path)
    for a, b in zip(train_split.samples, loaded_ds.samples):
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.concepts, b.concepts)
        assert a.class_label == b.class_label and a.keypoints == b.keypoints

    manifest = json.load(open(model_path))
    manifest["magic"] = "XXXX"
    json.dump(manifest, open(model_path, "w"))
    with pytest.raises(BadMagic):
        load_model(model_path)

    save_model(model, model_path)
    blob = open(blob_path(model_path), "rb").read()
    open(blob_path(model_path), "wb").write(blob[:100])
    with pytest.raises(CorruptOffsets):
        load_model(model_path)
    _report("criterion 10", "model and dataset round-trips bitwise; corrupted "
            "magic -> BadMagic, truncated blob -> CorruptOffsets")


# ---------------------------------------------------------------------------
# criterion 11: HTTP service matches in-process computation field-for-field
# ---------------------------------------------------------------------------

def test_criterion_11_api_conformance():
    from fastapi.testclient import TestClient

    from cbx.service import build_app

    train_split, test_split = generate_dataset(GeneratorConfig(samples=30, seed=29))
    model = build_default_model((3, 64, 64), train_split.concept_names,
                                train_split.class_names, sigmoid_between=True)
    model, _ = train(model, train_split, TrainConfig(regime="independent",
                                                     epochs=1, seed=4))
    client = TestClient(build_app(model, test_split))
    sid = 0
    sample = test_split.samples[sid]

    body = client.post("/predict", json={"sample_id": sid}).json()
    cp, _, probs = predict(model, sample.image)
    assert np.allclose(body["class_probs"], probs, atol=0, rtol=0)
    assert abs(sum(body["class_probs"]) - 1.0) <= 1e-9
    assert [c["value"] for c in body["concepts"]] == [float(v) for v in cp.values]

    req = {"sample_id": sid, "target": {"kind": "concept", "index": 1},
           "method": "lrp", "options": {}}
    body = client.post("/attribute", json=req).json()
    from cbx.network import fold_batchnorm
    values = attribute(AttributionConfig(LrpMethod()), fold_batchnorm(model.g),
                       sample.image, 1).values
    grid = channel_reduce(values)
    assert np.allclose(body["reduced_grid"], grid, atol=0, rtol=0)
    assert (body["peak"]["row"], body["peak"]["col"]) == most_salient_point(grid)

    body = client.post("/intervene", json={"sample_id": sid,
                                           "overrides": {"2": 1.0}}).json()
    c_vec = bottleneck_values(model, cp.logits)
    new_probs, delta = intervene(model, c_vec, {2: 1.0})
    assert np.allclose(body["new_probs"], new_probs, atol=0, rtol=0)
    assert np.allclose(body["delta"], delta, atol=0, rtol=0)
    total = sum(r["contribution_percent"] for r in body["new_contributions"])
    assert abs(total - 100.0) <= 1e-9

    body = client.get("/contributions", params={"sample_id": sid,
                                                "class": 1}).json()
    report = contribution_report(model, cp, 1)
    assert [r["relevancy"] for r in body["rows"]] == [r.relevance for r in report.rows]
    total = sum(r["contribution_percent"] for r in body["rows"])
    assert abs(total - 100.0) <= 1e-9 or body["all_zero"]
    _report("criterion 11", "/predict, /attribute, /intervene, /contributions "
            "match in-process results; sum invariants hold")
