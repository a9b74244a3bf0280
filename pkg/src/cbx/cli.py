"""Command-line interface tying the pipelines together.

Subcommands: gen, train, attribute, pointing, contrib, intervene, serve.
Exit codes: 0 success, 2 usage error, 3 data or model error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import attribution as attr
from .cbm import (
    CbmModel,
    TrainConfig,
    bottleneck_values,
    build_default_model,
    concept_binary_accuracy,
    predict,
    top1_accuracy,
    train,
)
from .dataio import (
    export_metrics_csv,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from .errors import CbxError, NonFiniteValue
from .evalkit import (
    class_relevance,
    contribution_report,
    distance_pointing_game,
    sign_pattern_summary,
)
from .imageio import encode_pgm, encode_ppm
from .network import fold_batchnorm
from .synthetic import GeneratorConfig, generate_dataset

USAGE_ERROR, DATA_ERROR, NUMERIC_ERROR = 2, 3, 4


def _dataset_paths(data_dir: str) -> dict[str, str]:
    return {split: os.path.join(data_dir, f"{split}.json")
            for split in ("train", "test")}


def _parse_target(text: str) -> tuple[str, int]:
    kind, _, idx = text.partition(":")
    if kind not in ("concept", "class") or not idx.isdigit():
        raise ValueError(f"target must be concept:K or class:K, got {text!r}")
    return kind, int(idx)


def _parse_int_or_name(token: str, names: list[str], what: str) -> int:
    if token.lstrip("-").isdigit():
        return int(token)
    if token in names:
        return names.index(token)
    raise ValueError(f"unknown {what} {token!r}")


def _method_config(name: str, args) -> attr.AttributionConfig:
    if name == "lrp":
        method: attr.Method = attr.LrpMethod()
    elif name == "grad":
        method = attr.GradientMethod()
    elif name == "ig":
        method = attr.IntegratedGradientsMethod(steps=args.steps)
    else:
        raise ValueError(f"unknown method {name!r}")
    smooth = None
    if args.smoothgrad is not None:
        n, sigma = args.smoothgrad
        smooth = attr.SmoothGradSpec(int(n), float(sigma), args.seed)
    return attr.AttributionConfig(method, smooth)


def cmd_gen(args) -> int:
    height, width = args.size
    config = GeneratorConfig(
        height=height, width=width, n_parts=args.parts, n_colors=args.colors,
        n_classes=args.classes, samples=args.samples, seed=args.seed,
        background_noise=args.noise)
    train_split, test_split = generate_dataset(config)
    os.makedirs(args.out, exist_ok=True)
    paths = _dataset_paths(args.out)
    save_dataset(train_split, paths["train"])
    save_dataset(test_split, paths["test"])
    print(f"wrote {len(train_split)} train / {len(test_split)} test samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    paths = _dataset_paths(args.data)
    train_split = load_dataset(paths["train"])
    test_split = load_dataset(paths["test"])
    image_shape = train_split.samples[0].image.shape
    model = build_default_model(image_shape, train_split.concept_names,
                                train_split.class_names,
                                sigmoid_between=args.sigmoid == "true")
    config = TrainConfig(
        regime=args.regime, joint_lambda=args.joint_lambda, epochs=args.epochs,
        batch_size=args.batch_size, learning_rate=args.lr,
        momentum=args.momentum, seed=args.seed)
    trained, history = train(model, train_split, config)
    save_model(trained, args.out)
    values, logits = [], []
    for sample in test_split.samples:
        cp, cl, _ = predict(trained, sample.image)
        values.append(cp.values)
        logits.append(cl)
    concept_acc = concept_binary_accuracy(values, [s.concepts for s in test_split.samples])
    class_acc = top1_accuracy(logits, [s.class_label for s in test_split.samples])
    if args.history:
        export_metrics_csv(history, args.history)
    print(f"model={args.out}")
    print(f"concept_accuracy={concept_acc:.6f}")
    print(f"top1_accuracy={class_acc:.6f}")
    return 0


def _concept_map(model: CbmModel, config, sample, index) -> np.ndarray:
    g = fold_batchnorm(model.g)
    return attr.attribute(config, g, sample.image, index).values


def _class_target_relevance(model: CbmModel, config, sample, index) -> np.ndarray:
    """Relevance of each concept for a class, by the requested method."""
    cp, _, _ = predict(model, sample.image)
    c_vec = bottleneck_values(model, cp.logits)
    if isinstance(config.method, attr.LrpMethod) and config.smoothgrad is None:
        return class_relevance(model, cp, index)
    f = fold_batchnorm(model.f)
    return attr.attribute(config, f, c_vec, index).values


def cmd_attribute(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(_dataset_paths(args.data)[args.split])
    if not 0 <= args.sample < len(dataset.samples):
        raise CbxError(f"sample {args.sample} out of range")
    sample = dataset.samples[args.sample]
    kind, index = _parse_target(args.target)
    config = _method_config(args.method, args)
    if kind == "concept":
        if not 0 <= index < model.n_concepts:
            raise CbxError(f"concept {index} out of range")
        values = _concept_map(model, config, sample, index)
        rgb = attr.render_signed_map(values)
        grid = attr.channel_reduce(values)
        if args.csv:
            lines = [",".join(f"{v:.6g}" for v in row) for row in grid]
            with open(args.csv, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("\n".join(lines) + "\n")
        if args.pgm:
            peak = float(grid.max())
            gray = np.floor(grid / peak * 255.0 + 0.5) if peak > 0 else grid
            with open(args.pgm, "wb") as fh:
                fh.write(encode_pgm(gray.astype(np.uint8)))
    else:
        if not 0 <= index < model.n_classes:
            raise CbxError(f"class {index} out of range")
        values = _class_target_relevance(model, config, sample, index)
        rgb = attr.render_class_strip(values)
        cp, _, _ = predict(model, sample.image)
        counts = sign_pattern_summary(values, cp.presence)
        print("sign_pattern " + " ".join(f"{k}={v}" for k, v in counts.items()))
        if args.csv:
            report = contribution_report(model, cp, index)
            export_metrics_csv(report, args.csv)
    with open(args.out, "wb") as fh:
        fh.write(encode_ppm(rgb))
    print(f"map={args.out}")
    return 0


def cmd_pointing(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(_dataset_paths(args.data)[args.split])
    mapping = {}
    for pair in args.map.split(","):
        concept_tok, _, part_tok = pair.partition("=")
        if not part_tok:
            raise ValueError(f"--map entries must be CONCEPT=PART, got {pair!r}")
        concept = _parse_int_or_name(concept_tok, list(model.concept_names), "concept")
        part = _parse_int_or_name(part_tok, list(dataset.part_names), "part")
        mapping[concept] = part
    results = []
    for name in args.methods.split(","):
        config = _method_config(name.strip(), args)
        results.append(distance_pointing_game(dataset, model, config, mapping,
                                              max_samples=args.limit))
    export_metrics_csv(results, args.out)
    print(f"pointing={args.out}")
    return 0


def cmd_contrib(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(_dataset_paths(args.data)[args.split])
    if not 0 <= args.sample < len(dataset.samples):
        raise CbxError(f"sample {args.sample} out of range")
    cp, class_logits, _ = predict(model, dataset.samples[args.sample].image)
    if args.target is None:
        target = int(np.argmax(class_logits))
    else:
        kind, target = _parse_target(args.target)
        if kind != "class":
            raise ValueError("contrib target must be class:K")
    report = contribution_report(model, cp, target)
    export_metrics_csv(report, args.out)
    print(f"target_class={target}")
    print(f"contrib={args.out}")
    return 0


def cmd_intervene(args) -> int:
    from .cbm import intervene as run_intervene

    model = load_model(args.model)
    dataset = load_dataset(_dataset_paths(args.data)[args.split])
    if not 0 <= args.sample < len(dataset.samples):
        raise CbxError(f"sample {args.sample} out of range")
    overrides = {}
    for pair in args.set.split(","):
        idx_tok, _, val_tok = pair.partition("=")
        if not val_tok:
            raise ValueError(f"--set entries must be K=V, got {pair!r}")
        idx = _parse_int_or_name(idx_tok, list(model.concept_names), "concept")
        overrides[idx] = float(val_tok)
    cp, _, old_probs = predict(model, dataset.samples[args.sample].image)
    c_vec = bottleneck_values(model, cp.logits)
    new_probs, delta = run_intervene(model, c_vec, overrides)
    header = ["class_id", "class_name", "old_prob", "new_prob", "delta"]
    lines = [",".join(header)]
    for i, name in enumerate(model.class_names):
        lines.append(",".join([str(i), name, f"{old_probs[i]:.6g}",
                               f"{new_probs[i]:.6g}", f"{delta[i]:.6g}"]))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"old_class={int(np.argmax(old_probs))}")
    print(f"new_class={int(np.argmax(new_probs))}")
    print(f"intervene={args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.model, args.data, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _add_method_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--smoothgrad", nargs=2, metavar=("N", "SIGMA"), default=None,
                   help="wrap the method in a noise tunnel: N samples, stddev SIGMA")
    p.add_argument("--steps", type=int, default=50, help="integration steps for ig")
    p.add_argument("--seed", type=int, default=0, help="noise seed for --smoothgrad")
    p.add_argument("--split", choices=("train", "test"), default="test")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbx", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"), default=(64, 64))
    p.add_argument("--parts", type=int, default=3)
    p.add_argument("--colors", type=int, default=3)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.1)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a concept-bottleneck model")
    p.add_argument("--data", required=True)
    p.add_argument("--regime", choices=("independent", "sequential", "joint"),
                   required=True)
    p.add_argument("--sigmoid", choices=("true", "false"), required=True)
    p.add_argument("--lambda", dest="joint_lambda", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--history", default=None, help="write the loss history CSV here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attribute", help="compute one saliency map")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", type=int, required=True)
    p.add_argument("--target", required=True, help="concept:K or class:K")
    p.add_argument("--method", choices=("lrp", "grad", "ig"), required=True)
    _add_method_flags(p)
    p.add_argument("--out", required=True, help="output PPM path")
    p.add_argument("--csv", default=None)
    p.add_argument("--pgm", default=None,
                   help="also write the grayscale magnitude map here")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("pointing", help="run the distance pointing game")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--methods", required=True, help="comma list: lrp,grad,ig")
    p.add_argument("--map", required=True, help="CONCEPT=PART,... pairs")
    p.add_argument("--limit", type=int, default=None,
                   help="evaluate at most this many samples")
    _add_method_flags(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_pointing)

    p = sub.add_parser("contrib", help="concept contribution report")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", type=int, required=True)
    p.add_argument("--target", default=None, help="class:K (default: predicted class)")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_contrib)

    p = sub.add_parser("intervene", help="override concepts and re-predict")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", type=int, required=True)
    p.add_argument("--set", required=True, help="K=V,... concept overrides")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_intervene)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", default=None,
                   help="serve the browser client from this directory at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_ERROR
    try:
        return args.func(args)
    except NonFiniteValue as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_ERROR
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (CbxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
