"""Model and dataset files, and byte-stable CSV export.

Both file kinds pair a JSON manifest (opened by the magic string "CBX1")
with a raw blob of little-endian 64-bit floats. The manifest records
structure and byte offsets into the blob; the blob holds exact parameter
or pixel bytes, so save/load round-trips are bitwise identities. For a
manifest at PATH the blob lives at PATH + ".bin".
"""

from __future__ import annotations

import json
from typing import Union

import numpy as np

from .cbm import CbmModel
from .errors import BadMagic, CorruptOffsets, EmptyDataset, ShapeMismatch
from .evalkit import ContributionReport, PartKeypoint, PointingResult
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
)
from .network import Network
from .synthetic import GeneratorConfig, SyntheticDataset, SyntheticSample

MAGIC = "CBX1"

_F8 = np.dtype("<f8")


def blob_path(path: str) -> str:
    return path + ".bin"


class _BlobWriter:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def append(self, arr: np.ndarray) -> dict:
        data = np.ascontiguousarray(arr, dtype=np.float64).astype(_F8).tobytes()
        rec = {"offset": self.offset, "count": int(arr.size)}
        self.chunks.append(data)
        self.offset += len(data)
        return rec

    def bytes(self) -> bytes:
        return b"".join(self.chunks)


def _read_blob(blob: bytes, rec: dict, shape) -> np.ndarray:
    offset, count = rec["offset"], rec["count"]
    end = offset + count * 8
    if offset < 0 or end > len(blob) or offset % 8:
        raise CorruptOffsets(f"blob slice [{offset}, {end}) outside {len(blob)} bytes")
    arr = np.frombuffer(blob, dtype=_F8, count=count, offset=offset).astype(np.float64)
    expected = int(np.prod(shape))
    if count != expected:
        raise ShapeMismatch(-1, shape, count)
    return arr.reshape(shape)


def _layer_manifest(layer: Layer, blob: _BlobWriter) -> dict:
    if isinstance(layer, Conv2D):
        return {
            "kind": "conv2d",
            "weights_shape": list(layer.weights.shape),
            "stride": list(layer.stride),
            "padding": list(layer.padding),
            "weights": blob.append(layer.weights),
            "bias": blob.append(layer.bias),
        }
    if isinstance(layer, Linear):
        return {
            "kind": "linear",
            "weights_shape": list(layer.weights.shape),
            "weights": blob.append(layer.weights),
            "bias": blob.append(layer.bias),
        }
    if isinstance(layer, BatchNorm2D):
        return {
            "kind": "batchnorm2d",
            "channels": int(layer.gamma.shape[0]),
            "eps": layer.eps,
            "gamma": blob.append(layer.gamma),
            "beta": blob.append(layer.beta),
            "running_mean": blob.append(layer.running_mean),
            "running_var": blob.append(layer.running_var),
        }
    if isinstance(layer, MaxPool2D):
        return {"kind": "maxpool2d", "kernel": list(layer.kernel), "stride": list(layer.stride)}
    if isinstance(layer, ReLU):
        return {"kind": "relu"}
    if isinstance(layer, Sigmoid):
        return {"kind": "sigmoid"}
    if isinstance(layer, Softmax):
        return {"kind": "softmax"}
    if isinstance(layer, Flatten):
        return {"kind": "flatten"}
    raise TypeError(f"unsupported layer {layer!r}")


def _layer_from_manifest(entry: dict, blob: bytes) -> Layer:
    kind = entry["kind"]
    if kind == "conv2d":
        shape = tuple(entry["weights_shape"])
        return Conv2D(
            _read_blob(blob, entry["weights"], shape),
            _read_blob(blob, entry["bias"], (shape[0],)),
            tuple(entry["stride"]),
            tuple(entry["padding"]),
        )
    if kind == "linear":
        shape = tuple(entry["weights_shape"])
        return Linear(
            _read_blob(blob, entry["weights"], shape),
            _read_blob(blob, entry["bias"], (shape[0],)),
        )
    if kind == "batchnorm2d":
        ch = (entry["channels"],)
        return BatchNorm2D(
            _read_blob(blob, entry["gamma"], ch),
            _read_blob(blob, entry["beta"], ch),
            _read_blob(blob, entry["running_mean"], ch),
            _read_blob(blob, entry["running_var"], ch),
            entry["eps"],
        )
    if kind == "maxpool2d":
        return MaxPool2D(tuple(entry["kernel"]), tuple(entry["stride"]))
    simple = {"relu": ReLU, "sigmoid": Sigmoid, "softmax": Softmax, "flatten": Flatten}
    if kind in simple:
        return simple[kind]()
    raise BadMagic(kind)


def _network_manifest(net: Network, blob: _BlobWriter) -> dict:
    return {
        "input_shape": list(net.input_shape),
        "layers": [_layer_manifest(l, blob) for l in net.layers],
    }


def _network_from_manifest(entry: dict, blob: bytes) -> Network:
    layers = tuple(_layer_from_manifest(l, blob) for l in entry["layers"])
    return Network(layers, tuple(entry["input_shape"]))


def _write_pair(path: str, manifest: dict, blob: bytes) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(blob_path(path), "wb") as fh:
        fh.write(blob)


def _read_pair(path: str) -> tuple[dict, bytes]:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("magic") != MAGIC:
        raise BadMagic(str(manifest.get("magic")))
    with open(blob_path(path), "rb") as fh:
        blob = fh.read()
    return manifest, blob


def save_model(model: CbmModel, path: str) -> None:
    blob = _BlobWriter()
    manifest = {
        "magic": MAGIC,
        "kind": "model",
        "sigmoid_between": model.sigmoid_between,
        "concept_names": list(model.concept_names),
        "class_names": list(model.class_names),
        "g": _network_manifest(model.g, blob),
        "f": _network_manifest(model.f, blob),
    }
    _write_pair(path, manifest, blob.bytes())


def load_model(path: str) -> CbmModel:
    manifest, blob = _read_pair(path)
    if manifest.get("kind") != "model":
        raise BadMagic(f"{manifest.get('kind')} (expected model)")
    return CbmModel(
        g=_network_from_manifest(manifest["g"], blob),
        f=_network_from_manifest(manifest["f"], blob),
        sigmoid_between=bool(manifest["sigmoid_between"]),
        concept_names=tuple(manifest["concept_names"]),
        class_names=tuple(manifest["class_names"]),
    )


def save_dataset(dataset: SyntheticDataset, path: str) -> None:
    if not dataset.samples:
        raise EmptyDataset("refusing to save an empty dataset")
    blob = _BlobWriter()
    records = []
    for s in dataset.samples:
        rec = {
            "class": int(s.class_label),
            "concepts": [int(v) for v in np.asarray(s.concepts, dtype=bool)],
            "keypoints": [
                {"part_id": kp.part_id, "x": kp.x, "y": kp.y, "visible": kp.visible}
                for kp in s.keypoints
            ],
            "image": blob.append(s.image),
        }
        records.append(rec)
    cfg = dataset.config
    manifest = {
        "magic": MAGIC,
        "kind": "dataset",
        "image_shape": list(dataset.samples[0].image.shape),
        "concept_names": list(dataset.concept_names),
        "class_names": list(dataset.class_names),
        "part_names": list(dataset.part_names),
        "config": None if cfg is None else {
            "height": cfg.height, "width": cfg.width, "n_parts": cfg.n_parts,
            "n_colors": cfg.n_colors, "n_classes": cfg.n_classes,
            "samples": cfg.samples, "seed": cfg.seed,
            "background_noise": cfg.background_noise,
        },
        "sample_count": len(records),
        "samples": records,
    }
    _write_pair(path, manifest, blob.bytes())


def load_dataset(path: str) -> SyntheticDataset:
    manifest, blob = _read_pair(path)
    if manifest.get("kind") != "dataset":
        raise BadMagic(f"{manifest.get('kind')} (expected dataset)")
    records = manifest["samples"]
    if manifest["sample_count"] != len(records):
        raise CorruptOffsets(
            f"declared {manifest['sample_count']} samples, found {len(records)}")
    shape = tuple(manifest["image_shape"])
    samples = []
    for rec in records:
        samples.append(SyntheticSample(
            image=_read_blob(blob, rec["image"], shape),
            concepts=np.asarray(rec["concepts"], dtype=bool),
            class_label=int(rec["class"]),
            keypoints=[PartKeypoint(kp["part_id"], kp["x"], kp["y"], kp["visible"])
                       for kp in rec["keypoints"]],
            placements=[],
        ))
    cfg = manifest.get("config")
    config = GeneratorConfig(**cfg) if cfg else None
    return SyntheticDataset(samples, list(manifest["concept_names"]),
                            list(manifest["class_names"]),
                            list(manifest["part_names"]), config)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _csv_lines(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def export_metrics_csv(data: Union[ContributionReport, list, dict], path: str) -> None:
    """Write a metrics structure as UTF-8 CSV with a fixed column order and
    6-significant-digit numbers; identical inputs produce identical bytes."""
    text = render_metrics_csv(data)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def render_metrics_csv(data: Union[ContributionReport, list, dict]) -> str:
    if isinstance(data, ContributionReport):
        if not data.rows:
            raise EmptyDataset("empty contribution report")
        header = ["concept_id", "concept_name", "concept_value", "relevancy",
                  "contribution_percent"]
        rows = [[r.concept_id, r.concept_name, r.concept_value, r.relevance,
                 r.contribution_percent] for r in data.rows]
        return _csv_lines(header, rows)
    if isinstance(data, list) and data and isinstance(data[0], PointingResult):
        header = ["method", "part_id", "n_samples", "n_skipped",
                  "mean_distance", "shortest10_mean"]
        rows = []
        for result in data:
            for part_id in sorted(result.per_part):
                st = result.per_part[part_id]
                rows.append([result.method, part_id, st.n_samples, st.n_skipped,
                             st.mean_distance, st.shortest10_mean])
        return _csv_lines(header, rows)
    if isinstance(data, PointingResult):
        return render_metrics_csv([data])
    if isinstance(data, list) and data and isinstance(data[0], dict):
        # training history
        header = ["phase", "epoch", "loss"]
        rows = [[h["phase"], h["epoch"], h["loss"]] for h in data]
        return _csv_lines(header, rows)
    raise EmptyDataset(f"nothing to export for {type(data).__name__}")
