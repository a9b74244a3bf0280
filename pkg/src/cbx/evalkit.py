"""Quantitative evaluation: the distance pointing game, proportional
concept contributions, and relevance sign-pattern summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attribution import (
    AttributionConfig,
    GradientMethod,
    IntegratedGradientsMethod,
    LrpMethod,
    attribute,
    channel_reduce,
)
from .cbm import CbmModel, ConceptPrediction, bottleneck_values
from .errors import (
    EmptyDataset,
    EmptyGrid,
    IndexOutOfRange,
    LengthMismatch,
    NotVisible,
    OutOfBounds,
)
from .lrp import Passthrough, Zero, lrp_attribute
from .network import fold_batchnorm, forward

ZERO_RELEVANCE_EPS = 1e-12


@dataclass(frozen=True)
class PartKeypoint:
    part_id: int
    x: int  # column
    y: int  # row
    visible: bool


@dataclass
class PartPointingStats:
    n_samples: int
    n_skipped: int
    mean_distance: float
    shortest10_mean: float


@dataclass
class PointingResult:
    method: str
    per_part: dict[int, PartPointingStats]


@dataclass
class ContributionRow:
    concept_id: int
    concept_name: str
    concept_value: float
    relevance: float
    contribution_percent: float


@dataclass
class ContributionReport:
    rows: list[ContributionRow]
    target_class: int
    all_zero: bool


def method_label(config: AttributionConfig) -> str:
    base = {LrpMethod: "lrp", GradientMethod: "grad",
            IntegratedGradientsMethod: "ig"}[type(config.method)]
    return f"smoothgrad-{base}" if config.smoothgrad is not None else base


def most_salient_point(grid: np.ndarray) -> tuple[int, int]:
    """Argmax cell of a 2D grid; ties resolve to the lowest row-major index."""
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2 or g.size == 0:
        raise EmptyGrid("need a nonempty 2D grid")
    flat = int(np.argmax(g))
    return flat // g.shape[1], flat % g.shape[1]


def pointing_distance(grid: np.ndarray, keypoint: PartKeypoint) -> float:
    """Euclidean pixel distance from the grid's peak to the keypoint."""
    g = np.asarray(grid, dtype=np.float64)
    if not keypoint.visible:
        raise NotVisible(f"part {keypoint.part_id} is not visible")
    if not (0 <= keypoint.x < g.shape[1] and 0 <= keypoint.y < g.shape[0]):
        raise OutOfBounds(f"keypoint ({keypoint.x}, {keypoint.y}) outside {g.shape}")
    row, col = most_salient_point(g)
    return math.hypot(row - keypoint.y, col - keypoint.x)


def shortest_fraction_mean(distances, fraction: float) -> float:
    """Mean of the smallest ceil(fraction * N) distances."""
    d = sorted(float(v) for v in distances)
    if not d:
        raise EmptyDataset("no distances")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    count = math.ceil(fraction * len(d))
    return sum(d[:count]) / count


def distance_pointing_game(dataset, model: CbmModel, config: AttributionConfig,
                           concept_to_part: dict[int, int],
                           max_samples: int | None = None) -> PointingResult:
    """Distance from each concept map's most salient point to its part center.

    For every (sample, mapped concept) with the part visible, attribute the
    concept on the image-to-concepts network, reduce channels, and measure
    the Euclidean distance to the keypoint. Samples whose part is hidden
    are skipped and counted. Aggregates per part: plain mean and the mean
    of the shortest 10% of distances.
    """
    g = fold_batchnorm(model.g)
    per_part_distances: dict[int, list[float]] = {}
    per_part_skipped: dict[int, int] = {}
    samples = dataset.samples if max_samples is None else dataset.samples[:max_samples]
    if not samples:
        raise EmptyDataset("no samples to evaluate")
    for sample in samples:
        keypoints = {kp.part_id: kp for kp in sample.keypoints}
        for concept_idx, part_id in concept_to_part.items():
            if not 0 <= concept_idx < model.n_concepts:
                raise IndexOutOfRange(concept_idx, model.n_concepts)
            kp = keypoints.get(part_id)
            if kp is None or not kp.visible:
                per_part_skipped[part_id] = per_part_skipped.get(part_id, 0) + 1
                continue
            amap = attribute(config, g, sample.image, concept_idx)
            grid = channel_reduce(amap.values)
            dist = pointing_distance(grid, kp)
            per_part_distances.setdefault(part_id, []).append(dist)
    method = method_label(config)
    stats = {}
    for part_id in sorted(set(per_part_distances) | set(per_part_skipped)):
        dists = per_part_distances.get(part_id, [])
        stats[part_id] = PartPointingStats(
            n_samples=len(dists),
            n_skipped=per_part_skipped.get(part_id, 0),
            mean_distance=float(np.mean(dists)) if dists else float("nan"),
            shortest10_mean=shortest_fraction_mean(dists, 0.1) if dists else float("nan"),
        )
    return PointingResult(method=method, per_part=stats)


def concept_contributions(relevance: np.ndarray) -> tuple[np.ndarray, bool]:
    """Percentage of total absolute relevance per concept.

    Returns (percentages, all_zero). An all-zero relevance vector yields
    all-zero percentages with the flag set instead of dividing by zero.
    """
    r = np.abs(np.asarray(relevance, dtype=np.float64))
    total = r.sum()
    if total == 0.0:
        return np.zeros_like(r), True
    return 100.0 * r / total, False


def class_relevance(model: CbmModel, concept_prediction: ConceptPrediction,
                    target_class: int) -> np.ndarray:
    """Relevance of each concept for one class, via the basic rule on the
    class network seeded with that class's logit."""
    if not 0 <= target_class < model.n_classes:
        raise IndexOutOfRange(target_class, model.n_classes)
    c = bottleneck_values(model, concept_prediction.logits)
    f = fold_batchnorm(model.f)
    _, trace = forward(f, c)
    rule_map = tuple(Zero() if hasattr(l, "weights") else Passthrough()
                     for l in f.layers)
    relevance, _ = lrp_attribute(f, trace, target_class, rule_map)
    return relevance


def contribution_report(model: CbmModel, concept_prediction: ConceptPrediction,
                        target_class: int) -> ContributionReport:
    """Ranked table of concept values, signed relevance, and contribution
    percentages for one class; rows sort by contribution descending with
    ties broken by concept id."""
    relevance = class_relevance(model, concept_prediction, target_class)
    percents, all_zero = concept_contributions(relevance)
    rows = [
        ContributionRow(
            concept_id=i,
            concept_name=model.concept_names[i] if i < len(model.concept_names) else str(i),
            concept_value=float(concept_prediction.values[i]),
            relevance=float(relevance[i]),
            contribution_percent=float(percents[i]),
        )
        for i in range(relevance.shape[0])
    ]
    rows.sort(key=lambda row: (-row.contribution_percent, row.concept_id))
    return ContributionReport(rows=rows, target_class=target_class, all_zero=all_zero)


def sign_pattern_summary(relevance, presence) -> dict[str, int]:
    """Classify each concept's relevance sign against its predicted presence."""
    r = np.asarray(relevance, dtype=np.float64)
    p = np.asarray(presence, dtype=bool)
    if r.shape != p.shape:
        raise LengthMismatch(r.shape[0], p.shape[0])
    counts = {"present_pos": 0, "present_neg": 0, "absent_pos": 0,
              "absent_neg": 0, "zero": 0}
    for rv, present in zip(r, p):
        if abs(rv) < ZERO_RELEVANCE_EPS:
            counts["zero"] += 1
        elif present:
            counts["present_pos" if rv > 0 else "present_neg"] += 1
        else:
            counts["absent_pos" if rv > 0 else "absent_neg"] += 1
    return counts
