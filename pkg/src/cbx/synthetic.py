"""Deterministic synthetic dataset: colored geometric parts on a noisy
background, with instance-level concept labels and ground-truth part
centers. Every byte of the output is a pure function of the config."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigInvalid
from .evalkit import PartKeypoint
from .rng import Rng

PART_SHAPES = ("circle", "square", "triangle", "diamond", "cross")

COLOR_NAMES = ("red", "green", "blue", "yellow", "magenta", "cyan")
PALETTE = (
    (0.85, 0.10, 0.10),
    (0.10, 0.80, 0.15),
    (0.15, 0.20, 0.90),
    (0.90, 0.85, 0.10),
    (0.85, 0.15, 0.85),
    (0.10, 0.85, 0.85),
)


@dataclass(frozen=True)
class GeneratorConfig:
    height: int = 64
    width: int = 64
    n_parts: int = 3
    n_colors: int = 3
    n_classes: int = 8
    samples: int = 100
    seed: int = 0
    background_noise: float = 0.1

    def __post_init__(self):
        if self.height < 16 or self.width < 16:
            raise ConfigInvalid("image must be at least 16x16")
        if not 1 <= self.n_parts <= len(PART_SHAPES):
            raise ConfigInvalid(f"n_parts must be in [1, {len(PART_SHAPES)}]")
        if not 1 <= self.n_colors <= len(PALETTE):
            raise ConfigInvalid(f"n_colors must be in [1, {len(PALETTE)}]")
        if not 1 <= self.n_classes <= 2 ** self.n_parts:
            raise ConfigInvalid("n_classes must not exceed realizable part combinations")
        if self.samples < 1:
            raise ConfigInvalid("samples must be >= 1")
        if not 0.0 <= self.background_noise <= 1.0:
            raise ConfigInvalid("background_noise must be in [0, 1]")

    @property
    def n_concepts(self) -> int:
        return self.n_parts * (1 + self.n_colors)


@dataclass
class Placement:
    part_id: int
    color: int
    cx: int
    cy: int


@dataclass
class SyntheticSample:
    image: np.ndarray  # [3, H, W] in [0, 1]
    concepts: np.ndarray  # [k] bool
    class_label: int
    keypoints: list[PartKeypoint]
    placements: list[Placement] = field(default_factory=list)


@dataclass
class SyntheticDataset:
    samples: list[SyntheticSample]
    concept_names: list[str]
    class_names: list[str]
    part_names: list[str]
    config: Optional[GeneratorConfig] = None

    def __len__(self) -> int:
        return len(self.samples)


def concept_names_for(config: GeneratorConfig) -> list[str]:
    names = [f"has_{PART_SHAPES[p]}" for p in range(config.n_parts)]
    for p in range(config.n_parts):
        for c in range(config.n_colors):
            names.append(f"{PART_SHAPES[p]}_color::{COLOR_NAMES[c]}")
    return names


def class_rule(concepts, n_parts: int, n_classes: int) -> int:
    """Decision table over the part-presence bits only.

    class = (sum of 2^p for each present part p) mod n_classes. Total over
    all concept vectors, maps the all-false vector to class 0, and ignores
    every color concept, so distinct concept vectors share classes.
    """
    bits = 0
    for p in range(n_parts):
        if concepts[p]:
            bits |= 1 << p
    return bits % n_classes


def _part_radius(config: GeneratorConfig) -> int:
    return max(4, round(7 * min(config.height, config.width) / 64))


def _draw_part(image: np.ndarray, part_id: int, color: int, cx: int, cy: int,
               radius: int) -> None:
    h, w = image.shape[1], image.shape[2]
    yy, xx = np.mgrid[0:h, 0:w]
    dx, dy = xx - cx, yy - cy
    shape = PART_SHAPES[part_id]
    if shape == "circle":
        mask = dx * dx + dy * dy <= radius * radius
    elif shape == "square":
        mask = np.maximum(np.abs(dx), np.abs(dy)) <= radius - 1
    elif shape == "triangle":
        mask = (np.abs(dy) <= radius) & (np.abs(dx) <= (dy + radius) / 2.0)
    elif shape == "diamond":
        mask = np.abs(dx) + np.abs(dy) <= radius
    else:  # cross
        t = max(1, radius // 3)
        mask = ((np.abs(dx) <= t) & (np.abs(dy) <= radius)) | (
            (np.abs(dy) <= t) & (np.abs(dx) <= radius))
    for ch in range(3):
        image[ch][mask] = PALETTE[color][ch]


def _generate_sample(config: GeneratorConfig, rng: Rng) -> SyntheticSample:
    h, w = config.height, config.width
    radius = _part_radius(config)
    margin = radius + 2
    if w - 2 * margin <= 0 or h - 2 * margin <= 0:
        raise ConfigInvalid("parts do not fit inside the image")
    present = [rng.uniform() < 0.5 for _ in range(config.n_parts)]
    placements: list[Placement] = []
    for p in range(config.n_parts):
        if not present[p]:
            continue
        color = rng.randint(config.n_colors)
        placed = False
        for _ in range(200):
            cx = margin + rng.randint(w - 2 * margin)
            cy = margin + rng.randint(h - 2 * margin)
            if all((cx - q.cx) ** 2 + (cy - q.cy) ** 2 >= (2 * radius + 2) ** 2
                   for q in placements):
                placements.append(Placement(p, color, cx, cy))
                placed = True
                break
        if not placed:
            raise ConfigInvalid("could not place parts without overlap")
    image = rng.uniform_block(3 * h * w).reshape(3, h, w) * config.background_noise
    for pl in placements:
        _draw_part(image, pl.part_id, pl.color, pl.cx, pl.cy, radius)
    k = config.n_concepts
    concepts = np.zeros(k, dtype=bool)
    keypoints = []
    by_part = {pl.part_id: pl for pl in placements}
    for p in range(config.n_parts):
        pl = by_part.get(p)
        if pl is not None:
            concepts[p] = True
            concepts[config.n_parts + p * config.n_colors + pl.color] = True
            keypoints.append(PartKeypoint(p, pl.cx, pl.cy, True))
        else:
            keypoints.append(PartKeypoint(p, 0, 0, False))
    label = class_rule(concepts, config.n_parts, config.n_classes)
    return SyntheticSample(image, concepts, label, keypoints, placements)


def generate_dataset(config: GeneratorConfig) -> tuple[SyntheticDataset, SyntheticDataset]:
    """All samples from one seeded stream, shuffled and split 80/20."""
    rng = Rng(config.seed)
    samples = [_generate_sample(config, rng) for _ in range(config.samples)]
    order = list(range(len(samples)))
    rng.shuffle(order)
    n_train = (len(samples) * 8) // 10
    names = concept_names_for(config)
    classes = [f"class_{i}" for i in range(config.n_classes)]
    parts = [PART_SHAPES[p] for p in range(config.n_parts)]

    def subset(idx):
        return SyntheticDataset([samples[i] for i in idx], list(names), classes,
                                parts, config)

    return subset(order[:n_train]), subset(order[n_train:])


def rerender(sample: SyntheticSample, config: GeneratorConfig) -> np.ndarray:
    """Parts-only re-render from the placement record (zero background)."""
    image = np.zeros((3, config.height, config.width))
    for pl in sample.placements:
        _draw_part(image, pl.part_id, pl.color, pl.cx, pl.cy, _part_radius(config))
    return image
