"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel


class SampleSummary(BaseModel):
    id: int
    class_label: int
    class_name: str
    thumbnail: str  # base64 PPM


class PredictRequest(BaseModel):
    sample_id: int


class ConceptEntry(BaseModel):
    id: int
    name: str
    value: float
    present: bool


class PredictResponse(BaseModel):
    concepts: list[ConceptEntry]
    class_probs: list[float]
    predicted_class: int


class AttributeTarget(BaseModel):
    kind: str  # "concept" | "class"
    index: int


class SmoothGradOptions(BaseModel):
    n_samples: int = 25
    sigma: float = 0.2
    seed: int = 0


class AttributeOptions(BaseModel):
    smoothgrad: Optional[SmoothGradOptions] = None
    steps: int = 50
    seed: int = 0


class AttributeRequest(BaseModel):
    sample_id: int
    target: AttributeTarget
    method: str  # "lrp" | "grad" | "ig"
    options: AttributeOptions = AttributeOptions()


class Peak(BaseModel):
    row: int
    col: int


class AttributeResponse(BaseModel):
    map_png_or_ppm: str  # base64 PPM
    reduced_grid: list[list[float]]
    peak: Peak


class InterveneRequest(BaseModel):
    sample_id: int
    overrides: dict[int, float]
    target_class: Optional[int] = None


class ContributionEntry(BaseModel):
    concept_id: int
    concept_name: str
    concept_value: float
    relevancy: float
    contribution_percent: float


class InterveneResponse(BaseModel):
    old_probs: list[float]
    new_probs: list[float]
    delta: list[float]
    new_contributions: list[ContributionEntry]


class ContributionsResponse(BaseModel):
    target_class: int
    all_zero: bool
    rows: list[ContributionEntry]
