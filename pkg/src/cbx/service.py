"""HTTP/JSON service exposing prediction, attribution, contribution, and
intervention over one loaded model and dataset.

The state (model, its batch-norm-folded copy, and the dataset) is built at
startup and never mutated; every response is a pure function of the loaded
artifacts and the request, so repeated identical requests return identical
bodies. Interventions are computed per request and never persisted.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException, Query

from . import attribution as attr
from .cbm import CbmModel, bottleneck_values, intervene, predict
from .dataio import load_dataset, load_model
from .errors import IndexOutOfRange, ShapeMismatch
from .evalkit import contribution_report, most_salient_point
from .imageio import encode_ppm, image_to_rgb8
from .network import Network, fold_batchnorm
from .schemas import (
    AttributeRequest,
    AttributeResponse,
    ConceptEntry,
    ContributionEntry,
    ContributionsResponse,
    InterveneRequest,
    InterveneResponse,
    Peak,
    PredictRequest,
    PredictResponse,
    SampleSummary,
)
from .synthetic import SyntheticDataset


@dataclass(frozen=True)
class SessionState:
    model: CbmModel
    g_canonized: Network
    f_canonized: Network
    dataset: SyntheticDataset


def _build_state(model: CbmModel, dataset: SyntheticDataset) -> SessionState:
    if dataset.samples:
        image_shape = tuple(dataset.samples[0].image.shape)
        if image_shape != model.g.input_shape:
            raise ShapeMismatch(0, model.g.input_shape, image_shape)
    return SessionState(model=model, g_canonized=fold_batchnorm(model.g),
                        f_canonized=fold_batchnorm(model.f), dataset=dataset)


def _b64_ppm(rgb: np.ndarray) -> str:
    return base64.b64encode(encode_ppm(rgb)).decode("ascii")


def _sample_or_404(state: SessionState, sample_id: int):
    if not 0 <= sample_id < len(state.dataset.samples):
        raise HTTPException(status_code=404, detail=f"unknown sample {sample_id}")
    return state.dataset.samples[sample_id]


def _contribution_entries(report) -> list[ContributionEntry]:
    return [ContributionEntry(
        concept_id=r.concept_id, concept_name=r.concept_name,
        concept_value=r.concept_value, relevancy=r.relevance,
        contribution_percent=r.contribution_percent) for r in report.rows]


def _method_config(req: AttributeRequest) -> attr.AttributionConfig:
    if req.method == "lrp":
        method: attr.Method = attr.LrpMethod()
    elif req.method == "grad":
        method = attr.GradientMethod()
    elif req.method == "ig":
        method = attr.IntegratedGradientsMethod(steps=req.options.steps)
    else:
        raise HTTPException(status_code=422, detail=f"unknown method {req.method!r}")
    smooth = None
    if req.options.smoothgrad is not None:
        sg = req.options.smoothgrad
        smooth = attr.SmoothGradSpec(sg.n_samples, sg.sigma, sg.seed)
    return attr.AttributionConfig(method, smooth)


def build_app(model: CbmModel, dataset: SyntheticDataset) -> FastAPI:
    state = _build_state(model, dataset)
    app = FastAPI(title="concept-bottleneck explainability service")

    @app.get("/samples", response_model=list[SampleSummary])
    def samples() -> list[SampleSummary]:
        out = []
        for i, s in enumerate(state.dataset.samples):
            name_idx = s.class_label
            names = state.dataset.class_names
            out.append(SampleSummary(
                id=i, class_label=s.class_label,
                class_name=names[name_idx] if name_idx < len(names) else str(name_idx),
                thumbnail=_b64_ppm(image_to_rgb8(s.image))))
        return out

    @app.post("/predict", response_model=PredictResponse)
    def predict_endpoint(req: PredictRequest) -> PredictResponse:
        sample = _sample_or_404(state, req.sample_id)
        cp, _, probs = predict(state.model, sample.image)
        concepts = [ConceptEntry(id=i, name=state.model.concept_names[i],
                                 value=float(cp.values[i]),
                                 present=bool(cp.presence[i]))
                    for i in range(state.model.n_concepts)]
        return PredictResponse(concepts=concepts,
                               class_probs=[float(p) for p in probs],
                               predicted_class=int(np.argmax(probs)))

    @app.post("/attribute", response_model=AttributeResponse)
    def attribute_endpoint(req: AttributeRequest) -> AttributeResponse:
        sample = _sample_or_404(state, req.sample_id)
        config = _method_config(req)
        kind, index = req.target.kind, req.target.index
        if kind == "concept":
            if not 0 <= index < state.model.n_concepts:
                raise HTTPException(status_code=422, detail="concept index out of range")
            values = attr.attribute(config, state.g_canonized, sample.image, index).values
            grid = attr.channel_reduce(values)
            rgb = attr.render_signed_map(values)
        elif kind == "class":
            if not 0 <= index < state.model.n_classes:
                raise HTTPException(status_code=422, detail="class index out of range")
            cp, _, _ = predict(state.model, sample.image)
            if req.method == "lrp" and config.smoothgrad is None:
                from .evalkit import class_relevance
                values = class_relevance(state.model, cp, index)
            else:
                c_vec = bottleneck_values(state.model, cp.logits)
                values = attr.attribute(config, state.f_canonized, c_vec, index).values
            grid = values[None, :]
            rgb = attr.render_class_strip(values)
        else:
            raise HTTPException(status_code=422, detail=f"unknown target kind {kind!r}")
        peak_row, peak_col = most_salient_point(grid)
        return AttributeResponse(
            map_png_or_ppm=_b64_ppm(rgb),
            reduced_grid=[[float(v) for v in row] for row in grid],
            peak=Peak(row=peak_row, col=peak_col))

    @app.post("/intervene", response_model=InterveneResponse)
    def intervene_endpoint(req: InterveneRequest) -> InterveneResponse:
        sample = _sample_or_404(state, req.sample_id)
        cp, _, old_probs = predict(state.model, sample.image)
        c_vec = bottleneck_values(state.model, cp.logits)
        try:
            new_probs, delta = intervene(state.model, c_vec, req.overrides)
        except (IndexOutOfRange, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        target = req.target_class if req.target_class is not None else int(np.argmax(new_probs))
        if not 0 <= target < state.model.n_classes:
            raise HTTPException(status_code=422, detail="target class out of range")
        new_c = c_vec.copy()
        for idx, val in req.overrides.items():
            new_c[idx] = val
        report = _report_for_vector(state.model, new_c, target)
        return InterveneResponse(
            old_probs=[float(p) for p in old_probs],
            new_probs=[float(p) for p in new_probs],
            delta=[float(d) for d in delta],
            new_contributions=_contribution_entries(report))

    @app.get("/contributions", response_model=ContributionsResponse)
    def contributions_endpoint(
        sample_id: int,
        target_class: int = Query(alias="class"),
    ) -> ContributionsResponse:
        sample = _sample_or_404(state, sample_id)
        if not 0 <= target_class < state.model.n_classes:
            raise HTTPException(status_code=404, detail="unknown class")
        cp, _, _ = predict(state.model, sample.image)
        report = contribution_report(state.model, cp, target_class)
        return ContributionsResponse(
            target_class=report.target_class, all_zero=report.all_zero,
            rows=_contribution_entries(report))

    return app


def _report_for_vector(model: CbmModel, class_input: np.ndarray, target: int):
    """Contribution report for an explicit class-network input vector."""
    from .evalkit import ContributionReport, ContributionRow, concept_contributions
    from .lrp import Passthrough, Zero, lrp_attribute
    from .network import forward

    f = fold_batchnorm(model.f)
    _, trace = forward(f, class_input)
    rules = tuple(Zero() if hasattr(l, "weights") else Passthrough() for l in f.layers)
    relevance, _ = lrp_attribute(f, trace, target, rules)
    percents, all_zero = concept_contributions(relevance)
    rows = [ContributionRow(
        concept_id=i,
        concept_name=model.concept_names[i] if i < len(model.concept_names) else str(i),
        concept_value=float(class_input[i]),
        relevance=float(relevance[i]),
        contribution_percent=float(percents[i]))
        for i in range(relevance.shape[0])]
    rows.sort(key=lambda row: (-row.contribution_percent, row.concept_id))
    return ContributionReport(rows=rows, target_class=target, all_zero=all_zero)


def create_app(model_path: str, data_dir: str, split: str = "test",
               ui_dir: str | None = None) -> FastAPI:
    """Load artifacts from disk and build the service.

    With ui_dir set, the browser client is served from "/" (API routes
    keep precedence over the static mount).
    """
    import os

    model = load_model(model_path)
    dataset = load_dataset(os.path.join(data_dir, f"{split}.json"))
    app = build_app(model, dataset)
    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
