"""HTTP JSON API over a loaded model, dataset, and document store.

All state is held in an immutable SessionState snapshot swapped atomically on
reload, so request handlers never mutate shared structures: interventions are
per-request functional edits and report responses are cached by (case_id,
edits hash). Every error surfaces as {error_code, stage, message}.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .agent_pipeline import PipelineBackends, pipeline_run, report_to_json, report_to_text
from .backends import ChatBackend
from .concept_bottleneck import (
    ConceptVector,
    Prediction,
    TrainedHead,
    compute_concept_vectors,
    intervene,
    load_head,
    predict,
)
from .config import AppConfig, resolve_judges, resolve_pipeline_backends
from .data_model import ConceptEmbedding, Dataset, load_concept_embeddings, load_dataset
from .errors import CxreportError, DegenerateInput, StageError, UnknownCase
from .evaluation import LabeledPoints, aggregate_judges, cluster_metrics, judge_report, pca_2d
from .serialize import dumps
from .vector_store import StoreSnapshot, load_store

_STATUS_BY_CODE = {
    "UnknownCase": 404,
    # caller-input problems
    "IndexOutOfRange": 422,
    "ValueOutOfRange": 422,
    "ValidationError": 422,
    "InvalidK": 422,
    "EmptyInput": 422,
    "DegenerateInput": 422,
    "DimensionMismatch": 422,
    "CoincidentCentroids": 422,
    "ZeroWithinDispersion": 422,
    "ZeroDiameter": 422,
    # upstream agents or backends misbehaved
    "BackendError": 502,
    "UnparseableResponse": 502,
    "UnparseableVerdict": 502,
    "ScoreOutOfRange": 502,
    "MalformedAction": 502,
    "NoRetrievalPerformed": 502,
    "MissingSection": 502,
    "DanglingCitation": 502,
    "InsufficientConcepts": 502,
    # server-side state problems
    "EmptyStore": 409,
    "MalformedFile": 500,
    "IoError": 500,
    "ConfigError": 500,
}


# --- request bodies ---
# Numeric bounds are deliberately not enforced here: domain code raises the
# typed errors (IndexOutOfRange, ValueOutOfRange) the error contract promises.

class EditBody(BaseModel):
    index: int
    value: float


class ClassifyRequest(BaseModel):
    case_id: str


class InterveneRequest(BaseModel):
    case_id: str
    edits: list[EditBody]


class ReportRequest(BaseModel):
    case_id: str
    edits: list[EditBody] = []


class ClusteringRequest(BaseModel):
    points: list[list[float]] | None = None
    labels: list[str] | None = None
    use_dataset: bool = False
    split: str = "test"
    on_projection: bool = False


class JudgeRequest(BaseModel):
    candidate: str
    reference: str


# --- session state ---

@dataclass(frozen=True)
class SessionState:
    config: AppConfig
    dataset: Dataset
    head: TrainedHead
    snapshot: StoreSnapshot
    concept_embeddings: tuple[ConceptEmbedding, ...]
    vectors: dict[str, ConceptVector]
    backends: PipelineBackends
    judges: tuple[ChatBackend, ...] = ()


def load_state(config: AppConfig) -> SessionState:
    base = config.base_dir
    dataset = load_dataset(config.resolve(config.paths.dataset))
    head = load_head(config.resolve(config.paths.model))
    snapshot = load_store(config.resolve(config.paths.store))
    concept_embeddings = tuple(
        load_concept_embeddings(config.resolve(config.paths.concept_embeddings)))
    vectors = compute_concept_vectors(dataset, concept_embeddings, head.norm_stats, base)
    return SessionState(
        config=config,
        dataset=dataset,
        head=head,
        snapshot=snapshot,
        concept_embeddings=concept_embeddings,
        vectors=vectors,
        backends=resolve_pipeline_backends(config),
        judges=tuple(resolve_judges(config)),
    )


def _case_or_404(state: SessionState, case_id: str):
    try:
        return state.dataset.case_by_id(case_id)
    except KeyError:
        raise UnknownCase(f"no case with id {case_id!r}") from None


def _case_summary(state: SessionState, case) -> dict:
    return {
        "case_id": case.case_id,
        "label": case.label,
        "split": state.dataset.split[case.case_id],
        "has_oracle": case.oracle_concepts is not None,
    }


def _prediction_body(pred: Prediction, head: TrainedHead, edits: list[EditBody]) -> dict:
    return {
        "case_id": pred.case_id,
        "predicted_class": pred.predicted_class,
        "classes": list(head.classes),
        "concepts": list(head.concepts),
        "logits": [float(x) for x in pred.logits],
        "log_probs": [float(x) for x in pred.log_probs],
        "concept_values": [float(x) for x in pred.concept_values],
        "contributions": [[float(x) for x in row] for row in pred.contributions],
        "edits": [{"index": e.index, "value": e.value} for e in edits],
    }


def _edits_key(case_id: str, edits: list[EditBody]) -> tuple[str, str]:
    canonical = dumps([[e.index, e.value] for e in edits])
    return case_id, hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _labeled_points(state: SessionState, body: ClusteringRequest) -> LabeledPoints:
    if body.use_dataset:
        cases = [c for c in state.dataset.cases
                 if state.dataset.split[c.case_id] == body.split and c.label is not None]
        if not cases:
            raise DegenerateInput(f"no labeled cases in split {body.split!r}")
        points = np.stack([state.vectors[c.case_id].normalized for c in cases])
        return LabeledPoints(points=points,
                             labels=tuple(c.label for c in cases),
                             ids=tuple(c.case_id for c in cases))
    if body.points is None or body.labels is None:
        raise DegenerateInput("provide points and labels, or set use_dataset")
    try:
        points = np.asarray(body.points, dtype=np.float64)
    except ValueError as exc:
        raise DegenerateInput(f"points are not a rectangular numeric array: {exc}") from exc
    return LabeledPoints(points=points, labels=tuple(body.labels))


# --- app factory ---

def create_app(config: AppConfig) -> FastAPI:
    app = FastAPI(title="cxreport", docs_url=None, redoc_url=None)
    app.state.session = load_state(config)
    app.state.report_cache = {}
    app.state.cache_lock = threading.Lock()

    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.server.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(CxreportError)
    async def _domain_error(request: Request, exc: CxreportError) -> JSONResponse:
        code = exc.error_code
        stage = exc.stage if isinstance(exc, StageError) else None
        return JSONResponse(
            status_code=_STATUS_BY_CODE.get(code, 400),
            content={"error_code": code, "stage": stage, "message": str(exc)},
        )

    @app.exception_handler(RequestValidationError)
    async def _invalid_request(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={"error_code": "ValidationError", "stage": None, "message": str(exc)},
        )

    @app.get("/api/cases")
    def list_cases(request: Request) -> dict:
        state: SessionState = request.app.state.session
        return {"cases": [_case_summary(state, c) for c in state.dataset.cases]}

    @app.get("/api/cases/{case_id}")
    def case_detail(case_id: str, request: Request) -> dict:
        state: SessionState = request.app.state.session
        case = _case_or_404(state, case_id)
        vector = state.vectors[case.case_id]
        return {
            **_case_summary(state, case),
            "concepts": list(state.head.concepts),
            "concept_values": [float(x) for x in vector.normalized],
        }

    @app.get("/api/model")
    def model_info(request: Request) -> dict:
        state: SessionState = request.app.state.session
        W = state.head.W
        return {
            "classes": list(state.head.classes),
            "concepts": list(state.head.concepts),
            "weights": {
                "shape": [int(W.shape[0]), int(W.shape[1])],
                "min": float(W.min()),
                "max": float(W.max()),
                "frobenius_norm": float(np.linalg.norm(W)),
            },
            "bias": [float(x) for x in state.head.b],
            "deterministic_mode": state.config.deterministic_mode,
        }

    @app.post("/api/classify")
    def classify(body: ClassifyRequest, request: Request) -> dict:
        state: SessionState = request.app.state.session
        case = _case_or_404(state, body.case_id)
        pred = predict(state.vectors[case.case_id], state.head)
        return _prediction_body(pred, state.head, [])

    @app.post("/api/intervene")
    def intervene_case(body: InterveneRequest, request: Request) -> dict:
        state: SessionState = request.app.state.session
        case = _case_or_404(state, body.case_id)
        pred = intervene(state.vectors[case.case_id],
                         [(e.index, e.value) for e in body.edits], state.head)
        return _prediction_body(pred, state.head, body.edits)

    @app.post("/api/report")
    def report(body: ReportRequest, request: Request) -> dict:
        state: SessionState = request.app.state.session
        case = _case_or_404(state, body.case_id)
        key = _edits_key(case.case_id, body.edits)
        cached = request.app.state.report_cache.get(key)
        if cached is not None:
            return cached
        result = pipeline_run(
            case, state.head, state.concept_embeddings, state.snapshot,
            state.backends, state.config.pipeline, base_dir=state.config.base_dir,
            edits=[(e.index, e.value) for e in body.edits],
        )
        response = {
            **report_to_json(result),
            "text": report_to_text(result),
            "edits": [{"index": e.index, "value": e.value} for e in body.edits],
        }
        with request.app.state.cache_lock:
            request.app.state.report_cache[key] = response
        return response

    @app.post("/api/eval/clustering")
    def eval_clustering(body: ClusteringRequest, request: Request) -> dict:
        state: SessionState = request.app.state.session
        lp = _labeled_points(state, body)
        metrics = cluster_metrics(lp, on_projection=body.on_projection)
        projection = None
        if lp.points.shape[0] >= 3:
            projection = [[float(x), float(y)] for x, y in pca_2d(lp.points)]
        return {
            "metrics": {
                "silhouette": metrics.silhouette,
                "davies_bouldin": metrics.davies_bouldin,
                "calinski_harabasz": metrics.calinski_harabasz,
                "dunn": metrics.dunn,
            },
            "n_points": int(lp.points.shape[0]),
            "labels": list(lp.labels),
            "projection": projection,
        }

    @app.post("/api/eval/judge")
    def eval_judge(body: JudgeRequest, request: Request) -> dict:
        state: SessionState = request.app.state.session
        scores = [
            judge_report(body.candidate, body.reference, judge,
                         state.config.pipeline.chat_params)
            for judge in state.judges
        ]
        aggregate = aggregate_judges(scores)
        return {
            "judges": [{"judge_name": s.judge_name, **s.as_dict()} for s in scores],
            "aggregate": {"judge_name": aggregate.judge_name, **aggregate.as_dict()},
        }

    @app.post("/api/reload")
    def reload(request: Request) -> dict:
        state: SessionState = request.app.state.session
        fresh = load_state(state.config)
        request.app.state.session = fresh
        with request.app.state.cache_lock:
            request.app.state.report_cache = {}
        return {
            "reloaded": True,
            "cases": len(fresh.dataset.cases),
            "chunks": len(fresh.snapshot.chunks),
        }

    return app
