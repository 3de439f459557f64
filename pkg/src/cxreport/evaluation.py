"""Measurement suite: clustering validity indices, 2-D projection, judges.

The four indices are computed with Euclidean distances on whatever embedding
vectors the caller provides, and every degenerate geometry gets a typed error
or an explicit convention (documented per function) instead of a NaN.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import ChatBackend, ChatParams, render_prompt
from .errors import (
    CoincidentCentroids,
    DegenerateInput,
    EmptyInput,
    MalformedFile,
    ScoreOutOfRange,
    UnparseableVerdict,
    ZeroDiameter,
    ZeroWithinDispersion,
)
from .serialize import load_jsonl

JUDGE_CRITERIA = (
    "semantic_similarity",
    "accuracy",
    "correctness",
    "clinical_usefulness",
    "consistency",
)


@dataclass(frozen=True)
class LabeledPoints:
    points: np.ndarray
    labels: tuple[str, ...]
    ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise DegenerateInput("points must form a nonempty 2-D array")
        if not np.all(np.isfinite(pts)):
            raise DegenerateInput("points contain NaN/Inf")
        if len(self.labels) != pts.shape[0]:
            raise DegenerateInput(
                f"{len(self.labels)} labels for {pts.shape[0]} points")
        if self.ids and len(self.ids) != pts.shape[0]:
            raise DegenerateInput("ids length must match points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def clusters(self) -> dict[str, np.ndarray]:
        """Label -> row indices, in first-appearance order."""
        out: dict[str, list[int]] = {}
        for i, label in enumerate(self.labels):
            out.setdefault(label, []).append(i)
        return {k: np.asarray(v) for k, v in out.items()}


@dataclass(frozen=True)
class ClusterMetrics:
    silhouette: float
    davies_bouldin: float
    calinski_harabasz: float
    dunn: float

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not np.isfinite(value):
                raise DegenerateInput(f"{name} is not finite")
        if not -1.0 <= self.silhouette <= 1.0:
            raise DegenerateInput("silhouette outside [-1, 1]")
        if self.davies_bouldin < 0 or self.calinski_harabasz < 0 or self.dunn <= 0:
            raise DegenerateInput("index outside its valid range")


def _pairwise(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _require_clusters(lp: LabeledPoints) -> dict[str, np.ndarray]:
    clusters = lp.clusters()
    if len(clusters) < 2:
        raise DegenerateInput(f"need >= 2 clusters, got {len(clusters)}")
    return clusters


def silhouette(lp: LabeledPoints) -> float:
    """Mean of (b - a) / max(a, b); singletons and coincident geometry score 0."""
    clusters = _require_clusters(lp)
    dist = _pairwise(lp.points)
    scores = []
    for label, idx in clusters.items():
        for i in idx:
            if idx.size == 1:
                scores.append(0.0)
                continue
            a = dist[i, idx].sum() / (idx.size - 1)
            b = min(dist[i, other].mean()
                    for lab, other in clusters.items() if lab != label)
            denom = max(a, b)
            scores.append(0.0 if denom == 0.0 else (b - a) / denom)
    return float(np.mean(scores))


def davies_bouldin(lp: LabeledPoints) -> float:
    """Mean over clusters of the worst (S_i + S_j) / centroid distance ratio."""
    clusters = _require_clusters(lp)
    labels = list(clusters)
    centroids = np.stack([lp.points[clusters[lab]].mean(axis=0) for lab in labels])
    spreads = np.array([
        np.linalg.norm(lp.points[clusters[lab]] - centroids[i], axis=1).mean()
        for i, lab in enumerate(labels)
    ])
    k = len(labels)
    ratios = []
    for i in range(k):
        worst = 0.0
        for j in range(k):
            if i == j:
                continue
            gap = float(np.linalg.norm(centroids[i] - centroids[j]))
            if gap == 0.0:
                raise CoincidentCentroids(
                    f"clusters {labels[i]!r} and {labels[j]!r} share a centroid")
            worst = max(worst, (spreads[i] + spreads[j]) / gap)
        ratios.append(worst)
    return float(np.mean(ratios))


def calinski_harabasz(lp: LabeledPoints) -> float:
    """(BGSS / (k-1)) / (WGSS / (n-k)) with centroid sums of squares."""
    clusters = _require_clusters(lp)
    n, k = lp.points.shape[0], len(clusters)
    overall = lp.points.mean(axis=0)
    bgss = 0.0
    wgss = 0.0
    for idx in clusters.values():
        members = lp.points[idx]
        centroid = members.mean(axis=0)
        bgss += idx.size * float(((centroid - overall) ** 2).sum())
        wgss += float(((members - centroid) ** 2).sum())
    if wgss == 0.0:
        raise ZeroWithinDispersion("all clusters have zero within-cluster spread")
    return float((bgss / (k - 1)) / (wgss / (n - k)))


def dunn(lp: LabeledPoints) -> float:
    """Min single-linkage inter-cluster distance over max cluster diameter."""
    clusters = _require_clusters(lp)
    dist = _pairwise(lp.points)
    diameter = 0.0
    for idx in clusters.values():
        if idx.size > 1:
            diameter = max(diameter, float(dist[np.ix_(idx, idx)].max()))
    if diameter == 0.0:
        raise ZeroDiameter("every cluster is a single or coincident point")
    labels = list(clusters)
    gap = np.inf
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            block = dist[np.ix_(clusters[labels[i]], clusters[labels[j]])]
            gap = min(gap, float(block.min()))
    return gap / diameter


def cluster_metrics(lp: LabeledPoints, on_projection: bool = False) -> ClusterMetrics:
    """All four indices; on_projection computes them on the 2-D view instead."""
    if on_projection:
        lp = LabeledPoints(points=pca_2d(lp.points), labels=lp.labels, ids=lp.ids)
    return ClusterMetrics(
        silhouette=silhouette(lp),
        davies_bouldin=davies_bouldin(lp),
        calinski_harabasz=calinski_harabasz(lp),
        dunn=dunn(lp),
    )


def pca_2d(points: np.ndarray) -> np.ndarray:
    """Project onto the top two principal components of the centered data.

    Sign convention: each component's largest-magnitude coordinate is positive,
    which makes the output deterministic across runs and platforms.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise DegenerateInput("pca_2d needs at least 3 points")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInput("points contain NaN/Inf")
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2] if vt.shape[0] >= 2 else np.vstack([vt, np.zeros_like(vt[:1])])
    fixed = []
    for comp in components:
        pivot = comp[np.argmax(np.abs(comp))]
        fixed.append(-comp if pivot < 0 else comp)
    return centered @ np.stack(fixed).T


def load_labeled_points(path: str | Path) -> LabeledPoints:
    """JSONL of {id, label, vector} rows."""
    rows = load_jsonl(path)
    ids, labels, vectors = [], [], []
    for row in rows:
        if not isinstance(row, dict) or "label" not in row or "vector" not in row:
            raise MalformedFile(f"{path}: rows need label + vector")
        ids.append(str(row.get("id", len(ids))))
        labels.append(str(row["label"]))
        vectors.append(np.asarray(row["vector"], dtype=np.float64))
    if not vectors:
        raise EmptyInput(f"{path}: no rows")
    if any(v.shape != vectors[0].shape for v in vectors):
        raise MalformedFile(f"{path}: inconsistent vector dimensions")
    return LabeledPoints(points=np.stack(vectors), labels=tuple(labels), ids=tuple(ids))


# --- LLM as judge ---

@dataclass(frozen=True)
class JudgeScores:
    judge_name: str
    semantic_similarity: float
    accuracy: float
    correctness: float
    clinical_usefulness: float
    consistency: float

    def __post_init__(self) -> None:
        for criterion in JUDGE_CRITERIA:
            value = getattr(self, criterion)
            if not (np.isfinite(value) and 0.0 <= value <= 1.0):
                raise ScoreOutOfRange(f"{criterion} = {value!r} outside [0, 1]")

    def as_dict(self) -> dict[str, float]:
        return {criterion: getattr(self, criterion) for criterion in JUDGE_CRITERIA}


def judge_report(
    candidate: str,
    reference: str,
    backend: ChatBackend,
    params: ChatParams = ChatParams(),
) -> JudgeScores:
    """Score a candidate against a reference; strict JSON, no silent defaults."""
    if not candidate.strip() or not reference.strip():
        raise EmptyInput("candidate and reference must be nonempty")
    prompt = render_prompt("judge_prompt", {
        "candidate": candidate, "reference": reference})
    reply = backend.complete([{"role": "user", "content": prompt}], params)
    try:
        data = json.loads(reply)
    except json.JSONDecodeError as exc:
        raise UnparseableVerdict(f"judge reply is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UnparseableVerdict("judge reply must be a JSON object")
    if set(data) != set(JUDGE_CRITERIA):
        missing = set(JUDGE_CRITERIA) - set(data)
        extra = set(data) - set(JUDGE_CRITERIA)
        raise UnparseableVerdict(
            f"judge reply keys wrong (missing {sorted(missing)}, extra {sorted(extra)})")
    values = {}
    for criterion in JUDGE_CRITERIA:
        value = data[criterion]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UnparseableVerdict(f"{criterion} is not a number: {value!r}")
        values[criterion] = float(value)
    return JudgeScores(judge_name=getattr(backend, "name", "judge"), **values)


def aggregate_judges(scores: Sequence[JudgeScores]) -> JudgeScores:
    """Arithmetic mean per criterion."""
    if not scores:
        raise EmptyInput("no judge scores to aggregate")
    means = {
        criterion: float(np.mean([getattr(s, criterion) for s in scores]))
        for criterion in JUDGE_CRITERIA
    }
    return JudgeScores(judge_name="average", **means)


# --- mixture-of-agents validity ---

@dataclass(frozen=True)
class MoaVerdict:
    proposer_critiques: tuple[str, ...]
    aggregate_critique: str
    valid: bool

    def __post_init__(self) -> None:
        if len(self.proposer_critiques) < 1:
            raise EmptyInput("need at least one proposer critique")


def moa_validity(
    report_text: str,
    proposers: Sequence[ChatBackend],
    aggregator: ChatBackend,
    classifier: ChatBackend,
    params: ChatParams = ChatParams(),
) -> MoaVerdict:
    """Proposers critique, the aggregator merges, the classifier decides."""
    if not proposers:
        raise EmptyInput("need at least one proposer backend")
    proposer_prompt = render_prompt("moa_proposer", {"report": report_text})
    critiques = tuple(
        p.complete([{"role": "user", "content": proposer_prompt}], params)
        for p in proposers
    )
    joined = "\n\n".join(
        f"Critique {i + 1}:\n{text}" for i, text in enumerate(critiques))
    aggregate = aggregator.complete(
        [{"role": "user", "content": render_prompt("moa_aggregator",
                                                   {"critiques": joined})}],
        params)
    verdict_reply = classifier.complete(
        [{"role": "user", "content": render_prompt("moa_classifier",
                                                   {"aggregate": aggregate})}],
        params)
    try:
        data = json.loads(verdict_reply)
    except json.JSONDecodeError as exc:
        raise UnparseableVerdict(f"classifier reply is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or set(data) != {"valid"} or not isinstance(
            data["valid"], bool):
        raise UnparseableVerdict(
            'classifier reply must be exactly {"valid": true|false}')
    return MoaVerdict(
        proposer_critiques=critiques,
        aggregate_critique=aggregate,
        valid=data["valid"],
    )
