"""Similarity -> max-pool -> normalize -> linear head, plus interventions.

The classifier is deliberately plain: cosine similarities between image rows
and concept embeddings are max-pooled into one value per concept, min-max
normalized into [0,1] with statistics fitted on the training split, and fed
to a linear layer trained by full-batch gradient descent on cross-entropy.
Every prediction decomposes exactly into per-concept contributions
``W[class][j] * e[j]``, which is what the intervention and report machinery
operate on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data_model import (
    TEST,
    TRAIN,
    CaseRecord,
    ConceptEmbedding,
    Dataset,
    ImageEmbedding,
)
from .errors import (
    DimensionMismatch,
    EmptyInput,
    IndexOutOfRange,
    InvalidK,
    MalformedFile,
    MissingOracleConcepts,
    NonFiniteLoss,
    NoTrainingData,
    ValueOutOfRange,
    ZeroNormVector,
)
from .serialize import dump_json, load_json

MODEL_FORMAT_VERSION = 1
_SIM_EPS = 1e-9


@dataclass(frozen=True)
class SimilarityMatrix:
    """H x N cosine similarities between image rows and concepts."""

    case_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise DimensionMismatch("similarity matrix must be 2-D")
        if np.any(np.abs(vals) > 1.0 + _SIM_EPS) or not np.all(np.isfinite(vals)):
            raise ValueOutOfRange("similarity entries must lie in [-1, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ConceptVector:
    case_id: str
    raw: np.ndarray
    normalized: np.ndarray

    def __post_init__(self) -> None:
        raw = np.asarray(self.raw, dtype=np.float64)
        norm = np.asarray(self.normalized, dtype=np.float64)
        if raw.shape != norm.shape or raw.ndim != 1:
            raise DimensionMismatch("raw and normalized widths differ")
        if np.any(norm < 0.0) or np.any(norm > 1.0):
            raise ValueOutOfRange("normalized concept values must lie in [0, 1]")
        raw.setflags(write=False)
        norm.setflags(write=False)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "normalized", norm)

    @property
    def width(self) -> int:
        return self.raw.shape[0]


@dataclass(frozen=True)
class NormStats:
    minimum: np.ndarray
    maximum: np.ndarray
    computed_on: str = TRAIN

    def __post_init__(self) -> None:
        lo = np.asarray(self.minimum, dtype=np.float64)
        hi = np.asarray(self.maximum, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("norm stats min/max widths differ")
        if np.any(lo > hi):
            raise ValueOutOfRange("norm stats require min <= max")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "minimum", lo)
        object.__setattr__(self, "maximum", hi)

    @property
    def width(self) -> int:
        return self.minimum.shape[0]


def global_norm_stats(width: int) -> NormStats:
    """Fallback stats mapping the full cosine range [-1, 1] onto [0, 1]."""
    return NormStats(minimum=-np.ones(width), maximum=np.ones(width), computed_on="global")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    epochs: int = 400
    l2: float = 0.0
    seed: int = 0
    batch_size: int | None = None  # None = full batch
    use_bias: bool = True

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueOutOfRange("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueOutOfRange("epochs must be >= 0")
        if self.l2 < 0:
            raise ValueOutOfRange("l2 must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueOutOfRange("batch_size must be >= 1")


@dataclass(frozen=True)
class TrainedHead:
    classes: tuple[str, ...]
    concepts: tuple[str, ...]
    W: np.ndarray
    b: np.ndarray
    norm_stats: NormStats
    train_config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.shape != (len(self.classes), len(self.concepts)):
            raise DimensionMismatch(
                f"W shape {W.shape} != ({len(self.classes)}, {len(self.concepts)})")
        if b.shape != (len(self.classes),):
            raise DimensionMismatch("bias length must equal class count")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise NonFiniteLoss("head weights are not finite")
        if self.norm_stats.width != len(self.concepts):
            raise DimensionMismatch("norm stats width != bottleneck width")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def width(self) -> int:
        return len(self.concepts)


@dataclass(frozen=True)
class Prediction:
    case_id: str
    logits: np.ndarray
    log_probs: np.ndarray
    predicted_class: str
    contributions: np.ndarray  # (n_classes, n_concepts)
    concept_values: np.ndarray  # the normalized vector the logits came from


# --- similarity / pooling / normalization ---

def cosine_similarity_matrix(
    embedding: ImageEmbedding, concept_embeddings: Sequence[ConceptEmbedding]
) -> SimilarityMatrix:
    """values[i][j] = cos(row_i, concept_j)."""
    if not concept_embeddings:
        raise EmptyInput("no concept embeddings")
    T = np.stack([c.vector for c in concept_embeddings])
    if T.shape[1] != embedding.shape[1]:
        raise DimensionMismatch(
            f"embedding dim {embedding.shape[1]} != concept dim {T.shape[1]}")
    row_norms = np.linalg.norm(embedding.data, axis=1)
    col_norms = np.linalg.norm(T, axis=1)
    if np.any(row_norms == 0.0) or np.any(col_norms == 0.0):
        raise ZeroNormVector("cosine undefined for zero-norm vectors")
    sims = (embedding.data @ T.T) / np.outer(row_norms, col_norms)
    return SimilarityMatrix(case_id=embedding.case_id, values=sims)


def normalize_raw(raw: np.ndarray, stats: NormStats | None) -> np.ndarray:
    """Map raw pooled similarities onto [0,1].

    With stats: per-concept min-max, clamped; a degenerate concept
    (min == max) maps to 0.5. Without stats: the global cosine range,
    (raw + 1) / 2.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if stats is None:
        return np.clip((raw + 1.0) / 2.0, 0.0, 1.0)
    if stats.width != raw.shape[0]:
        raise DimensionMismatch("norm stats width != concept count")
    span = stats.maximum - stats.minimum
    degenerate = span == 0.0
    safe_span = np.where(degenerate, 1.0, span)
    normalized = np.clip((raw - stats.minimum) / safe_span, 0.0, 1.0)
    return np.where(degenerate, 0.5, normalized)


def concept_vector(matrix: SimilarityMatrix, stats: NormStats | None = None) -> ConceptVector:
    """Column-max pooling followed by [0,1] normalization."""
    raw = matrix.values.max(axis=0)
    return ConceptVector(case_id=matrix.case_id, raw=raw, normalized=normalize_raw(raw, stats))


def fit_norm_stats(raw_vectors: Sequence[np.ndarray], computed_on: str = TRAIN) -> NormStats:
    """Elementwise extrema over the training split's raw concept vectors."""
    if len(raw_vectors) == 0:
        raise EmptyInput("fit_norm_stats needs at least one vector")
    stacked = np.stack([np.asarray(v, dtype=np.float64) for v in raw_vectors])
    return NormStats(
        minimum=stacked.min(axis=0), maximum=stacked.max(axis=0), computed_on=computed_on)


def case_concept_vector(
    case: CaseRecord,
    concept_embeddings: Sequence[ConceptEmbedding],
    stats: NormStats | None = None,
    base_dir: str | Path = ".",
) -> ConceptVector:
    emb = case.resolve_embedding(base_dir)
    return concept_vector(cosine_similarity_matrix(emb, concept_embeddings), stats)


def compute_concept_vectors(
    dataset: Dataset,
    concept_embeddings: Sequence[ConceptEmbedding],
    stats: NormStats | None = None,
    base_dir: str | Path = ".",
) -> dict[str, ConceptVector]:
    return {
        c.case_id: case_concept_vector(c, concept_embeddings, stats, base_dir)
        for c in dataset.cases
    }


# --- training ---

def loss_and_grads(
    W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float, use_bias: bool
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of log-softmax(X W^T + b) plus 0.5*l2*||W||^2."""
    n = X.shape[0]
    # overflow to inf/nan is the divergence signal train_head checks for
    with np.errstate(over="ignore", invalid="ignore"):
        logits = X @ W.T + b
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1))
        log_probs = shifted - log_z[:, None]
        loss = -log_probs[np.arange(n), y].mean() + 0.5 * l2 * float((W * W).sum())
        probs = np.exp(log_probs)
        probs[np.arange(n), y] -= 1.0
        probs /= n
        grad_W = probs.T @ X + l2 * W
        grad_b = probs.sum(axis=0) if use_bias else np.zeros_like(b)
    return float(loss), grad_W, grad_b


def train_head(
    dataset: Dataset,
    concept_vectors: Mapping[str, ConceptVector],
    config: TrainConfig = TrainConfig(),
    stats: NormStats | None = None,
) -> TrainedHead:
    """Gradient descent from zero init; deterministic in config.seed."""
    config.validate()
    train_cases = dataset.cases_in(TRAIN)
    if not train_cases:
        raise NoTrainingData("training split is empty")
    rows, labels = [], []
    for case in train_cases:
        if case.label is None:
            raise NoTrainingData(f"train case {case.case_id!r} has no label")
        if case.case_id not in concept_vectors:
            raise NoTrainingData(f"train case {case.case_id!r} has no concept vector")
        rows.append(concept_vectors[case.case_id].normalized)
        labels.append(dataset.classes.index(case.label))
    X = np.stack(rows)
    y = np.asarray(labels, dtype=np.int64)
    n_classes, width = len(dataset.classes), X.shape[1]
    if stats is None:
        stats = global_norm_stats(width)
    if stats.width != width:
        raise DimensionMismatch("norm stats width != concept vector width")

    W = np.zeros((n_classes, width))
    b = np.zeros(n_classes)
    rng = np.random.default_rng(config.seed)
    initial_loss, _, _ = loss_and_grads(W, b, X, y, config.l2, config.use_bias)

    for _ in range(config.epochs):
        if config.batch_size is None:
            batches = [np.arange(X.shape[0])]
        else:
            order = rng.permutation(X.shape[0])
            batches = [
                order[i: i + config.batch_size]
                for i in range(0, X.shape[0], config.batch_size)
            ]
        for batch in batches:
            loss, grad_W, grad_b = loss_and_grads(
                W, b, X[batch], y[batch], config.l2, config.use_bias)
            if not np.isfinite(loss):
                raise NonFiniteLoss("loss became non-finite; lower the learning rate")
            W = W - config.learning_rate * grad_W
            if config.use_bias:
                b = b - config.learning_rate * grad_b

    final_loss, _, _ = loss_and_grads(W, b, X, y, config.l2, config.use_bias)
    if not np.isfinite(final_loss):
        raise NonFiniteLoss("loss became non-finite; lower the learning rate")
    if final_loss > initial_loss + 1e-12:
        raise NonFiniteLoss(
            f"training diverged (loss {initial_loss:.6g} -> {final_loss:.6g}); "
            "lower the learning rate")

    return TrainedHead(
        classes=tuple(dataset.classes),
        concepts=tuple(dataset.concept_union),
        W=W, b=b, norm_stats=stats, train_config=config,
    )


def fit_pipeline(
    dataset: Dataset,
    concept_embeddings: Sequence[ConceptEmbedding],
    config: TrainConfig = TrainConfig(),
    base_dir: str | Path = ".",
) -> tuple[TrainedHead, dict[str, ConceptVector]]:
    """Fit norm stats on the training split, then train the linear head.

    Returns the head and the per-case normalized concept vectors (train and
    test) computed with the fitted statistics.
    """
    raw_vectors = compute_concept_vectors(dataset, concept_embeddings, None, base_dir)
    stats = fit_norm_stats([raw_vectors[c.case_id].raw for c in dataset.cases_in(TRAIN)])
    vectors = {
        cid: ConceptVector(case_id=cid, raw=vec.raw, normalized=normalize_raw(vec.raw, stats))
        for cid, vec in raw_vectors.items()
    }
    head = train_head(dataset, vectors, config, stats)
    return head, vectors


# --- inference / interventions ---

def _predict_values(case_id: str, values: np.ndarray, head: TrainedHead) -> Prediction:
    logits = head.W @ values + head.b
    shifted = logits - logits.max()
    log_probs = shifted - np.log(np.exp(shifted).sum())
    contributions = head.W * values[None, :]
    predicted = head.classes[int(np.argmax(logits))]
    return Prediction(
        case_id=case_id, logits=logits, log_probs=log_probs,
        predicted_class=predicted, contributions=contributions,
        concept_values=values.copy(),
    )


def predict(vector: ConceptVector, head: TrainedHead) -> Prediction:
    if vector.width != head.width:
        raise DimensionMismatch(
            f"concept vector width {vector.width} != head width {head.width}")
    return _predict_values(vector.case_id, vector.normalized, head)


def intervene(
    vector: ConceptVector,
    edits: Sequence[tuple[int, float]],
    head: TrainedHead,
) -> Prediction:
    """Predict from an edited copy of the vector; later edits win on an index."""
    if vector.width != head.width:
        raise DimensionMismatch("concept vector width != head width")
    values = vector.normalized.copy()
    for index, new_value in edits:
        if not 0 <= index < vector.width:
            raise IndexOutOfRange(f"concept index {index} outside [0, {vector.width})")
        if not 0.0 <= new_value <= 1.0:
            raise ValueOutOfRange(f"concept value {new_value} outside [0, 1]")
        values[index] = new_value
    return _predict_values(vector.case_id, values, head)


# --- experiment procedures ---

STRATEGIES = ("max_contribution", "min_contribution", "random")


def _removal_order(
    prediction: Prediction, head: TrainedHead, strategy: str, rng: np.random.Generator
) -> np.ndarray:
    """Per-case concept removal order; ties broken toward the lowest index."""
    row = prediction.contributions[head.classes.index(prediction.predicted_class)]
    if strategy == "max_contribution":
        return np.argsort(-row, kind="stable")
    if strategy == "min_contribution":
        return np.argsort(row, kind="stable")
    if strategy == "random":
        return rng.permutation(row.shape[0])
    raise ValueOutOfRange(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def _labeled_test_cases(dataset: Dataset) -> list[CaseRecord]:
    cases = [c for c in dataset.cases_in(TEST) if c.label is not None]
    if not cases:
        raise NoTrainingData("no labeled test cases")
    return cases


def ablation_run(
    dataset: Dataset,
    head: TrainedHead,
    concept_vectors: Mapping[str, ConceptVector],
    strategy: str,
    k_values: Sequence[int],
    seed: int = 0,
) -> list[dict]:
    """Zero k concepts per case in the strategy's order and re-score the test split."""
    for k in k_values:
        if not 0 <= k <= head.width:
            raise InvalidK(f"k={k} outside [0, {head.width}]")
    cases = _labeled_test_cases(dataset)
    rng = np.random.default_rng(seed)
    baselines = [predict(concept_vectors[c.case_id], head) for c in cases]
    orders = [_removal_order(p, head, strategy, rng) for p in baselines]

    results = []
    for k in k_values:
        correct = 0
        for case, baseline, order in zip(cases, baselines, orders):
            if k == 0:
                pred = baseline
            else:
                values = baseline.concept_values.copy()
                values[order[:k]] = 0.0
                pred = _predict_values(case.case_id, values, head)
            correct += int(pred.predicted_class == case.label)
        results.append({"k": int(k), "test_accuracy": correct / len(cases)})
    return results


def correction_run(
    dataset: Dataset,
    head: TrainedHead,
    concept_vectors: Mapping[str, ConceptVector],
    k_values: Sequence[int],
) -> list[dict]:
    """Overwrite the top-k |contribution| concepts of misclassified test cases
    with their ground-truth values and re-score the full test split."""
    for k in k_values:
        if not 0 <= k <= head.width:
            raise InvalidK(f"k={k} outside [0, {head.width}]")
    cases = _labeled_test_cases(dataset)
    for case in cases:
        if case.oracle_concepts is None:
            raise MissingOracleConcepts(f"case {case.case_id!r} has no oracle concepts")
        if case.oracle_concepts.shape[0] != head.width:
            raise DimensionMismatch(
                f"case {case.case_id!r}: oracle width != bottleneck width")

    baselines = [predict(concept_vectors[c.case_id], head) for c in cases]
    wrong = [
        (case, pred) for case, pred in zip(cases, baselines)
        if pred.predicted_class != case.label
    ]
    n_right_baseline = len(cases) - len(wrong)

    orders = []
    for case, pred in wrong:
        row = pred.contributions[head.classes.index(pred.predicted_class)]
        orders.append(np.argsort(-np.abs(row), kind="stable"))

    results = []
    for k in k_values:
        converted = 0
        for (case, pred), order in zip(wrong, orders):
            if k == 0:
                continue
            values = pred.concept_values.copy()
            idx = order[:k]
            values[idx] = case.oracle_concepts[idx]
            fixed = _predict_values(case.case_id, values, head)
            converted += int(fixed.predicted_class == case.label)
        results.append({
            "k": int(k),
            "corrected_accuracy": (n_right_baseline + converted) / len(cases),
            "converted": converted,
            "misclassified": len(wrong),
        })
    return results


# --- persistence ---

def save_head(head: TrainedHead, path: str | Path) -> None:
    cfg = head.train_config
    dump_json(path, {
        "format_version": MODEL_FORMAT_VERSION,
        "classes": list(head.classes),
        "concepts": list(head.concepts),
        "W": [row for row in head.W],
        "b": head.b,
        "norm_stats": {
            "min": head.norm_stats.minimum,
            "max": head.norm_stats.maximum,
            "computed_on": head.norm_stats.computed_on,
        },
        "train_config": {
            "learning_rate": cfg.learning_rate,
            "epochs": cfg.epochs,
            "l2": cfg.l2,
            "seed": cfg.seed,
            "batch_size": cfg.batch_size,
            "use_bias": cfg.use_bias,
        },
    })


def load_head(path: str | Path) -> TrainedHead:
    raw = load_json(path)
    if not isinstance(raw, dict):
        raise MalformedFile(f"{path}: expected an object")
    if raw.get("format_version") != MODEL_FORMAT_VERSION:
        raise MalformedFile(f"{path}: unsupported format_version {raw.get('format_version')!r}")
    try:
        stats_raw = raw["norm_stats"]
        cfg_raw = raw["train_config"]
        head = TrainedHead(
            classes=tuple(str(c) for c in raw["classes"]),
            concepts=tuple(str(c) for c in raw["concepts"]),
            W=np.asarray(raw["W"], dtype=np.float64),
            b=np.asarray(raw["b"], dtype=np.float64),
            norm_stats=NormStats(
                minimum=np.asarray(stats_raw["min"], dtype=np.float64),
                maximum=np.asarray(stats_raw["max"], dtype=np.float64),
                computed_on=str(stats_raw["computed_on"]),
            ),
            train_config=TrainConfig(
                learning_rate=float(cfg_raw["learning_rate"]),
                epochs=int(cfg_raw["epochs"]),
                l2=float(cfg_raw["l2"]),
                seed=int(cfg_raw["seed"]),
                batch_size=None if cfg_raw["batch_size"] is None else int(cfg_raw["batch_size"]),
                use_bias=bool(cfg_raw["use_bias"]),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    return head
