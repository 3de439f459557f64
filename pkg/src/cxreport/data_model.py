"""Domain types, fixture file formats, and the seeded synthetic corpus.

File formats (all JSON/JSONL, canonical serialization from :mod:`.serialize`):

* embedding file   ``{"case_id": str, "shape": [H, D], "data": [float, ...]}``
  with ``data`` row-major;
* concept set      ``{"disease": str, "concepts": [{"name", "text"}, ...]}``;
* concept vectors  JSONL, ``{"name": str, "vector": [float, ...]}`` per line;
* documents        JSONL, one record per line;
* dataset manifest JSON with classes, concept union, and per-case entries
  carrying split tags, inline embeddings, labels, and oracle concept values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateId, InvalidSpec, MalformedFile
from .serialize import dump_json, dump_jsonl, load_json, load_jsonl

TRAIN = "train"
TEST = "test"


def _as_matrix(data: object, what: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise MalformedFile(f"{what}: expected a 2-D matrix, got ndim={arr.ndim}")
    return arr


@dataclass(frozen=True)
class ImageEmbedding:
    """One case's H x D matrix of row embeddings."""

    case_id: str
    data: np.ndarray

    def __post_init__(self) -> None:
        arr = _as_matrix(self.data, f"embedding {self.case_id!r}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise MalformedFile(f"embedding {self.case_id!r}: empty shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise MalformedFile(f"embedding {self.case_id!r}: NaN/Inf entries")
        norms = np.linalg.norm(arr, axis=1)
        if np.any(norms == 0.0):
            raise MalformedFile(f"embedding {self.case_id!r}: zero-norm row")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class Concept:
    name: str
    text: str


@dataclass(frozen=True)
class ConceptSet:
    """Ordered clinical descriptors for one disease."""

    disease: str
    concepts: tuple[Concept, ...]

    def __post_init__(self) -> None:
        if len(self.concepts) < 1:
            raise MalformedFile(f"concept set {self.disease!r}: empty")
        names = [c.name for c in self.concepts]
        seen: set[str] = set()
        for name in names:
            if name in seen:
                raise DuplicateId(f"concept set {self.disease!r}: duplicate name {name!r}")
            seen.add(name)

    def names(self) -> list[str]:
        return [c.name for c in self.concepts]


@dataclass(frozen=True)
class ConceptEmbedding:
    concept_name: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size < 1:
            raise MalformedFile(f"concept {self.concept_name!r}: vector must be 1-D")
        if not np.all(np.isfinite(vec)):
            raise MalformedFile(f"concept {self.concept_name!r}: NaN/Inf entries")
        if np.linalg.norm(vec) == 0.0:
            raise MalformedFile(f"concept {self.concept_name!r}: zero-norm vector")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class CaseRecord:
    case_id: str
    embedding: ImageEmbedding | None = None
    embedding_path: str | None = None
    label: str | None = None
    oracle_concepts: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.embedding is None and self.embedding_path is None:
            raise MalformedFile(f"case {self.case_id!r}: no embedding reference")
        if self.oracle_concepts is not None:
            arr = np.asarray(self.oracle_concepts, dtype=np.float64)
            if arr.ndim != 1:
                raise MalformedFile(f"case {self.case_id!r}: oracle_concepts must be 1-D")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
                raise MalformedFile(f"case {self.case_id!r}: oracle_concepts outside [0,1]")
            arr.setflags(write=False)
            object.__setattr__(self, "oracle_concepts", arr)

    def resolve_embedding(self, base_dir: str | Path = ".") -> ImageEmbedding:
        if self.embedding is not None:
            return self.embedding
        return load_image_embedding(Path(base_dir) / str(self.embedding_path))


@dataclass(frozen=True)
class Dataset:
    classes: tuple[str, ...]
    concept_union: tuple[str, ...]
    cases: tuple[CaseRecord, ...]
    split: dict[str, str] = field(default_factory=dict)  # case_id -> train|test
    seed: int = 0

    def __post_init__(self) -> None:
        class_set = set(self.classes)
        ids = set()
        for case in self.cases:
            if case.case_id in ids:
                raise DuplicateId(f"duplicate case id {case.case_id!r}")
            ids.add(case.case_id)
            if case.label is not None and case.label not in class_set:
                raise MalformedFile(f"case {case.case_id!r}: unknown label {case.label!r}")
        for cid, tag in self.split.items():
            if cid not in ids:
                raise MalformedFile(f"split references unknown case {cid!r}")
            if tag not in (TRAIN, TEST):
                raise MalformedFile(f"case {cid!r}: unknown split tag {tag!r}")
        missing = ids - set(self.split)
        if self.split and missing:
            raise MalformedFile(f"split not exhaustive; missing {sorted(missing)[:3]}...")

    def cases_in(self, split_tag: str) -> list[CaseRecord]:
        return [c for c in self.cases if self.split.get(c.case_id) == split_tag]

    def case_by_id(self, case_id: str) -> CaseRecord:
        for case in self.cases:
            if case.case_id == case_id:
                return case
        raise KeyError(case_id)


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    disease: str
    title: str
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise MalformedFile(f"document {self.doc_id!r}: empty text")


# --- loaders / savers ---

def load_image_embedding(path: str | Path) -> ImageEmbedding:
    raw = load_json(path)
    if not isinstance(raw, dict):
        raise MalformedFile(f"{path}: expected an object")
    try:
        case_id = raw["case_id"]
        shape = raw["shape"]
        data = raw["data"]
    except KeyError as exc:
        raise MalformedFile(f"{path}: missing key {exc}") from exc
    if (not isinstance(shape, list) or len(shape) != 2
            or not all(isinstance(s, int) and s > 0 for s in shape)):
        raise MalformedFile(f"{path}: shape must be two positive ints")
    if not isinstance(data, list):
        raise MalformedFile(f"{path}: data must be a flat array")
    h, d = shape
    if len(data) != h * d:
        raise MalformedFile(f"{path}: {len(data)} values for shape {h}x{d}")
    try:
        arr = np.asarray(data, dtype=np.float64).reshape(h, d)
    except (TypeError, ValueError) as exc:
        raise MalformedFile(f"{path}: non-numeric data ({exc})") from exc
    return ImageEmbedding(case_id=str(case_id), data=arr)


def save_image_embedding(emb: ImageEmbedding, path: str | Path) -> None:
    h, d = emb.shape
    dump_json(path, {
        "case_id": emb.case_id,
        "shape": [h, d],
        "data": emb.data.reshape(-1),
    })


def load_concept_set(path: str | Path) -> ConceptSet:
    raw = load_json(path)
    if not isinstance(raw, dict) or "disease" not in raw or "concepts" not in raw:
        raise MalformedFile(f"{path}: expected disease + concepts keys")
    concepts = []
    for entry in raw["concepts"]:
        if not isinstance(entry, dict) or "name" not in entry or "text" not in entry:
            raise MalformedFile(f"{path}: concept entries need name + text")
        concepts.append(Concept(name=str(entry["name"]), text=str(entry["text"])))
    return ConceptSet(disease=str(raw["disease"]), concepts=tuple(concepts))


def save_concept_set(cs: ConceptSet, path: str | Path) -> None:
    dump_json(path, {
        "disease": cs.disease,
        "concepts": [{"name": c.name, "text": c.text} for c in cs.concepts],
    })


def load_concept_embeddings(path: str | Path) -> list[ConceptEmbedding]:
    rows = load_jsonl(path)
    out: list[ConceptEmbedding] = []
    seen: set[str] = set()
    for row in rows:
        if not isinstance(row, dict) or "name" not in row or "vector" not in row:
            raise MalformedFile(f"{path}: each line needs name + vector")
        name = str(row["name"])
        if name in seen:
            raise DuplicateId(f"{path}: duplicate concept {name!r}")
        seen.add(name)
        out.append(ConceptEmbedding(concept_name=name, vector=np.asarray(row["vector"], dtype=np.float64)))
    if out and any(e.vector.size != out[0].vector.size for e in out):
        raise MalformedFile(f"{path}: inconsistent vector dimensions")
    return out


def save_concept_embeddings(embs: Sequence[ConceptEmbedding], path: str | Path) -> None:
    dump_jsonl(path, [{"name": e.concept_name, "vector": e.vector} for e in embs])


def load_documents(path: str | Path) -> list[DocumentRecord]:
    rows = load_jsonl(path)
    out: list[DocumentRecord] = []
    seen: set[str] = set()
    for row in rows:
        if not isinstance(row, dict):
            raise MalformedFile(f"{path}: each line must be an object")
        try:
            rec = DocumentRecord(
                doc_id=str(row["doc_id"]), disease=str(row["disease"]),
                title=str(row["title"]), text=str(row["text"]),
            )
        except KeyError as exc:
            raise MalformedFile(f"{path}: missing key {exc}") from exc
        if rec.doc_id in seen:
            raise DuplicateId(f"{path}: duplicate doc_id {rec.doc_id!r}")
        seen.add(rec.doc_id)
        out.append(rec)
    return out


def save_documents(docs: Sequence[DocumentRecord], path: str | Path) -> None:
    dump_jsonl(path, [
        {"doc_id": d.doc_id, "disease": d.disease, "title": d.title, "text": d.text}
        for d in docs
    ])


def _case_to_json(case: CaseRecord, split_tag: str) -> dict:
    entry: dict = {"case_id": case.case_id, "split": split_tag}
    entry["label"] = case.label
    if case.embedding is not None:
        h, d = case.embedding.shape
        entry["embedding"] = {
            "case_id": case.embedding.case_id,
            "shape": [h, d],
            "data": case.embedding.data.reshape(-1),
        }
    else:
        entry["embedding_path"] = case.embedding_path
    entry["oracle_concepts"] = case.oracle_concepts
    return entry


def save_dataset(ds: Dataset, path: str | Path) -> None:
    dump_json(path, {
        "classes": list(ds.classes),
        "concept_union": list(ds.concept_union),
        "seed": ds.seed,
        "cases": [_case_to_json(c, ds.split[c.case_id]) for c in ds.cases],
    })


def load_dataset(path: str | Path) -> Dataset:
    raw = load_json(path)
    if not isinstance(raw, dict):
        raise MalformedFile(f"{path}: expected an object")
    try:
        classes = tuple(str(c) for c in raw["classes"])
        concept_union = tuple(str(c) for c in raw["concept_union"])
        case_rows = raw["cases"]
    except KeyError as exc:
        raise MalformedFile(f"{path}: missing key {exc}") from exc
    cases: list[CaseRecord] = []
    split: dict[str, str] = {}
    for row in case_rows:
        emb = None
        if row.get("embedding") is not None:
            e = row["embedding"]
            h, d = e["shape"]
            flat = np.asarray(e["data"], dtype=np.float64)
            if flat.size != h * d:
                raise MalformedFile(f"{path}: case {row.get('case_id')!r} embedding size mismatch")
            emb = ImageEmbedding(case_id=str(e["case_id"]), data=flat.reshape(h, d))
        oracle = row.get("oracle_concepts")
        case = CaseRecord(
            case_id=str(row["case_id"]),
            embedding=emb,
            embedding_path=row.get("embedding_path"),
            label=row.get("label"),
            oracle_concepts=None if oracle is None else np.asarray(oracle, dtype=np.float64),
        )
        cases.append(case)
        split[case.case_id] = str(row.get("split", TRAIN))
    return Dataset(
        classes=classes, concept_union=concept_union,
        cases=tuple(cases), split=split, seed=int(raw.get("seed", 0)),
    )


# --- synthetic corpus ---

@dataclass(frozen=True)
class SynthSpec:
    """Parameters for the planted-signal synthetic dataset.

    Each class owns a disjoint block of "signature" concepts. A case of that
    class plants one row per signature concept (the concept embedding plus a
    Gaussian perturbation scaled by noise_level) and fills the rest with
    random background rows. Noise also corrupts evidence: signature rows are
    occasionally dropped, spurious rows from other classes' signatures are
    occasionally planted, and a small fraction of cases get heavy "confusion"
    corruption toward one rival class. Ground-truth concept values are 1 on
    the signature block and 0 elsewhere regardless of corruption, which is
    what makes oracle-guided correction able to repair misclassifications.
    """

    n_classes: int
    n_concepts: int
    n_cases: int
    rows: int
    dim: int
    noise_level: float
    seed: int
    train_fraction: float = 0.8

    def validate(self) -> None:
        if self.n_classes < 2:
            raise InvalidSpec("need at least 2 classes")
        if self.n_concepts < self.n_classes:
            raise InvalidSpec("need at least one concept per class")
        if not (0.0 <= self.noise_level < 1.0):
            raise InvalidSpec("noise_level must be in [0, 1)")
        if self.n_cases < self.n_classes:
            raise InvalidSpec("need at least one case per class")
        if self.dim < 2:
            raise InvalidSpec("embedding dim must be >= 2")
        largest_signature = -(-self.n_concepts // self.n_classes)  # ceil
        if self.rows < largest_signature:
            raise InvalidSpec(
                f"rows={self.rows} cannot hold the largest signature ({largest_signature})")
        if not (0.0 < self.train_fraction < 1.0):
            raise InvalidSpec("train_fraction must be in (0, 1)")


# Corruption regimes. Light noise only degrades evidence (row perturbation,
# occasional dropped or spurious rows). Past _CONFUSION_ONSET a second regime
# activates: whole cases corrupted toward one rival class, which is what
# produces misclassifications that concept correction can repair. The onset
# keeps the light-noise datasets nearly error-free so ablation curves stay
# cleanly ordered, while noise 0.15 yields a healthy misclassified population.
_DROP_RATE = 1.0
_SPURIOUS_RATE = 0.5
_CONFUSION_RATE = 5.0
_CONFUSION_ONSET = 0.12
_CONFUSION_DROP = 0.55
_CONFUSION_PLANT = 0.75


def class_signatures(n_classes: int, n_concepts: int) -> list[list[int]]:
    """Disjoint contiguous concept-index blocks, one per class."""
    base, extra = divmod(n_concepts, n_classes)
    sizes = [base + (1 if k < extra else 0) for k in range(n_classes)]
    out, start = [], 0
    for size in sizes:
        out.append(list(range(start, start + size)))
        start += size
    return out


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.standard_normal((n, dim))
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return rows / norms


def synth_dataset(spec: SynthSpec) -> tuple[Dataset, list[ConceptEmbedding]]:
    """Deterministic planted-signal dataset; byte-identical for equal specs."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    concept_names = [f"concept_{j:02d}" for j in range(spec.n_concepts)]
    class_names = [f"class_{k}" for k in range(spec.n_classes)]
    signatures = class_signatures(spec.n_classes, spec.n_concepts)

    T = _unit_rows(rng, spec.n_concepts, spec.dim)
    concept_embeddings = [
        ConceptEmbedding(concept_name=concept_names[j], vector=T[j])
        for j in range(spec.n_concepts)
    ]

    noise = spec.noise_level
    p_drop = _DROP_RATE * noise
    p_spur = _SPURIOUS_RATE * noise
    p_confuse = min(0.5, _CONFUSION_RATE * max(0.0, noise - _CONFUSION_ONSET))

    cases: list[CaseRecord] = []
    for i in range(spec.n_cases):
        k = i % spec.n_classes
        sig = signatures[k]
        visible = dict.fromkeys(sig, True)
        planted: dict[int, bool] = {}

        if rng.random() < p_confuse:
            rivals = [c for c in range(spec.n_classes) if c != k]
            rival = rivals[int(rng.integers(len(rivals)))]
            for j in sig:
                if rng.random() < _CONFUSION_DROP:
                    visible[j] = False
            for j in signatures[rival]:
                if rng.random() < _CONFUSION_PLANT:
                    planted[j] = True
        else:
            for j in sig:
                if rng.random() < p_drop:
                    visible[j] = False
            for c in range(spec.n_classes):
                if c == k:
                    continue
                for j in signatures[c]:
                    if rng.random() < p_spur:
                        planted[j] = True

        rows = []
        budget = spec.rows
        for j in sig:
            if visible[j] and budget > 0:
                rows.append(T[j] + noise * rng.standard_normal(spec.dim))
                budget -= 1
        for j in planted:
            if budget > 0:
                rows.append(T[j] + noise * rng.standard_normal(spec.dim))
                budget -= 1
        if budget > 0:
            rows.extend(_unit_rows(rng, budget, spec.dim))
        matrix = np.vstack(rows)[: spec.rows]

        oracle = np.zeros(spec.n_concepts)
        oracle[sig] = 1.0
        cases.append(CaseRecord(
            case_id=f"case_{i:04d}",
            embedding=ImageEmbedding(case_id=f"case_{i:04d}", data=matrix),
            label=class_names[k],
            oracle_concepts=oracle,
        ))

    # Stratified split: a seeded permutation within each class.
    split: dict[str, str] = {}
    for k, cls in enumerate(class_names):
        members = [c.case_id for c in cases if c.label == cls]
        order = rng.permutation(len(members))
        n_train = max(1, min(len(members) - 1, round(spec.train_fraction * len(members))))
        for rank, idx in enumerate(order):
            split[members[idx]] = TRAIN if rank < n_train else TEST

    dataset = Dataset(
        classes=tuple(class_names),
        concept_union=tuple(concept_names),
        cases=tuple(cases),
        split=split,
        seed=spec.seed,
    )
    return dataset, concept_embeddings


def documents_for_classes(classes: Iterable[str], sentences_per_doc: int = 4) -> list[DocumentRecord]:
    """Small deterministic clinical-note corpus for demos and tests."""
    docs = []
    for cls in classes:
        body = " ".join(
            f"Reference note {i + 1} for {cls}: typical radiographic appearance, "
            f"distribution, and severity markers are described here."
            for i in range(sentences_per_doc)
        )
        docs.append(DocumentRecord(
            doc_id=f"doc_{cls}", disease=cls,
            title=f"Clinical documentation: {cls}", text=body,
        ))
    return docs


def with_inline_embeddings(ds: Dataset, base_dir: str | Path = ".") -> Dataset:
    """Materialize any path-referenced embeddings inline."""
    cases = tuple(
        c if c.embedding is not None else replace(c, embedding=c.resolve_embedding(base_dir))
        for c in ds.cases
    )
    return replace(ds, cases=cases)
