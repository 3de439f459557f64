"""Three-stage report pipeline over a trained head and a document store.

Stage one is a ReAct-style retrieval agent whose only tool is the store's
cosine search. Stage two is computational: each concept gets an influence
score blending its contribution to the predicted class with its best evidence
similarity. Stage three renders a writer prompt and parses the sectioned
report. With scripted backends the whole pipeline is a pure function of its
inputs, which is what the determinism tests lean on.
"""

from __future__ import annotations

import json
import re
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .backends import ChatBackend, ChatParams, EmbeddingProvider, render_prompt
from .concept_bottleneck import (
    Prediction,
    TrainedHead,
    case_concept_vector,
    intervene,
    predict,
)
from .data_model import CaseRecord, Concept, ConceptEmbedding, ConceptSet
from .errors import (
    CxreportError,
    DanglingCitation,
    DimensionMismatch,
    EmptyInput,
    InsufficientConcepts,
    MalformedAction,
    MissingSection,
    NoRetrievalPerformed,
    StageError,
    UnparseableResponse,
    ValueOutOfRange,
)
from .vector_store import RetrievalResult, StoreSnapshot, retrieve

RETRIEVER = "retriever"
RADIOLOGIST = "radiologist"
WRITER = "writer"
AGENT_ORDER = (RETRIEVER, RADIOLOGIST, WRITER)
STEP_KINDS = ("thought", "action", "observation", "output")

_ACTION_RE = re.compile(r'^ACTION:\s*search\("([^"\n]*)"\)\s*$')
_CITATION_RE = re.compile(r"^\[([^\]\s]+)\]\s*(.+)$")
_SECTION_HEADERS = ("FINDINGS:", "CONCEPT ANALYSIS:", "IMPRESSION:", "EVIDENCE:")


@dataclass(frozen=True)
class TraceStep:
    agent: str
    kind: str
    payload: str

    def __post_init__(self) -> None:
        if self.agent not in AGENT_ORDER:
            raise ValueOutOfRange(f"unknown agent {self.agent!r}")
        if self.kind not in STEP_KINDS:
            raise ValueOutOfRange(f"unknown step kind {self.kind!r}")


@dataclass(frozen=True)
class AgentTrace:
    steps: tuple[TraceStep, ...]

    def __post_init__(self) -> None:
        ranks = [AGENT_ORDER.index(s.agent) for s in self.steps]
        if any(b < a for a, b in zip(ranks, ranks[1:])):
            raise ValueOutOfRange("trace steps must follow retriever, radiologist, writer order")
        for i, step in enumerate(self.steps):
            if step.kind == "action":
                nxt = self.steps[i + 1] if i + 1 < len(self.steps) else None
                if nxt is None or nxt.kind != "observation" or nxt.agent != step.agent:
                    raise ValueOutOfRange("every action step needs a following observation")

    def by_agent(self, agent: str) -> list[TraceStep]:
        return [s for s in self.steps if s.agent == agent]


@dataclass(frozen=True)
class InfluenceEntry:
    concept_name: str
    contribution: float
    normalized_contribution: float
    evidence_support: float
    influence: float
    supporting_chunk_ids: tuple[str, ...]


@dataclass(frozen=True)
class InfluenceVector:
    entries: tuple[InfluenceEntry, ...]
    lam: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueOutOfRange(f"lambda {self.lam} outside [0, 1]")
        for e in self.entries:
            for label, value in (("normalized_contribution", e.normalized_contribution),
                                 ("evidence_support", e.evidence_support),
                                 ("influence", e.influence)):
                if not 0.0 <= value <= 1.0:
                    raise ValueOutOfRange(
                        f"{label} {value} outside [0, 1] for {e.concept_name!r}")
            blend = self.lam * e.normalized_contribution + (1 - self.lam) * e.evidence_support
            if abs(e.influence - blend) > 1e-9:
                raise ValueOutOfRange(
                    f"influence for {e.concept_name!r} does not match the blend formula")
        scores = [e.influence for e in self.entries]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise ValueOutOfRange("influence entries must be sorted non-increasing")


@dataclass(frozen=True)
class Citation:
    chunk_id: str
    text: str


@dataclass(frozen=True)
class ReportSections:
    findings: str
    concept_analysis: str
    impression: str
    evidence: tuple[Citation, ...]

    def __post_init__(self) -> None:
        for label, value in (("FINDINGS", self.findings),
                             ("CONCEPT ANALYSIS", self.concept_analysis),
                             ("IMPRESSION", self.impression)):
            if not value.strip():
                raise MissingSection(f"section {label} is empty")
        if not self.evidence:
            raise MissingSection("section EVIDENCE is empty")


@dataclass(frozen=True)
class Report:
    case_id: str
    predicted_class: str
    sections: ReportSections
    influence: InfluenceVector
    trace: AgentTrace


def _render_text(case_id: str, predicted_class: str, sections: ReportSections) -> str:
    lines = [
        f"CASE: {case_id}",
        f"PREDICTED CLASS: {predicted_class}",
        "",
        "FINDINGS:",
        sections.findings,
        "",
        "CONCEPT ANALYSIS:",
        sections.concept_analysis,
        "",
        "IMPRESSION:",
        sections.impression,
        "",
        "EVIDENCE:",
    ]
    lines += [f"[{c.chunk_id}] {c.text}" for c in sections.evidence]
    return "\n".join(lines) + "\n"


def report_to_text(report: Report) -> str:
    return _render_text(report.case_id, report.predicted_class, report.sections)


def report_to_json(report: Report) -> dict:
    return {
        "case_id": report.case_id,
        "predicted_class": report.predicted_class,
        "sections": {
            "findings": report.sections.findings,
            "concept_analysis": report.sections.concept_analysis,
            "impression": report.sections.impression,
            "evidence": [
                {"chunk_id": c.chunk_id, "text": c.text} for c in report.sections.evidence
            ],
        },
        "influence": {
            "lambda": report.influence.lam,
            "entries": [
                {
                    "concept_name": e.concept_name,
                    "contribution": e.contribution,
                    "normalized_contribution": e.normalized_contribution,
                    "evidence_support": e.evidence_support,
                    "influence": e.influence,
                    "supporting_chunk_ids": list(e.supporting_chunk_ids),
                }
                for e in report.influence.entries
            ],
        },
        "trace": [
            {"agent": s.agent, "kind": s.kind, "payload": s.payload}
            for s in report.trace.steps
        ],
    }


# --- concept discovery ---

def discover_concepts(
    disease: str, n: int, backend: ChatBackend, params: ChatParams = ChatParams()
) -> ConceptSet:
    """Ask the backend for n descriptors; strict JSON array, case-insensitive dedup."""
    if n < 1:
        raise ValueOutOfRange(f"need n >= 1, got {n}")
    prompt = render_prompt("concept_questionnaire", {"disease": disease, "n": str(n)})
    reply = backend.complete([{"role": "user", "content": prompt}], params)
    try:
        data = json.loads(reply)
    except json.JSONDecodeError as exc:
        raise UnparseableResponse(f"concept reply is not valid JSON: {exc}") from exc
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise UnparseableResponse("concept reply must be a JSON array of strings")
    names: list[str] = []
    seen: set[str] = set()
    for item in data:
        name = item.strip()
        if not name:
            raise UnparseableResponse("concept reply contains an empty descriptor")
        if name.lower() in seen:
            continue
        seen.add(name.lower())
        names.append(name)
    if len(names) < n:
        raise InsufficientConcepts(
            f"{len(names)} distinct descriptors after dedup, need {n}")
    return ConceptSet(
        disease=disease,
        concepts=tuple(Concept(name=name, text=name) for name in names[:n]),
    )


# --- retrieval agent ---

def _parse_agent_reply(reply: str) -> tuple[list[str], tuple[str, str]]:
    """Split a reply into THOUGHT lines and one ACTION/FINAL directive."""
    thoughts: list[str] = []
    directive: tuple[str, str] | None = None
    for line in reply.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if directive is not None:
            raise MalformedAction(f"content after the directive line: {stripped!r}")
        if stripped.startswith("THOUGHT:"):
            thoughts.append(stripped[len("THOUGHT:"):].strip())
        elif stripped.startswith("FINAL:"):
            directive = ("final", stripped[len("FINAL:"):].strip())
        elif stripped.startswith("ACTION:"):
            match = _ACTION_RE.match(stripped)
            if not match:
                raise MalformedAction(f"tool call does not match search(\"...\"): {stripped!r}")
            directive = ("search", match.group(1))
        else:
            raise MalformedAction(f"unparseable agent line: {stripped!r}")
    if directive is None:
        raise MalformedAction("agent reply contains no ACTION or FINAL directive")
    return thoughts, directive


def _render_hits(result: RetrievalResult) -> str:
    if not result.hits:
        return "no hits"
    return "\n".join(f"[{h.chunk_id}] {h.score:.4f} {h.text}" for h in result.hits)


def react_retrieve(
    disease: str,
    query_text: str,
    snapshot: StoreSnapshot,
    backend: ChatBackend,
    embedder: EmbeddingProvider,
    tau: float = 0.2,
    k: int = 5,
    max_iters: int = 4,
    params: ChatParams = ChatParams(),
) -> tuple[RetrievalResult, list[TraceStep]]:
    """Thought/action/observation loop whose only tool is the store search.

    Returns the best retrieval performed (highest top score, later call wins
    ties) plus the trace fragment. Raises NoRetrievalPerformed if no search
    ever returned a hit.
    """
    if max_iters < 1:
        raise ValueOutOfRange(f"max_iters must be >= 1, got {max_iters}")
    steps: list[TraceStep] = []
    messages = [
        {"role": "system", "content": render_prompt("retriever_system", {"disease": disease})},
        {"role": "user", "content": query_text},
    ]
    performed: list[RetrievalResult] = []
    finished = False
    for _ in range(max_iters):
        reply = backend.complete(messages, params)
        thoughts, (kind, content) = _parse_agent_reply(reply)
        for thought in thoughts:
            steps.append(TraceStep(RETRIEVER, "thought", thought))
        if kind == "final":
            steps.append(TraceStep(RETRIEVER, "output", content))
            finished = True
            break
        steps.append(TraceStep(RETRIEVER, "action", f'search("{content}")'))
        query_vec = embedder.embed([content])[0]
        result = retrieve(snapshot, query_vec, tau=tau, k=k,
                          disease_filter=disease, query_echo=content)
        observation = _render_hits(result)
        steps.append(TraceStep(RETRIEVER, "observation", observation))
        performed.append(result)
        messages.append({"role": "assistant", "content": reply})
        messages.append({"role": "tool", "content": observation})
    if not finished:
        steps.append(TraceStep(
            RETRIEVER, "output", f"truncated after {max_iters} iterations"))

    candidates = [(i, r) for i, r in enumerate(performed) if r.hits]
    if not candidates:
        raise NoRetrievalPerformed(
            f"no search over {disease!r} material returned any chunk")
    best = max(candidates, key=lambda pair: (pair[1].hits[0].score, pair[0]))[1]
    return best, steps


# --- influence scoring ---

def influence_scores(
    prediction: Prediction,
    concept_embeddings: Sequence[ConceptEmbedding],
    retrieval: RetrievalResult,
    snapshot: StoreSnapshot,
    lam: float = 0.5,
    top_m: int = 10,
) -> InfluenceVector:
    """Blend per-concept contribution with best evidence similarity.

    For the predicted class: normalized contribution (min-max over concepts,
    all-equal maps to 0.5) weighted by lam, plus best cosine against the
    retrieved chunk vectors (clamped to [0,1], zero with no hits) weighted by
    1-lam. Entries come back sorted by influence, truncated to top_m.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueOutOfRange(f"lambda {lam} outside [0, 1]")
    if top_m < 1:
        raise ValueOutOfRange(f"top_m must be >= 1, got {top_m}")
    width = prediction.contributions.shape[1]
    if len(concept_embeddings) != width:
        raise DimensionMismatch(
            f"{len(concept_embeddings)} concept embeddings for {width} concepts")

    row = prediction.contributions[int(np.argmax(prediction.logits))]
    lo, hi = float(row.min()), float(row.max())
    if hi == lo:
        c_hat = np.full(width, 0.5)
    else:
        c_hat = (row - lo) / (hi - lo)

    chunks = []
    for hit in retrieval.hits:
        try:
            chunks.append(snapshot.chunk_by_id(hit.chunk_id))
        except KeyError as exc:
            raise DanglingCitation(
                f"retrieved chunk {hit.chunk_id!r} is not in the snapshot") from exc

    entries = []
    for j, concept in enumerate(concept_embeddings):
        cosines: list[tuple[str, float]] = []
        for chunk in chunks:
            if chunk.vector.size != concept.vector.size:
                raise DimensionMismatch(
                    f"concept dim {concept.vector.size} != chunk dim {chunk.vector.size}")
            denom = float(np.linalg.norm(concept.vector) * np.linalg.norm(chunk.vector))
            cosines.append((chunk.chunk_id, float(concept.vector @ chunk.vector) / denom))
        if cosines:
            v_hat = min(1.0, max(0.0, max(c for _, c in cosines)))
        else:
            v_hat = 0.0
        supporting = tuple(cid for cid, c in cosines if abs(c - v_hat) <= 1e-9)
        influence = lam * float(c_hat[j]) + (1 - lam) * v_hat
        entries.append(InfluenceEntry(
            concept_name=concept.concept_name,
            contribution=float(row[j]),
            normalized_contribution=float(c_hat[j]),
            evidence_support=v_hat,
            influence=influence,
            supporting_chunk_ids=supporting,
        ))
    order = sorted(range(len(entries)), key=lambda i: (-entries[i].influence, i))
    ranked = tuple(entries[i] for i in order[:top_m])
    return InfluenceVector(entries=ranked, lam=lam)


def influence_table(influence: InfluenceVector) -> str:
    lines = []
    for e in influence.entries:
        line = (f"- {e.concept_name}: influence={e.influence:.4f} "
                f"(contribution={e.contribution:+.4f}, evidence={e.evidence_support:.4f})")
        if e.supporting_chunk_ids:
            line += f" [chunks: {', '.join(e.supporting_chunk_ids)}]"
        lines.append(line)
    return "\n".join(lines)


def radiologist_summary(case_id: str, predicted_class: str, influence: InfluenceVector) -> str:
    return render_prompt("radiologist_summary", {
        "case_id": case_id,
        "predicted_class": predicted_class,
        "influence_table": influence_table(influence),
    })


# --- report composition ---

def _parse_sections(text: str) -> dict[str, str]:
    positions: list[tuple[int, str]] = []
    lines = text.splitlines()
    for idx, line in enumerate(lines):
        if line.strip() in _SECTION_HEADERS:
            positions.append((idx, line.strip()))
    found = [h for _, h in positions]
    for header in _SECTION_HEADERS:
        if header not in found:
            raise MissingSection(f"report is missing the {header[:-1]} section")
    if found != list(_SECTION_HEADERS) or len(found) != 4:
        raise MissingSection("report sections out of order or repeated")
    bodies: dict[str, str] = {}
    for (start, header), end in zip(positions, [p for p, _ in positions[1:]] + [len(lines)]):
        body = "\n".join(lines[start + 1:end]).strip()
        if not body:
            raise MissingSection(f"section {header[:-1]} is empty")
        bodies[header] = body
    return bodies


def compose_report(
    case_id: str,
    prediction: Prediction,
    influence: InfluenceVector,
    retrieval: RetrievalResult,
    backend: ChatBackend,
    params: ChatParams = ChatParams(),
    trace_prefix: Sequence[TraceStep] = (),
) -> Report:
    """One writer call; the response is parsed into the four report sections.

    Every citation in the EVIDENCE section must name a retrieved chunk.
    """
    if not influence.entries:
        raise EmptyInput("influence vector is empty")
    evidence_block = "\n".join(f"[{h.chunk_id}] {h.text}" for h in retrieval.hits)
    prompt = render_prompt("writer_template", {
        "case_id": case_id,
        "predicted_class": prediction.predicted_class,
        "radiologist_summary": radiologist_summary(
            case_id, prediction.predicted_class, influence),
        "evidence": evidence_block if evidence_block else "(none)",
    })
    reply = backend.complete([{"role": "user", "content": prompt}], params)
    bodies = _parse_sections(reply)

    known_ids = {h.chunk_id for h in retrieval.hits}
    citations = []
    for line in bodies["EVIDENCE:"].splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        match = _CITATION_RE.match(stripped)
        if not match:
            raise UnparseableResponse(f"evidence line is not [chunk_id] text: {stripped!r}")
        chunk_id, cited = match.group(1), match.group(2).strip()
        if chunk_id not in known_ids:
            raise DanglingCitation(f"citation {chunk_id!r} not among retrieved chunks")
        citations.append(Citation(chunk_id=chunk_id, text=cited))

    sections = ReportSections(
        findings=bodies["FINDINGS:"],
        concept_analysis=bodies["CONCEPT ANALYSIS:"],
        impression=bodies["IMPRESSION:"],
        evidence=tuple(citations),
    )
    steps = tuple(trace_prefix) + (
        TraceStep(WRITER, "action", "generate_report"),
        TraceStep(WRITER, "observation", reply),
        TraceStep(WRITER, "output",
                  _render_text(case_id, prediction.predicted_class, sections)),
    )
    return Report(
        case_id=case_id,
        predicted_class=prediction.predicted_class,
        sections=sections,
        influence=influence,
        trace=AgentTrace(steps=steps),
    )


# --- full pipeline ---

@dataclass(frozen=True)
class PipelineBackends:
    retriever_chat: ChatBackend
    writer_chat: ChatBackend
    embedder: EmbeddingProvider


@dataclass(frozen=True)
class PipelineConfig:
    tau: float = 0.2
    k: int = 5
    lam: float = 0.5
    top_m: int = 10
    max_iters: int = 4
    query_concepts: int = 5
    chat_params: ChatParams = ChatParams()


@contextmanager
def _stage(name: str) -> Iterator[None]:
    try:
        yield
    except StageError:
        raise
    except CxreportError as exc:
        raise StageError(name, exc) from exc


def build_query(prediction: Prediction, head: TrainedHead, n_concepts: int) -> str:
    row = prediction.contributions[int(np.argmax(prediction.logits))]
    top = np.argsort(-row, kind="stable")[:n_concepts]
    return prediction.predicted_class + ": " + ", ".join(head.concepts[i] for i in top)


def pipeline_run(
    case: CaseRecord,
    head: TrainedHead,
    concept_embeddings: Sequence[ConceptEmbedding],
    snapshot: StoreSnapshot,
    backends: PipelineBackends,
    config: PipelineConfig = PipelineConfig(),
    base_dir: str | Path = ".",
    edits: Sequence[tuple[int, float]] = (),
) -> Report:
    """classify -> retrieve -> score influence -> write, with stage-tagged errors.

    Optional edits are what-if concept overrides applied before prediction,
    so an intervened case flows through retrieval and writing unchanged.
    """
    with _stage("classifier"):
        vector = case_concept_vector(case, concept_embeddings, head.norm_stats, base_dir)
        prediction = intervene(vector, edits, head) if edits else predict(vector, head)

    query_text = build_query(prediction, head, config.query_concepts)
    with _stage(RETRIEVER):
        retrieval, retriever_steps = react_retrieve(
            disease=prediction.predicted_class,
            query_text=query_text,
            snapshot=snapshot,
            backend=backends.retriever_chat,
            embedder=backends.embedder,
            tau=config.tau,
            k=config.k,
            max_iters=config.max_iters,
            params=config.chat_params,
        )

    with _stage(RADIOLOGIST):
        influence = influence_scores(
            prediction, concept_embeddings, retrieval, snapshot,
            lam=config.lam, top_m=config.top_m)
        summary = radiologist_summary(case.case_id, prediction.predicted_class, influence)
        radiologist_steps = (TraceStep(RADIOLOGIST, "output", summary),)

    with _stage(WRITER):
        return compose_report(
            case.case_id, prediction, influence, retrieval,
            backends.writer_chat, params=config.chat_params,
            trace_prefix=tuple(retriever_steps) + radiologist_steps,
        )
