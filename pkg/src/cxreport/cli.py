"""Command-line entry point.

Every subcommand reads and writes the documented file formats and prints one
JSON object (or, for `report`, the canonical report text) to stdout. Typed
domain errors exit 1 with a one-line diagnostic on stderr; usage errors exit
2 via argparse.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .agent_pipeline import pipeline_run, report_to_json, report_to_text
from .backends import MockEmbeddingProvider
from .concept_bottleneck import (
    TrainConfig,
    compute_concept_vectors,
    fit_pipeline,
    load_head,
    predict,
    ablation_run,
    correction_run,
    save_head,
)
from .config import build_embedding_provider, load_config
from .data_model import (
    SynthSpec,
    load_concept_embeddings,
    load_dataset,
    load_documents,
    save_concept_embeddings,
    save_dataset,
    synth_dataset,
)
from .errors import CxreportError, UnknownCase
from .evaluation import aggregate_judges, cluster_metrics, judge_report, load_labeled_points
from .serialize import dumps
from .vector_store import Chunk, StoreSnapshot, chunk_documents, ingest, save_store

_STRATEGY_ALIASES = {
    "max": "max_contribution",
    "min": "min_contribution",
    "random": "random",
}


def _emit(obj: object) -> None:
    sys.stdout.write(dumps(obj) + "\n")


def _parse_k_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _parse_edits(text: str) -> list[tuple[int, float]]:
    edits = []
    for part in text.split(","):
        if part == "":
            continue
        try:
            index, value = part.split("=", 1)
            edits.append((int(index), float(value)))
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"expected index=value pairs like 3=0.5, got {part!r}")
    return edits


def _load_problem(args: argparse.Namespace):
    dataset = load_dataset(args.data)
    embeddings = load_concept_embeddings(args.concepts)
    head = load_head(args.model)
    vectors = compute_concept_vectors(dataset, embeddings, head.norm_stats,
                                      Path(args.data).parent)
    return dataset, head, vectors


def _split_accuracy(dataset, head, vectors, split: str) -> tuple[int, int]:
    cases = [c for c in dataset.cases
             if dataset.split[c.case_id] == split and c.label is not None]
    correct = sum(
        int(predict(vectors[c.case_id], head).predicted_class == c.label)
        for c in cases)
    return correct, len(cases)


# --- subcommand handlers ---

def _cmd_synth_data(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        n_classes=args.classes, n_concepts=args.concepts, n_cases=args.cases,
        rows=args.rows, dim=args.dim, noise_level=args.noise, seed=args.seed,
        train_fraction=args.train_fraction,
    )
    dataset, embeddings = synth_dataset(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset_path = out_dir / "dataset.json"
    embeddings_path = out_dir / "concept_embeddings.jsonl"
    save_dataset(dataset, dataset_path)
    save_concept_embeddings(embeddings, embeddings_path)
    _emit({
        "dataset": str(dataset_path),
        "concept_embeddings": str(embeddings_path),
        "cases": len(dataset.cases),
        "classes": list(dataset.classes),
        "concepts": len(dataset.concept_union),
    })
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data)
    embeddings = load_concept_embeddings(args.concepts)
    config = TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, l2=args.l2,
        seed=args.seed, use_bias=not args.no_bias,
    )
    head, vectors = fit_pipeline(dataset, embeddings, config, Path(args.data).parent)
    save_head(head, args.out)
    train_right, train_n = _split_accuracy(dataset, head, vectors, "train")
    test_right, test_n = _split_accuracy(dataset, head, vectors, "test")
    _emit({
        "model": str(args.out),
        "train_accuracy": train_right / train_n if train_n else None,
        "test_accuracy": test_right / test_n if test_n else None,
    })
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    dataset, head, vectors = _load_problem(args)
    if args.case_id is not None:
        try:
            case = dataset.case_by_id(args.case_id)
        except KeyError:
            raise UnknownCase(f"no case with id {args.case_id!r}") from None
        pred = predict(vectors[case.case_id], head)
        _emit({
            "case_id": case.case_id,
            "label": case.label,
            "predicted_class": pred.predicted_class,
            "logits": [float(x) for x in pred.logits],
            "concept_values": [float(x) for x in pred.concept_values],
        })
        return 0
    right, n = _split_accuracy(dataset, head, vectors, args.split)
    _emit({"split": args.split, "n": n, "accuracy": right / n if n else None})
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    dataset, head, vectors = _load_problem(args)
    curve = ablation_run(dataset, head, vectors,
                         _STRATEGY_ALIASES[args.strategy], args.k, seed=args.seed)
    _emit({"strategy": args.strategy, "seed": args.seed, "curve": curve})
    return 0


def _cmd_correct(args: argparse.Namespace) -> int:
    dataset, head, vectors = _load_problem(args)
    curve = correction_run(dataset, head, vectors, args.k)
    _emit({"curve": curve})
    return 0


def _cmd_ingest_docs(args: argparse.Namespace) -> int:
    docs = load_documents(args.docs)
    if args.config is not None and args.embedder is not None:
        config = load_config(args.config)
        embedder = build_embedding_provider(config.backend_spec(args.embedder))
    else:
        embedder = MockEmbeddingProvider(dim=args.dim)
    pieces = chunk_documents(docs, max_chars=args.max_chars, overlap_chars=args.overlap)
    vectors = embedder.embed([text for text, _ in pieces])
    chunks = [
        Chunk(chunk_id=f"{prov.doc_id}:{prov.index:04d}", doc_id=prov.doc_id,
              disease=prov.disease, text=text, vector=vec)
        for (text, prov), vec in zip(pieces, vectors)
    ]
    snapshot = ingest(StoreSnapshot(), chunks)
    save_store(snapshot, args.out)
    _emit({"store": str(args.out), "documents": len(docs), "chunks": len(chunks)})
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    from .service import load_state  # heavyweight import kept off the common path

    config = load_config(args.config)
    state = load_state(config)
    try:
        case = state.dataset.case_by_id(args.case_id)
    except KeyError:
        raise UnknownCase(f"no case with id {args.case_id!r}") from None
    result = pipeline_run(
        case, state.head, state.concept_embeddings, state.snapshot,
        state.backends, config.pipeline, base_dir=config.base_dir,
        edits=args.edits or [],
    )
    if args.json:
        _emit(report_to_json(result))
    else:
        sys.stdout.write(report_to_text(result))
    return 0


def _cmd_eval_clustering(args: argparse.Namespace) -> int:
    lp = load_labeled_points(args.points)
    metrics = cluster_metrics(lp, on_projection=args.on_projection)
    _emit({
        "silhouette": metrics.silhouette,
        "davies_bouldin": metrics.davies_bouldin,
        "calinski_harabasz": metrics.calinski_harabasz,
        "dunn": metrics.dunn,
        "n_points": int(lp.points.shape[0]),
    })
    return 0


def _cmd_eval_judge(args: argparse.Namespace) -> int:
    from .config import resolve_judges

    config = load_config(args.config)
    candidate = Path(args.candidate).read_text("utf-8")
    reference = Path(args.reference).read_text("utf-8")
    scores = [
        judge_report(candidate, reference, judge, config.pipeline.chat_params)
        for judge in resolve_judges(config)
    ]
    aggregate = aggregate_judges(scores)
    _emit({
        "judges": [{"judge_name": s.judge_name, **s.as_dict()} for s in scores],
        "aggregate": {"judge_name": aggregate.judge_name, **aggregate.as_dict()},
    })
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    app = create_app(config)
    host = args.host if args.host is not None else config.server.host
    port = args.port if args.port is not None else config.server.port
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


# --- parser ---

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cxreport",
        description="Concept-bottleneck classification, retrieval, reports, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a planted-signal synthetic dataset")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--concepts", type=int, default=20)
    p.add_argument("--cases", type=int, default=600)
    p.add_argument("--rows", type=int, default=16)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth_data)

    p = sub.add_parser("train", help="train the linear head on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--concepts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=TrainConfig().learning_rate)
    p.add_argument("--epochs", type=int, default=TrainConfig().epochs)
    p.add_argument("--l2", type=float, default=TrainConfig().l2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-bias", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="classify one case or score a split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--concepts", required=True)
    p.add_argument("--case-id")
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("ablate", help="zero top concepts per case and re-score")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--concepts", required=True)
    p.add_argument("--strategy", choices=sorted(_STRATEGY_ALIASES), required=True)
    p.add_argument("--k", type=_parse_k_list, required=True,
                   help="comma-separated removal counts, e.g. 0,1,2,4,8")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("correct", help="overwrite top concepts of misclassified cases "
                                       "with oracle values and re-score")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--concepts", required=True)
    p.add_argument("--k", type=_parse_k_list, required=True)
    p.set_defaults(func=_cmd_correct)

    p = sub.add_parser("ingest-docs", help="chunk, embed, and store documents")
    p.add_argument("--docs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-chars", type=int, default=280)
    p.add_argument("--overlap", type=int, default=40)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--config", help="config file defining HTTP embedders")
    p.add_argument("--embedder", help="named embedder backend from --config")
    p.set_defaults(func=_cmd_ingest_docs)

    p = sub.add_parser("report", help="run the full report pipeline for a case")
    p.add_argument("--config", required=True)
    p.add_argument("--case-id", required=True)
    p.add_argument("--edits", type=_parse_edits,
                   help="concept overrides, e.g. 3=0.0,7=1.0")
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("eval-clustering", help="clustering validity indices over labeled points")
    p.add_argument("--points", required=True, help="JSONL of {id, label, vector}")
    p.add_argument("--on-projection", action="store_true")
    p.set_defaults(func=_cmd_eval_clustering)

    p = sub.add_parser("eval-judge", help="score a candidate report against a reference")
    p.add_argument("--config", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--reference", required=True)
    p.set_defaults(func=_cmd_eval_judge)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CxreportError as exc:
        print(f"{exc.error_code}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
