"""Application configuration: parsing, validation, and backend construction.

A config file (TOML or JSON, chosen by extension) names the data artifacts,
declares chat/embedding backends, assigns them to pipeline roles, and fixes
the pipeline and training hyperparameters. Credentials never appear in the
file; HTTP backends name an environment variable instead. Deterministic mode
restricts every referenced backend to the offline kinds so whole-service
behavior is a pure function of config, fixtures, and request sequence.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agent_pipeline import PipelineBackends, PipelineConfig
from .backends import (
    ChatBackend,
    ChatParams,
    EmbeddingProvider,
    HttpChatBackend,
    HttpEmbeddingProvider,
    KeyedScriptedBackend,
    MockEmbeddingProvider,
    ScriptedChatBackend,
)
from .concept_bottleneck import TrainConfig
from .errors import ConfigError, IoError

SCRIPTED = "scripted"
HTTP_CHAT = "http-chat"
MOCK_EMBED = "mock-embed"
HTTP_EMBED = "http-embed"
BACKEND_KINDS = (SCRIPTED, HTTP_CHAT, MOCK_EMBED, HTTP_EMBED)
CHAT_KINDS = (SCRIPTED, HTTP_CHAT)
EMBED_KINDS = (MOCK_EMBED, HTTP_EMBED)
OFFLINE_KINDS = (SCRIPTED, MOCK_EMBED)


@dataclass(frozen=True)
class BackendSpec:
    name: str
    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(
                f"backend {self.name!r}: unknown kind {self.kind!r}; "
                f"expected one of {BACKEND_KINDS}")
        if "api_key" in self.params:
            raise ConfigError(
                f"backend {self.name!r}: inline credentials are not allowed; "
                "use api_key_env to name an environment variable")


@dataclass(frozen=True)
class PathsConfig:
    dataset: str
    model: str
    store: str
    concept_embeddings: str


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    cors_origins: tuple[str, ...] = ("*",)


@dataclass(frozen=True)
class AppConfig:
    base_dir: Path
    paths: PathsConfig
    backends: tuple[BackendSpec, ...]
    retriever: str
    writer: str
    embedder: str
    judges: tuple[str, ...]
    pipeline: PipelineConfig
    train: TrainConfig
    server: ServerConfig
    deterministic_mode: bool = True

    def __post_init__(self) -> None:
        by_name: dict[str, BackendSpec] = {}
        for spec in self.backends:
            if spec.name in by_name:
                raise ConfigError(f"duplicate backend name {spec.name!r}")
            by_name[spec.name] = spec
        for role, name, kinds in (
            ("retriever", self.retriever, CHAT_KINDS),
            ("writer", self.writer, CHAT_KINDS),
            ("embedder", self.embedder, EMBED_KINDS),
            *(("judges", j, CHAT_KINDS) for j in self.judges),
        ):
            if name not in by_name:
                raise ConfigError(f"{role} references undefined backend {name!r}")
            spec = by_name[name]
            if spec.kind not in kinds:
                raise ConfigError(
                    f"{role} backend {name!r} has kind {spec.kind!r}; "
                    f"expected one of {kinds}")
            if self.deterministic_mode and spec.kind not in OFFLINE_KINDS:
                raise ConfigError(
                    f"deterministic_mode forbids kind {spec.kind!r} "
                    f"(backend {name!r})")
        _check_ranges(self.pipeline, self.train)

    def backend_spec(self, name: str) -> BackendSpec:
        for spec in self.backends:
            if spec.name == name:
                return spec
        raise ConfigError(f"undefined backend {name!r}")

    def resolve(self, relative: str) -> Path:
        return (self.base_dir / relative).resolve()


def _check_ranges(pipeline: PipelineConfig, train: TrainConfig) -> None:
    if not -1.0 <= pipeline.tau <= 1.0:
        raise ConfigError(f"tau must be in [-1, 1], got {pipeline.tau}")
    if pipeline.k < 1:
        raise ConfigError(f"k must be >= 1, got {pipeline.k}")
    if not 0.0 <= pipeline.lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {pipeline.lam}")
    if pipeline.top_m < 1:
        raise ConfigError(f"top_m must be >= 1, got {pipeline.top_m}")
    if pipeline.max_iters < 1:
        raise ConfigError(f"max_iters must be >= 1, got {pipeline.max_iters}")
    if pipeline.query_concepts < 1:
        raise ConfigError(f"query_concepts must be >= 1, got {pipeline.query_concepts}")
    if train.learning_rate <= 0.0:
        raise ConfigError(f"learning_rate must be > 0, got {train.learning_rate}")
    if train.epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {train.epochs}")
    if train.l2 < 0.0:
        raise ConfigError(f"l2 must be >= 0, got {train.l2}")


# --- file parsing ---

def _read_raw(path: Path) -> dict:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".toml":
        try:
            return tomllib.loads(data.decode("utf-8"))
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    if path.suffix == ".json":
        try:
            raw = json.loads(data)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return raw
    raise ConfigError(f"{path}: config must be a .toml or .json file")


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {key!r} must be a table/object")
    return value


def _str_field(table: dict, key: str, where: str) -> str:
    if key not in table:
        raise ConfigError(f"{where}: missing required key {key!r}")
    value = table[key]
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{where}: key {key!r} must be a nonempty string")
    return value


def load_config(path: str | Path) -> AppConfig:
    path = Path(path)
    raw = _read_raw(path)

    paths_raw = _section(raw, "paths")
    paths = PathsConfig(
        dataset=_str_field(paths_raw, "dataset", "[paths]"),
        model=_str_field(paths_raw, "model", "[paths]"),
        store=_str_field(paths_raw, "store", "[paths]"),
        concept_embeddings=_str_field(paths_raw, "concept_embeddings", "[paths]"),
    )

    backends_raw = raw.get("backends", [])
    if not isinstance(backends_raw, list):
        raise ConfigError("config key 'backends' must be a list of tables")
    backends = []
    for entry in backends_raw:
        if not isinstance(entry, dict):
            raise ConfigError("each backends entry must be a table/object")
        name = _str_field(entry, "name", "[[backends]]")
        kind = _str_field(entry, "kind", f"backend {name!r}")
        params = {k: v for k, v in entry.items() if k not in ("name", "kind")}
        backends.append(BackendSpec(name=name, kind=kind, params=params))

    pipe_raw = _section(raw, "pipeline")
    defaults = PipelineConfig()
    pipeline = PipelineConfig(
        tau=float(pipe_raw.get("tau", defaults.tau)),
        k=int(pipe_raw.get("k", defaults.k)),
        lam=float(pipe_raw.get("lambda", defaults.lam)),
        top_m=int(pipe_raw.get("top_m", defaults.top_m)),
        max_iters=int(pipe_raw.get("max_iters", defaults.max_iters)),
        query_concepts=int(pipe_raw.get("query_concepts", defaults.query_concepts)),
        chat_params=ChatParams(
            temperature=float(pipe_raw.get("temperature", 0.0)),
            max_tokens=int(pipe_raw.get("max_tokens", 1024)),
            seed=int(pipe_raw.get("seed", 0)),
        ),
    )

    train_raw = _section(raw, "train")
    train_defaults = TrainConfig()
    train = TrainConfig(
        learning_rate=float(train_raw.get("learning_rate", train_defaults.learning_rate)),
        epochs=int(train_raw.get("epochs", train_defaults.epochs)),
        l2=float(train_raw.get("l2", train_defaults.l2)),
        seed=int(train_raw.get("seed", train_defaults.seed)),
        use_bias=bool(train_raw.get("use_bias", train_defaults.use_bias)),
    )

    server_raw = _section(raw, "server")
    origins = server_raw.get("cors_origins", ["*"])
    if not isinstance(origins, list) or not all(isinstance(o, str) for o in origins):
        raise ConfigError("[server]: cors_origins must be a list of strings")
    server = ServerConfig(
        host=str(server_raw.get("host", "127.0.0.1")),
        port=int(server_raw.get("port", 8000)),
        cors_origins=tuple(origins),
    )

    return AppConfig(
        base_dir=path.parent.resolve(),
        paths=paths,
        backends=tuple(backends),
        retriever=_str_field(pipe_raw, "retriever", "[pipeline]"),
        writer=_str_field(pipe_raw, "writer", "[pipeline]"),
        embedder=_str_field(pipe_raw, "embedder", "[pipeline]"),
        judges=tuple(pipe_raw.get("judges", [])),
        pipeline=pipeline,
        train=train,
        server=server,
        deterministic_mode=bool(raw.get("deterministic_mode", True)),
    )


# --- backend construction ---

def _scripted_replies(spec: BackendSpec, base_dir: Path) -> tuple[str, ...] | None:
    if "replies" in spec.params:
        replies = spec.params["replies"]
        if not isinstance(replies, list) or not all(isinstance(r, str) for r in replies):
            raise ConfigError(f"backend {spec.name!r}: replies must be a list of strings")
        return tuple(replies)
    if "replies_file" in spec.params:
        path = (base_dir / str(spec.params["replies_file"])).resolve()
        try:
            replies = json.loads(path.read_text("utf-8"))
        except OSError as exc:
            raise IoError(f"backend {spec.name!r}: cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"backend {spec.name!r}: {path} is not JSON") from exc
        if not isinstance(replies, list) or not all(isinstance(r, str) for r in replies):
            raise ConfigError(f"backend {spec.name!r}: {path} must hold a JSON list of strings")
        return tuple(replies)
    return None


def build_chat_backend(spec: BackendSpec, base_dir: Path) -> ChatBackend:
    if spec.kind == SCRIPTED:
        keyed = spec.params.get("keyed_replies")
        if keyed is not None:
            if (not isinstance(keyed, list)
                    or not all(isinstance(r, list) and len(r) == 2
                               and all(isinstance(s, str) for s in r) for r in keyed)):
                raise ConfigError(
                    f"backend {spec.name!r}: keyed_replies must be a list of "
                    "[pattern, reply] string pairs")
            default = spec.params.get("default")
            if default is not None and not isinstance(default, str):
                raise ConfigError(f"backend {spec.name!r}: default must be a string")
            return KeyedScriptedBackend(
                rules=tuple((p, r) for p, r in keyed), default=default, name=spec.name)
        replies = _scripted_replies(spec, base_dir)
        if replies is None:
            raise ConfigError(
                f"backend {spec.name!r}: scripted kind needs replies, "
                "replies_file, or keyed_replies")
        return ScriptedChatBackend(replies=replies, name=spec.name)
    if spec.kind == HTTP_CHAT:
        return HttpChatBackend(
            base_url=_str_field(dict(spec.params), "base_url", f"backend {spec.name!r}"),
            model=_str_field(dict(spec.params), "model", f"backend {spec.name!r}"),
            api_key_env=spec.params.get("api_key_env"),
            timeout=float(spec.params.get("timeout", 30.0)),
            max_retries=int(spec.params.get("max_retries", 2)),
            name=spec.name,
        )
    raise ConfigError(f"backend {spec.name!r}: kind {spec.kind!r} is not a chat backend")


def build_embedding_provider(spec: BackendSpec) -> EmbeddingProvider:
    if spec.kind == MOCK_EMBED:
        dim = int(spec.params.get("dim", 32))
        if dim < 1:
            raise ConfigError(f"backend {spec.name!r}: dim must be >= 1")
        return MockEmbeddingProvider(dim=dim, name=spec.name)
    if spec.kind == HTTP_EMBED:
        return HttpEmbeddingProvider(
            base_url=_str_field(dict(spec.params), "base_url", f"backend {spec.name!r}"),
            model=_str_field(dict(spec.params), "model", f"backend {spec.name!r}"),
            api_key_env=spec.params.get("api_key_env"),
            timeout=float(spec.params.get("timeout", 30.0)),
            max_retries=int(spec.params.get("max_retries", 2)),
            name=spec.name,
        )
    raise ConfigError(f"backend {spec.name!r}: kind {spec.kind!r} is not an embedder")


def resolve_pipeline_backends(config: AppConfig) -> PipelineBackends:
    return PipelineBackends(
        retriever_chat=build_chat_backend(config.backend_spec(config.retriever),
                                          config.base_dir),
        writer_chat=build_chat_backend(config.backend_spec(config.writer),
                                       config.base_dir),
        embedder=build_embedding_provider(config.backend_spec(config.embedder)),
    )


def resolve_judges(config: AppConfig) -> list[ChatBackend]:
    return [build_chat_backend(config.backend_spec(name), config.base_dir)
            for name in config.judges]
