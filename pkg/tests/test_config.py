import json

import pytest

from fixture_env import build_demo_env

from cxreport.backends import (
    HttpChatBackend,
    KeyedScriptedBackend,
    MockEmbeddingProvider,
    ScriptedChatBackend,
)
from cxreport.config import (
    AppConfig,
    BackendSpec,
    load_config,
    build_chat_backend,
    build_embedding_provider,
    resolve_judges,
    resolve_pipeline_backends,
)
from cxreport.errors import ConfigError

MINIMAL_TOML = """
deterministic_mode = true

[paths]
dataset = "dataset.json"
model = "model.json"
store = "store.json"
concept_embeddings = "concepts.jsonl"

[server]
host = "0.0.0.0"
port = 9001
cors_origins = ["http://localhost:5173"]

[pipeline]
tau = 0.1
k = 3
lambda = 0.25
top_m = 6
max_iters = 2
query_concepts = 4
retriever = "chat"
writer = "chat"
embedder = "embed"
judges = ["chat"]

[train]
learning_rate = 0.5
epochs = 50
l2 = 0.01
seed = 3
use_bias = false

[[backends]]
name = "chat"
kind = "scripted"
replies = ["FINAL: done"]

[[backends]]
name = "embed"
kind = "mock-embed"
dim = 16
"""


def _write_toml(tmp_path, body=MINIMAL_TOML, name="config.toml"):
    path = tmp_path / name
    path.write_text(body, "utf-8")
    return path


def test_toml_round_trip(tmp_path):
    config = load_config(_write_toml(tmp_path))
    assert config.base_dir == tmp_path.resolve()
    assert config.paths.model == "model.json"
    assert config.server.port == 9001
    assert config.server.cors_origins == ("http://localhost:5173",)
    assert config.pipeline.tau == 0.1
    assert config.pipeline.lam == 0.25
    assert config.train.epochs == 50
    assert config.train.use_bias is False
    assert config.judges == ("chat",)
    assert config.deterministic_mode is True


def test_json_config_from_fixture_env(tmp_path):
    env = build_demo_env(tmp_path / "env", n_cases=6)
    config = load_config(env["config"])
    assert config.retriever == "demo-retriever"
    assert config.pipeline.k == 5
    assert {spec.kind for spec in config.backends} == {"scripted", "mock-embed"}


def test_defaults_fill_missing_keys(tmp_path):
    body = MINIMAL_TOML.replace('tau = 0.1\n', "").replace("[train]", "[unused]")
    config = load_config(_write_toml(tmp_path, body))
    assert config.pipeline.tau == 0.2
    assert config.train.learning_rate == 1.0


def test_unknown_backend_kind(tmp_path):
    body = MINIMAL_TOML.replace('kind = "mock-embed"', 'kind = "quantum"')
    with pytest.raises(ConfigError):
        load_config(_write_toml(tmp_path, body))


def test_duplicate_backend_name(tmp_path):
    body = MINIMAL_TOML.replace('name = "embed"', 'name = "chat"')
    with pytest.raises(ConfigError):
        load_config(_write_toml(tmp_path, body))


def test_undefined_role_reference(tmp_path):
    body = MINIMAL_TOML.replace('writer = "chat"', 'writer = "ghost"')
    with pytest.raises(ConfigError):
        load_config(_write_toml(tmp_path, body))


def test_role_kind_mismatch(tmp_path):
    body = MINIMAL_TOML.replace('embedder = "embed"', 'embedder = "chat"')
    with pytest.raises(ConfigError):
        load_config(_write_toml(tmp_path, body))


def test_deterministic_mode_rejects_http_backends(tmp_path):
    body = MINIMAL_TOML.replace(
        'kind = "scripted"\nreplies = ["FINAL: done"]',
        'kind = "http-chat"\nbase_url = "http://example.invalid"\nmodel = "m"')
    with pytest.raises(ConfigError, match="deterministic_mode"):
        load_config(_write_toml(tmp_path, body))


def test_http_backends_allowed_when_not_deterministic(tmp_path):
    body = MINIMAL_TOML.replace("deterministic_mode = true",
                                "deterministic_mode = false")
    body = body.replace(
        'kind = "scripted"\nreplies = ["FINAL: done"]',
        'kind = "http-chat"\nbase_url = "http://example.invalid"\nmodel = "m"')
    config = load_config(_write_toml(tmp_path, body))
    backend = build_chat_backend(config.backend_spec("chat"), config.base_dir)
    assert isinstance(backend, HttpChatBackend)


def test_inline_credentials_rejected():
    with pytest.raises(ConfigError, match="api_key_env"):
        BackendSpec(name="b", kind="http-chat",
                    params={"base_url": "x", "model": "m", "api_key": "sk-123"})


@pytest.mark.parametrize("needle, bad", [
    ("tau = 0.1", "tau = 1.5"),
    ("k = 3", "k = 0"),
    ("lambda = 0.25", "lambda = 2.0"),
    ("top_m = 6", "top_m = 0"),
    ("max_iters = 2", "max_iters = 0"),
    ("learning_rate = 0.5", "learning_rate = 0.0"),
    ("epochs = 50", "epochs = 0"),
    ("l2 = 0.01", "l2 = -1.0"),
])
def test_numeric_range_validation(tmp_path, needle, bad):
    with pytest.raises(ConfigError):
        load_config(_write_toml(tmp_path, MINIMAL_TOML.replace(needle, bad)))


def test_missing_paths_key(tmp_path):
    body = MINIMAL_TOML.replace('model = "model.json"\n', "")
    with pytest.raises(ConfigError, match="model"):
        load_config(_write_toml(tmp_path, body))


def test_unsupported_extension(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("a: 1", "utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_invalid_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write_toml(tmp_path, "this is = not [ toml"))


def test_scripted_backend_from_replies_file(tmp_path):
    replies_path = tmp_path / "replies.json"
    replies_path.write_text(json.dumps(["one", "two"]), "utf-8")
    spec = BackendSpec(name="s", kind="scripted",
                       params={"replies_file": "replies.json"})
    backend = build_chat_backend(spec, tmp_path)
    assert isinstance(backend, ScriptedChatBackend)
    assert backend.complete([{"role": "user", "content": "hi"}]) == "one"


def test_scripted_backend_needs_some_replies(tmp_path):
    with pytest.raises(ConfigError):
        build_chat_backend(BackendSpec(name="s", kind="scripted"), tmp_path)


def test_keyed_replies_shape_validated(tmp_path):
    spec = BackendSpec(name="s", kind="scripted",
                       params={"keyed_replies": [["only-one-element"]]})
    with pytest.raises(ConfigError):
        build_chat_backend(spec, tmp_path)


def test_keyed_backend_built(tmp_path):
    spec = BackendSpec(name="s", kind="scripted",
                       params={"keyed_replies": [["alpha", "A"], ["beta", "B"]],
                               "default": "D"})
    backend = build_chat_backend(spec, tmp_path)
    assert isinstance(backend, KeyedScriptedBackend)
    assert backend.complete([{"role": "user", "content": "the beta case"}]) == "B"
    assert backend.complete([{"role": "user", "content": "nothing"}]) == "D"


def test_mock_embedder_dim(tmp_path):
    provider = build_embedding_provider(
        BackendSpec(name="e", kind="mock-embed", params={"dim": 8}))
    assert isinstance(provider, MockEmbeddingProvider)
    assert provider.embed(["x"])[0].shape == (8,)


def test_resolvers_build_working_backends(tmp_path):
    config = load_config(_write_toml(tmp_path))
    backends = resolve_pipeline_backends(config)
    assert backends.retriever_chat.complete(
        [{"role": "user", "content": "q"}]) == "FINAL: done"
    assert backends.embedder.embed(["q"])[0].shape == (16,)
    judges = resolve_judges(config)
    assert [j.name for j in judges] == ["chat"]
