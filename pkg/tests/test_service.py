import json
from pathlib import Path

import jsonschema
import pytest
from fastapi.testclient import TestClient

import cxreport
from fixture_env import JUDGE_ONE_SCORES, build_demo_env, build_identity_env

from cxreport.concept_bottleneck import predict
from cxreport.config import load_config
from cxreport.service import create_app

_SCHEMA_DIR = Path(cxreport.__file__).parent / "schemas"


def _check_schema(payload: dict, schema_name: str) -> None:
    schema = json.loads((_SCHEMA_DIR / f"{schema_name}.json").read_text("utf-8"))
    jsonschema.validate(payload, schema)


@pytest.fixture(scope="session")
def demo_env(tmp_path_factory):
    return build_demo_env(tmp_path_factory.mktemp("demo"))


@pytest.fixture(scope="session")
def client(demo_env):
    return TestClient(create_app(load_config(demo_env["config"])))


@pytest.fixture(scope="session")
def ident_client(tmp_path_factory):
    env = build_identity_env(tmp_path_factory.mktemp("ident"))
    return TestClient(create_app(load_config(env["config"])))


# --- case and model endpoints ---

def test_list_cases(client, demo_env):
    body = client.get("/api/cases").json()
    _check_schema(body, "cases_list")
    assert len(body["cases"]) == len(demo_env["dataset"].cases)
    assert body["cases"][0]["case_id"] == demo_env["dataset"].cases[0].case_id


def test_case_detail(client, demo_env):
    case_id = demo_env["dataset"].cases[0].case_id
    body = client.get(f"/api/cases/{case_id}").json()
    _check_schema(body, "case_detail")
    assert len(body["concepts"]) == len(demo_env["head"].concepts)
    assert len(body["concept_values"]) == len(body["concepts"])


def test_case_detail_unknown_is_404(client):
    response = client.get("/api/cases/no_such_case")
    assert response.status_code == 404
    body = response.json()
    _check_schema(body, "error")
    assert body["error_code"] == "UnknownCase"


def test_model_info(client, demo_env):
    body = client.get("/api/model").json()
    _check_schema(body, "model_info")
    head = demo_env["head"]
    assert body["classes"] == list(head.classes)
    assert body["weights"]["shape"] == [len(head.classes), len(head.concepts)]
    assert body["deterministic_mode"] is True


# --- classification and intervention ---

def test_classify_matches_library(client, demo_env):
    case = demo_env["dataset"].cases[0]
    response = client.post("/api/classify", json={"case_id": case.case_id})
    assert response.status_code == 200
    body = response.json()
    _check_schema(body, "prediction")
    expected = predict(demo_env["vectors"][case.case_id], demo_env["head"])
    assert body["predicted_class"] == expected.predicted_class
    assert body["logits"] == pytest.approx(list(expected.logits))
    assert body["edits"] == []


def test_intervene_echoes_edits(client, demo_env):
    case_id = demo_env["dataset"].cases[0].case_id
    edits = [{"index": 2, "value": 0.25}, {"index": 5, "value": 1.0}]
    body = client.post("/api/intervene",
                       json={"case_id": case_id, "edits": edits}).json()
    _check_schema(body, "prediction")
    assert body["edits"] == edits
    assert body["concept_values"][2] == 0.25
    assert body["concept_values"][5] == 1.0


def test_intervene_out_of_range_index_is_422(client, demo_env):
    case_id = demo_env["dataset"].cases[0].case_id
    response = client.post("/api/intervene", json={
        "case_id": case_id, "edits": [{"index": 9999, "value": 0.5}]})
    assert response.status_code == 422
    body = response.json()
    _check_schema(body, "error")
    assert body["error_code"] == "IndexOutOfRange"


def test_intervene_out_of_range_value_is_422(client, demo_env):
    case_id = demo_env["dataset"].cases[0].case_id
    response = client.post("/api/intervene", json={
        "case_id": case_id, "edits": [{"index": 0, "value": 1.5}]})
    assert response.status_code == 422
    assert response.json()["error_code"] == "ValueOutOfRange"


def test_intervene_flips_identity_class(ident_client):
    baseline = ident_client.post("/api/classify", json={"case_id": "case_0000"}).json()
    assert baseline["predicted_class"] == "class_0"
    flipped = ident_client.post("/api/intervene", json={
        "case_id": "case_0000", "edits": [{"index": 0, "value": 0.0}]}).json()
    assert flipped["predicted_class"] == "class_1"


def test_interventions_do_not_mutate_state(client, demo_env):
    case_id = demo_env["dataset"].cases[1].case_id
    before = client.post("/api/classify", json={"case_id": case_id}).content
    client.post("/api/intervene", json={
        "case_id": case_id, "edits": [{"index": 0, "value": 0.0}]})
    after = client.post("/api/classify", json={"case_id": case_id}).content
    assert before == after


def test_request_validation_error_shape(client):
    response = client.post("/api/classify", json={})
    assert response.status_code == 422
    body = response.json()
    _check_schema(body, "error")
    assert body["error_code"] == "ValidationError"


# --- reports ---

def test_report_schema_and_citations(client, demo_env):
    case_id = demo_env["dataset"].cases[0].case_id
    response = client.post("/api/report", json={"case_id": case_id})
    assert response.status_code == 200
    body = response.json()
    _check_schema(body, "report")
    store_ids = {chunk.chunk_id for chunk in demo_env["snapshot"].chunks}
    for citation in body["sections"]["evidence"]:
        assert citation["chunk_id"] in store_ids
    agents = [step["agent"] for step in body["trace"]]
    order = {"retriever": 0, "radiologist": 1, "writer": 2}
    ranks = [order[a] for a in agents]
    assert ranks == sorted(ranks)


def test_report_deterministic_across_cache_reload(client, demo_env):
    case_id = demo_env["dataset"].cases[2].case_id
    payload = {"case_id": case_id, "edits": [{"index": 1, "value": 0.0}]}
    first = client.post("/api/report", json=payload).content
    cached = client.post("/api/report", json=payload).content
    reload_body = client.post("/api/reload").json()
    _check_schema(reload_body, "reload")
    recomputed = client.post("/api/report", json=payload).content
    assert first == cached == recomputed


def test_report_with_flip_edits(ident_client):
    body = ident_client.post("/api/report", json={
        "case_id": "case_0000", "edits": [{"index": 0, "value": 0.0}]}).json()
    _check_schema(body, "report")
    assert body["predicted_class"] == "class_1"
    assert "class_1" in body["text"]
    assert body["edits"] == [{"index": 0, "value": 0.0}]


def test_report_stage_error_names_the_stage(demo_env, tmp_path):
    config = json.loads((demo_env["root"] / "config.json").read_text("utf-8"))
    for backend in config["backends"]:
        if backend["name"] == "demo-writer":
            backend.pop("keyed_replies")
            backend["replies"] = ["no sections here"]
    broken_path = demo_env["root"] / "config_broken_writer.json"
    broken_path.write_text(json.dumps(config), "utf-8")
    broken = TestClient(create_app(load_config(broken_path)))
    case_id = demo_env["dataset"].cases[0].case_id
    response = broken.post("/api/report", json={"case_id": case_id})
    assert response.status_code == 502
    body = response.json()
    _check_schema(body, "error")
    assert body["stage"] == "writer"


# --- evaluation endpoints ---

def test_eval_clustering_inline_fixture(client):
    body = client.post("/api/eval/clustering", json={
        "points": [[0.0], [1.0], [10.0], [11.0]],
        "labels": ["A", "A", "B", "B"],
    }).json()
    _check_schema(body, "eval_clustering")
    assert body["metrics"]["silhouette"] == pytest.approx(0.899749373433584)
    assert body["metrics"]["davies_bouldin"] == pytest.approx(0.1)
    assert body["metrics"]["calinski_harabasz"] == pytest.approx(200.0)
    assert body["metrics"]["dunn"] == pytest.approx(9.0)
    assert len(body["projection"]) == 4


def test_eval_clustering_over_dataset(client, demo_env):
    body = client.post("/api/eval/clustering",
                       json={"use_dataset": True, "split": "test"}).json()
    _check_schema(body, "eval_clustering")
    test_cases = demo_env["dataset"].cases_in("test")
    assert body["n_points"] == len(test_cases)
    # planted class structure separates cleanly at this noise level
    assert body["metrics"]["silhouette"] > 0.0
    assert len(body["projection"]) == body["n_points"]


def test_eval_clustering_degenerate_is_422(client):
    response = client.post("/api/eval/clustering", json={
        "points": [[0.0], [0.0], [5.0], [5.0]],
        "labels": ["A", "A", "B", "B"],
    })
    assert response.status_code == 422
    assert response.json()["error_code"] == "ZeroWithinDispersion"


def test_eval_judge(client):
    body = client.post("/api/eval/judge", json={
        "candidate": "candidate report text",
        "reference": "reference report text",
    }).json()
    _check_schema(body, "eval_judge")
    assert len(body["judges"]) == 2
    first = body["judges"][0]
    for criterion, value in JUDGE_ONE_SCORES.items():
        assert first[criterion] == pytest.approx(value)
        assert body["aggregate"][criterion] == pytest.approx((value + 0.5) / 2)


def test_eval_judge_empty_candidate_is_422(client):
    response = client.post("/api/eval/judge",
                           json={"candidate": "  ", "reference": "r"})
    assert response.status_code == 422
    assert response.json()["error_code"] == "EmptyInput"


# --- transport details ---

def test_cors_header_present(client):
    response = client.get("/api/cases", headers={"Origin": "http://localhost:5173"})
    assert response.headers.get("access-control-allow-origin") == "*"


def test_reload_counts(client, demo_env):
    body = client.post("/api/reload").json()
    _check_schema(body, "reload")
    assert body["cases"] == len(demo_env["dataset"].cases)
    assert body["chunks"] == len(demo_env["snapshot"].chunks)
