"""Shared fixtures: the standard synthetic bundle used across test modules."""

from __future__ import annotations

import pytest

from cxreport.concept_bottleneck import fit_pipeline
from cxreport.data_model import SynthSpec, synth_dataset

STANDARD_SPEC = SynthSpec(
    n_classes=3, n_concepts=20, n_cases=600, rows=16, dim=32,
    noise_level=0.1, seed=7,
)


@pytest.fixture(scope="session")
def standard_bundle():
    """Dataset, concept embeddings, trained head, and concept vectors."""
    dataset, concept_embeddings = synth_dataset(STANDARD_SPEC)
    head, vectors = fit_pipeline(dataset, concept_embeddings)
    return dataset, concept_embeddings, head, vectors


@pytest.fixture(scope="session")
def noisy_bundle():
    """Same shape as the standard bundle but noisy enough to misclassify."""
    spec = SynthSpec(
        n_classes=3, n_concepts=20, n_cases=600, rows=16, dim=32,
        noise_level=0.15, seed=7,
    )
    dataset, concept_embeddings = synth_dataset(spec)
    head, vectors = fit_pipeline(dataset, concept_embeddings)
    return dataset, concept_embeddings, head, vectors


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One visible verdict line per acceptance criterion, pass or fail."""
    lines = []
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            if outcome != "error" and report.when != "call":
                continue
            name = nodeid.split("::", 1)[1].replace("test_", "", 1)
            lines.append((name, verdict))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, verdict in sorted(lines):
            terminalreporter.write_line(f"[ACCEPTANCE] {name}: {verdict}")
