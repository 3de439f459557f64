"""Concept-bottleneck CXR classification with evidence-grounded reporting."""

__version__ = "0.1.0"
