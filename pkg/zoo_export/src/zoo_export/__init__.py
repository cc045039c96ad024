"""Trace model-zoo CNNs into .arch summary files for the search engine."""

from .export import ExportReport, ExportSpec, export_corpus, resolve_model_ids
from .models import MODEL_IDS, ModelNotFoundError, build_model
from .tracing import TraceError, trace_model, trace_module

__all__ = [
    "ExportReport",
    "ExportSpec",
    "export_corpus",
    "resolve_model_ids",
    "MODEL_IDS",
    "ModelNotFoundError",
    "build_model",
    "TraceError",
    "trace_model",
    "trace_module",
]
