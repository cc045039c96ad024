"""Corpus export: one canonical .arch file per traced zoo model."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from macronas.archfmt import validate_summary, write_summary_file

from .models import MODEL_IDS, ModelNotFoundError
from .tracing import TraceError, trace_model

logger = logging.getLogger(__name__)


@dataclass
class ExportSpec:
    model_ids: list[str]
    out_dir: Path
    input_shape: tuple[int, int, int] = (3, 224, 224)

    def __post_init__(self):
        if not self.model_ids:
            raise ValueError("need at least one model id")
        self.out_dir = Path(self.out_dir)


@dataclass
class ExportReport:
    written: list[Path] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def export_corpus(spec: ExportSpec) -> ExportReport:
    """Trace every requested model and write its summary file.

    Failures are collected per model rather than aborting the batch; the
    report's ``ok`` flag is false if anything failed.  Re-runs overwrite
    byte-identically.
    """
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    report = ExportReport()
    for model_id in spec.model_ids:
        try:
            summary = trace_model(model_id, spec.input_shape)
            violations = validate_summary(summary)
            if violations:
                raise TraceError(f"{model_id}: invalid summary: {violations}")
            path = spec.out_dir / f"{model_id}.arch"
            write_summary_file(summary, path)
            report.written.append(path)
            logger.info("wrote %s (%d layers)", path.name, len(summary.layers))
        except (ModelNotFoundError, TraceError) as exc:
            logger.error("export failed for %s: %s", model_id, exc)
            report.failures[model_id] = str(exc)
    return report


def resolve_model_ids(spec_text: str) -> list[str]:
    """``all`` or a comma-separated id list."""
    if spec_text.strip() == "all":
        return list(MODEL_IDS)
    ids = [part.strip() for part in spec_text.split(",") if part.strip()]
    if not ids:
        raise ValueError("no model ids given")
    return ids
