"""Architecture summary format: a flat text description of a CNN.

A summary lists one layer per line as ``<kind> [key=value ...]`` with
lowercase kind tokens.  Lines whose first non-blank character is ``#`` are
comments.  Summary files carry the ``.arch`` extension.

Summaries describe topology and hyper-parameters only; they never contain
weights, and never contain the synthetic start/end nodes used by the
transition graphs (those are injected when graphs are built).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

Number = Union[int, float]


class SummaryError(ValueError):
    """Raised for malformed or invalid architecture summaries."""


class SummaryParseError(SummaryError):
    """Parse failure; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class LayerKind(enum.Enum):
    """Layer vocabulary.  START/END are graph-only and never parsed."""

    START = "start"
    END = "end"
    CONV = "conv"
    BATCHNORM = "batchnorm"
    RELU = "relu"
    MAXPOOL = "maxpool"
    AVGPOOL = "avgpool"
    ADAPTIVEAVGPOOL = "adaptiveavgpool"
    LINEAR = "linear"
    DROPOUT = "dropout"
    SKIP = "skip"
    FLATTEN = "flatten"

    @property
    def token(self) -> str:
        return self.value

    def __repr__(self) -> str:  # terse in test diffs
        return f"LayerKind.{self.name}"


#: kinds that may appear in a summary file (everything except start/end)
SUMMARY_KINDS = tuple(k for k in LayerKind if k not in (LayerKind.START, LayerKind.END))

_TOKEN_TO_KIND = {k.token: k for k in SUMMARY_KINDS}

#: file key -> canonical parameter name, per kind
_PARAM_KEYS: dict[LayerKind, dict[str, str]] = {
    LayerKind.CONV: {"k": "kernel_size", "out": "out_channels", "stride": "stride", "pad": "padding"},
    LayerKind.MAXPOOL: {"k": "kernel_size", "stride": "stride", "pad": "padding"},
    LayerKind.AVGPOOL: {"k": "kernel_size", "stride": "stride", "pad": "padding"},
    LayerKind.ADAPTIVEAVGPOOL: {"size": "output_size"},
    LayerKind.LINEAR: {"out": "out_features"},
    LayerKind.DROPOUT: {"p": "drop_p"},
    LayerKind.BATCHNORM: {},
    LayerKind.RELU: {},
    LayerKind.SKIP: {},
    LayerKind.FLATTEN: {},
}

_PARAM_TO_KEY: dict[LayerKind, dict[str, str]] = {
    kind: {param: key for key, param in keys.items()} for kind, keys in _PARAM_KEYS.items()
}

#: parameters that must be positive integers
_COUNT_PARAMS = frozenset({"kernel_size", "stride", "out_channels", "out_features", "output_size"})


def allowed_params(kind: LayerKind) -> frozenset[str]:
    """Canonical parameter names valid for ``kind``."""
    return frozenset(_PARAM_KEYS.get(kind, {}).values())


@dataclass(frozen=True)
class LayerRecord:
    """One layer of a summary: a kind plus its scalar hyper-parameters."""

    kind: LayerKind
    params: dict[str, Number] = field(default_factory=dict)

    def get(self, name: str, default: Number | None = None) -> Number | None:
        return self.params.get(name, default)

    def __repr__(self) -> str:
        if not self.params:
            return f"LayerRecord({self.kind.name})"
        inner = ", ".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"LayerRecord({self.kind.name}, {inner})"


@dataclass(frozen=True)
class ArchitectureSummary:
    """Named, ordered list of layer records describing one network."""

    name: str
    layers: tuple[LayerRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))


def _format_value(value: Number) -> str:
    if isinstance(value, bool):
        raise SummaryError("boolean parameter values are not supported")
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _parse_value(text: str) -> Number:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError as exc:
        raise ValueError(f"not a number: {text!r}") from exc


def parse_summary(text: str, name: str = "summary") -> ArchitectureSummary:
    """Parse summary-file content into an :class:`ArchitectureSummary`.

    Raises :class:`SummaryParseError` with the offending line number on
    syntax errors, unknown kinds, or parameters invalid for a kind, and
    :class:`SummaryError` if no layers remain after comment stripping.
    """
    layers: list[LayerRecord] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        kind = _TOKEN_TO_KIND.get(tokens[0])
        if kind is None:
            raise SummaryParseError(line_no, f"unknown layer kind {tokens[0]!r}")
        key_map = _PARAM_KEYS[kind]
        params: dict[str, Number] = {}
        for token in tokens[1:]:
            key, sep, value_text = token.partition("=")
            if not sep or not key or not value_text:
                raise SummaryParseError(line_no, f"expected key=value, got {token!r}")
            param = key_map.get(key)
            if param is None:
                raise SummaryParseError(line_no, f"parameter {key!r} is not valid for {kind.token!r}")
            if param in params:
                raise SummaryParseError(line_no, f"duplicate parameter {key!r}")
            try:
                params[param] = _parse_value(value_text)
            except ValueError as exc:
                raise SummaryParseError(line_no, str(exc)) from exc
        layers.append(LayerRecord(kind, params))
    if not layers:
        raise SummaryError("empty summary")
    return ArchitectureSummary(name=name, layers=tuple(layers))


def write_summary(summary: ArchitectureSummary) -> str:
    """Render a summary in canonical form.

    One layer per line, parameters in lexicographic file-key order; the
    output is the unique byte sequence for the summary and round-trips
    through :func:`parse_summary`.
    """
    lines = []
    for record in summary.layers:
        if record.kind not in _TOKEN_TO_KIND.values():
            raise SummaryError(f"{record.kind.name} cannot appear in a summary")
        key_of = _PARAM_TO_KEY[record.kind]
        parts = [record.kind.token]
        for param in sorted(record.params, key=lambda p: key_of.get(p, p)):
            if param not in key_of:
                raise SummaryError(f"parameter {param!r} is not valid for {record.kind.token!r}")
            parts.append(f"{key_of[param]}={_format_value(record.params[param])}")
        lines.append(" ".join(parts))
    return "".join(line + "\n" for line in lines)


def validate_summary(summary: ArchitectureSummary) -> list[str]:
    """Return human-readable invariant violations (empty when valid)."""
    violations: list[str] = []
    if not summary.layers:
        violations.append("summary has no layers")
    for idx, record in enumerate(summary.layers):
        where = f"layer {idx} ({record.kind.token})"
        if record.kind in (LayerKind.START, LayerKind.END):
            violations.append(f"{where}: start/end may not appear in summaries")
            continue
        allowed = allowed_params(record.kind)
        for param, value in record.params.items():
            if param not in allowed:
                violations.append(f"{where}: parameter {param!r} is not valid here")
                continue
            if param in _COUNT_PARAMS:
                if not isinstance(value, int) or value < 1:
                    violations.append(f"{where}: {param} must be an integer >= 1")
            elif param == "padding":
                if not isinstance(value, int) or value < 0:
                    violations.append(f"{where}: padding must be an integer >= 0")
            elif param == "drop_p":
                if not 0.0 < float(value) < 1.0:
                    violations.append(f"{where}: drop_p must be in (0,1)")
        kernel = record.params.get("kernel_size")
        if isinstance(kernel, int) and kernel >= 1:
            if record.kind is LayerKind.CONV and kernel % 2 == 0:
                violations.append(f"{where}: conv kernel_size must be odd")
            if record.kind in (LayerKind.MAXPOOL, LayerKind.AVGPOOL) and kernel % 2 == 0 and kernel != 2:
                violations.append(f"{where}: pooling kernel_size must be odd or 2")
    return violations


def read_summary_file(path: str | Path) -> ArchitectureSummary:
    """Load a ``.arch`` file; the summary name is the file stem."""
    path = Path(path)
    return parse_summary(path.read_text(encoding="utf-8"), name=path.stem)


def write_summary_file(summary: ArchitectureSummary, path: str | Path) -> None:
    Path(path).write_text(write_summary(summary), encoding="utf-8")


def format_value(value: Number) -> str:
    """Canonical text form of a parameter value (shared with graph JSON)."""
    return _format_value(value)


def parse_value(text: str) -> Number:
    """Inverse of :func:`format_value`."""
    return _parse_value(text)
