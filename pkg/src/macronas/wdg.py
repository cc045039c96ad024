"""Weighted directed graphs with hidden per-node value distributions.

A graph is built from one architecture summary.  Nodes are layer kinds
(plus synthetic start/end nodes), edge weights are the transition
probabilities between consecutive layers, and each node carries one
frequency distribution per observed hyper-parameter ("hidden states").

Raw frequencies are retained next to the derived probabilities so that
serialization stores integers only and probabilities are always exact
count ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Hashable, Iterator, Mapping, Sequence

from .archfmt import (
    ArchitectureSummary,
    LayerKind,
    LayerRecord,
    format_value,
    parse_value,
    validate_summary,
)

_PROB_TOL = 1e-9


def _support_key(value: Hashable):
    return value.token if isinstance(value, LayerKind) else value


@dataclass(frozen=True)
class Distribution:
    """Finite distribution as ``((value, probability), ...)`` pairs.

    Support order is canonical (sorted by value) so sampling consumes the
    RNG identically for a freshly built graph and one loaded from disk.
    """

    support: tuple[tuple[Any, float], ...]

    def __post_init__(self):
        if not self.support:
            raise ValueError("empty distribution")
        values = [v for v, _ in self.support]
        if len(set(values)) != len(values):
            raise ValueError("support values must be distinct")
        total = 0.0
        for _, prob in self.support:
            if not prob > 0.0:
                raise ValueError("probabilities must be positive")
            total += prob
        if abs(total - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {total}, expected 1")

    @classmethod
    def from_counts(cls, counts: Mapping[Hashable, int]) -> "Distribution":
        total = sum(counts.values())
        if total <= 0:
            raise ValueError("counts must be positive")
        items = sorted(counts.items(), key=lambda kv: _support_key(kv[0]))
        return cls(tuple((value, count / total) for value, count in items))

    def values(self) -> tuple:
        return tuple(v for v, _ in self.support)

    def prob(self, value: Hashable) -> float:
        for v, p in self.support:
            if v == value:
                return p
        return 0.0

    def __iter__(self) -> Iterator[tuple[Any, float]]:
        return iter(self.support)

    def __len__(self) -> int:
        return len(self.support)


Edge = tuple[LayerKind, LayerKind]


@dataclass(frozen=True)
class WDG:
    """Transition graph of one network, with per-node hidden states.

    ``edges`` are derived from ``edge_counts`` (and ``hidden`` from
    ``hidden_counts``) at build time; the count maps are the source of
    truth.  Instances are immutable after construction.
    """

    nodes: frozenset[LayerKind]
    edge_counts: dict[Edge, int]
    edges: dict[Edge, float]
    hidden_counts: dict[LayerKind, dict[str, dict[Any, int]]]
    hidden: dict[LayerKind, dict[str, Distribution]]

    def successors(self, kind: LayerKind) -> tuple[LayerKind, ...]:
        return tuple(to for (frm, to) in self.edges if frm == kind)

    def has_outgoing(self, kind: LayerKind) -> bool:
        return any(frm == kind for (frm, _) in self.edges)


@dataclass(frozen=True)
class SpaceEntry:
    """One search-space member: a named graph with its fitness."""

    name: str
    graph: WDG
    fitness: float

    def __post_init__(self):
        if not math.isfinite(self.fitness):
            raise ValueError(f"fitness must be finite, got {self.fitness}")


@dataclass
class SearchSpace:
    """The sampling pool: all source networks as (name, graph, fitness)."""

    entries: list[SpaceEntry]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("search space needs at least one entry")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[SpaceEntry]:
        return iter(self.entries)


def _tally(sequence: Sequence[LayerRecord]) -> tuple[dict, dict]:
    kinds = [LayerKind.START] + [rec.kind for rec in sequence] + [LayerKind.END]
    edge_counts: dict[Edge, int] = {}
    for frm, to in zip(kinds, kinds[1:]):
        edge_counts[(frm, to)] = edge_counts.get((frm, to), 0) + 1
    hidden_counts: dict[LayerKind, dict[str, dict[Any, int]]] = {}
    for rec in sequence:
        per_node = hidden_counts.setdefault(rec.kind, {})
        for param, value in rec.params.items():
            per_param = per_node.setdefault(param, {})
            per_param[value] = per_param.get(value, 0) + 1
    return edge_counts, hidden_counts


def _from_counts(edge_counts, hidden_counts) -> WDG:
    nodes = {LayerKind.START, LayerKind.END}
    for frm, to in edge_counts:
        nodes.add(frm)
        nodes.add(to)
    row_totals: dict[LayerKind, int] = {}
    for (frm, _), count in edge_counts.items():
        row_totals[frm] = row_totals.get(frm, 0) + count
    edges = {edge: count / row_totals[edge[0]] for edge, count in edge_counts.items()}
    hidden = {
        node: {param: Distribution.from_counts(counts) for param, counts in per_node.items()}
        for node, per_node in hidden_counts.items()
    }
    return WDG(
        nodes=frozenset(nodes),
        edge_counts=dict(edge_counts),
        edges=edges,
        hidden_counts={n: {p: dict(c) for p, c in per.items()} for n, per in hidden_counts.items()},
        hidden=hidden,
    )


def build_wdg(summary: ArchitectureSummary) -> WDG:
    """Build the transition graph of a summary.

    Start and end nodes bracket the layer sequence; each edge probability
    is the transition frequency divided by the total outgoing frequency of
    its source node, and hidden states are computed the same way from the
    per-node parameter value frequencies.
    """
    violations = validate_summary(summary)
    if violations:
        raise ValueError("invalid summary: " + "; ".join(violations))
    edge_counts, hidden_counts = _tally(summary.layers)
    return _from_counts(edge_counts, hidden_counts)


def candidate_to_wdg(candidate) -> WDG:
    """Graph of a generated candidate (or bare layer sequence).

    Identical to :func:`build_wdg` applied to the candidate's layers; used
    to feed evolved individuals back into the sampling pool.
    """
    layers = tuple(getattr(candidate, "layers", candidate))
    if not layers:
        raise ValueError("empty candidate")
    edge_counts, hidden_counts = _tally(layers)
    return _from_counts(edge_counts, hidden_counts)


def edge_prob(graph: WDG, frm: LayerKind, to: LayerKind) -> float:
    """Transition probability ``frm -> to``; 0.0 when the edge is absent."""
    if frm not in graph.nodes:
        raise KeyError(f"unknown node {frm.token!r}")
    return graph.edges.get((frm, to), 0.0)


def transition_dist(graph: WDG, frm: LayerKind) -> Distribution:
    """Distribution over the successors of ``frm``."""
    if frm not in graph.nodes:
        raise KeyError(f"unknown node {frm.token!r}")
    counts = {to: c for (f, to), c in graph.edge_counts.items() if f == frm}
    if not counts:
        raise KeyError(f"node {frm.token!r} has no outgoing edges")
    return Distribution.from_counts(counts)


def inner_state_dist(graph: WDG, node: LayerKind, param: str) -> Distribution:
    """Value distribution of ``param`` at ``node``.

    Parameters never observed at the node raise instead of returning an
    empty distribution, so callers must handle missing hyper-parameters
    explicitly.
    """
    if node not in graph.nodes:
        raise KeyError(f"unknown node {node.token!r}")
    per_node = graph.hidden.get(node, {})
    if param not in per_node:
        raise KeyError(f"parameter {param!r} absent at node {node.token!r}")
    return per_node[param]


def export_dot(graph: WDG) -> str:
    """Render the graph as a DOT digraph with 3-decimal edge labels."""
    middle = sorted(
        (n for n in graph.nodes if n not in (LayerKind.START, LayerKind.END)),
        key=lambda n: n.token,
    )
    order = [LayerKind.START] + middle + [LayerKind.END]
    lines = ["digraph wdg {", "  rankdir=LR;"]
    for node in order:
        lines.append(f'  "{node.token}";')
    for frm, to in sorted(graph.edges, key=lambda e: (e[0].token, e[1].token)):
        prob = graph.edges[(frm, to)]
        lines.append(f'  "{frm.token}" -> "{to.token}" [label="{prob:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


_TOKEN_TO_KIND = {k.token: k for k in LayerKind}


def wdg_to_json(graph: WDG) -> dict:
    """JSON-ready form: counts only, probabilities are re-derived on load."""
    return {
        "nodes": sorted(n.token for n in graph.nodes),
        "edge_counts": {
            frm.token: {
                to.token: graph.edge_counts[(f, to)]
                for (f, to) in sorted(graph.edge_counts, key=lambda e: e[1].token)
                if f == frm
            }
            for frm in sorted({f for f, _ in graph.edge_counts}, key=lambda n: n.token)
        },
        "hidden_counts": {
            node.token: {
                param: {format_value(v): c for v, c in sorted(counts.items(), key=lambda kv: kv[0])}
                for param, counts in sorted(per_node.items())
            }
            for node, per_node in sorted(graph.hidden_counts.items(), key=lambda kv: kv[0].token)
        },
    }


def wdg_from_json(data: Mapping) -> WDG:
    edge_counts = {
        (_TOKEN_TO_KIND[frm], _TOKEN_TO_KIND[to]): int(count)
        for frm, row in data["edge_counts"].items()
        for to, count in row.items()
    }
    hidden_counts = {
        _TOKEN_TO_KIND[node]: {
            param: {parse_value(v): int(c) for v, c in counts.items()}
            for param, counts in per_node.items()
        }
        for node, per_node in data.get("hidden_counts", {}).items()
    }
    graph = _from_counts(edge_counts, hidden_counts)
    missing = {_TOKEN_TO_KIND[t] for t in data.get("nodes", [])} - graph.nodes
    if missing:
        raise ValueError(f"nodes without edges in serialized graph: {sorted(n.token for n in missing)}")
    return graph
