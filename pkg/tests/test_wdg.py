import json

import numpy as np
import pytest

from macronas.archfmt import ArchitectureSummary, LayerKind, LayerRecord
from macronas.wdg import (
    Distribution,
    build_wdg,
    candidate_to_wdg,
    edge_prob,
    export_dot,
    inner_state_dist,
    transition_dist,
    wdg_from_json,
    wdg_to_json,
)

from conftest import random_summary

K = LayerKind


class TestDistribution:
    def test_validation(self):
        with pytest.raises(ValueError):
            Distribution(())
        with pytest.raises(ValueError, match="positive"):
            Distribution(((1, 0.0), (2, 1.0)))
        with pytest.raises(ValueError, match="sum"):
            Distribution(((1, 0.6), (2, 0.6)))
        with pytest.raises(ValueError, match="distinct"):
            Distribution(((1, 0.5), (1, 0.5)))

    def test_from_counts_is_sorted_and_normalized(self):
        d = Distribution.from_counts({3: 1, 1: 3})
        assert d.values() == (1, 3)
        assert d.prob(1) == 0.75
        assert d.prob(7) == 0.0


class TestToyFixture:
    """Hand-counted transition and hidden-state values of the toy network."""

    def test_edges(self, toy_wdg):
        assert edge_prob(toy_wdg, K.CONV, K.BATCHNORM) == 1.0
        assert edge_prob(toy_wdg, K.RELU, K.CONV) == 0.5
        assert edge_prob(toy_wdg, K.RELU, K.LINEAR) == 0.5
        assert edge_prob(toy_wdg, K.START, K.CONV) == 1.0
        assert edge_prob(toy_wdg, K.LINEAR, K.END) == 1.0
        assert edge_prob(toy_wdg, K.CONV, K.RELU) == 0.0  # never adjacent

    def test_hidden_states(self, toy_wdg):
        kernel = inner_state_dist(toy_wdg, K.CONV, "kernel_size")
        assert dict(kernel) == {1: 0.5, 3: 0.5}
        assert dict(inner_state_dist(toy_wdg, K.CONV, "out_channels")) == {8: 1.0}
        assert dict(inner_state_dist(toy_wdg, K.LINEAR, "out_features")) == {10: 1.0}

    def test_unknown_node_and_absent_parameter(self, toy_wdg):
        with pytest.raises(KeyError, match="unknown node"):
            edge_prob(toy_wdg, K.SKIP, K.CONV)
        with pytest.raises(KeyError, match="absent"):
            inner_state_dist(toy_wdg, K.RELU, "kernel_size")

    def test_nodes(self, toy_wdg):
        assert {n.token for n in toy_wdg.nodes} == {
            "start",
            "end",
            "conv",
            "batchnorm",
            "relu",
            "linear",
        }


class TestCandidateToWdg:
    def test_single_layer(self):
        g = candidate_to_wdg([LayerRecord(K.CONV, {"kernel_size": 3, "out_channels": 4})])
        assert edge_prob(g, K.START, K.CONV) == 1.0
        assert edge_prob(g, K.CONV, K.END) == 1.0

    def test_matches_build_wdg(self, toy_summary, toy_wdg):
        assert candidate_to_wdg(list(toy_summary.layers)).edges == toy_wdg.edges

    def test_repeated_kind(self):
        g = candidate_to_wdg([LayerRecord(K.RELU)] * 3)
        assert edge_prob(g, K.RELU, K.RELU) == pytest.approx(2 / 3)
        assert edge_prob(g, K.RELU, K.END) == pytest.approx(1 / 3)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            candidate_to_wdg([])


class TestDotExport:
    def test_toy_node_count(self, toy_wdg):
        dot = export_dot(toy_wdg)
        node_lines = [l for l in dot.splitlines() if l.endswith('";')]
        assert len(node_lines) == 6  # 4 distinct kinds + start + end

    def test_single_layer_graph(self):
        g = candidate_to_wdg([LayerRecord(K.CONV, {"kernel_size": 3, "out_channels": 4})])
        dot = export_dot(g)
        assert len([l for l in dot.splitlines() if l.endswith('";')]) == 3
        assert len([l for l in dot.splitlines() if "->" in l]) == 2

    def test_edge_label_formatting(self, toy_wdg):
        assert '"relu" -> "conv" [label="0.500"];' in export_dot(toy_wdg)


class TestGraphInvariants:
    def test_fuzzed_rows_normalize(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            g = build_wdg(random_summary(rng))
            sources = {frm for (frm, _) in g.edge_counts}
            for frm in sources:
                row = [p for (f, _), p in g.edges.items() if f == frm]
                assert abs(sum(row) - 1.0) <= 1e-9
                row_total = sum(c for (f, _), c in g.edge_counts.items() if f == frm)
                for (f, to), prob in g.edges.items():
                    if f == frm:
                        assert prob == g.edge_counts[(f, to)] / row_total  # exact ratio
            for node, per_param in g.hidden.items():
                for dist in per_param.values():
                    assert abs(sum(p for _, p in dist) - 1.0) <= 1e-9
            assert not g.has_outgoing(K.END)
            assert not any(to is K.START for (_, to) in g.edge_counts)

    def test_deterministic_serialization(self, toy_summary):
        a = json.dumps(wdg_to_json(build_wdg(toy_summary)), sort_keys=True)
        b = json.dumps(wdg_to_json(build_wdg(toy_summary)), sort_keys=True)
        assert a == b

    def test_json_roundtrip(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            g = build_wdg(random_summary(rng))
            back = wdg_from_json(json.loads(json.dumps(wdg_to_json(g))))
            assert back.edges == g.edges
            assert back.edge_counts == g.edge_counts
            assert export_dot(back) == export_dot(g)
            for node, per_param in g.hidden.items():
                for param, dist in per_param.items():
                    assert inner_state_dist(back, node, param).support == dist.support

    def test_transition_dist_matches_edges(self, toy_wdg):
        dist = transition_dist(toy_wdg, K.RELU)
        assert dist.prob(K.CONV) == 0.5
        assert dist.prob(K.LINEAR) == 0.5
        with pytest.raises(KeyError, match="no outgoing"):
            transition_dist(toy_wdg, K.END)

    def test_invalid_summary_rejected(self):
        bad = ArchitectureSummary(
            "x", (LayerRecord(K.CONV, {"kernel_size": 3, "out_channels": 0}),)
        )
        with pytest.raises(ValueError, match="invalid summary"):
            build_wdg(bad)
