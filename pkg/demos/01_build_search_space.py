#!/usr/bin/env python3
"""Build probabilistic search spaces from architecture summaries.

Each summary (a plain-text .arch file) is turned into a weighted directed
graph: nodes are layer kinds, edges carry the observed transition
probabilities between consecutive layers, and every node keeps one value
distribution per hyper-parameter ("hidden states").
"""

from pathlib import Path

from macronas import build_wdg, edge_prob, export_dot, inner_state_dist, read_summary_file
from macronas.archfmt import LayerKind

corpus = Path(__file__).resolve().parent.parent / "fixtures" / "corpus"

# Parse one of the committed summaries and inspect its graph.
summary = read_summary_file(corpus / "micro_vgg.arch")
print(f"{summary.name}: {len(summary.layers)} layers")
graph = build_wdg(summary)

# Transition probabilities are exact frequency ratios.  In this network a
# convolution is always followed by a ReLU:
print("P(relu | conv) =", edge_prob(graph, LayerKind.CONV, LayerKind.RELU))
print("P(maxpool | relu) =", edge_prob(graph, LayerKind.RELU, LayerKind.MAXPOOL))

# Hidden states answer "which kernel sizes does this model use, and how
# often?"  They are sampled later, when new architectures are generated.
print("conv kernel sizes:", dict(inner_state_dist(graph, LayerKind.CONV, "kernel_size")))
print("conv channel counts:", dict(inner_state_dist(graph, LayerKind.CONV, "out_channels")))

# Graphs serialize to DOT for visual inspection (render with graphviz).
out = Path("/tmp/micro_vgg.dot")
out.write_text(export_dot(graph))
print(f"wrote {out}")

# A search space is simply every source network with a fitness attached;
# the fitness steers parent selection during generation (see demo 02).
from macronas import SearchSpace, SpaceEntry

entries = []
for path in sorted(corpus.glob("*.arch")):
    s = read_summary_file(path)
    entries.append(SpaceEntry(name=s.name, graph=build_wdg(s), fitness=0.5))
space = SearchSpace(entries=entries)
print(f"search space holds {len(space)} networks:", [e.name for e in space])
