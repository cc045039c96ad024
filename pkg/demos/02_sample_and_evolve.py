#!/usr/bin/env python3
"""Generate architectures from scratch and evolve them.

Generation walks the space layer by layer: pick a parent network by
ranked roulette on fitness, draw the next layer kind from the parent's
transition row, draw the kind's hyper-parameters from the parent's hidden
states, and occasionally mutate a convolution into a skip-connection.
"""

from pathlib import Path

import numpy as np

from macronas import SearchConfig, SearchSpace, SpaceEntry, build_wdg, evolve, generate_architecture
from macronas.archfmt import LayerKind, read_summary_file, write_summary, ArchitectureSummary

corpus = Path(__file__).resolve().parent.parent / "fixtures" / "corpus"
entries = [
    SpaceEntry(name=s.name, graph=build_wdg(s), fitness=0.4 + 0.1 * i)
    for i, s in enumerate(read_summary_file(p) for p in sorted(corpus.glob("*.arch")))
]
space = SearchSpace(entries=entries)

cfg = SearchConfig(generations=8, population=12, max_layers=16, seed=7)

# One candidate, with its per-layer parentage:
candidate = generate_architecture(space, cfg, np.random.default_rng(0))
print("sampled candidate:")
print(write_summary(ArchitectureSummary("candidate", tuple(candidate.layers))))
print("layer sources:", candidate.genealogy)

# Evolve against a toy objective: reward convolutional depth.  Each
# generation keeps its best individuals (elitism) and feeds them back into
# the sampling pool as graphs, so good layer patterns get resampled.
def conv_depth(cand, rng):
    return float(sum(1 for r in cand.layers if r.kind is LayerKind.CONV))

result = evolve(space, cfg, conv_depth)
print("\nbest fitness per generation:", [round(h.best, 1) for h in result.history])
print("mean fitness per generation:", [round(h.mean, 2) for h in result.history])
print(f"best candidate has {int(result.best.fitness)} convolutions "
      f"out of {len(result.best.layers)} layers")
