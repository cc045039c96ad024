#!/usr/bin/env python3
"""End-to-end search with the mixed performance estimator.

Candidates are ranked by a blend of (i) validation accuracy after a short
train on a small partial split and (ii) the initialization-stage Jacobian
score, min-max normalized within each generation and weighted by lam.
lam=0 ranks by trainability alone; lam=1 never trains at all.
"""

from pathlib import Path

from macronas import (
    MixedEvaluator,
    SearchConfig,
    SearchSpace,
    SpaceEntry,
    build_wdg,
    evolve,
    partial_split,
    synth_dataset,
)
from macronas.archfmt import read_summary_file
from macronas.data import SynthSpec
from macronas.netrt import TrainConfig

corpus = Path(__file__).resolve().parent.parent / "fixtures" / "corpus"
entries = [
    SpaceEntry(name=s.name, graph=build_wdg(s), fitness=0.5)
    for s in (read_summary_file(p) for p in sorted(corpus.glob("*.arch")))
]
space = SearchSpace(entries=entries)

# A small synthetic stand-in for an image dataset: 10 Gaussian-blob
# classes on 3x8x8 images.  The partial split (8% train / 2% valid) is
# what the estimator trains on.
dataset = synth_dataset(SynthSpec(num_classes=10, n=2000, channels=3, height=8, width=8, noise=2.0), seed=1)
split = partial_split(dataset, seed=1)
print(f"partial split: {len(split.partial_train)} train / {len(split.partial_valid)} valid")

evaluator = MixedEvaluator(
    split.partial_train,
    split.partial_valid,
    lam=0.5,
    epochs=2,
    seed=1,
    train_config=TrainConfig(epochs=2, batch_size=24),
)
cfg = SearchConfig(generations=4, population=6, lam=0.5, search_epochs=2, max_layers=12, seed=1)
result = evolve(space, cfg, evaluator)

print("best fitness per generation:", [round(h.best, 3) for h in result.history])
best = result.best
print(f"best candidate: {len(best.layers)} layers, fitness {best.fitness:.3f}")
print(f"  partial-train accuracy {best.components.accuracy:.3f}, "
      f"jacobian score {best.components.score:.1f}")
print(f"estimator ran {evaluator.train_steps} SGD steps in total "
      f"({len(evaluator.failures)} candidates failed)")

# The same flow is available from the command line:
#   macronas build-space --corpus fixtures/corpus --out /tmp/space --dataset "classes=10,n=2000"
#   macronas search --space /tmp/space --out /tmp/run --generations 4 --population 6
