#!/usr/bin/env python3
"""Rank-correlation analysis and weighted-majority ensembling.

Two analytics round out the estimator: Kendall's tau-b measures how well
a cheap ranking agrees with a trusted one, and weighted majority voting
combines several trained models, each voting for its argmax class with
its training accuracy as the weight.
"""

import numpy as np

from macronas import ensemble_predict, kendall_tau

# --- rank correlation -------------------------------------------------
# Suppose five architectures receive these estimator fitnesses, and a
# full training run later produces these accuracies:
fitness = [0.12, 0.55, 0.40, 0.81, 0.33]
trained_accuracy = [0.41, 0.74, 0.69, 0.88, 0.52]
tau = kendall_tau(fitness, trained_accuracy)
print(f"tau-b between estimator and trained accuracy: {tau:.3f}")

# tau counts concordant vs discordant pairs, so a single swapped pair on
# four items costs exactly 2/6:
print("one swapped pair:", kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]))

# --- ensembling --------------------------------------------------------
# Three models emit logits for four samples over three classes.  Model
# quality differs, so votes are weighted by each model's accuracy.
rng = np.random.default_rng(0)
strong = np.array([[4.0, 0.1, 0.2], [0.1, 3.9, 0.0], [0.2, 0.1, 3.8], [3.5, 0.2, 0.1]])
noisy_a = rng.normal(size=(4, 3))
noisy_b = rng.normal(size=(4, 3))

labels = ensemble_predict([strong, noisy_a, noisy_b], [0.9, 0.3, 0.3])
print("weighted ensemble predictions:", labels.tolist())

# With one model the vote is just its argmax:
print("single model predictions:   ", ensemble_predict([strong], [1.0]).tolist())

# Two equally weighted disagreeing models tie; ties resolve to the lower
# class index so results stay deterministic:
m1 = np.array([[9.0, 0.0]])
m2 = np.array([[0.0, 9.0]])
print("tie resolution:", ensemble_predict([m1, m2], [0.5, 0.5]).tolist())
