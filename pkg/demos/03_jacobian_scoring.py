#!/usr/bin/env python3
"""Score untrained networks by their input-Jacobian correlation spectrum.

For a batch of inputs, each row of the Jacobian matrix is the gradient of
the summed logits with respect to one input image.  A network that maps
different images in genuinely different ways has weakly correlated rows;
the eigenvalue score turns that into a single number where higher means
more expressive at initialization.
"""

import numpy as np

from macronas import (
    correlation_matrix,
    compile_plan,
    init_params,
    input_jacobian,
    jacobian_score,
    score_network,
)
from macronas.archfmt import LayerKind, LayerRecord

rng = np.random.default_rng(3)
batch = rng.normal(size=(32, 3, 8, 8))


def rec(kind, **params):
    return LayerRecord(kind, params)


# A purely linear pipeline maps every input with the same gradient, so its
# Jacobian rows are identical, the correlation matrix is all ones, and the
# score collapses toward zero.
linear_plan = compile_plan([rec(LayerKind.LINEAR, out_features=10)], (3, 8, 8), 10)
linear_params = init_params(linear_plan, np.random.default_rng(0))
print("linear network score:   ", score_network(linear_plan, linear_params, batch))

# Nonlinearities decorrelate the rows: each image activates a different
# ReLU pattern, so the gradient differs per input and the score grows.
conv_layers = [
    rec(LayerKind.CONV, kernel_size=3, out_channels=8),
    rec(LayerKind.RELU),
    rec(LayerKind.CONV, kernel_size=3, out_channels=8),
    rec(LayerKind.RELU),
]
conv_plan = compile_plan(conv_layers, (3, 8, 8), 10)
conv_params = init_params(conv_plan, np.random.default_rng(0))
print("conv+relu network score:", score_network(conv_plan, conv_params, batch))

# The two extremes of the correlation matrix bound the score:
print("identity correlations ->", jacobian_score(correlation_matrix(np.eye(8) @ rng.normal(size=(8, 64)))))
jac = input_jacobian(conv_plan, conv_params, batch)
corr = correlation_matrix(jac)
print("score recomputed from the raw Jacobian:", jacobian_score(corr))
print("correlation matrix shape:", corr.matrix.shape)
