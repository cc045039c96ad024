"""Execution of network plans: forward, backprop, input Jacobians, I/O.

Parameters live in a flat ``{"<op>.<tensor>": ndarray}`` dict in float64;
names ending in ``running_mean``/``running_var`` are non-trainable
buffers.  Checkpoints are written as a raw float32 blob plus a JSON
manifest of (name, dtype, shape, offset) records.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .plan import NetworkPlan

Params = dict[str, np.ndarray]

_BUFFER_SUFFIXES = (".running_mean", ".running_var")


class NumericsError(RuntimeError):
    """Non-finite values encountered in a numeric pass."""


def is_buffer(name: str) -> bool:
    return name.endswith(_BUFFER_SUFFIXES)


def trainable_names(params: Params) -> list[str]:
    return [name for name in params if not is_buffer(name)]


def init_params(plan: NetworkPlan, rng: np.random.Generator) -> Params:
    """Kaiming-style init, deterministic for a given plan and seed.

    Top-level ops initialize in plan order; wrapper ops handle their own
    children, so every tensor is visited exactly once.
    """
    params: Params = {}
    for op in plan.ops:
        op.init_params(params, rng)
    return params


def count_params(params: Params, include_buffers: bool = False) -> int:
    return sum(
        int(np.prod(t.shape)) for name, t in params.items() if include_buffers or not is_buffer(name)
    )


def forward_with_tape(
    plan: NetworkPlan,
    params: Params,
    x: np.ndarray,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
):
    """Run the plan and keep per-op caches for a later backward pass."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if tuple(x.shape[1:]) != plan.input_shape:
        raise ValueError(f"batch shape {x.shape[1:]} does not match plan input {plan.input_shape}")
    out = np.asarray(x, dtype=np.float64)
    tape = []
    for op in plan.ops:
        cache: dict = {}
        out = op.forward(out, params, mode, rng, cache)
        tape.append(cache)
    return out, tape


def forward(
    plan: NetworkPlan,
    params: Params,
    x: np.ndarray,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Logits of shape (batch, num_classes)."""
    logits, _ = forward_with_tape(plan, params, x, mode, rng)
    return logits


def backward(plan: NetworkPlan, params: Params, tape, dlogits: np.ndarray):
    """Backpropagate: returns (input gradients, parameter gradients)."""
    grads: Params = {name: np.zeros_like(t) for name, t in params.items() if not is_buffer(name)}
    dx = np.asarray(dlogits, dtype=np.float64)
    for op, cache in zip(reversed(plan.ops), reversed(tape)):
        dx = op.backward(dx, params, cache, grads)
    return dx, grads


def input_jacobian(plan: NetworkPlan, params: Params, x: np.ndarray) -> np.ndarray:
    """Per-sample gradient of the summed logits with respect to the input.

    Row ``i`` is the gradient of ``sum_c logits[i, c]`` w.r.t. the
    flattened input ``i``.  The pass runs in eval mode (running batch-norm
    stats, no dropout), so rows never mix across samples and one backward
    pass computes the whole matrix.
    """
    logits, tape = forward_with_tape(plan, params, x, mode="eval")
    dx, _ = backward(plan, params, tape, np.ones_like(logits))
    jac = dx.reshape(dx.shape[0], -1)
    if not np.all(np.isfinite(jac)):
        raise NumericsError("non-finite input gradients")
    return jac


def save_params(params: Params, path: str | Path) -> None:
    """Write a float32 blob at ``path`` and a manifest at ``path + '.json'``."""
    path = Path(path)
    manifest = []
    offset = 0
    with open(path, "wb") as fh:
        for name in sorted(params):
            tensor = np.ascontiguousarray(params[name], dtype=np.float32)
            fh.write(tensor.tobytes())
            manifest.append(
                {"name": name, "dtype": "float32", "shape": list(tensor.shape), "offset": offset}
            )
            offset += tensor.nbytes
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")


def load_params(path: str | Path) -> Params:
    path = Path(path)
    manifest = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    blob = path.read_bytes()
    params: Params = {}
    for entry in manifest:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        flat = np.frombuffer(blob, dtype=np.float32, count=size, offset=start)
        params[entry["name"]] = flat.reshape(shape).astype(np.float64)
    return params


def validate_params(plan: NetworkPlan, params: Params) -> None:
    """Check shapes against the plan and that every tensor is finite."""
    for op in plan.iter_all_ops():
        for local, shape in {**op.param_shapes(), **op.buffer_shapes()}.items():
            name = f"{op.name}.{local}"
            if name not in params:
                raise ValueError(f"missing tensor {name}")
            if tuple(params[name].shape) != tuple(shape):
                raise ValueError(f"{name} has shape {params[name].shape}, expected {shape}")
            if not np.all(np.isfinite(params[name])):
                raise NumericsError(f"non-finite values in {name}")
