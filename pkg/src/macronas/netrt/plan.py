"""Compilation of sampled layer sequences into executable network plans.

Macro-sampled candidates come with no shape discipline, so compilation
reconciles shapes instead of rejecting: convolution input channels follow
the running channel count, a flatten is inserted before the first linear
layer when the tensor is still spatial, spatial ops that would shrink the
image below one pixel are dropped with a note, and a classifier head is
appended when the network does not already end in a class-sized vector.
Only a convolution applied after the tensor has been flattened is a hard
error; such candidates are scored as failures by the caller.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Sequence

from ..archfmt import LayerKind, LayerRecord
from .ops import (
    AdaptiveAvgPoolOp,
    AvgPoolOp,
    BatchNormOp,
    ConvOp,
    DropoutOp,
    FlattenOp,
    LinearOp,
    MaxPoolOp,
    Op,
    ReLUOp,
    ResidualOp,
    conv_out_size,
)

logger = logging.getLogger(__name__)


class CompileError(ValueError):
    """Compilation failure; carries the offending layer index (or -1)."""

    def __init__(self, layer_index: int, message: str):
        self.layer_index = layer_index
        super().__init__(f"layer {layer_index}: {message}" if layer_index >= 0 else message)


@dataclass
class NetworkPlan:
    """Shape-resolved op chain ending in a ``num_classes`` logit vector."""

    ops: list[Op]
    input_shape: tuple[int, int, int]
    num_classes: int
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        shape = tuple(self.input_shape)
        for op in self.ops:
            if op.in_shape != shape:
                raise ValueError(f"shape chain broken at {op.name}: {op.in_shape} != {shape}")
            shape = op.out_shape
        if shape != (self.num_classes,):
            raise ValueError(f"plan emits {shape}, expected ({self.num_classes},)")

    def iter_all_ops(self) -> Iterator[Op]:
        """All ops in deterministic order, including residual children."""
        stack = list(reversed(self.ops))
        while stack:
            op = stack.pop()
            yield op
            stack.extend(reversed(op.child_ops()))


def _shortcut_ops(name: str, in_shape, out_shape) -> list[Op]:
    """Minimal identity-like mapping from in_shape to out_shape."""
    ops: list[Op] = []
    shape = in_shape
    if len(shape) == 3 and len(out_shape) == 1:
        ops.append(FlattenOp(f"{name}.sc{len(ops)}", shape))
        shape = ops[-1].out_shape
    if len(shape) == 3:
        if shape[1:] != out_shape[1:]:
            ops.append(AdaptiveAvgPoolOp(f"{name}.sc{len(ops)}", shape, out_shape[1]))
            shape = ops[-1].out_shape
        if shape[0] != out_shape[0]:
            ops.append(ConvOp(f"{name}.sc{len(ops)}", shape, out_shape[0], 1, 1, 0))
            shape = ops[-1].out_shape
    elif shape != out_shape:
        ops.append(LinearOp(f"{name}.sc{len(ops)}", shape[0], out_shape[0]))
        shape = ops[-1].out_shape
    return ops


def compile_plan(candidate, input_shape, num_classes: int) -> NetworkPlan:
    """Resolve a candidate into a :class:`NetworkPlan`.

    ``candidate`` is anything with a ``layers`` attribute or a bare layer
    sequence.  Unspecified convolution padding defaults to size-preserving
    (``kernel // 2``); unspecified pool stride defaults to the kernel.
    """
    layers: Sequence[LayerRecord] = tuple(getattr(candidate, "layers", candidate))
    if not layers:
        raise CompileError(-1, "candidate has no layers")
    input_shape = tuple(int(v) for v in input_shape)
    if len(input_shape) != 3:
        raise CompileError(-1, f"input shape must be (C,H,W), got {input_shape}")

    ops: list[Op] = []
    notes: list[str] = []
    shape: tuple[int, ...] = input_shape
    seq = 0

    def note(msg: str) -> None:
        notes.append(msg)
        logger.info("compile: %s", msg)

    def new_name(token: str) -> str:
        nonlocal seq
        name = f"op{seq}_{token}"
        seq += 1
        return name

    for idx, rec in enumerate(layers):
        kind = rec.kind
        spatial = len(shape) == 3
        if kind is LayerKind.CONV:
            if not spatial:
                raise CompileError(idx, "convolution after the tensor was flattened")
            k = int(rec.get("kernel_size", 3))
            stride = int(rec.get("stride", 1))
            pad = int(rec.get("padding", k // 2))
            out_ch = int(rec.get("out_channels", shape[0]))
            if conv_out_size(shape[1], k, stride, pad) < 1 or conv_out_size(shape[2], k, stride, pad) < 1:
                note(f"layer {idx}: conv k={k} would shrink {shape[1]}x{shape[2]} below 1 pixel; dropped")
                continue
            ops.append(ConvOp(new_name("conv"), shape, out_ch, k, stride, pad))
        elif kind in (LayerKind.MAXPOOL, LayerKind.AVGPOOL):
            if not spatial:
                note(f"layer {idx}: pooling on a flat tensor; dropped")
                continue
            k = int(rec.get("kernel_size", 2))
            stride = int(rec.get("stride", k))
            pad = min(int(rec.get("padding", 0)), k // 2)
            if conv_out_size(shape[1], k, stride, pad) < 1 or conv_out_size(shape[2], k, stride, pad) < 1:
                note(f"layer {idx}: pool k={k} would shrink {shape[1]}x{shape[2]} below 1 pixel; dropped")
                continue
            cls = MaxPoolOp if kind is LayerKind.MAXPOOL else AvgPoolOp
            ops.append(cls(new_name(kind.token), shape, k, stride, pad))
        elif kind is LayerKind.ADAPTIVEAVGPOOL:
            if not spatial:
                note(f"layer {idx}: adaptive pooling on a flat tensor; dropped")
                continue
            ops.append(AdaptiveAvgPoolOp(new_name("adaptiveavgpool"), shape, int(rec.get("output_size", 1))))
        elif kind is LayerKind.LINEAR:
            if spatial:
                ops.append(FlattenOp(new_name("flatten"), shape))
                shape = ops[-1].out_shape
            ops.append(LinearOp(new_name("linear"), shape[0], int(rec.get("out_features", num_classes))))
        elif kind is LayerKind.BATCHNORM:
            ops.append(BatchNormOp(new_name("batchnorm"), shape))
        elif kind is LayerKind.RELU:
            ops.append(ReLUOp(new_name("relu"), shape))
        elif kind is LayerKind.DROPOUT:
            drop_p = float(rec.get("drop_p", 0.5))
            if not 0.0 < drop_p < 1.0:
                raise CompileError(idx, f"drop_p {drop_p} outside (0,1)")
            ops.append(DropoutOp(new_name("dropout"), shape, drop_p))
        elif kind is LayerKind.FLATTEN:
            if not spatial:
                note(f"layer {idx}: flatten on a flat tensor; dropped")
                continue
            ops.append(FlattenOp(new_name("flatten"), shape))
        elif kind is LayerKind.SKIP:
            if not ops:
                note(f"layer {idx}: skip-connection with nothing to wrap; dropped")
                continue
            inner = ops.pop()
            name = new_name("skip")
            ops.append(ResidualOp(name, inner, _shortcut_ops(name, inner.in_shape, inner.out_shape)))
        else:
            raise CompileError(idx, f"kind {kind.token!r} cannot be compiled")
        shape = ops[-1].out_shape

    if not ops:
        raise CompileError(-1, "no executable ops remain after shape reconciliation")

    if len(shape) == 3:
        ops.append(FlattenOp(new_name("flatten"), shape))
        shape = ops[-1].out_shape
        note("appended flatten + classifier head")
        ops.append(LinearOp(new_name("linear"), shape[0], num_classes))
    elif shape[0] != num_classes:
        note("appended classifier head")
        ops.append(LinearOp(new_name("linear"), shape[0], num_classes))

    return NetworkPlan(ops=ops, input_shape=input_shape, num_classes=num_classes, notes=tuple(notes))
