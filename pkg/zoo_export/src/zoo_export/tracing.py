"""Flatten zoo CNNs into ordered layer summaries.

A model is symbolically traced (torch.fx) in eval mode, and the graph
nodes are walked in execution order.  Leaf modules and the handful of
functional calls the zoo models use are mapped onto the summary layer
vocabulary; residual additions become ``skip`` records; structural calls
(concatenation, reshaping for channel shuffles, slicing) produce no
record.  Activations outside the vocabulary degrade to ``relu`` with a
warning so exotic models still seed usable transition graphs.
"""

from __future__ import annotations

import logging
import operator
from typing import Optional

import torch
from torch import nn

from macronas.archfmt import ArchitectureSummary, LayerKind, LayerRecord

from .models import build_model

logger = logging.getLogger(__name__)


class TraceError(RuntimeError):
    """The model could not be traced into a summary."""


def _int(value) -> int:
    if isinstance(value, (tuple, list)):
        return int(value[0])
    return int(value)


def _conv_record(mod: nn.Conv2d) -> LayerRecord:
    kernel = _int(mod.kernel_size)
    if isinstance(mod.padding, str):
        logger.warning("string padding %r approximated as %d", mod.padding, kernel // 2)
        padding = kernel // 2
    else:
        padding = _int(mod.padding)
    return LayerRecord(
        LayerKind.CONV,
        {
            "kernel_size": kernel,
            "out_channels": int(mod.out_channels),
            "stride": _int(mod.stride),
            "padding": padding,
        },
    )


def _pool_record(kind: LayerKind, kernel, stride, padding) -> LayerRecord:
    return LayerRecord(
        kind,
        {
            "kernel_size": _int(kernel),
            "stride": _int(stride if stride is not None else kernel),
            "padding": _int(padding),
        },
    )


def _dropout_record(p: float) -> Optional[LayerRecord]:
    if not 0.0 < p < 1.0:
        logger.warning("dropout with p=%s carries no information; skipped", p)
        return None
    return LayerRecord(LayerKind.DROPOUT, {"drop_p": float(p)})


_PLAIN_ACTIVATIONS = (nn.ReLU,)
_DEGRADED_ACTIVATIONS = (
    nn.ReLU6,
    nn.SiLU,
    nn.Hardswish,
    nn.Hardsigmoid,
    nn.Sigmoid,
    nn.GELU,
    nn.LeakyReLU,
    nn.ELU,
    nn.Tanh,
)


def _map_module(mod: nn.Module) -> Optional[LayerRecord]:
    if isinstance(mod, nn.Conv2d):
        return _conv_record(mod)
    if isinstance(mod, (nn.BatchNorm2d, nn.BatchNorm1d)):
        return LayerRecord(LayerKind.BATCHNORM, {})
    if isinstance(mod, _PLAIN_ACTIVATIONS):
        return LayerRecord(LayerKind.RELU, {})
    if isinstance(mod, nn.MaxPool2d):
        return _pool_record(LayerKind.MAXPOOL, mod.kernel_size, mod.stride, mod.padding)
    if isinstance(mod, nn.AvgPool2d):
        return _pool_record(LayerKind.AVGPOOL, mod.kernel_size, mod.stride, mod.padding)
    if isinstance(mod, nn.AdaptiveAvgPool2d):
        return LayerRecord(LayerKind.ADAPTIVEAVGPOOL, {"output_size": _int(mod.output_size)})
    if isinstance(mod, nn.Linear):
        return LayerRecord(LayerKind.LINEAR, {"out_features": int(mod.out_features)})
    if isinstance(mod, nn.Dropout):
        return _dropout_record(mod.p)
    if isinstance(mod, nn.Flatten):
        return LayerRecord(LayerKind.FLATTEN, {})
    if isinstance(mod, (nn.Identity,)):
        return None
    if isinstance(mod, _DEGRADED_ACTIVATIONS):
        logger.warning("activation %s recorded as relu", type(mod).__name__)
        return LayerRecord(LayerKind.RELU, {})
    logger.warning("unmappable layer %s recorded as relu", type(mod).__name__)
    return LayerRecord(LayerKind.RELU, {})


_ADD_TARGETS = {operator.add, operator.iadd, torch.add}
_IGNORED_FUNCTIONS = {
    torch.cat,
    torch.chunk,
    torch.transpose,
    torch.mul,
    operator.mul,
    operator.getitem,
}


def _is_flatten_call(args, kwargs) -> bool:
    start = kwargs.get("start_dim", args[1] if len(args) > 1 else 0)
    end = kwargs.get("end_dim", args[2] if len(args) > 2 else -1)
    return start == 1 and end == -1


def _map_function(node) -> list[LayerRecord]:
    target = node.target
    if target in _ADD_TARGETS:
        return [LayerRecord(LayerKind.SKIP, {})]
    name = getattr(target, "__name__", str(target))
    if name in ("relu", "relu_", "relu6"):
        return [LayerRecord(LayerKind.RELU, {})]
    if name in ("hardswish", "hardsigmoid", "silu", "sigmoid", "gelu"):
        logger.warning("functional activation %s recorded as relu", name)
        return [LayerRecord(LayerKind.RELU, {})]
    if name == "adaptive_avg_pool2d":
        size = node.args[1] if len(node.args) > 1 else node.kwargs.get("output_size", 1)
        return [LayerRecord(LayerKind.ADAPTIVEAVGPOOL, {"output_size": _int(size)})]
    if name == "max_pool2d" or name == "avg_pool2d":
        kind = LayerKind.MAXPOOL if name == "max_pool2d" else LayerKind.AVGPOOL
        kernel = node.args[1] if len(node.args) > 1 else node.kwargs.get("kernel_size")
        stride = node.args[2] if len(node.args) > 2 else node.kwargs.get("stride", kernel)
        padding = node.args[3] if len(node.args) > 3 else node.kwargs.get("padding", 0)
        return [_pool_record(kind, kernel, stride, padding)]
    if name == "dropout":
        p = node.args[1] if len(node.args) > 1 else node.kwargs.get("p", 0.5)
        record = _dropout_record(float(p))
        return [record] if record else []
    if name == "flatten" and _is_flatten_call(node.args, node.kwargs):
        return [LayerRecord(LayerKind.FLATTEN, {})]
    if target in _IGNORED_FUNCTIONS or name in ("cat", "chunk", "transpose", "contiguous", "flatten"):
        return []
    logger.debug("ignoring call_function %s", name)
    return []


def _map_method(node) -> list[LayerRecord]:
    name = node.target
    if name == "mean":
        dims = node.args[1] if len(node.args) > 1 else node.kwargs.get("dim")
        if isinstance(dims, (list, tuple)) and sorted(int(d) for d in dims) == [2, 3]:
            # global spatial mean: a 1x1 adaptive pool followed by a flatten
            return [
                LayerRecord(LayerKind.ADAPTIVEAVGPOOL, {"output_size": 1}),
                LayerRecord(LayerKind.FLATTEN, {}),
            ]
        return []
    if name == "flatten" and _is_flatten_call(node.args, node.kwargs):
        return [LayerRecord(LayerKind.FLATTEN, {})]
    if name in ("view", "reshape") and len(node.args) == 3 and node.args[2] == -1:
        return [LayerRecord(LayerKind.FLATTEN, {})]
    if name == "add":
        return [LayerRecord(LayerKind.SKIP, {})]
    return []


def trace_module(model: nn.Module, name: str = "model") -> ArchitectureSummary:
    """Summary of any module, in forward execution order."""
    model = model.eval()
    try:
        graph_module = torch.fx.symbolic_trace(model)
    except Exception as exc:
        raise TraceError(f"{name}: symbolic trace failed: {exc}") from exc
    records: list[LayerRecord] = []
    for node in graph_module.graph.nodes:
        if node.op == "call_module":
            record = _map_module(graph_module.get_submodule(node.target))
            if record is not None:
                records.append(record)
        elif node.op == "call_function":
            records.extend(_map_function(node))
        elif node.op == "call_method":
            records.extend(_map_method(node))
    if not records:
        raise TraceError(f"{name}: trace produced no layers")
    return ArchitectureSummary(name=name, layers=tuple(records))


def trace_model(model_id: str, input_shape=(3, 224, 224)) -> ArchitectureSummary:
    """Summary of a zoo model.

    The input shape is part of the export contract but does not influence
    the symbolic trace; hyper-parameters come from the layers themselves.
    """
    del input_shape  # symbolic tracing is shape-independent
    return trace_module(build_model(model_id), name=model_id)
