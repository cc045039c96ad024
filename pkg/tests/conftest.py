"""Shared fixtures: the hand-counted toy network and small search spaces."""

from pathlib import Path

import numpy as np
import pytest

from macronas.archfmt import LayerKind, LayerRecord, parse_summary, read_summary_file
from macronas.wdg import SearchSpace, SpaceEntry, build_wdg

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURE_CORPUS = REPO_ROOT / "fixtures" / "corpus"

# seven layers; transitions and hidden states are easy to count by hand
TOY_TEXT = (
    "conv k=3 out=8\n"
    "batchnorm\n"
    "relu\n"
    "conv k=1 out=8\n"
    "batchnorm\n"
    "relu\n"
    "linear out=10\n"
)


@pytest.fixture
def toy_summary():
    return parse_summary(TOY_TEXT, name="toy")


@pytest.fixture
def toy_wdg(toy_summary):
    return build_wdg(toy_summary)


@pytest.fixture
def toy_space(toy_wdg):
    return SearchSpace(entries=[SpaceEntry(name="toy", graph=toy_wdg, fitness=0.5)])


@pytest.fixture
def chain_space():
    """Deterministic single-path space: start -> relu -> end."""
    graph = build_wdg(parse_summary("relu\n", name="chain"))
    return SearchSpace(entries=[SpaceEntry(name="chain", graph=graph, fitness=0.5)])


@pytest.fixture
def fixture_space():
    """Space built from the committed corpus, fitness by file order."""
    entries = []
    for i, path in enumerate(sorted(FIXTURE_CORPUS.glob("*.arch"))):
        summary = read_summary_file(path)
        entries.append(SpaceEntry(name=summary.name, graph=build_wdg(summary), fitness=0.3 + 0.2 * i))
    return SearchSpace(entries=entries)


def random_summary(rng: np.random.Generator, max_len: int = 10):
    """A random valid summary for fuzzing graph construction."""
    kinds = [
        LayerKind.CONV,
        LayerKind.BATCHNORM,
        LayerKind.RELU,
        LayerKind.MAXPOOL,
        LayerKind.AVGPOOL,
        LayerKind.ADAPTIVEAVGPOOL,
        LayerKind.LINEAR,
        LayerKind.DROPOUT,
        LayerKind.SKIP,
        LayerKind.FLATTEN,
    ]
    layers = []
    for _ in range(int(rng.integers(1, max_len + 1))):
        kind = kinds[int(rng.integers(len(kinds)))]
        params = {}
        if kind is LayerKind.CONV:
            params["kernel_size"] = int(rng.choice([1, 3, 5, 7]))
            params["out_channels"] = int(rng.choice([4, 8, 16]))
            if rng.random() < 0.5:
                params["stride"] = int(rng.choice([1, 2]))
            if rng.random() < 0.5:
                params["padding"] = int(rng.choice([0, 1, 2]))
        elif kind in (LayerKind.MAXPOOL, LayerKind.AVGPOOL):
            params["kernel_size"] = int(rng.choice([2, 3]))
            if rng.random() < 0.3:
                params["stride"] = int(rng.choice([1, 2]))
        elif kind is LayerKind.ADAPTIVEAVGPOOL:
            params["output_size"] = int(rng.choice([1, 2, 4]))
        elif kind is LayerKind.LINEAR:
            params["out_features"] = int(rng.choice([8, 10, 32]))
        elif kind is LayerKind.DROPOUT:
            params["drop_p"] = float(rng.choice([0.2, 0.5]))
        layers.append(LayerRecord(kind, params))
    from macronas.archfmt import ArchitectureSummary

    return ArchitectureSummary(name="fuzz", layers=tuple(layers))
