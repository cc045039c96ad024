"""Evolutionary macro-search: layer-by-layer sampling from a search space.

Architectures are generated from scratch by walking the transition graphs
of the search-space members: at each step a pool of parents containing the
last sampled kind is formed, one parent is picked by ranked roulette on
fitness, the next kind is drawn from that parent's transition row, and the
kind's hyper-parameters are drawn from the parent's hidden states.  Newly
sampled convolutions may mutate into skip-connections.

Generations carry their top individuals forward unchanged (elitism), and
elites re-enter the sampling pool as graphs with their measured fitness,
so later generations sample from an enriched space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .archfmt import LayerKind, LayerRecord
from .wdg import Distribution, SearchSpace, SpaceEntry, candidate_to_wdg, transition_dist

logger = logging.getLogger(__name__)

#: sentinel source name used when an empty parent pool forces termination
NO_PARENT = "(none)"


@dataclass
class SearchConfig:
    generations: int
    population: int
    search_epochs: int = 4
    lam: float = 0.5
    elitism_frac: float = 0.15
    mutation_prob: float = 0.5
    max_layers: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.generations < 1 or self.population < 1:
            raise ValueError("generations and population must be >= 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0,1]")
        if not 0.0 < self.elitism_frac < 1.0:
            raise ValueError("elitism_frac must be in (0,1)")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must be in [0,1]")
        if self.max_layers < 1:
            raise ValueError("max_layers must be >= 1")

    @property
    def elite_count(self) -> int:
        return math.ceil(self.elitism_frac * self.population)


@dataclass
class FitnessComponents:
    """Raw estimator components attached to an evaluated candidate."""

    accuracy: float
    score: float


@dataclass
class CandidateArchitecture:
    """A generated layer sequence with per-layer parent attribution."""

    layers: list[LayerRecord]
    genealogy: list[str]
    fitness: Optional[float] = None
    components: Optional[FitnessComponents] = None
    uid: int = -1

    def __post_init__(self):
        if not self.layers:
            raise ValueError("candidate needs at least one layer")
        if len(self.genealogy) != len(self.layers):
            raise ValueError("genealogy length must match layer count")


@dataclass
class GenerationStats:
    best: float
    mean: float


@dataclass
class SearchResult:
    best: CandidateArchitecture
    history: list[GenerationStats]
    all_evaluated: list[CandidateArchitecture]


class DegenerateSpaceError(RuntimeError):
    """The space keeps emitting the end marker before any layer."""


def parent_pool(space: SearchSpace, last_kind: LayerKind) -> list[SpaceEntry]:
    """Entries whose graph can continue from ``last_kind``.

    An empty list signals the caller to terminate the architecture.
    """
    return [e for e in space if last_kind in e.graph.nodes and e.graph.has_outgoing(last_kind)]


def ranked_roulette(pool: Sequence[SpaceEntry], rng: np.random.Generator) -> SpaceEntry:
    """Pick an entry with probability proportional to its fitness rank.

    Entries are sorted ascending by fitness (ties broken by name) and get
    ranks ``1..n``; entry ``i`` is selected with probability
    ``rank_i / sum(ranks)``, which keeps high-fitness members from
    dominating the draw.
    """
    if not pool:
        raise ValueError("empty parent pool")
    ordered = sorted(pool, key=lambda e: (e.fitness, e.name))
    n = len(ordered)
    total = n * (n + 1) / 2
    u = rng.random() * total
    acc = 0.0
    for rank, entry in enumerate(ordered, start=1):
        acc += rank
        if u < acc:
            return entry
    return ordered[-1]


def fps_sample(dist: Distribution, rng: np.random.Generator):
    """Fitness-proportionate draw: value ``v`` with probability ``p(v)``."""
    u = rng.random()
    acc = 0.0
    for value, prob in dist:
        acc += prob
        if u < acc:
            return value
    return dist.support[-1][0]


def maybe_mutate(layer: LayerRecord, mutation_prob: float, rng: np.random.Generator) -> LayerRecord:
    """Mutate a sampled convolution into a skip-connection.

    Only convolutions are eligible; the RNG is consumed only for them so
    non-conv layers never perturb the stream.
    """
    if layer.kind is not LayerKind.CONV:
        return layer
    if rng.random() < mutation_prob:
        return LayerRecord(LayerKind.SKIP, {})
    return layer


def sample_next_layer(
    space: SearchSpace,
    last_kind: LayerKind,
    cfg: SearchConfig,
    rng: np.random.Generator,
    uniform_parents: bool = False,
) -> tuple[Optional[LayerRecord], str]:
    """Sample the next layer given the last sampled kind.

    Returns ``(None, source)`` when the walk ends, either because the
    chosen parent transitions to its end node or because no space member
    can continue from ``last_kind``.  ``uniform_parents`` replaces the
    ranked roulette by a uniform parent draw (the plain random-sampling
    baseline).
    """
    pool = parent_pool(space, last_kind)
    if not pool:
        return None, NO_PARENT
    if uniform_parents:
        parent = pool[int(rng.integers(len(pool)))]
    else:
        parent = ranked_roulette(pool, rng)
    kind = fps_sample(transition_dist(parent.graph, last_kind), rng)
    if kind is LayerKind.END:
        return None, parent.name
    params = {}
    for name in sorted(parent.graph.hidden.get(kind, {})):
        params[name] = fps_sample(parent.graph.hidden[kind][name], rng)
    layer = maybe_mutate(LayerRecord(kind, params), cfg.mutation_prob, rng)
    return layer, parent.name


_FIRST_LAYER_RETRIES = 10


def generate_architecture(
    space: SearchSpace,
    cfg: SearchConfig,
    rng: np.random.Generator,
    uniform_parents: bool = False,
) -> CandidateArchitecture:
    """Walk the space from its start node until the end marker or the cap."""
    layers: list[LayerRecord] = []
    genealogy: list[str] = []
    last_kind = LayerKind.START
    retries = 0
    while len(layers) < cfg.max_layers:
        layer, source = sample_next_layer(space, last_kind, cfg, rng, uniform_parents)
        if layer is None:
            if layers:
                break
            retries += 1
            if retries >= _FIRST_LAYER_RETRIES:
                raise DegenerateSpaceError("space only emits the end marker")
            continue
        layers.append(layer)
        genealogy.append(source)
        last_kind = layer.kind
    else:
        logger.info("candidate hit the max_layers cap (%d)", cfg.max_layers)
    return CandidateArchitecture(layers=layers, genealogy=genealogy)


def sample_random_candidates(
    space: SearchSpace, cfg: SearchConfig, count: int, seed: int
) -> list[CandidateArchitecture]:
    """Plain random-sampling baseline: uniform parents, no evolution."""
    out = []
    for i in range(count):
        rng = np.random.default_rng([seed, 0xBA5E, i])
        out.append(generate_architecture(space, cfg, rng, uniform_parents=True))
    return out


def _candidate_rng(seed: int, generation: int, index: int, purpose: int) -> np.random.Generator:
    # stream fixed by (seed, generation, index) so results do not depend on
    # evaluation order or scheduling
    return np.random.default_rng([seed, generation, index, purpose])


Evaluator = Callable[[CandidateArchitecture, np.random.Generator], float]


def _evaluate(evaluator, candidates, rngs) -> list[float]:
    batch_fn = getattr(evaluator, "evaluate_generation", None)
    if batch_fn is not None:
        return list(batch_fn(candidates, rngs))
    out = []
    for cand, rng in zip(candidates, rngs):
        try:
            out.append(float(evaluator(cand, rng)))
        except Exception:
            logger.exception("candidate evaluation failed; assigning -inf")
            out.append(float("-inf"))
    return out


def evolve(space: SearchSpace, cfg: SearchConfig, evaluator) -> SearchResult:
    """Run the evolutionary search.

    ``evaluator`` is either a callable ``(candidate, rng) -> fitness`` or
    an object with ``evaluate_generation(candidates, rngs) -> fitnesses``
    (used by the mixed estimator, which normalizes within a generation).
    Failed evaluations yield ``-inf`` fitness and never become elites.

    Each generation produces ``population`` fresh candidates; the previous
    generation's elites join them unchanged, and the per-generation best
    fitness is therefore non-decreasing.  Elites are also converted to
    graphs and appended to the sampling space with their measured fitness.
    """
    pool = SearchSpace(entries=list(space.entries))
    history: list[GenerationStats] = []
    archive: list[CandidateArchitecture] = []
    elites: list[CandidateArchitecture] = []
    fed_back: set[int] = set()
    next_uid = 0

    for gen in range(cfg.generations):
        fresh: list[CandidateArchitecture] = []
        rngs = []
        for i in range(cfg.population):
            cand = generate_architecture(pool, cfg, _candidate_rng(cfg.seed, gen, i, 0))
            cand.uid = next_uid
            next_uid += 1
            fresh.append(cand)
            rngs.append(_candidate_rng(cfg.seed, gen, i, 1))

        for cand, fitness in zip(fresh, _evaluate(evaluator, fresh, rngs)):
            cand.fitness = fitness

        population = elites + fresh
        archive.extend(population)
        finite = [c.fitness for c in population if c.fitness is not None and math.isfinite(c.fitness)]
        best_fit = max(finite) if finite else float("-inf")
        mean_fit = sum(finite) / len(finite) if finite else float("-inf")
        history.append(GenerationStats(best=best_fit, mean=mean_fit))

        ranked = sorted(
            (c for c in population if math.isfinite(c.fitness)),
            key=lambda c: (-c.fitness, c.uid),
        )
        elites = ranked[: cfg.elite_count]
        for cand in elites:
            if cand.uid not in fed_back:
                fed_back.add(cand.uid)
                pool.entries.append(
                    SpaceEntry(
                        name=f"elite-g{gen}-u{cand.uid}",
                        graph=candidate_to_wdg(cand),
                        fitness=cand.fitness,
                    )
                )

    evaluated = [c for c in archive if math.isfinite(c.fitness)]
    if not evaluated:
        raise RuntimeError("no candidate evaluated successfully")
    best = min(evaluated, key=lambda c: (-c.fitness, c.uid))
    return SearchResult(best=best, history=history, all_evaluated=archive)
