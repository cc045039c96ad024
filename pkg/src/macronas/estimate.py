"""Mixed performance estimation: untrained-network scoring + partial training.

An architecture is scored two ways: (i) an initialization-stage score
derived from the eigenvalues of the correlation matrix between per-sample
input Jacobians, which measures how differently the untrained network
maps nearby data points, and (ii) the validation accuracy after a short
training run on a small data split.  The two are min-max normalized
within the population being compared and blended with a weight ``lam``
(0 = accuracy only, 1 = Jacobian score only).
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .data import Dataset
from .evolve import FitnessComponents
from .netrt import (
    CompileError,
    NetworkPlan,
    NumericsError,
    Params,
    TrainConfig,
    TrainingDivergedError,
    compile_plan,
    evaluate,
    init_params,
    input_jacobian,
    train,
)

logger = logging.getLogger(__name__)

SCORE_SCALE = 1e4
SCORE_SHIFT = 1e-5  # the k offset keeping log/inverse finite at zero eigenvalues
SCORING_BATCH = 32
_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pearson correlations between Jacobian rows; symmetric, unit diagonal."""

    matrix: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("correlation matrix must be square")
        if not np.all(np.isfinite(m)):
            raise ValueError("correlation matrix has non-finite entries")
        if np.abs(m - m.T).max() > 1e-9:
            raise ValueError("correlation matrix must be symmetric")
        if np.abs(np.diag(m) - 1.0).max() > 1e-9:
            raise ValueError("correlation matrix diagonal must be 1")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def correlation_matrix(jac: np.ndarray) -> CorrelationMatrix:
    """Row-wise Pearson correlation of a (samples x inputs) Jacobian.

    Rows with (near) zero variance are treated as perfectly
    self-correlated and uncorrelated with everything else.
    """
    jac = np.asarray(jac, dtype=np.float64)
    if jac.ndim != 2 or jac.shape[0] < 2:
        raise ValueError("need a 2-D Jacobian with at least 2 rows")
    if not np.all(np.isfinite(jac)):
        raise ValueError("Jacobian has non-finite entries")
    centered = jac - jac.mean(axis=1, keepdims=True)
    variance = (centered**2).mean(axis=1)
    live = variance >= _VAR_FLOOR
    norms = np.sqrt((centered**2).sum(axis=1))
    safe = np.where(live, norms, 1.0)
    corr = (centered @ centered.T) / np.outer(safe, safe)
    corr[~live, :] = 0.0
    corr[:, ~live] = 0.0
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return CorrelationMatrix(corr)


def jacobian_score(corr: CorrelationMatrix) -> float:
    """Eigenvalue score of the Jacobian correlation matrix.

    With eigenvalues ``v`` (clamped at zero) the score is
    ``1e4 / sum(log(v + k) + 1/(v + k))`` for ``k = 1e-5``: identical rows
    concentrate the spectrum and drive the score toward zero, while
    decorrelated rows keep all eigenvalues near one and score highest.
    """
    eigenvalues = np.maximum(np.linalg.eigvalsh(corr.matrix), 0.0)
    shifted = eigenvalues + SCORE_SHIFT
    denom = float(np.sum(np.log(shifted) + 1.0 / shifted))
    if denom <= 0.0:
        raise NumericsError(f"non-positive score denominator {denom}")
    return SCORE_SCALE / denom


def score_network(plan: NetworkPlan, params: Params, inputs: np.ndarray) -> float:
    """Jacobian eigenvalue score of a network on a scoring batch."""
    return jacobian_score(correlation_matrix(input_jacobian(plan, params, inputs)))


def _train_and_eval(plan, params, train_set, valid_set, epochs, rng, train_config=None):
    cfg = train_config or TrainConfig(epochs=epochs)
    if cfg.epochs != epochs:
        cfg = dataclasses.replace(cfg, epochs=epochs)
    steps = epochs * math.ceil(len(train_set) / cfg.batch_size)
    train(plan, params, train_set, cfg, rng)
    return evaluate(plan, params, valid_set), steps


def low_fidelity_fitness(
    candidate,
    partial_train: Dataset,
    partial_valid: Dataset,
    epochs: int,
    rng: np.random.Generator,
    train_config: Optional[TrainConfig] = None,
) -> float:
    """Validation accuracy after a short train on the partial split."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    plan = compile_plan(candidate, partial_train.input_shape, partial_train.num_classes)
    params = init_params(plan, rng)
    accuracy, _ = _train_and_eval(plan, params, partial_train, partial_valid, epochs, rng, train_config)
    return accuracy


@dataclass(frozen=True)
class PopulationStats:
    """Min/max of both raw components over the population being ranked."""

    accuracy_min: float
    accuracy_max: float
    score_min: float
    score_max: float

    @classmethod
    def from_components(cls, pairs: Sequence[tuple[float, float]]) -> "PopulationStats":
        if not pairs:
            raise ValueError("no components to aggregate")
        accs = [a for a, _ in pairs]
        scores = [s for _, s in pairs]
        return cls(min(accs), max(accs), min(scores), max(scores))


def _minmax(value: float, lo: float, hi: float) -> float:
    if not hi > lo:
        return 0.5  # degenerate range
    return (value - lo) / (hi - lo)


@dataclass(frozen=True)
class FitnessBreakdown:
    accuracy: float
    score: float
    accuracy_norm: float
    score_norm: float
    fitness: float
    lam: float

    def __post_init__(self):
        expected = (1.0 - self.lam) * self.accuracy_norm + self.lam * self.score_norm
        if self.fitness != expected:
            raise ValueError("fitness must equal the lam-weighted blend of the normalized parts")


def mixed_fitness(accuracy: float, score: float, lam: float, stats: PopulationStats) -> FitnessBreakdown:
    """Blend normalized accuracy and Jacobian score with weight ``lam``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must be in [0,1]")
    accuracy_norm = _minmax(accuracy, stats.accuracy_min, stats.accuracy_max)
    score_norm = _minmax(score, stats.score_min, stats.score_max)
    fitness = (1.0 - lam) * accuracy_norm + lam * score_norm
    return FitnessBreakdown(
        accuracy=accuracy,
        score=score,
        accuracy_norm=accuracy_norm,
        score_norm=score_norm,
        fitness=fitness,
        lam=lam,
    )


def kendall_tau(a: Sequence[float], b: Sequence[float]) -> float:
    """Tie-corrected rank correlation (tau-b) between two value lists."""
    if len(a) != len(b):
        raise ValueError("length mismatch")
    if len(a) < 2:
        raise ValueError("need at least 2 observations")
    if len(set(a)) < 2 or len(set(b)) < 2:
        raise ValueError("all values tied; tau is undefined")
    tau = scipy_stats.kendalltau(np.asarray(a), np.asarray(b), variant="b").statistic
    if not math.isfinite(tau):
        raise ValueError("tau is undefined for these inputs")
    return float(tau)


def ensemble_predict(per_model_logits: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Weighted majority vote over per-model argmax predictions.

    Each model votes for its argmax class with its weight; per sample the
    class with the largest total weight wins, ties resolving to the lowest
    class index.
    """
    if len(per_model_logits) < 1:
        raise ValueError("need at least one model")
    if len(weights) != len(per_model_logits):
        raise ValueError("one weight per model required")
    weights = [float(w) for w in weights]
    if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
        raise ValueError("weights must be non-negative with at least one positive")
    stacked = np.stack([np.asarray(l, dtype=np.float64) for l in per_model_logits])
    if stacked.ndim != 3:
        raise ValueError("per-model logits must share one (samples, classes) shape")
    _, n, c = stacked.shape
    votes = stacked.argmax(axis=2)  # (models, samples)
    totals = np.zeros((n, c))
    for model_votes, weight in zip(votes, weights):
        totals[np.arange(n), model_votes] += weight
    return totals.argmax(axis=1)


class EvaluationFailure(RuntimeError):
    """A candidate could not be compiled or trained."""


class MixedEvaluator:
    """Generation evaluator used by the evolutionary search.

    Computes raw (accuracy, score) per candidate, then normalizes within
    the generation and blends with ``lam``.  Candidates that fail to
    compile or diverge get ``-inf`` fitness.  With ``lam == 1`` no
    training happens at all; with ``lam == 0`` no Jacobian is computed.
    ``train_steps`` accumulates the number of SGD steps executed.
    """

    def __init__(
        self,
        partial_train: Dataset,
        partial_valid: Dataset,
        lam: float,
        epochs: int,
        seed: int = 0,
        scoring_batch: int = SCORING_BATCH,
        train_config: Optional[TrainConfig] = None,
    ):
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lam must be in [0,1]")
        if epochs < 1:
            raise ValueError("epochs must be >= 1")
        self.partial_train = partial_train
        self.partial_valid = partial_valid
        self.lam = lam
        self.epochs = epochs
        self.train_config = train_config
        self.train_steps = 0
        self.failures: list[tuple[int, str]] = []
        size = min(scoring_batch, len(partial_train))
        picks = np.random.default_rng([seed, 0x5C0]).permutation(len(partial_train))[:size]
        self.score_inputs = np.asarray(partial_train.images[np.sort(picks)], dtype=np.float64)

    def raw_components(self, candidate, rng: np.random.Generator) -> tuple[float, float]:
        """(accuracy, score) for one candidate, before normalization."""
        try:
            plan = compile_plan(candidate, self.partial_train.input_shape, self.partial_train.num_classes)
            params = init_params(plan, rng)
            score = score_network(plan, params, self.score_inputs) if self.lam > 0.0 else 0.0
            accuracy = 0.0
            if self.lam < 1.0:
                accuracy, steps = _train_and_eval(
                    plan, params, self.partial_train, self.partial_valid, self.epochs, rng, self.train_config
                )
                self.train_steps += steps
            return accuracy, score
        except (CompileError, TrainingDivergedError, NumericsError, FloatingPointError) as exc:
            raise EvaluationFailure(str(exc)) from exc

    def evaluate_generation(self, candidates, rngs) -> list[float]:
        raws: list[Optional[tuple[float, float]]] = []
        for cand, rng in zip(candidates, rngs):
            try:
                raws.append(self.raw_components(cand, rng))
            except EvaluationFailure as exc:
                logger.warning("candidate failed evaluation: %s", exc)
                self.failures.append((getattr(cand, "uid", -1), str(exc)))
                raws.append(None)
        ok = [r for r in raws if r is not None]
        if not ok:
            return [float("-inf")] * len(raws)
        stats = PopulationStats.from_components(ok)
        fitnesses = []
        for cand, raw in zip(candidates, raws):
            if raw is None:
                fitnesses.append(float("-inf"))
                continue
            breakdown = mixed_fitness(raw[0], raw[1], self.lam, stats)
            if hasattr(cand, "components"):
                cand.components = FitnessComponents(accuracy=raw[0], score=raw[1])
            fitnesses.append(breakdown.fitness)
        return fitnesses
