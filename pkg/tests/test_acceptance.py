"""Acceptance suite: one test per release criterion, each printing a verdict.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
PASS lines.  The desk-scale statistical criteria (7 and 8) use frozen
seeds; their thresholds are loose analogs of the full-scale behavior.
"""

import json
import time

import numpy as np
import pytest

from macronas.archfmt import LayerKind, LayerRecord, parse_summary, read_summary_file
from macronas.cli import main as cli_main
from macronas.data import SynthSpec, partial_split, synth_dataset
from macronas.estimate import (
    CorrelationMatrix,
    PopulationStats,
    ensemble_predict,
    jacobian_score,
    kendall_tau,
    mixed_fitness,
)
from macronas.evolve import (
    SearchConfig,
    evolve,
    maybe_mutate,
    ranked_roulette,
    sample_random_candidates,
)
from macronas.netrt import TrainConfig, compile_plan, evaluate, forward, init_params, input_jacobian, train
from macronas.wdg import SearchSpace, SpaceEntry, build_wdg, edge_prob, inner_state_dist

from conftest import FIXTURE_CORPUS, TOY_TEXT, random_summary
from test_estimate import brute_force_tau_b

K = LayerKind


def report(criterion: int, text: str) -> None:
    print(f"ACCEPTANCE {criterion:02d} PASS: {text}")


def test_criterion_01_wdg_normalization_fuzz():
    rng = np.random.default_rng(2024)
    start = time.monotonic()
    for _ in range(500):
        graph = build_wdg(random_summary(rng))
        row_totals = {}
        for (frm, _), count in graph.edge_counts.items():
            row_totals[frm] = row_totals.get(frm, 0) + count
        for frm, total in row_totals.items():
            row = [(to, p) for (f, to), p in graph.edges.items() if f == frm]
            assert abs(sum(p for _, p in row) - 1.0) <= 1e-9
            for to, prob in row:
                assert prob == graph.edge_counts[(frm, to)] / total  # exact ratio
        for node, per_param in graph.hidden.items():
            for param, dist in per_param.items():
                assert abs(sum(p for _, p in dist) - 1.0) <= 1e-9
                counts = graph.hidden_counts[node][param]
                total = sum(counts.values())
                for value, prob in dist:
                    assert prob == counts[value] / total
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    report(1, f"500 fuzzed graphs normalized exactly in {elapsed:.2f}s")


def test_criterion_02_wdg_toy_fixture():
    graph = build_wdg(parse_summary(TOY_TEXT, name="toy"))
    assert edge_prob(graph, K.CONV, K.BATCHNORM) == 1.0
    assert edge_prob(graph, K.RELU, K.CONV) == 0.5
    assert edge_prob(graph, K.RELU, K.LINEAR) == 0.5
    assert dict(inner_state_dist(graph, K.CONV, "kernel_size")) == {1: 0.5, 3: 0.5}
    report(2, "hand-counted toy transition graph reproduced exactly")


def _random_small_plan(seed: int):
    """A compilable candidate of at most 6 layers on a small input."""
    rng = np.random.default_rng([seed, 0xACC3])
    pool = [
        LayerRecord(K.CONV, {"kernel_size": 3, "out_channels": 4}),
        LayerRecord(K.CONV, {"kernel_size": 1, "out_channels": 6}),
        LayerRecord(K.BATCHNORM, {}),
        LayerRecord(K.RELU, {}),
        LayerRecord(K.MAXPOOL, {"kernel_size": 2}),
        LayerRecord(K.AVGPOOL, {"kernel_size": 2}),
        LayerRecord(K.ADAPTIVEAVGPOOL, {"output_size": 2}),
        LayerRecord(K.SKIP, {}),
        LayerRecord(K.LINEAR, {"out_features": 8}),
        LayerRecord(K.DROPOUT, {"drop_p": 0.2}),
    ]
    layers = [pool[int(rng.integers(len(pool)))] for _ in range(int(rng.integers(2, 7)))]
    shape = (int(rng.integers(1, 4)), 8, 8)
    return layers, shape


def test_criterion_03_jacobian_matches_finite_differences():
    start = time.monotonic()
    checked = 0
    seed = 0
    while checked < 5:
        seed += 1
        layers, shape = _random_small_plan(seed)
        try:
            plan = compile_plan(layers, shape, 10)
        except Exception:
            continue
        if len(plan.ops) > 6:
            continue
        checked += 1
        params = init_params(plan, np.random.default_rng([seed, 1]))
        x = np.random.default_rng([seed, 2]).normal(size=(2,) + shape)
        jac = input_jacobian(plan, params, x)
        dim = int(np.prod(shape))
        h = 1e-3
        fd = np.zeros_like(jac)
        for i in range(x.shape[0]):
            base = x[i].reshape(-1)
            bumped = np.tile(base, (2 * dim, 1))
            bumped[np.arange(dim), np.arange(dim)] += h
            bumped[dim + np.arange(dim), np.arange(dim)] -= h
            out = forward(plan, params, bumped.reshape((-1,) + shape)).sum(axis=1)
            fd[i] = (out[:dim] - out[dim:]) / (2 * h)
        rel = np.abs(jac - fd).max() / max(np.abs(fd).max(), 1e-12)
        assert rel <= 1e-4, f"plan seed {seed}: rel err {rel}"
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    report(3, f"5 random plans match central differences (<=1e-4) in {elapsed:.1f}s")


def test_criterion_04_eigenvalue_score_reference_values():
    s_identity = jacobian_score(CorrelationMatrix(np.eye(8)))
    assert s_identity == pytest.approx(1250.0, rel=1e-6)
    s_ones = jacobian_score(CorrelationMatrix(np.ones((8, 8))))
    assert s_ones == pytest.approx(0.014287, rel=1e-3)
    scores = []
    for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
        mat = (1 - rho) * np.eye(8) + rho * np.ones((8, 8))
        np.fill_diagonal(mat, 1.0)
        scores.append(jacobian_score(CorrelationMatrix(mat)))
    assert all(a > b for a, b in zip(scores, scores[1:]))
    report(4, f"score oracle values hit (identity {s_identity:.6f}, correlated {s_ones:.6f})")


def _fixture_space():
    entries = []
    for i, path in enumerate(sorted(FIXTURE_CORPUS.glob("*.arch"))):
        summary = read_summary_file(path)
        entries.append(SpaceEntry(name=summary.name, graph=build_wdg(summary), fitness=0.3 + 0.2 * i))
    return SearchSpace(entries=entries)


def _result_fingerprint(result):
    return (
        tuple((h.best, h.mean) for h in result.history),
        tuple(
            (c.uid, c.fitness, tuple((r.kind.token, tuple(sorted(r.params.items()))) for r in c.layers))
            for c in result.all_evaluated
        ),
    )


def test_criterion_05_elitism_monotonicity_and_reproducibility():
    space = _fixture_space()

    def toy_fitness(candidate, rng):
        return float(sum(1 for r in candidate.layers if r.kind is K.CONV))

    for seed in range(20):
        cfg = SearchConfig(generations=10, population=10, seed=seed)
        result = evolve(space, cfg, toy_fitness)
        bests = [h.best for h in result.history]
        assert all(b2 >= b1 for b1, b2 in zip(bests, bests[1:])), f"seed {seed} not monotone"
    cfg = SearchConfig(generations=10, population=10, seed=7)
    assert _result_fingerprint(evolve(space, cfg, toy_fitness)) == _result_fingerprint(
        evolve(space, cfg, toy_fitness)
    )
    report(5, "20 seeded runs monotone; repeated seed bit-identical")


def test_criterion_06_sampling_statistics():
    draws = 10_000
    entries = [
        SpaceEntry(name="low", graph=build_wdg(parse_summary("relu\n")), fitness=0.1),
        SpaceEntry(name="mid", graph=build_wdg(parse_summary("relu\n")), fitness=0.5),
        SpaceEntry(name="high", graph=build_wdg(parse_summary("relu\n")), fitness=0.9),
    ]
    rng = np.random.default_rng(606)
    counts = {"low": 0, "mid": 0, "high": 0}
    for _ in range(draws):
        counts[ranked_roulette(entries, rng).name] += 1
    assert counts["low"] / draws == pytest.approx(1 / 6, abs=0.02)
    assert counts["mid"] / draws == pytest.approx(2 / 6, abs=0.02)
    assert counts["high"] / draws == pytest.approx(3 / 6, abs=0.02)

    conv = LayerRecord(K.CONV, {"kernel_size": 3, "out_channels": 8})
    rng = np.random.default_rng(909)
    mutated = sum(maybe_mutate(conv, 0.5, rng).kind is K.SKIP for _ in range(draws))
    assert mutated / draws == pytest.approx(0.5, abs=0.02)
    report(6, f"roulette {counts} and mutation rate {mutated / draws:.3f} within +/-0.02")


def test_criterion_07_estimator_tracks_trained_accuracy(tmp_path):
    """Desk-scale correlation study via the `correlate` command.

    Settings frozen after calibration: 10-class (3,8,8) blobs, n=8000,
    noise 2.0, estimator batch 16.  At this seed the lam=0.5 blend
    reaches tau ~= 0.505 against the 20-epoch training oracle.
    """
    seed = 17
    synth = "classes=10,n=8000,size=8,noise=2.0"
    start = time.monotonic()
    assert cli_main([
        "build-space", "--corpus", str(FIXTURE_CORPUS), "--out", str(tmp_path / "space"),
        "--seed", str(seed), "--epochs", "2", "--dataset", synth,
    ]) == 0
    assert cli_main([
        "correlate", "--space", str(tmp_path / "space"), "--out", str(tmp_path / "corr"),
        "--population", "20", "--lambda", "0.5", "--epochs", "2", "--batch-size", "16",
        "--oracle-epochs", "20", "--max-layers", "12", "--seed", str(seed), "--dataset", synth,
    ]) == 0
    elapsed = time.monotonic() - start
    manifest = json.loads((tmp_path / "corr" / "manifest.json").read_text())
    tau = manifest["kendall_tau"]
    assert tau >= 0.3, f"tau {tau:.3f} below the desk-scale threshold"
    assert elapsed <= 900.0
    report(7, f"mixed estimator vs 20-epoch oracle: tau {tau:.3f} >= 0.3 in {elapsed:.0f}s")


def _desk_train_accuracy(candidate, train_ds, valid_ds, seed, tag):
    """20-epoch full-protocol training; failed candidates score 0."""
    rng = np.random.default_rng([seed, 0xDE5C, tag])
    try:
        plan = compile_plan(candidate, train_ds.input_shape, train_ds.num_classes)
        params = init_params(plan, rng)
        train(plan, params, train_ds, TrainConfig(epochs=20), rng)
        return evaluate(plan, params, valid_ds)
    except Exception:
        return 0.0


def test_criterion_08_search_beats_random_sampling(tmp_path):
    seed = 3
    synth = "classes=10,n=2500,size=8,noise=2.0"
    assert cli_main([
        "build-space", "--corpus", str(FIXTURE_CORPUS), "--out", str(tmp_path / "space"),
        "--seed", str(seed), "--epochs", "2", "--dataset", synth,
    ]) == 0
    assert cli_main([
        "search", "--space", str(tmp_path / "space"), "--out", str(tmp_path / "run"),
        "--generations", "5", "--population", "5", "--lambda", "0.5", "--epochs", "2",
        "--batch-size", "16", "--max-layers", "12", "--seed", str(seed), "--dataset", synth,
    ]) == 0
    best = read_summary_file(tmp_path / "run" / "best.arch")

    dataset = synth_dataset(
        SynthSpec(num_classes=10, n=2500, channels=3, height=8, width=8, noise=2.0), seed=seed
    )
    from macronas.data import holdout_split

    train_ds, valid_ds = holdout_split(dataset, 0.2, seed)
    best_accuracy = _desk_train_accuracy(best, train_ds, valid_ds, seed, 0)

    from macronas.cli import load_space

    space = load_space(tmp_path / "space")
    cfg = SearchConfig(generations=1, population=5, max_layers=12, seed=seed)
    randoms = sample_random_candidates(space, cfg, 5, seed)
    random_accuracies = [
        _desk_train_accuracy(c, train_ds, valid_ds, seed, 1 + i) for i, c in enumerate(randoms)
    ]
    random_mean = sum(random_accuracies) / len(random_accuracies)
    margin = best_accuracy - random_mean
    assert margin >= 0.02, f"search {best_accuracy:.3f} vs random mean {random_mean:.3f}"
    report(
        8,
        f"searched best desk-trains to {best_accuracy:.3f} vs random mean "
        f"{random_mean:.3f} (margin {margin:+.3f} >= 0.02)",
    )


def test_criterion_09_blend_endpoints_and_linearity():
    stats = PopulationStats(accuracy_min=0.0, accuracy_max=1.0, score_min=0.0, score_max=2000.0)
    rng = np.random.default_rng(99)
    for _ in range(200):
        accuracy = float(rng.random())
        score = float(rng.random() * 2000)
        zero = mixed_fitness(accuracy, score, 0.0, stats)
        one = mixed_fitness(accuracy, score, 1.0, stats)
        assert zero.fitness == zero.accuracy_norm
        assert one.fitness == one.score_norm
        for lam in (0.25, 0.5, 0.75):
            blend = mixed_fitness(accuracy, score, lam, stats)
            expected = zero.fitness + lam * (one.fitness - zero.fitness)
            assert blend.fitness == pytest.approx(expected, abs=1e-12)
    report(9, "blend equals its endpoints at lam 0/1 and is affine in between")


def test_criterion_10_kendall_tau_exhaustive_oracle():
    rng = np.random.default_rng(1010)
    cases = 0
    while cases < 10_000:
        n = int(rng.integers(2, 7))
        a = rng.integers(0, 5, n).tolist()
        b = rng.integers(0, 5, n).tolist()
        if len(set(a)) < 2 or len(set(b)) < 2:
            continue
        cases += 1
        assert kendall_tau(a, b) == pytest.approx(brute_force_tau_b(a, b), abs=1e-12)
    report(10, "tau-b equals brute-force pair counting on 10,000 sampled cases")


def test_criterion_11_partial_split_sizes():
    images = np.zeros((50_000, 1, 1, 1), dtype=np.float32)
    labels = np.zeros(50_000, dtype=np.int64)
    from macronas.data import Dataset

    ds = Dataset(images=images, labels=labels, num_classes=1, name="bulk",
                 mean=np.zeros(1), std=np.ones(1))
    split = partial_split(ds, seed=42)
    assert len(split.partial_train) == 4000
    assert len(split.partial_valid) == 1000
    order = np.random.default_rng(42).permutation(50_000)
    train_idx = set(np.sort(order[:4000]).tolist())
    valid_idx = set(np.sort(order[4000:5000]).tolist())
    assert not train_idx & valid_idx
    report(11, "50,000-sample split yields exactly 4000/1000 disjoint indices")


def test_criterion_12_ensemble_semantics():
    rng = np.random.default_rng(12)
    single = rng.normal(size=(64, 10))
    assert np.array_equal(ensemble_predict([single], [0.42]), single.argmax(axis=1))

    m1 = np.array([[0.0, 0.0, 5.0]])
    m2 = np.array([[5.0, 0.0, 0.0]])
    m3 = np.array([[5.0, 0.0, 0.0]])
    tally = ensemble_predict([m1, m2, m3], [0.9, 0.5, 0.5])
    assert tally.tolist() == [0]  # 0.5 + 0.5 outvotes 0.9
    report(12, "k=1 equals the single model; 3-model weighted tally matches by hand")
