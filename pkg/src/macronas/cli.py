"""Command-line workflows: build spaces, search, score, train, analyze.

Every command is deterministic given its flags and seed, and writes a
``manifest.json`` capturing the exact configuration used.  A JSON config
file may supply any flag (``--config``); explicit flags win.  Concurrent
invocations must target distinct ``--out`` directories.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3
runtime/numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .archfmt import ArchitectureSummary, SummaryError, read_summary_file, write_summary
from .data import (
    DataFormatError,
    Dataset,
    SynthSpec,
    holdout_split,
    load_dataset,
    partial_split,
    synth_dataset,
)
from .estimate import (
    MixedEvaluator,
    PopulationStats,
    kendall_tau,
    mixed_fitness,
    ensemble_predict,
)
from .evolve import CandidateArchitecture, SearchConfig, evolve, sample_random_candidates
from .netrt import (
    CompileError,
    NumericsError,
    TrainConfig,
    TrainingDivergedError,
    compile_plan,
    default_cutout_size,
    evaluate,
    forward,
    init_params,
    save_params,
    train,
)
from .wdg import SearchSpace, SpaceEntry, build_wdg, export_dot, wdg_from_json, wdg_to_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON file supplying defaults for any flag")
    sub.add_argument("--out", help="output directory (required)")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--dataset", default="", help="data path, or synth spec like 'classes=10,n=1024,size=8,noise=2.0'")
    sub.add_argument("--format", default="synth", choices=["synth", "cifar-binary", "idx-pair"])
    sub.add_argument("--labels", default=None, help="labels file for idx-pair data")
    sub.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="macronas", description=__doc__)
    commands = parser.add_subparsers(dest="command", metavar="command")
    subs: dict[str, argparse.ArgumentParser] = {}

    def command(name, help_text):
        sub = commands.add_parser(name, help=help_text)
        _add_common(sub)
        subs[name] = sub
        return sub

    sub = command("build-space", "build one weighted graph per .arch summary and estimate seed fitness")
    sub.add_argument("--corpus", help="directory of .arch summary files")
    sub.add_argument("--lambda", dest="lam", type=float, default=0.5)
    sub.add_argument("--epochs", type=int, default=4, help="partial-training epochs for seed fitness")

    sub = command("search", "run the evolutionary search over a persisted space")
    sub.add_argument("--space", help="space directory or space.json from build-space")
    sub.add_argument("--generations", type=int, default=5)
    sub.add_argument("--population", type=int, default=5)
    sub.add_argument("--lambda", dest="lam", type=float, default=0.5)
    sub.add_argument("--epochs", type=int, default=4, help="partial-training epochs per candidate")
    sub.add_argument("--batch-size", type=int, default=96, help="estimator training batch size")
    sub.add_argument("--max-layers", type=int, default=64)

    sub = command("score", "mixed-estimator report for a single architecture file")
    sub.add_argument("--arch", help=".arch file to score")
    sub.add_argument("--lambda", dest="lam", type=float, default=0.5)
    sub.add_argument("--epochs", type=int, default=4)

    sub = command("train", "full training run for one architecture")
    sub.add_argument("--arch", help=".arch file to train")
    sub.add_argument("--epochs", type=int, default=20)
    sub.add_argument("--batch-size", type=int, default=96)
    sub.add_argument(
        "--cutout", type=int, default=None,
        help="cutout square size; 0 picks a quarter of the image side (omit to disable)",
    )
    sub.add_argument("--holdout", type=float, default=0.2, help="validation fraction held out of the dataset")
    sub.add_argument("--force", action="store_true", help="overwrite an existing checkpoint")

    sub = command("correlate", "rank-correlation study of the estimator against trained accuracy")
    sub.add_argument("--space", help="space directory or space.json from build-space")
    sub.add_argument("--population", type=int, default=20, help="number of random candidates")
    sub.add_argument("--lambda", dest="lam", type=float, default=0.5)
    sub.add_argument("--epochs", type=int, default=2, help="partial-training epochs for the estimator")
    sub.add_argument("--batch-size", type=int, default=96, help="estimator training batch size")
    sub.add_argument("--oracle-epochs", type=int, default=20)
    sub.add_argument("--holdout", type=float, default=0.2)
    sub.add_argument("--max-layers", type=int, default=64)

    sub = command("ensemble", "train several architectures and report weighted-vote accuracy")
    sub.add_argument("--arch", nargs="+", help=".arch files to ensemble")
    sub.add_argument("--k", type=int, default=1, help="largest ensemble size to report")
    sub.add_argument("--epochs", type=int, default=8)
    sub.add_argument("--holdout", type=float, default=0.2)

    return parser, subs


def _merge_config(args: argparse.Namespace, sub: argparse.ArgumentParser) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        file_cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc
    defaults = vars(sub.parse_args([]))
    for key, value in file_cfg.items():
        dest = key.replace("-", "_")
        if dest == "lambda":
            dest = "lam"
        if dest not in defaults:
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, dest) == defaults[dest]:  # flags override the file
            setattr(args, dest, value)
    return args


def _parse_synth_spec(text: str, seed: int) -> Dataset:
    spec = {"classes": 10, "n": 1024, "channels": 3, "size": 8, "noise": 2.0}
    extra: dict[str, float] = {}
    if text:
        for part in text.split(","):
            key, sep, value = part.partition("=")
            key = key.strip()
            if not sep or key not in {*spec, "height", "width"}:
                raise UsageError(f"bad synth spec entry {part!r}")
            try:
                parsed = float(value) if key == "noise" else int(value)
            except ValueError as exc:
                raise UsageError(f"bad synth spec value {part!r}") from exc
            (extra if key in ("height", "width") else spec)[key] = parsed
    return synth_dataset(
        SynthSpec(
            num_classes=spec["classes"],
            n=spec["n"],
            channels=spec["channels"],
            height=int(extra.get("height", spec["size"])),
            width=int(extra.get("width", spec["size"])),
            noise=spec["noise"],
        ),
        seed=seed,
    )


def _load_data(args: argparse.Namespace) -> Dataset:
    if args.format == "synth":
        return _parse_synth_spec(args.dataset, args.seed)
    if not args.dataset:
        raise UsageError("--dataset is required for file formats")
    return load_dataset(args.dataset, args.format, labels_path=args.labels)


def _out_dir(args: argparse.Namespace) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args: argparse.Namespace, extra: dict | None = None) -> None:
    payload = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    if extra:
        payload.update(extra)
    (out / "manifest.json").write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")


def _candidate_text(cand: CandidateArchitecture, header: dict) -> str:
    lines = [f"# {key}: {value}" for key, value in header.items()]
    body = write_summary(ArchitectureSummary(name="candidate", layers=tuple(cand.layers)))
    return "\n".join(lines) + "\n" + body


def save_space(space: SearchSpace, out: Path) -> None:
    payload = {
        "entries": [
            {"name": e.name, "fitness": e.fitness, "wdg": wdg_to_json(e.graph)} for e in space
        ]
    }
    (out / "space.json").write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")


def load_space(path: str | Path) -> SearchSpace:
    path = Path(path)
    if path.is_dir():
        path = path / "space.json"
    if not path.exists():
        raise UsageError(f"space file not found: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    entries = [
        SpaceEntry(name=e["name"], graph=wdg_from_json(e["wdg"]), fitness=float(e["fitness"]))
        for e in payload["entries"]
    ]
    return SearchSpace(entries=entries)


def cmd_build_space(args) -> int:
    out = _out_dir(args)
    corpus = Path(args.corpus) if args.corpus else None
    if corpus is None or not corpus.is_dir():
        raise UsageError(f"--corpus must name an existing directory (got {args.corpus!r})")
    files = sorted(corpus.glob("*.arch"))
    if not files:
        raise UsageError(f"no .arch files in {corpus}")

    summaries = []
    for f in files:
        try:
            summaries.append(read_summary_file(f))
        except SummaryError as exc:
            logger.warning("skipping %s: %s", f.name, exc)
    if not summaries:
        raise SummaryError("no parseable summaries in corpus")

    dataset = _load_data(args)
    split = partial_split(dataset, seed=args.seed)
    evaluator = MixedEvaluator(split.partial_train, split.partial_valid, args.lam, args.epochs, seed=args.seed)
    rngs = [np.random.default_rng([args.seed, 0x5EED, i]) for i in range(len(summaries))]
    fitnesses = evaluator.evaluate_generation(summaries, rngs)

    entries = []
    for summary, fitness in zip(summaries, fitnesses):
        if not np.isfinite(fitness):
            logger.warning("seed network %s failed evaluation; skipped", summary.name)
            continue
        graph = build_wdg(summary)
        entries.append(SpaceEntry(name=summary.name, graph=graph, fitness=float(fitness)))
        (out / f"{summary.name}.dot").write_text(export_dot(graph), encoding="utf-8")
    if not entries:
        raise NumericsError("every seed network failed evaluation")

    space = SearchSpace(entries=entries)
    save_space(space, out)
    _write_manifest(args=args, out=out, extra={"entries": [e.name for e in entries]})
    for e in entries:
        print(f"{e.name}: fitness={e.fitness:.6f} nodes={len(e.graph.nodes)}")
    print(f"space of {len(entries)} entries written to {out}")
    return EXIT_OK


def cmd_search(args) -> int:
    out = _out_dir(args)
    space = load_space(args.space) if args.space else None
    if space is None:
        raise UsageError("--space is required")
    dataset = _load_data(args)
    split = partial_split(dataset, seed=args.seed)
    evaluator = MixedEvaluator(
        split.partial_train,
        split.partial_valid,
        args.lam,
        args.epochs,
        seed=args.seed,
        train_config=TrainConfig(epochs=args.epochs, batch_size=args.batch_size),
    )
    cfg = SearchConfig(
        generations=args.generations,
        population=args.population,
        search_epochs=args.epochs,
        lam=args.lam,
        max_layers=args.max_layers,
        seed=args.seed,
    )
    result = evolve(space, cfg, evaluator)

    with open(out / "history.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best", "mean"])
        for gen, stats in enumerate(result.history):
            writer.writerow([gen, repr(stats.best), repr(stats.mean)])

    best = result.best
    (out / "best.arch").write_text(
        _candidate_text(best, {"fitness": repr(best.fitness), "uid": best.uid}), encoding="utf-8"
    )
    archive = out / "archive"
    archive.mkdir(exist_ok=True)
    for cand in result.all_evaluated:
        (archive / f"cand-{cand.uid:04d}.arch").write_text(
            _candidate_text(cand, {"fitness": repr(cand.fitness), "uid": cand.uid}), encoding="utf-8"
        )
    _write_manifest(
        args=args,
        out=out,
        extra={
            "train_steps": evaluator.train_steps,
            "failures": len(evaluator.failures),
            "best_fitness": best.fitness,
            "best_layers": len(best.layers),
        },
    )
    print(f"best fitness {best.fitness:.6f} with {len(best.layers)} layers (uid {best.uid})")
    print(f"run written to {out}")
    return EXIT_OK


def cmd_score(args) -> int:
    out = _out_dir(args)
    if not args.arch:
        raise UsageError("--arch is required")
    summary = read_summary_file(args.arch)
    dataset = _load_data(args)
    split = partial_split(dataset, seed=args.seed)
    evaluator = MixedEvaluator(split.partial_train, split.partial_valid, args.lam, args.epochs, seed=args.seed)
    accuracy, score = evaluator.raw_components(summary, np.random.default_rng([args.seed, 0x5C02E]))
    stats = PopulationStats.from_components([(accuracy, score)])
    breakdown = mixed_fitness(accuracy, score, args.lam, stats)
    report = asdict(breakdown)
    report["architecture"] = summary.name
    (out / "score.json").write_text(json.dumps(report, indent=1, sort_keys=True), encoding="utf-8")
    _write_manifest(args=args, out=out)
    print(
        f"{summary.name}: score={breakdown.score:.6f} accuracy={breakdown.accuracy:.4f} "
        f"fitness={breakdown.fitness:.4f} (lam={breakdown.lam})"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    out = _out_dir(args)
    if not args.arch:
        raise UsageError("--arch is required")
    checkpoint = out / "checkpoint.bin"
    if checkpoint.exists() and not args.force:
        raise UsageError(f"{checkpoint} exists; pass --force to overwrite")
    summary = read_summary_file(args.arch)
    dataset = _load_data(args)
    train_ds, valid_ds = holdout_split(dataset, args.holdout, args.seed)
    plan = compile_plan(summary, train_ds.input_shape, train_ds.num_classes)
    params = init_params(plan, np.random.default_rng([args.seed, 0x1217]))
    cutout_size = args.cutout
    if cutout_size == 0:
        cutout_size = default_cutout_size(train_ds.input_shape[1])
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        cutout_size=cutout_size,
    )
    params, history = train(plan, params, train_ds, cfg, np.random.default_rng([args.seed, 0x7EA1]))
    accuracy = evaluate(plan, params, valid_ds)
    save_params(params, checkpoint)
    with open(out / "history.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "train_accuracy"])
        for row in history:
            writer.writerow([row.epoch, repr(row.loss), repr(row.accuracy)])
    _write_manifest(args=args, out=out, extra={"valid_accuracy": accuracy, "cutout_size": cutout_size})
    print(f"{summary.name}: valid accuracy {accuracy:.4f} after {args.epochs} epochs")
    return EXIT_OK


def cmd_correlate(args) -> int:
    out = _out_dir(args)
    if args.population < 2:
        raise UsageError("--population must be >= 2")
    space = load_space(args.space) if args.space else None
    if space is None:
        raise UsageError("--space is required")
    dataset = _load_data(args)
    train_ds, valid_ds = holdout_split(dataset, args.holdout, args.seed)
    split = partial_split(train_ds, seed=args.seed)
    cfg = SearchConfig(
        generations=1, population=args.population, lam=args.lam, max_layers=args.max_layers, seed=args.seed
    )
    candidates = sample_random_candidates(space, cfg, args.population, args.seed)
    evaluator = MixedEvaluator(
        split.partial_train,
        split.partial_valid,
        args.lam,
        args.epochs,
        seed=args.seed,
        train_config=TrainConfig(epochs=args.epochs, batch_size=args.batch_size),
    )

    rows = []
    raws = []
    for i, cand in enumerate(candidates):
        rng = np.random.default_rng([args.seed, 0xC0EE, i])
        try:
            raws.append((i, cand, evaluator.raw_components(cand, rng)))
        except Exception as exc:  # failed candidates are excluded from the study
            logger.warning("candidate %d failed estimator evaluation: %s", i, exc)
    if len(raws) < 2:
        raise NumericsError("fewer than 2 candidates survived the estimator")
    stats = PopulationStats.from_components([raw for _, _, raw in raws])

    fitnesses = []
    oracle_accs = []
    for i, cand, (accuracy, score) in raws:
        plan_rng = np.random.default_rng([args.seed, 0x0AC1E, i])
        try:
            plan = compile_plan(cand, train_ds.input_shape, train_ds.num_classes)
            params = init_params(plan, plan_rng)
            train(plan, params, train_ds, TrainConfig(epochs=args.oracle_epochs), plan_rng)
            oracle = evaluate(plan, params, valid_ds)
        except (CompileError, TrainingDivergedError, NumericsError) as exc:
            logger.warning("candidate %d failed oracle training: %s", i, exc)
            continue
        f = mixed_fitness(accuracy, score, args.lam, stats).fitness
        fitnesses.append(f)
        oracle_accs.append(oracle)
        rows.append([i, repr(score), repr(accuracy), repr(f), repr(oracle)])
    if len(rows) < 2:
        raise NumericsError("fewer than 2 candidates survived oracle training")

    tau = kendall_tau(fitnesses, oracle_accs)
    with open(out / "correlation.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["candidate_id", "score", "accuracy", "fitness", "oracle_accuracy"])
        writer.writerows(rows)
        fh.write(f"# kendall_tau = {tau!r}\n")
    _write_manifest(args=args, out=out, extra={"kendall_tau": tau, "evaluated": len(rows)})
    print(f"kendall tau over {len(rows)} candidates: {tau:.4f}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    out = _out_dir(args)
    if not args.arch:
        raise UsageError("--arch is required")
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    if args.k > len(args.arch):
        raise UsageError(f"--k {args.k} exceeds the {len(args.arch)} given models")
    dataset = _load_data(args)
    train_ds, valid_ds = holdout_split(dataset, args.holdout, args.seed)

    models = []
    for i, arch in enumerate(args.arch):
        summary = read_summary_file(arch)
        plan = compile_plan(summary, train_ds.input_shape, train_ds.num_classes)
        rng = np.random.default_rng([args.seed, 0xE5B, i])
        params = init_params(plan, rng)
        _, history = train(plan, params, train_ds, TrainConfig(epochs=args.epochs), rng)
        weight = history[-1].accuracy
        logits = np.concatenate(
            [
                forward(plan, params, valid_ds.images[s : s + 256].astype(np.float64))
                for s in range(0, len(valid_ds), 256)
            ]
        )
        models.append((summary.name, weight, logits))
        print(f"{summary.name}: train accuracy {weight:.4f}")

    models.sort(key=lambda m: -m[1])  # best single model first
    labels = valid_ds.labels
    results = []
    for size in range(1, args.k + 1):
        preds = ensemble_predict([m[2] for m in models[:size]], [m[1] for m in models[:size]])
        acc = float((preds == labels).mean())
        results.append((size, acc))
        print(f"k={size}: ensemble accuracy {acc:.4f}")
    with open(out / "ensemble.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "accuracy"])
        for size, acc in results:
            writer.writerow([size, repr(acc)])
    _write_manifest(args=args, out=out, extra={"order": [m[0] for m in models]})
    return EXIT_OK


_COMMANDS = {
    "build-space": cmd_build_space,
    "search": cmd_search,
    "score": cmd_score,
    "train": cmd_train,
    "correlate": cmd_correlate,
    "ensemble": cmd_ensemble,
}


def main(argv=None) -> int:
    parser, subs = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help()
            return EXIT_USAGE
        args = _merge_config(args, subs[args.command])
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SummaryError, DataFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CompileError, TrainingDivergedError, NumericsError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
