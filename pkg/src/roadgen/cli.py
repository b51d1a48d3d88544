"""Command-line entry point: seed, train, generate, execute, analyze, plot.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from filelock import FileLock, Timeout

from roadgen import analysis, config as cfgmod, io
from roadgen.config import ConfigError, RunConfig
from roadgen.geometry import reconstruct, validate

log = logging.getLogger("roadgen")

LOCK_NAME = ".roadgen.lock"


class UsageError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- helpers -------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise RuntimeFailure(f"{what} not found: {path}")
    return path


def _clear(directory: Path, pattern: str) -> None:
    for old in directory.glob(pattern):
        old.unlink()


def _test_files(directory: Path) -> list[Path]:
    _require(directory, "tests directory")
    return sorted(directory.glob("*.json"))


# -- commands --------------------------------------------------------------------


def cmd_init_config(cfg: RunConfig, args) -> int:
    text = cfg.dump()
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        print(f"wrote {out}")
    return 0


def cmd_seed(cfg: RunConfig, args) -> int:
    from roadgen.geometry import is_valid
    from roadgen.simulator import generate_seed_pool

    roads = generate_seed_pool(cfg.seeding.n_roads, cfg.seed, cfg.simulator, cfg.ga_config())
    path = cfg.path("dataset")
    n = io.write_dataset(path, roads)
    n_points = sum(len(r.labels) for r in roads)
    n_pos = int(sum(r.labels.sum() for r in roads))
    n_fail = sum(r.failed for r in roads)
    summary = {
        "seed": cfg.seed,
        "n_roads": n,
        "n_valid": sum(is_valid(r.genome, cfg.geometry.map_size) for r in roads),
        "n_failing_roads": n_fail,
        "failing_road_fraction": n_fail / n,
        "n_points": n_points,
        "n_positive_points": n_pos,
        "positive_point_fraction": n_pos / n_points,
    }
    _write_json(path.with_name("seed_summary.json"), summary)
    print(f"wrote {n} labeled roads to {path} ({n_fail} failing, {summary['n_valid']} valid)")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    from roadgen import discriminator as D

    roads = io.read_dataset(_require(cfg.path("dataset"), "dataset"))
    train_set, val_set = D.split(roads, cfg.seeding.val_fraction, cfg.seed)
    dcfg = cfg.discriminator_config()
    model = D.build(dcfg)
    try:
        report = D.train(model, train_set, val_set)
    except D.TrainingError as exc:
        raise RuntimeFailure(str(exc)) from exc
    ckpt = cfg.path("checkpoint")
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    D.save_checkpoint(ckpt, model, report)
    io.write_csv(ckpt.with_name("train_metrics.csv"), report.history,
                 ["epoch", "loss", "sensitivity", "specificity"])
    if report.history:
        best = report.best
        print(f"best epoch {best.epoch}: sensitivity {best.sensitivity:.3f} "
              f"specificity {best.specificity:.3f}")
    print(f"wrote checkpoint {ckpt}")
    return 0


def cmd_generate(cfg: RunConfig, args) -> int:
    from roadgen import discriminator as D
    from roadgen import evolution as E

    try:
        model, _ = D.load_checkpoint(_require(cfg.path("checkpoint"), "checkpoint"))
    except (ValueError, KeyError, OSError) as exc:
        raise RuntimeFailure(f"cannot load checkpoint: {exc}") from exc
    ga = cfg.ga_config()
    pop_dir = cfg.path("population")
    pop_dir.mkdir(parents=True, exist_ok=True)
    _clear(pop_dir, "epoch_*.jsonl")

    def snapshot(pop, metrics):
        io.write_population(pop_dir / f"epoch_{pop.epoch:03d}.jsonl", pop.members)
        log.info("epoch %d mean p %.4f median distance %.4f pool %d dropped %d", metrics.epoch,
                 metrics.mean_oob_probability, metrics.median_pairwise_distance,
                 metrics.pool_size, metrics.n_invalid_offspring_dropped)

    result = E.run(ga, model.fitness, on_epoch=snapshot)
    io.write_population(pop_dir / "epoch_000.jsonl", result.initial.members)
    io.write_population(pop_dir / "final.jsonl", result.population.members)
    io.write_csv(pop_dir / "ga_metrics.csv", result.metrics,
                 ["epoch", "mean_oob_probability", "median_pairwise_distance", "pool_size",
                  "n_invalid_offspring_dropped"])

    tests_dir = cfg.path("tests")
    tests_dir.mkdir(parents=True, exist_ok=True)
    _clear(tests_dir, "*.json")
    lane = cfg.geometry.lane_width
    for i, member in enumerate(result.population.members):
        road = reconstruct(member.genome, lane_width=lane)
        report = validate(road, member.genome, cfg.geometry.map_size)
        if not report.valid:
            raise RuntimeFailure(f"generated genome {i} is invalid: {sorted(v.value for v in report.violations)}")
        io.write_test_case(tests_dir / f"test_{i:04d}.json", f"test_{i:04d}", member.genome, lane)
    initial = E.mean_oob_probability(result.initial, ga.block_size)
    final = E.mean_oob_probability(result.population, ga.block_size)
    _write_json(pop_dir / "generate_summary.json", {
        "epochs": ga.epochs,
        "initial_mean_oob_probability": initial,
        "final_mean_oob_probability": final,
        "final_population_size": len(result.population),
        "final_median_pairwise_distance": (result.metrics[-1].median_pairwise_distance
                                           if result.metrics else None),
    })
    print(f"mean OOB probability {initial:.4f} -> {final:.4f}; "
          f"wrote {len(result.population)} tests to {tests_dir}")
    return 0


def cmd_execute(cfg: RunConfig, args) -> int:
    from roadgen.simulator import SimulationError, simulate

    tests_dir = Path(args.tests_dir) if args.tests_dir else cfg.path("tests")
    results_dir = Path(args.results_dir) if args.results_dir else cfg.path("results")
    files = _test_files(tests_dir)
    results_dir.mkdir(parents=True, exist_ok=True)
    _clear(results_dir, "*.json")
    malformed = executed = failed = 0
    for f in files:
        try:
            test_id, genome, road = io.read_test_case(f)
        except (io.FormatError, OSError, UnicodeDecodeError) as exc:
            log.warning("skipping malformed test %s: %s", f.name, exc)
            malformed += 1
            continue
        try:
            trace = simulate(road, cfg.simulator)
        except SimulationError as exc:
            log.warning("skipping unsimulable test %s: %s", f.name, exc)
            malformed += 1
            continue
        data = io.result_dict(test_id, trace)
        data["valid"] = validate(road, genome, cfg.geometry.map_size).valid
        _write_json(results_dir / f"{test_id}.json", data)
        executed += 1
        failed += trace.outcome == "FAIL"
    _write_json(results_dir.parent / "execute_summary.json",
                {"n_tests": len(files), "n_executed": executed, "n_malformed": malformed, "n_fail": failed})
    print(f"executed {executed} tests ({failed} FAIL), skipped {malformed} malformed")
    return 0


def cmd_analyze(cfg: RunConfig, args) -> int:
    results_dir = Path(args.results_dir) if args.results_dir else cfg.path("results")
    files = sorted(_require(results_dir, "results directory").glob("*.json"))
    results = []
    for f in files:
        try:
            results.append(analysis.TestResult.from_dict(io.read_result(f)))
        except (io.FormatError, ValueError, KeyError) as exc:
            log.warning("skipping malformed result %s: %s", f.name, exc)
    if not results:
        raise RuntimeFailure(f"no results in {results_dir}")
    a = cfg.analysis
    stats = analysis.budget_sample(results, a.budget_seconds, a.n_samples, cfg.seed)
    out = cfg.path("analysis")
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "n_results": len(results),
        "fault_rate": analysis.fault_rate(results),
        "budget": json.loads(stats.to_json()),
    }
    _write_json(out / "stats.json", summary)
    io.write_csv(out / "table1.csv", stats.table(), analysis.TABLE_HEADERS)

    dataset = cfg.path("dataset")
    tests_dir = cfg.path("tests")
    if dataset.exists() and tests_dir.exists():
        generated = []
        for f in sorted(tests_dir.glob("*.json")):
            try:
                generated.append(io.read_test_case(f)[1])
            except io.FormatError:
                continue
        training = [r.genome for r in io.read_dataset(dataset)]
        if generated:
            nov = analysis.novelty_stats(generated, training, a.novelty_threshold)
            _write_json(out / "novelty.json", {
                "mean_min_distance": nov.mean_min_distance,
                "mean_median_distance": nov.mean_median_distance,
                "n_above_threshold": nov.n_above_threshold,
                "threshold": nov.threshold,
                "n_generated": len(generated),
                "n_training": len(training),
            })
            print(nov.summary())
    else:
        log.warning("dataset or tests missing; novelty statistics skipped")

    agg = stats.aggregates()
    print(f"fault rate {summary['fault_rate']:.3f} over {len(results)} results")
    for name in analysis.COLUMNS:
        col = agg[name]
        print(f"{name}: min {col['min']:g} avg {col['avg']:.2f} max {col['max']:g}")
    return 0


def cmd_score(cfg: RunConfig, args) -> int:
    from roadgen import discriminator as D

    model, _ = D.load_checkpoint(_require(cfg.path("checkpoint"), "checkpoint"))
    tests_dir = Path(args.tests_dir) if args.tests_dir else cfg.path("tests")
    rows = []
    for f in _test_files(tests_dir):
        try:
            test_id, genome, _ = io.read_test_case(f)
        except io.FormatError as exc:
            log.warning("skipping malformed test %s: %s", f.name, exc)
            continue
        s = model.score(genome)
        rows.append({"id": test_id, "f1": s.f1, "max_p": float(s.p.max())})
    out = Path(args.output) if args.output else cfg.workdir / "scores.csv"
    io.write_csv(out, rows, ["id", "f1", "max_p"])
    print(f"scored {len(rows)} tests into {out}")
    return 0


def cmd_plot(cfg: RunConfig, args) -> int:
    from roadgen.plot import write_svg

    try:
        test_id, _, road = io.read_test_case(args.test_case)
        result = io.read_result(args.result) if args.result else None
    except (io.FormatError, OSError, ValueError) as exc:
        raise RuntimeFailure(str(exc)) from exc
    out = Path(args.output) if args.output else cfg.workdir / "plots" / f"{test_id}.svg"
    write_svg(out, road, result, title=test_id)
    print(f"wrote {out}")
    return 0


COMMANDS = {
    "init-config": cmd_init_config,
    "seed": cmd_seed,
    "train": cmd_train,
    "generate": cmd_generate,
    "execute": cmd_execute,
    "analyze": cmd_analyze,
    "score": cmd_score,
    "plot": cmd_plot,
}

# flag name -> (config section, field)
OVERRIDES = {
    "n_roads": ("seeding", "n_roads"),
    "train_epochs": ("discriminator", "epochs"),
    "batch_size": ("discriminator", "batch_size"),
    "ga_epochs": ("ga", "epochs"),
    "population_size": ("ga", "population_size"),
    "select_f1": ("ga", "select_f1"),
    "select_f2": ("ga", "select_f2"),
    "budget": ("analysis", "budget_seconds"),
    "n_samples": ("analysis", "n_samples"),
    "tolerance": ("simulator", "tolerance"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                        help="YAML run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--workdir", metavar="PATH", default=argparse.SUPPRESS, help="run directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="roadgen", parents=[common],
                     description="Learned-fitness road generation for lane-keeping tests.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init-config", parents=[common], help="print or write the full default config")
    p.add_argument("--output", "-o", metavar="PATH")

    p = sub.add_parser("seed", parents=[common], help="simulate and label random seed roads")
    p.add_argument("--n-roads", type=int)
    p.add_argument("--tolerance", type=float)

    p = sub.add_parser("train", parents=[common], help="train the discriminator on the seed dataset")
    p.add_argument("--epochs", dest="train_epochs", type=int)
    p.add_argument("--batch-size", type=int)

    p = sub.add_parser("generate", parents=[common], help="evolve roads and emit test cases")
    p.add_argument("--epochs", dest="ga_epochs", type=int)
    p.add_argument("--population-size", type=int)
    p.add_argument("--select-f1", type=int)
    p.add_argument("--select-f2", type=int)

    p = sub.add_parser("execute", parents=[common], help="run test cases on the simulator")
    p.add_argument("--tests-dir", metavar="PATH")
    p.add_argument("--results-dir", metavar="PATH")
    p.add_argument("--tolerance", type=float)

    p = sub.add_parser("analyze", parents=[common], help="budgeted sampling, fault rate, novelty")
    p.add_argument("--results-dir", metavar="PATH")
    p.add_argument("--budget", type=float, help="simulation budget in seconds")
    p.add_argument("--n-samples", type=int)

    p = sub.add_parser("score", parents=[common], help="score test cases with the discriminator")
    p.add_argument("--tests-dir", metavar="PATH")
    p.add_argument("--output", "-o", metavar="PATH")

    p = sub.add_parser("plot", parents=[common], help="render a test case (and result) as SVG")
    p.add_argument("test_case", metavar="TEST_CASE")
    p.add_argument("--result", metavar="PATH")
    p.add_argument("--output", "-o", metavar="PATH")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = cfgmod.load(args.config) if getattr(args, "config", None) else cfgmod.from_dict({})
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=int(args.seed))
    if getattr(args, "workdir", None) is not None:
        cfg = cfgmod.override(cfg, "paths", workdir=str(args.workdir))
    by_section: dict[str, dict] = {}
    for flag, (section, name) in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            by_section.setdefault(section, {})[name] = value
    for section, values in by_section.items():
        cfg = cfgmod.override(cfg, section, **values)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
    except UsageError as exc:
        print(f"roadgen: error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"roadgen: config error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handler = COMMANDS[args.command]
    try:
        if args.command in ("init-config", "plot"):
            return handler(cfg, args)
        cfg.workdir.mkdir(parents=True, exist_ok=True)
        try:
            with FileLock(str(cfg.workdir / LOCK_NAME), timeout=0):
                return handler(cfg, args)
        except Timeout:
            raise RuntimeFailure(f"workdir {cfg.workdir} is locked by another command")
    except RuntimeFailure as exc:
        print(f"roadgen: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"roadgen: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
