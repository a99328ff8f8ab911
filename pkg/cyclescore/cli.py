import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from cyclescore.conditions import conditions_from_config, read_conditions
from cyclescore.config import Settings
from cyclescore.design_space import load_schema, read_designs_csv, write_designs_csv
from cyclescore.errors import CycleScoreError
from cyclescore.evaluation import EvaluatorBundle
from cyclescore.harness import Benchmark, BenchmarkRun, condition_embedder, report, run_benchmark
from cyclescore.metrics import MetricSettings, consensus_labels, label_counts
from cyclescore.optimize import GradSettings, NSGA2Settings, Problem, grad_penalty_descent, nsga2
from cyclescore.scoring import PenaltyParams, Weights

logger = logging.getLogger("cyclescore")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _evaluate(args, config) -> int:
    schema = load_schema(config.get("schema_path"))
    bundle = EvaluatorBundle.default(schema, config)
    designs = read_designs_csv(args.designs, schema)
    conditions = read_conditions(args.conditions)
    if len(conditions) == 1:
        conditions = conditions * len(designs)
    result = bundle.evaluate_frame(designs, conditions)
    frame = result.to_frame()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(args.out, index=False)
    logger.info("Wrote %d reports to %s (%d invalid)", len(frame), args.out, int(result.invalid.sum()))
    return 0


def _optimize(args, config) -> int:
    schema = load_schema(config.get("schema_path"))
    bundle = EvaluatorBundle.default(schema, config)
    condition = conditions_from_config(1, args.condition_seed, schema, condition_embedder(bundle), config)[0]
    weights = Weights.load(args.weights) if args.weights else Weights.unit()
    problem = Problem(schema, bundle, condition, weights, PenaltyParams.from_config(config))
    if args.algo == "nsga2":
        overrides = {"checkpoint_dir": args.checkpoint_dir} if args.checkpoint_dir else {}
        population = nsga2(problem, NSGA2Settings.from_config(config, **overrides), args.seed,
                           resume=args.resume)
    else:
        population = grad_penalty_descent(problem, GradSettings.from_config(config), args.seed)
    write_designs_csv(population.designs, args.out, schema)
    logger.info("%s: %d designs, %.2f feasible, best aggregate %.4f%s", args.algo, len(population),
                float(population.feasible.mean()) if len(population) else 0.0,
                population.best_feasible_score(), " (aborted)" if population.aborted else "")
    return 1 if population.aborted else 0


def _benchmark(args, config) -> int:
    run = run_benchmark(args.mode, args.generator, config, args.scale, args.seed, args.workers)
    if args.out:
        run.save(args.out)
        logger.info("Wrote run to %s", args.out)
    sys.stdout.write(report(run, args.format))
    return 0


def _report(args, config) -> int:
    runs = [BenchmarkRun.load(path) for path in args.run]
    sys.stdout.write(report(runs, args.format))
    return 0


def _calibrate(args, config) -> int:
    dataset = read_designs_csv(args.dataset, load_schema(config.get("schema_path"))) if args.dataset else None
    bench = Benchmark.prepare(config, args.scale, args.seed, dataset)
    bench.context.weights.save(args.out)
    logger.info("Wrote weights calibrated on %d designs to %s", len(bench.context.train), args.out)
    return 0


def _label(args, config) -> int:
    ratings = pd.read_csv(args.ratings)
    settings = MetricSettings.from_config(config)
    labels = consensus_labels(ratings["yes"].to_numpy(), ratings["total"].to_numpy(),
                              settings.usable_threshold, settings.unusable_threshold)
    if args.out:
        ratings.assign(label=[label.value for label in labels]).to_csv(args.out, index=False)
    for name, count in label_counts(labels).items():
        sys.stdout.write(f"{name}: {count}\n")
    return 0


def _common_options(suppress: bool) -> argparse.ArgumentParser:
    # subcommands must not reset values given before the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file merged over the bundled defaults",
                        default=argparse.SUPPRESS if suppress else None)
    common.add_argument("--log-level", default=argparse.SUPPRESS if suppress else "INFO")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyclescore", description="Bicycle design benchmark",
                                     parents=[_common_options(suppress=False)])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_options(suppress=True)

    p = sub.add_parser("evaluate", parents=[common], help="score designs under conditions")
    p.add_argument("--designs", required=True)
    p.add_argument("--conditions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_evaluate)

    p = sub.add_parser("optimize", parents=[common], help="run an optimizer on one sampled condition")
    p.add_argument("--algo", choices=["nsga2", "grad"], default="nsga2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--condition-seed", type=int, default=1)
    p.add_argument("--weights")
    p.add_argument("--checkpoint-dir")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--out", default="population.csv")
    p.set_defaults(func=_optimize)

    p = sub.add_parser("benchmark", parents=[common], help="run a benchmark protocol")
    p.add_argument("--mode", choices=["unconditional", "conditional"], default="unconditional")
    p.add_argument("--generator", default="dataset")
    p.add_argument("--scale", choices=["full", "desk"], default="desk")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=["table", "structured"], default="table")
    p.set_defaults(func=_benchmark)

    p = sub.add_parser("report", parents=[common], help="render stored runs")
    p.add_argument("--run", nargs="+", required=True)
    p.add_argument("--format", choices=["table", "structured"], default="table")
    p.set_defaults(func=_report)

    p = sub.add_parser("calibrate", parents=[common], help="write objective and constraint weights")
    p.add_argument("--dataset")
    p.add_argument("--scale", choices=["full", "desk"], default="desk")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="weights.json")
    p.set_defaults(func=_calibrate)

    p = sub.add_parser("label", parents=[common], help="consensus usability labels from a ratings CSV")
    p.add_argument("--ratings", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_label)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format=LOG_FORMAT)
    try:
        config = Settings.load_config(args.config)
        return args.func(args, config)
    except CycleScoreError as e:
        logger.error("%s", e)
        return 2
