"""Benchmark protocols: dataset handling, generators, runs and reports."""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from cyclescore.conditions import Condition, conditions_from_config
from cyclescore.config import Settings, resolve_path
from cyclescore.design_space import (
    DesignSchema, coerce_frame, encode_frame, load_schema, read_designs_csv, sample_frame,
)
from cyclescore.errors import CycleScoreError
from cyclescore.evaluation import EvaluatorBundle
from cyclescore.geometry_constraints import GeometryConfig, geometric_frame
from cyclescore.metrics import MetricSettings, ScoreSummary, Standardizer, reference_point, score_design_set
from cyclescore.optimize import GradSettings, NSGA2Settings, Problem, grad_penalty_descent, nsga2
from cyclescore.scoring import PenaltyParams, Weights, weights_from_values

logger = logging.getLogger(__name__)

MAX_SYNTH_ROUNDS = 50


class RunMode(str, Enum):
    UNCONDITIONAL = "unconditional"
    CONDITIONAL = "conditional"
    BASELINE = "baseline"


@dataclass(frozen=True)
class BenchmarkSettings:
    n_conditions: int = 10
    samples_per_condition: int = 1000
    conditional_cases: Mapping[str, int] = field(default_factory=lambda: {"full": 10000, "desk": 1000})
    dataset_size: Mapping[str, int] = field(default_factory=lambda: {"full": 4500, "desk": 1000})
    held_out_fraction: float = 0.2
    generator_seed: int = 0
    condition_seed: int = 1
    metric_seed: int = 2

    @classmethod
    def from_config(cls, config: Mapping[str, Any], seed: Optional[int] = None) -> "BenchmarkSettings":
        settings = cls(**config.get("benchmark", {}))
        if seed is not None:
            settings = replace(settings, generator_seed=seed, condition_seed=seed + 1, metric_seed=seed + 2)
        return settings

    @property
    def seeds(self) -> Dict[str, int]:
        return {"generator": self.generator_seed, "condition": self.condition_seed,
                "metric": self.metric_seed}

    def scaled(self, scale: str, table: Mapping[str, int]) -> int:
        if scale not in table:
            raise CycleScoreError(f"Unknown scale {scale!r}; expected one of {sorted(table)}")
        return int(table[scale])


@dataclass
class DatasetSplit:
    train: pd.DataFrame
    held_out: pd.DataFrame


def synthesize_dataset(schema: DesignSchema, n: int, seed: int,
                       geometry: GeometryConfig = GeometryConfig()) -> pd.DataFrame:
    """Uniform designs kept only if they pass every geometric check.

    If rejection sampling runs out of rounds, the remainder is filled with the
    least-violating rejected samples.
    """
    rng = np.random.default_rng(seed)
    accepted: List[pd.DataFrame] = []
    rejected: List[pd.DataFrame] = []
    count = 0
    batch = max(4 * n, 1000)
    for _ in range(MAX_SYNTH_ROUNDS):
        frame = sample_frame(schema, batch, int(rng.integers(2 ** 31)))
        margins = geometric_frame(frame, geometry).to_numpy(dtype=float)
        ok = np.all(margins <= 0, axis=1)
        accepted.append(frame[ok])
        count += int(ok.sum())
        if count >= n:
            break
        excess = np.where(np.isfinite(margins), np.maximum(margins, 0), np.inf).sum(axis=1)
        rejected.append(frame[~ok].assign(_excess=excess[~ok]))
    dataset = pd.concat(accepted, ignore_index=True)
    if len(dataset) < n:
        logger.warning("Only %d of %d synthetic designs pass the geometric checks; topping up", len(dataset), n)
        pool = pd.concat(rejected, ignore_index=True).sort_values("_excess", kind="stable")
        dataset = pd.concat([dataset, pool.drop(columns="_excess").head(n - len(dataset))], ignore_index=True)
    return coerce_frame(dataset.head(n), schema)


def split_dataset(frame: pd.DataFrame, held_out_fraction: float, seed: int) -> DatasetSplit:
    if not 0 < held_out_fraction < 1:
        raise CycleScoreError(f"held_out_fraction must be in (0, 1), got {held_out_fraction}")
    order = np.random.default_rng(seed).permutation(len(frame))
    cut = len(frame) - int(round(held_out_fraction * len(frame)))
    return DatasetSplit(frame.iloc[order[:cut]].reset_index(drop=True),
                        frame.iloc[order[cut:]].reset_index(drop=True))


def dataset_baseline(dataset: pd.DataFrame, n: int, seed: int) -> pd.DataFrame:
    """Uniform draw of `n` dataset rows; with replacement only when `n` exceeds the dataset."""
    if len(dataset) == 0:
        raise CycleScoreError("dataset_baseline needs a non-empty dataset")
    rows = np.random.default_rng(seed).choice(len(dataset), n, replace=n > len(dataset))
    return dataset.iloc[rows].reset_index(drop=True)


@dataclass
class GeneratorContext:
    schema: DesignSchema
    evaluators: EvaluatorBundle
    config: Mapping[str, Any]
    train: pd.DataFrame
    weights: Weights = field(default_factory=Weights.unit)


class DatasetGenerator:
    name = "dataset"
    reentrant = True
    conditional_ok = True

    def unconditional(self, context: GeneratorContext, condition: Condition, n: int, seed: int) -> pd.DataFrame:
        return dataset_baseline(context.train, n, seed)

    def conditional(self, context: GeneratorContext, conditions: Sequence[Condition], seed: int) -> pd.DataFrame:
        return dataset_baseline(context.train, len(conditions), seed)


class RandomGenerator:
    name = "random"
    reentrant = True
    conditional_ok = True

    def unconditional(self, context: GeneratorContext, condition: Condition, n: int, seed: int) -> pd.DataFrame:
        return sample_frame(context.schema, n, seed)

    def conditional(self, context: GeneratorContext, conditions: Sequence[Condition], seed: int) -> pd.DataFrame:
        return sample_frame(context.schema, len(conditions), seed)


class NSGA2Generator:
    name = "nsga2"
    reentrant = True
    conditional_ok = False

    def unconditional(self, context: GeneratorContext, condition: Condition, n: int, seed: int) -> pd.DataFrame:
        problem = Problem(context.schema, context.evaluators, condition, context.weights,
                          PenaltyParams.from_config(context.config))
        # concurrent runs must not share a checkpoint directory
        settings = NSGA2Settings.from_config(context.config, checkpoint_dir=None, archive_size=n)
        population = nsga2(problem, settings, seed, dataset=context.train)
        if population.aborted:
            raise CycleScoreError(f"NSGA-II aborted at generation {population.generation}")
        if population.archive is None or len(population.archive) == 0:
            logger.warning("NSGA-II found no feasible design; returning the final population")
            return population.designs.head(n)
        return population.archive.designs


class GradGenerator:
    name = "grad"
    reentrant = True
    conditional_ok = False

    def unconditional(self, context: GeneratorContext, condition: Condition, n: int, seed: int) -> pd.DataFrame:
        problem = Problem(context.schema, context.evaluators, condition, context.weights,
                          PenaltyParams.from_config(context.config))
        settings = GradSettings.from_config(context.config)
        settings = replace(settings, starts=min(settings.starts, n))
        return grad_penalty_descent(problem, settings, seed).designs


GENERATORS: Dict[str, Callable[[], Any]] = {
    "dataset": DatasetGenerator,
    "random": RandomGenerator,
    "nsga2": NSGA2Generator,
    "grad": GradGenerator,
}


def get_generator(name: str):
    try:
        return GENERATORS[name]()
    except KeyError:
        raise CycleScoreError(f"Unknown generator {name!r}; expected one of {sorted(GENERATORS)}") from None


@dataclass
class BenchmarkRun:
    mode: RunMode
    generator: str
    scale: str
    seeds: Dict[str, int]
    per_condition: List[Optional[ScoreSummary]]
    aggregate: Optional[ScoreSummary]
    reference_point: List[float] = field(default_factory=list)
    substitutes: List[str] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "generator": self.generator,
            "scale": self.scale,
            "seeds": dict(self.seeds),
            "per_condition": [s.to_dict() if s else None for s in self.per_condition],
            "aggregate": self.aggregate.to_dict() if self.aggregate else None,
            "reference_point": [float(v) for v in self.reference_point],
            "substitutes": list(self.substitutes),
            "failures": list(self.failures),
            "partial": self.partial,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "BenchmarkRun":
        return cls(
            mode=RunMode(record["mode"]),
            generator=record["generator"],
            scale=record["scale"],
            seeds=dict(record["seeds"]),
            per_condition=[ScoreSummary.from_dict(s) if s else None for s in record["per_condition"]],
            aggregate=ScoreSummary.from_dict(record["aggregate"]) if record.get("aggregate") else None,
            reference_point=list(record.get("reference_point", [])),
            substitutes=list(record.get("substitutes", [])),
            failures=list(record.get("failures", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkRun":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "BenchmarkRun":
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.from_json(f.read())
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as e:
            raise CycleScoreError(f"Cannot read benchmark run {path}: {e}") from e


@dataclass
class Benchmark:
    """Everything a run needs besides the generator."""
    context: GeneratorContext
    held_out: pd.DataFrame
    reference: np.ndarray
    standardizer: Standardizer
    settings: BenchmarkSettings
    metrics: MetricSettings

    @classmethod
    def prepare(cls, config: Mapping[str, Any], scale: str = "desk", seed: Optional[int] = None,
                dataset: Optional[pd.DataFrame] = None,
                evaluators: Optional[EvaluatorBundle] = None) -> "Benchmark":
        """Dataset split, reference point and weights, all from seeded draws.

        The reference point and calibration weights come from evaluating the
        training split under seeded random conditions.
        """
        settings = BenchmarkSettings.from_config(config, seed)
        schema = load_schema(config.get("schema_path"))
        evaluators = evaluators or EvaluatorBundle.default(schema, config)
        if dataset is None:
            path = config.get("dataset_path")
            if path:
                dataset = read_designs_csv(resolve_path(path), schema)
            else:
                size = settings.scaled(scale, settings.dataset_size)
                dataset = synthesize_dataset(schema, size, settings.generator_seed,
                                             GeometryConfig.from_config(config))
        split = split_dataset(coerce_frame(dataset, schema), settings.held_out_fraction, settings.generator_seed)
        conditions = conditions_from_config(len(split.train), settings.metric_seed, schema,
                                            condition_embedder(evaluators), config)
        result = evaluators.evaluate_frame(split.train, conditions)
        weights = weights_from_values(result.objectives, result.constraints, settings.metric_seed)
        context = GeneratorContext(schema, evaluators, config, split.train, weights)
        return cls(
            context=context,
            held_out=split.held_out,
            reference=reference_point(result.objectives),
            standardizer=Standardizer.fit(encode_frame(split.train, schema)),
            settings=settings,
            metrics=MetricSettings.from_config(config),
        )

    def conditions(self, n: int) -> List[Condition]:
        return conditions_from_config(n, self.settings.condition_seed, self.context.schema,
                                      condition_embedder(self.context.evaluators), self.context.config)

    def score(self, designs: pd.DataFrame, conditions, seed: int) -> ScoreSummary:
        schema = self.context.schema
        result = self.context.evaluators.evaluate_frame(designs, conditions)
        return score_design_set(
            result.objectives, result.constraints, self.reference,
            self.standardizer.transform(encode_frame(designs, schema)),
            self.standardizer.transform(encode_frame(self.held_out, schema)),
            self.metrics, seed,
        )


def condition_embedder(evaluators: EvaluatorBundle):
    for family in evaluators.families:
        if hasattr(family, "embedder"):
            return family.embedder
    raise CycleScoreError("Evaluator bundle has no aesthetics family")


def run_unconditional(generator, bench: Benchmark, scale: str = "desk",
                      workers: Optional[int] = None) -> BenchmarkRun:
    """Score the generator on each seeded condition; the aggregate is their mean.

    A condition whose generation or scoring fails is recorded and skipped;
    the run is then partial.
    """
    settings = bench.settings
    conditions = bench.conditions(settings.n_conditions)
    n = settings.samples_per_condition

    def one(i: int) -> Optional[ScoreSummary]:
        try:
            designs = generator.unconditional(bench.context, conditions[i], n, settings.generator_seed + i)
            if len(designs) == 0:
                raise CycleScoreError("generator returned no designs")
            summary = bench.score(designs.head(n), conditions[i], settings.metric_seed + i)
            logger.info("%s condition %d: validity %.4f, optimality %.4f, similarity %.4f",
                        generator.name, i, summary.validity, summary.optimality, summary.similarity)
            return summary
        except Exception as e:
            logger.error("%s failed on condition %d: %s", generator.name, i, e)
            failures[i] = f"{type(e).__name__}: {e}"
            return None

    failures: Dict[int, str] = {}
    workers = workers or Settings.workers()
    if generator.reentrant and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(one, range(len(conditions))))
    else:
        summaries = [one(i) for i in range(len(conditions))]

    done = [s for s in summaries if s is not None]
    mode = RunMode.BASELINE if generator.name == DatasetGenerator.name else RunMode.UNCONDITIONAL
    return BenchmarkRun(
        mode=mode,
        generator=generator.name,
        scale=scale,
        seeds=settings.seeds,
        per_condition=summaries,
        aggregate=ScoreSummary.mean(done) if done else None,
        reference_point=bench.reference.tolist(),
        substitutes=bench.context.evaluators.substitutes,
        failures=[{"condition": i, "message": failures[i]} for i in sorted(failures)],
    )


def run_conditional(generator, bench: Benchmark, scale: str = "desk") -> BenchmarkRun:
    """One design per seeded condition, scored as a single pooled set."""
    if not generator.conditional_ok:
        raise CycleScoreError(f"Generator {generator.name!r} does not support conditional runs")
    settings = bench.settings
    conditions = bench.conditions(settings.scaled(scale, settings.conditional_cases))
    failures: List[Dict[str, Any]] = []
    summary: Optional[ScoreSummary] = None
    try:
        designs = generator.conditional(bench.context, conditions, settings.generator_seed)
        if len(designs) != len(conditions):
            raise CycleScoreError(f"expected {len(conditions)} designs, got {len(designs)}")
        summary = bench.score(designs, conditions, settings.metric_seed)
    except Exception as e:
        logger.error("%s failed on the conditional run: %s", generator.name, e)
        failures.append({"condition": None, "message": f"{type(e).__name__}: {e}"})
    return BenchmarkRun(
        mode=RunMode.CONDITIONAL,
        generator=generator.name,
        scale=scale,
        seeds=settings.seeds,
        per_condition=[summary],
        aggregate=summary,
        reference_point=bench.reference.tolist(),
        substitutes=bench.context.evaluators.substitutes,
        failures=failures,
    )


def run_benchmark(mode: str, generator_name: str, config: Mapping[str, Any], scale: str = "desk",
                  seed: Optional[int] = None, workers: Optional[int] = None,
                  dataset: Optional[pd.DataFrame] = None) -> BenchmarkRun:
    generator = get_generator(generator_name)
    bench = Benchmark.prepare(config, scale, seed, dataset)
    if RunMode(mode) is RunMode.CONDITIONAL:
        return run_conditional(generator, bench, scale)
    return run_unconditional(generator, bench, scale, workers)


ARROWS = {"validity": "↑", "optimality": "↑", "similarity": "↓"}


def _cells(summary: Optional[ScoreSummary]) -> List[str]:
    if summary is None:
        return ["n/a", "n/a", "n/a"]
    return [f"{100 * summary.validity:.2f}%", f"{summary.optimality:.4f}", f"{summary.similarity:.4f}"]


def report(runs: Union[BenchmarkRun, Sequence[BenchmarkRun]], fmt: str = "table") -> str:
    """Render runs as a markdown table or as sorted-key JSON."""
    runs = [runs] if isinstance(runs, BenchmarkRun) else list(runs)
    if fmt == "structured":
        payload: Any = runs[0].to_dict() if len(runs) == 1 else [r.to_dict() for r in runs]
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if fmt != "table":
        raise CycleScoreError(f"Unknown report format {fmt!r}")

    header = ["Generator", "Mode", "Scale"] + [f"{k.capitalize()} ({ARROWS[k]})" for k in ARROWS]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    notes: List[str] = []
    for run in runs:
        name = run.generator + (" (partial)" if run.partial else "") + ("*" if run.substitutes else "")
        lines.append("| " + " | ".join([name, run.mode.value, run.scale] + _cells(run.aggregate)) + " |")
        seeds = ", ".join(f"{k}={v}" for k, v in sorted(run.seeds.items()))
        notes.append(f"Seeds for {run.generator}/{run.mode.value}: {seeds}")
        if run.partial:
            notes.append(f"PARTIAL: {run.generator} has {len(run.failures)} failed "
                         f"condition(s); the aggregate covers the rest")
    substitutes = sorted({s for run in runs for s in run.substitutes})
    if substitutes:
        notes.append("* Scored with substitute evaluators: " + ", ".join(substitutes))
    return "\n".join(lines + [""] + notes) + "\n"
