"""Optimization baselines for the unconditional problem.

`nsga2` evolves designs on their native mixed datatypes with constraint
domination; `grad_penalty_descent` minimises the weighted aggregate plus a
squared-hinge penalty over the one-hot relaxation; `random_search` is the
equal-budget sampling reference.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from pymoo.util.nds.non_dominated_sorting import NonDominatedSorting  # type: ignore

from cyclescore.conditions import Condition, ConditionBatch
from cyclescore.design_space import (
    Design, DesignSchema, ParameterKind, coerce_frame, decode_matrix, frame_to_designs,
    read_designs_csv, sample_frame, write_designs_csv,
)
from cyclescore.errors import OptimizationError
from cyclescore.evaluation import CONSTRAINTS, OBJECTIVES, BatchEvaluation, EvaluatorBundle
from cyclescore.metrics import valid_mask
from cyclescore.scoring import PenaltyParams, Weights, aggregate_quality

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Problem:
    schema: DesignSchema
    evaluators: EvaluatorBundle
    condition: Condition
    weights: Weights = field(default_factory=Weights.unit)
    penalty: PenaltyParams = PenaltyParams()

    n_objectives = len(OBJECTIVES)
    n_constraints = len(CONSTRAINTS)

    def evaluate(self, frame: pd.DataFrame) -> BatchEvaluation:
        return self.evaluators.evaluate_frame(frame, ConditionBatch.repeat(self.condition, len(frame)))

    def violation(self, result: BatchEvaluation) -> np.ndarray:
        """Total weighted violation; +inf when any criterion failed."""
        with np.errstate(invalid="ignore"):
            cv = np.maximum(result.constraints / self.weights.constraint_weights, 0.0).sum(axis=1)
        broken = (~np.isfinite(cv) | ~np.all(np.isfinite(result.objectives), axis=1)
                  | ~np.all(np.isfinite(result.constraints), axis=1) | result.invalid)
        return np.where(broken, np.inf, cv)

    def scores(self, result: BatchEvaluation) -> np.ndarray:
        return np.atleast_1d(aggregate_quality(result.objectives, result.constraints,
                                               self.weights, self.penalty))

    def population(self, frame: pd.DataFrame, **kwargs) -> "Population":
        frame = coerce_frame(frame, self.schema)
        result = self.evaluate(frame)
        return Population(frame, result.objectives, result.constraints, self.scores(result),
                          invalid=result.invalid, evaluations=len(frame), **kwargs)


@dataclass
class Population:
    designs: pd.DataFrame
    objectives: np.ndarray
    constraints: np.ndarray
    scores: np.ndarray
    generation: int = 0
    seed: Optional[int] = None
    aborted: bool = False
    evaluations: int = 0
    invalid: Optional[np.ndarray] = None
    restarts: List[Dict[str, int]] = field(default_factory=list)
    archive: Optional["Population"] = None

    def __len__(self) -> int:
        return len(self.designs)

    @property
    def feasible(self) -> np.ndarray:
        mask = valid_mask(self.constraints) if len(self) else np.zeros(0, dtype=bool)
        mask = mask & np.all(np.isfinite(self.objectives), axis=1)
        if self.invalid is not None:
            mask = mask & ~self.invalid
        return mask

    def best_feasible_score(self) -> float:
        feasible = self.feasible
        return float(self.scores[feasible].min()) if feasible.any() else float("inf")

    def to_designs(self, schema: DesignSchema) -> List[Design]:
        return frame_to_designs(self.designs, schema)

    @classmethod
    def empty(cls, schema: DesignSchema, **kwargs) -> "Population":
        return cls(pd.DataFrame(columns=schema.names), np.zeros((0, len(OBJECTIVES))),
                   np.zeros((0, len(CONSTRAINTS))), np.zeros(0), **kwargs)


def nondominated_sort(points, violations) -> List[np.ndarray]:
    """Fronts under constraint domination, best first.

    Feasible points (violation 0) are ranked by Pareto dominance; infeasible
    points follow, grouped by equal total violation in increasing order.
    """
    F = np.atleast_2d(np.asarray(points, dtype=float))
    cv = np.asarray(violations, dtype=float).reshape(-1)
    if len(F) != len(cv):
        raise OptimizationError(f"{len(F)} points but {len(cv)} violation values")
    cv = np.where(np.isnan(cv), np.inf, cv)
    feasible = np.flatnonzero(cv <= 0)
    fronts: List[np.ndarray] = []
    if len(feasible) == 1:
        fronts.append(feasible)
    elif len(feasible) > 1:
        for front in NonDominatedSorting().do(F[feasible]):
            fronts.append(feasible[np.sort(np.asarray(front, dtype=int))])
    infeasible = np.flatnonzero(cv > 0)
    for value in np.unique(cv[infeasible]):
        fronts.append(infeasible[cv[infeasible] == value])
    return fronts


def crowding_distance(front) -> np.ndarray:
    F = np.atleast_2d(np.asarray(front, dtype=float))
    n, m = F.shape
    if n <= 2:
        return np.full(n, np.inf)
    distance = np.zeros(n)
    for j in range(m):
        order = np.argsort(F[:, j], kind="stable")
        values = F[order, j]
        span = values[-1] - values[0]
        distance[order[0]] = distance[order[-1]] = np.inf
        if span > 0:
            distance[order[1:-1]] += (values[2:] - values[:-2]) / span
    return np.nan_to_num(distance, nan=0.0, posinf=np.inf)


def rank_and_crowding(F: np.ndarray, cv: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    rank = np.zeros(len(F), dtype=int)
    crowd = np.zeros(len(F))
    for r, front in enumerate(nondominated_sort(F, cv)):
        rank[front] = r
        crowd[front] = crowding_distance(F[front])
    return rank, crowd


class GenomeCodec:
    """Splits a design table into numeric, boolean and categorical-code blocks."""

    def __init__(self, schema: DesignSchema):
        self.schema = schema
        self.numeric = [p for p in schema if p.is_numeric]
        self.booleans = [p for p in schema if p.kind is ParameterKind.BOOLEAN]
        self.categoricals = [p for p in schema if p.kind is ParameterKind.CATEGORICAL]
        self.lower = np.array([p.lower for p in self.numeric])
        self.upper = np.array([p.upper for p in self.numeric])
        self.integer = np.array([p.kind is ParameterKind.INTEGER for p in self.numeric])
        self.widths = np.array([p.width for p in self.categoricals])

    def split(self, frame: pd.DataFrame) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        frame = coerce_frame(frame, self.schema)
        numeric = frame[[p.name for p in self.numeric]].to_numpy(dtype=float)
        booleans = frame[[p.name for p in self.booleans]].to_numpy(dtype=bool)
        codes = np.column_stack([
            pd.Categorical(frame[p.name], categories=list(p.categories)).codes
            for p in self.categoricals
        ]).astype(int)
        return numeric, booleans, codes

    def join(self, numeric: np.ndarray, booleans: np.ndarray, codes: np.ndarray) -> pd.DataFrame:
        numeric = np.clip(numeric, self.lower, self.upper)
        numeric[:, self.integer] = np.clip(
            np.sign(numeric[:, self.integer]) * np.floor(np.abs(numeric[:, self.integer]) + 0.5),
            self.lower[self.integer], self.upper[self.integer])
        columns: Dict[str, Any] = {}
        for i, p in enumerate(self.numeric):
            columns[p.name] = numeric[:, i]
        for i, p in enumerate(self.booleans):
            columns[p.name] = booleans[:, i]
        for i, p in enumerate(self.categoricals):
            columns[p.name] = np.array(p.categories, dtype=object)[codes[:, i]]
        return coerce_frame(pd.DataFrame(columns), self.schema)


def sbx_crossover(a: np.ndarray, b: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                  eta: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Bounded simulated binary crossover, each variable crossed with probability 0.5."""
    y1, y2 = np.minimum(a, b), np.maximum(a, b)
    span = np.maximum(y2 - y1, 1e-14)
    rand = rng.random(a.shape)

    def spread(beta: np.ndarray) -> np.ndarray:
        alpha = 2.0 - beta ** -(eta + 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(rand <= 1.0 / alpha, (rand * alpha) ** (1.0 / (eta + 1.0)),
                            (1.0 / (2.0 - rand * alpha)) ** (1.0 / (eta + 1.0)))

    low = 0.5 * (y1 + y2 - spread(1.0 + 2.0 * (y1 - lower) / span) * span)
    high = 0.5 * (y1 + y2 + spread(1.0 + 2.0 * (upper - y2) / span) * span)
    active = (rng.random(a.shape) < 0.5) & (np.abs(a - b) > 1e-14)
    swap = rng.random(a.shape) < 0.5
    c1 = np.where(active, np.where(swap, high, low), a)
    c2 = np.where(active, np.where(swap, low, high), b)
    return np.clip(c1, lower, upper), np.clip(c2, lower, upper)


def polynomial_mutation(x: np.ndarray, lower: np.ndarray, upper: np.ndarray, eta: float,
                        prob: float, rng: np.random.Generator) -> np.ndarray:
    span = upper - lower
    mutate = rng.random(x.shape) < prob
    r = rng.random(x.shape)
    power = 1.0 / (eta + 1.0)
    d1 = (x - lower) / span
    d2 = (upper - x) / span
    low = (2 * r + (1 - 2 * r) * (1 - d1) ** (eta + 1)) ** power - 1
    high = 1 - (2 * (1 - r) + 2 * (r - 0.5) * (1 - d2) ** (eta + 1)) ** power
    delta = np.where(r < 0.5, low, high)
    return np.clip(np.where(mutate, x + delta * span, x), lower, upper)


@dataclass(frozen=True)
class NSGA2Settings:
    pop_size: int = 100
    generations: int = 200
    crossover_prob: float = 0.9
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    mutation_prob: Optional[float] = None
    init: str = "uniform"
    archive_size: Optional[int] = None
    checkpoint_dir: Optional[str] = None
    log_every: int = 20

    def __post_init__(self):
        if self.pop_size < 2 or self.pop_size % 2:
            raise OptimizationError(f"pop_size must be even and >= 2, got {self.pop_size}")
        if self.init not in ("uniform", "dataset"):
            raise OptimizationError(f"Unknown init {self.init!r}")
        if self.archive_size is not None and self.archive_size < 1:
            raise OptimizationError(f"archive_size must be positive, got {self.archive_size}")

    @classmethod
    def from_config(cls, config: Mapping[str, Any], **overrides) -> "NSGA2Settings":
        return cls(**{**config.get("nsga2", {}), **overrides})


def _tournament(rank: np.ndarray, crowd: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.integers(0, len(rank), size=n)
    b = rng.integers(0, len(rank), size=n)
    a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] > crowd[b]))
    tie = (rank[a] == rank[b]) & (crowd[a] == crowd[b])
    return np.where(a_wins | (tie & (rng.random(n) < 0.5)), a, b)


def make_offspring(codec: GenomeCodec, designs: pd.DataFrame, parents: np.ndarray,
                   settings: NSGA2Settings, rng: np.random.Generator) -> pd.DataFrame:
    numeric, booleans, codes = codec.split(designs)
    p1, p2 = parents[0::2], parents[1::2]
    cross = rng.random(len(p1)) < settings.crossover_prob

    c1, c2 = sbx_crossover(numeric[p1], numeric[p2], codec.lower, codec.upper, settings.sbx_eta, rng)
    num = np.vstack([np.where(cross[:, None], c1, numeric[p1]),
                     np.where(cross[:, None], c2, numeric[p2])])

    def uniform(block: np.ndarray) -> np.ndarray:
        swap = (rng.random((len(p1), block.shape[1])) < 0.5) & cross[:, None]
        return np.vstack([np.where(swap, block[p2], block[p1]), np.where(swap, block[p1], block[p2])])

    bools = uniform(booleans)
    cats = uniform(codes)

    prob = settings.mutation_prob or 1.0 / len(codec.schema)
    num = polynomial_mutation(num, codec.lower, codec.upper, settings.mutation_eta, prob, rng)
    bools = bools ^ (rng.random(bools.shape) < prob)
    resample = (rng.random(cats.shape) < prob) & (codec.widths > 1)
    shift = rng.integers(1, np.maximum(codec.widths, 2), size=cats.shape)
    cats = np.where(resample, (cats + shift) % codec.widths, cats)
    return codec.join(num, bools, cats)


def _survivors(F: np.ndarray, cv: np.ndarray, scores: np.ndarray, n: int) -> np.ndarray:
    chosen: List[int] = []
    for front in nondominated_sort(F, cv):
        if len(chosen) + len(front) <= n:
            chosen.extend(front.tolist())
            continue
        order = np.argsort(-crowding_distance(F[front]), kind="stable")
        chosen.extend(front[order[:n - len(chosen)]].tolist())
        break
    keep = np.array(chosen, dtype=int)
    feasible = np.flatnonzero(cv <= 0)
    if feasible.size:
        best = feasible[np.argmin(scores[feasible])]
        if best not in keep:
            keep[-1] = best
    return keep


def latest_checkpoint(directory: str | Path) -> Optional[int]:
    generations = [int(p.stem.split("_")[1]) for p in Path(directory).glob("gen_*.json")]
    return max(generations) if generations else None


def _archive_path(directory: Path, generation: int) -> Path:
    return directory / f"gen_{generation:04d}_archive.csv"


def _write_checkpoint(directory: Path, population: Population, schema: DesignSchema,
                      rng: np.random.Generator) -> None:
    stem = directory / f"gen_{population.generation:04d}"
    write_designs_csv(population.designs, stem.with_suffix(".csv"), schema)
    if population.archive is not None:
        write_designs_csv(population.archive.designs, _archive_path(directory, population.generation), schema)
    with open(stem.with_suffix(".json"), "w", encoding="utf-8") as f:
        json.dump({"generation": population.generation, "seed": population.seed,
                   "evaluations": population.evaluations,
                   "rng_state": rng.bit_generator.state}, f)


def _initial_designs(problem: Problem, settings: NSGA2Settings, rng: np.random.Generator,
                     dataset: Optional[pd.DataFrame]) -> pd.DataFrame:
    if settings.init == "dataset":
        if dataset is None or len(dataset) == 0:
            raise OptimizationError("init='dataset' needs a non-empty dataset")
        rows = rng.choice(len(dataset), settings.pop_size, replace=len(dataset) < settings.pop_size)
        return coerce_frame(dataset.iloc[rows], problem.schema)
    return sample_frame(problem.schema, settings.pop_size, int(rng.integers(2 ** 31)))


def _select(population: Population, keep: np.ndarray, **kwargs) -> Population:
    return Population(
        designs=population.designs.iloc[keep].reset_index(drop=True),
        objectives=population.objectives[keep],
        constraints=population.constraints[keep],
        scores=population.scores[keep],
        invalid=None if population.invalid is None else population.invalid[keep],
        **kwargs,
    )


def _merge(a: Population, b: Population, **kwargs) -> Population:
    if len(a) == 0 or len(b) == 0:
        keep = b if len(a) == 0 else a
        return _select(keep, np.arange(len(keep)), **kwargs)
    return Population(
        designs=pd.concat([a.designs, b.designs], ignore_index=True),
        objectives=np.vstack([a.objectives, b.objectives]),
        constraints=np.vstack([a.constraints, b.constraints]),
        scores=np.concatenate([a.scores, b.scores]),
        invalid=np.concatenate([_invalid(a), _invalid(b)]),
        **kwargs,
    )


def update_archive(archive: Population, candidates: Population, capacity: int) -> Population:
    """Feasible non-dominated designs seen so far.

    Duplicate objective vectors are kept once. Beyond `capacity` the front is
    thinned by crowding distance, extremes first.
    """
    pool = _merge(archive, _select(candidates, np.flatnonzero(candidates.feasible)))
    if len(pool) == 0:
        return pool
    _, first = np.unique(pool.objectives, axis=0, return_index=True)
    pool = _select(pool, np.sort(first))
    keep = np.arange(len(pool))
    if len(pool) > 1:
        keep = np.sort(np.asarray(NonDominatedSorting().do(pool.objectives, only_non_dominated_front=True),
                                  dtype=int))
    if len(keep) > capacity:
        order = np.argsort(-crowding_distance(pool.objectives[keep]), kind="stable")
        keep = np.sort(keep[order[:capacity]])
    return _select(pool, keep)


def nsga2(problem: Problem, settings: NSGA2Settings = NSGA2Settings(), seed: int = 0,
          dataset: Optional[pd.DataFrame] = None, resume: bool = False) -> Population:
    """Mixed-variable NSGA-II with (mu + lambda) survival.

    Alongside the population the run keeps `archive`: every feasible
    non-dominated design evaluated so far, capped at `settings.archive_size`
    (default `pop_size`). With `settings.checkpoint_dir` set, every generation
    is written as gen_XXXX.csv / gen_XXXX.json / gen_XXXX_archive.csv;
    `resume=True` continues from the latest one. An evaluator failure stops
    the run and returns the last complete population flagged `aborted`.
    """
    rng = np.random.default_rng(seed)
    codec = GenomeCodec(problem.schema)
    checkpoints = Path(settings.checkpoint_dir) if settings.checkpoint_dir else None
    capacity = settings.archive_size or settings.pop_size
    start = 0
    evaluations = 0
    archive_designs: Optional[pd.DataFrame] = None
    if resume and checkpoints is not None and latest_checkpoint(checkpoints) is not None:
        start = latest_checkpoint(checkpoints)
        stem = checkpoints / f"gen_{start:04d}"
        with open(stem.with_suffix(".json"), "r", encoding="utf-8") as f:
            meta = json.load(f)
        rng.bit_generator.state = meta["rng_state"]
        evaluations = int(meta.get("evaluations", 0))
        designs = read_designs_csv(stem.with_suffix(".csv"), problem.schema)
        if _archive_path(checkpoints, start).exists():
            archive_designs = read_designs_csv(_archive_path(checkpoints, start), problem.schema)
        logger.info("Resuming NSGA-II from generation %d", start)
    else:
        designs = _initial_designs(problem, settings, rng, dataset)

    try:
        population = problem.population(designs, generation=start, seed=seed)
        if archive_designs is None:
            archive = update_archive(Population.empty(problem.schema), population, capacity)
        elif len(archive_designs):
            archive = problem.population(archive_designs)
        else:
            archive = Population.empty(problem.schema)
    except Exception as e:
        logger.error("Initial evaluation failed: %s", e)
        return Population.empty(problem.schema, generation=start, seed=seed, aborted=True)
    population.evaluations = evaluations or len(designs)
    population.archive = archive
    if checkpoints is not None and start == 0:
        checkpoints.mkdir(parents=True, exist_ok=True)
        _write_checkpoint(checkpoints, population, problem.schema, rng)

    for generation in range(start + 1, settings.generations + 1):
        cv = problem.violation(BatchEvaluation(population.objectives, population.constraints,
                                               _invalid(population)))
        rank, crowd = rank_and_crowding(population.objectives, cv)
        parents = _tournament(rank, crowd, settings.pop_size, rng)
        children = make_offspring(codec, population.designs, parents, settings, rng)
        try:
            offspring = problem.population(children)
        except Exception as e:
            logger.error("Evaluation failed at generation %d: %s", generation, e)
            population.aborted = True
            return population

        archive = update_archive(archive, offspring, capacity)
        merged = _merge(population, offspring)
        merged_cv = problem.violation(BatchEvaluation(merged.objectives, merged.constraints,
                                                      merged.invalid))
        keep = _survivors(merged.objectives, merged_cv, merged.scores, settings.pop_size)
        population = _select(merged, keep, generation=generation, seed=seed,
                             evaluations=population.evaluations + len(offspring), archive=archive)

        if checkpoints is not None:
            _write_checkpoint(checkpoints, population, problem.schema, rng)
        if settings.log_every and generation % settings.log_every == 0:
            logger.info("NSGA-II gen %d: best feasible aggregate %.4f, feasible %.2f, archive %d",
                        generation, population.best_feasible_score(), population.feasible.mean(),
                        len(archive))
    return population


def _invalid(population: Population) -> np.ndarray:
    if population.invalid is None:
        return np.zeros(len(population), dtype=bool)
    return population.invalid


def random_search(problem: Problem, n: int, seed: int = 0) -> Population:
    """`n` uniformly sampled designs, evaluated once."""
    return problem.population(sample_frame(problem.schema, n, seed), seed=seed)


@dataclass(frozen=True)
class GradSettings:
    starts: int = 100
    steps: int = 150
    learning_rate: float = 0.05
    penalty_weight: float = 1000.0
    constraint_margin: float = 0.05
    fd_step: float = 1e-4
    max_backtracks: int = 6
    max_restarts: int = 5
    log_every: int = 25

    @classmethod
    def from_config(cls, config: Mapping[str, Any], **overrides) -> "GradSettings":
        return cls(**{**config.get("grad", {}), **overrides})


@dataclass
class DescentResult:
    z: np.ndarray
    loss: np.ndarray
    history: np.ndarray
    restarts: List[Dict[str, int]] = field(default_factory=list)


LossFn = Callable[[np.ndarray], np.ndarray]


def fd_gradient(loss_fn: LossFn, z: np.ndarray, active: np.ndarray, h: float) -> np.ndarray:
    """Central differences on the `active` coordinates, all chains in one batch."""
    k, d = z.shape
    a = len(active)
    plus = np.repeat(z[None, :, :], a, axis=0)
    minus = plus.copy()
    plus[np.arange(a), :, active] += h
    minus[np.arange(a), :, active] -= h
    values = np.asarray(loss_fn(np.vstack([plus.reshape(-1, d), minus.reshape(-1, d)])), dtype=float)
    f_plus = values[:a * k].reshape(a, k)
    f_minus = values[a * k:].reshape(a, k)
    grad = np.zeros((k, d))
    grad[:, active] = ((f_plus - f_minus) / (2 * h)).T
    grad[~np.isfinite(grad)] = 0.0
    return grad


def penalty_descent(loss_fn: LossFn, z0: np.ndarray, settings: GradSettings,
                    rng: np.random.Generator, active: Optional[np.ndarray] = None) -> DescentResult:
    """Projected descent in the unit box with backtracking.

    Each step moves every active coordinate by at most the current step size
    along the normalised negative gradient; a step is accepted only if the
    loss does not increase. Chains whose loss is non-finite restart from a
    fresh uniform point.
    """
    z = np.clip(np.atleast_2d(np.asarray(z0, dtype=float)), 0.0, 1.0)
    k, d = z.shape
    active = np.arange(d) if active is None else np.flatnonzero(active) if active.dtype == bool else active
    restarts: List[Dict[str, int]] = []
    attempts = np.zeros(k, dtype=int)
    loss = np.asarray(loss_fn(z), dtype=float)

    def restart(step: int) -> None:
        nonlocal loss
        bad = np.flatnonzero(~np.isfinite(loss) & (attempts < settings.max_restarts))
        while bad.size:
            for chain in bad:
                restarts.append({"chain": int(chain), "step": step})
            attempts[bad] += 1
            z[bad] = rng.random((len(bad), d))
            loss[bad] = np.asarray(loss_fn(z[bad]), dtype=float)
            bad = np.flatnonzero(~np.isfinite(loss) & (attempts < settings.max_restarts))

    restart(0)
    history = [loss.copy()]
    for step in range(1, settings.steps + 1):
        grad = fd_gradient(loss_fn, z, active, settings.fd_step)
        scale = np.abs(grad).max(axis=1, keepdims=True)
        direction = np.where(scale > 0, grad / np.where(scale > 0, scale, 1.0), 0.0)
        pending = (scale[:, 0] > 0) & np.isfinite(loss)
        size = np.full(k, settings.learning_rate)
        for _ in range(settings.max_backtracks + 1):
            rows = np.flatnonzero(pending)
            if not rows.size:
                break
            trial = np.clip(z[rows] - size[rows, None] * direction[rows], 0.0, 1.0)
            trial_loss = np.asarray(loss_fn(trial), dtype=float)
            accepted = np.isfinite(trial_loss) & (trial_loss <= loss[rows])
            z[rows[accepted]] = trial[accepted]
            loss[rows[accepted]] = trial_loss[accepted]
            pending[rows[accepted]] = False
            size[rows[~accepted]] /= 2
        restart(step)
        history.append(loss.copy())
        if settings.log_every and step % settings.log_every == 0:
            logger.info("Penalty descent step %d: median loss %.4f", step, float(np.median(loss)))
    return DescentResult(z, loss, np.array(history), restarts)


def relaxed_loss(problem: Problem, settings: GradSettings) -> LossFn:
    """Aggregate objective plus weighted squared hinge on normalised constraints."""
    lower, upper = problem.schema.relaxed_bounds()
    w = problem.weights

    def loss(z: np.ndarray) -> np.ndarray:
        frame = decode_matrix(lower + np.atleast_2d(z) * (upper - lower), problem.schema)
        result = problem.evaluate(frame)
        objective = (result.objectives / w.objective_weights).sum(axis=1)
        hinge = np.maximum(result.constraints / w.constraint_weights + settings.constraint_margin, 0.0)
        value = objective + settings.penalty_weight * (hinge ** 2).sum(axis=1)
        return np.where(result.invalid, np.nan, value)

    return loss


def grad_penalty_descent(problem: Problem, settings: GradSettings = GradSettings(),
                         seed: int = 0) -> Population:
    """Multi-start penalty descent; the decoded final points form the population.

    Only continuous parameters are moved; integer, boolean and categorical
    slots keep the values of each chain's random start. Those slots decode by
    rounding or argmax, so a finite-difference step inside one decoded cell
    leaves the loss unchanged and their gradient is zero almost everywhere.
    """
    rng = np.random.default_rng(seed)
    schema = problem.schema
    active = np.zeros(schema.continuous_dim, dtype=bool)
    for spec in schema.of_kind(ParameterKind.CONTINUOUS):
        active[schema.slot(spec.name)] = True
    z0 = rng.random((settings.starts, schema.continuous_dim))
    result = penalty_descent(relaxed_loss(problem, settings), z0, settings, rng, active)
    if result.restarts:
        logger.warning("Penalty descent restarted %d chains", len(result.restarts))
    lower, upper = schema.relaxed_bounds()
    designs = decode_matrix(lower + result.z * (upper - lower), schema)
    population = problem.population(designs, generation=settings.steps, seed=seed,
                                    restarts=result.restarts)
    return population
