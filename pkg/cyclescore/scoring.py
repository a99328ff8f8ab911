"""Aggregate quality: calibrated weights, the smooth constraint penalty and
the scalar score (lower is better)."""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from cyclescore.errors import CycleScoreError

logger = logging.getLogger(__name__)

N_OBJECTIVES = 10
N_CONSTRAINTS = 15
WEIGHT_FLOOR = np.finfo(float).eps


@dataclass(frozen=True)
class PenaltyParams:
    alpha: float = 10.0
    beta: float = 10.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Penalty parameters must be positive, got alpha={self.alpha}, beta={self.beta}")

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> "PenaltyParams":
        return cls(**config.get("scoring", {}))


@dataclass(frozen=True)
class Weights:
    objective_weights: np.ndarray
    constraint_weights: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        for name in ("objective_weights", "constraint_weights"):
            values = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(values) & (values > 0)):
                raise ValueError(f"{name} must be finite and strictly positive")
            object.__setattr__(self, name, values)

    @classmethod
    def unit(cls, n_objectives: int = N_OBJECTIVES, n_constraints: int = N_CONSTRAINTS) -> "Weights":
        return cls(np.ones(n_objectives), np.ones(n_constraints))

    def to_dict(self) -> dict:
        return {
            "objective_weights": self.objective_weights.tolist(),
            "constraint_weights": self.constraint_weights.tolist(),
            "seed": self.seed,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "Weights":
        try:
            with open(path, "r", encoding="utf-8") as f:
                record = json.load(f)
            return cls(np.array(record["objective_weights"]), np.array(record["constraint_weights"]),
                       record.get("seed"))
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise CycleScoreError(f"Cannot read weights file {path}: {e}") from e


def weights_from_values(objectives: np.ndarray, constraints: np.ndarray,
                        seed: Optional[int] = None) -> Weights:
    """Mean absolute value per column, floored at machine epsilon."""
    objectives = np.atleast_2d(np.asarray(objectives, dtype=float))
    constraints = np.atleast_2d(np.asarray(constraints, dtype=float))
    if objectives.shape[0] == 0:
        raise CycleScoreError("Cannot calibrate weights on an empty dataset")
    w_o = np.maximum(np.nanmean(np.abs(objectives), axis=0), WEIGHT_FLOOR)
    w_c = np.maximum(np.nanmean(np.abs(constraints), axis=0), WEIGHT_FLOOR)
    # all-NaN or infinite columns carry no scale information
    w_o = np.where(np.isfinite(w_o), w_o, 1.0)
    w_c = np.where(np.isfinite(w_c), w_c, 1.0)
    return Weights(w_o, w_c, seed)


def calibrate_weights(dataset, conditions: Sequence, evaluator, seed: Optional[int] = None) -> Weights:
    """Weights from evaluating each dataset design under its paired condition.

    `dataset` is a design table, `conditions` holds one condition per row and
    `evaluator` is anything with `evaluate_frame(frame, conditions)` returning
    objective and constraint matrices.
    """
    if len(dataset) == 0:
        raise CycleScoreError("Cannot calibrate weights on an empty dataset")
    if len(conditions) != len(dataset):
        raise CycleScoreError(f"Need one condition per design, got {len(conditions)} for {len(dataset)}")
    result = evaluator.evaluate_frame(dataset, conditions)
    weights = weights_from_values(result.objectives, result.constraints, seed)
    logger.info("Calibrated weights on %d designs", len(dataset))
    return weights


def penalty_g(x, p: PenaltyParams = PenaltyParams()):
    """alpha e^(beta x)/beta below zero, alpha (x + 1/beta) above; C1 at zero."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        below = p.alpha * np.exp(p.beta * np.minimum(x, 0.0)) / p.beta
    result = np.where(x <= 0, below, p.alpha * (x + 1.0 / p.beta))
    return float(result) if result.ndim == 0 else result


def aggregate_quality(objectives, constraints, w: Weights, p: PenaltyParams = PenaltyParams()):
    """s = sum o/w_o + sum g(c/w_c).

    Accepts one design (vectors) or a batch ((n, 10), (n, 15)). Non-finite
    inputs give a non-finite score.
    """
    objectives = np.asarray(objectives, dtype=float)
    constraints = np.asarray(constraints, dtype=float)
    single = objectives.ndim == 1
    objectives = np.atleast_2d(objectives)
    constraints = np.atleast_2d(constraints)
    with np.errstate(invalid="ignore"):
        score = (objectives / w.objective_weights).sum(axis=1) \
            + np.asarray(penalty_g(constraints / w.constraint_weights, p)).reshape(constraints.shape).sum(axis=1)
    return float(score[0]) if single else score
