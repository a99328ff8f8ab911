"""Conditional context of an evaluation: rider, use case and target embedding."""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from cyclescore.config import resolve_path
from cyclescore.design_space import DesignSchema, sample_frame
from cyclescore.ergonomics import RiderProfile, UseCase
from cyclescore.errors import CycleScoreError
from cyclescore.performance_proxies import Embedder, Embedding

logger = logging.getLogger(__name__)

CLAMP_SIGMAS = 3.0
DEFAULT_RIDERS = {
    "upper_leg": (450.0, 30.0),
    "lower_leg": (500.0, 30.0),
    "arm": (620.0, 40.0),
    "torso": (560.0, 35.0),
    "neck_head": (260.0, 20.0),
    "torso_width": (380.0, 25.0),
}


@dataclass(frozen=True)
class Condition:
    rider: RiderProfile
    use_case: UseCase
    target_embedding: Embedding
    prompt_text: str = ""

    def condition_string(self) -> str:
        r = self.rider
        return (
            f"Rider Body Dimensions: Upper leg length - {r.upper_leg:.0f}, "
            f"Lower leg length - {r.lower_leg:.0f}, Arm length - {r.arm:.0f}, "
            f"Torso length - {r.torso:.0f}, Neck and head length - {r.neck_head:.0f}, "
            f"Torso width - {r.torso_width:.0f}. Use Case: {self.use_case.label}. "
            f"Marketing Description: {self.prompt_text}"
        )

    def with_rider(self, rider: RiderProfile) -> "Condition":
        return Condition(rider, self.use_case, self.target_embedding, self.prompt_text)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rider": self.rider.to_dict(),
            "use_case": self.use_case.value,
            "prompt_text": self.prompt_text,
            "target_embedding": self.target_embedding.data.tolist(),
        }

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "Condition":
        return cls(
            rider=RiderProfile.from_dict(record["rider"]),
            use_case=UseCase(record["use_case"]),
            target_embedding=Embedding(np.asarray(record["target_embedding"], dtype=float)),
            prompt_text=record.get("prompt_text", ""),
        )


@dataclass
class ConditionBatch:
    """Column view of one condition per design row."""
    riders: np.ndarray
    use_cases: List[UseCase]
    targets: np.ndarray

    def __len__(self) -> int:
        return len(self.use_cases)

    @classmethod
    def from_conditions(cls, conditions: Sequence[Condition]) -> "ConditionBatch":
        return cls(
            riders=np.array([c.rider.to_array() for c in conditions]).reshape(-1, 6),
            use_cases=[c.use_case for c in conditions],
            targets=np.array([c.target_embedding.data for c in conditions]),
        )

    @classmethod
    def repeat(cls, condition: Condition, n: int) -> "ConditionBatch":
        return cls(
            riders=np.tile(condition.rider.to_array(), (n, 1)),
            use_cases=[condition.use_case] * n,
            targets=np.tile(condition.target_embedding.data, (n, 1)),
        )

    def subset(self, rows: Sequence[int]) -> "ConditionBatch":
        rows = list(rows)
        return ConditionBatch(self.riders[rows], [self.use_cases[i] for i in rows], self.targets[rows])


@dataclass(frozen=True)
class RiderDistribution:
    """Independent normals per body length, clamped at +-3 sigma."""
    parameters: Mapping[str, Sequence[float]] = field(default_factory=lambda: dict(DEFAULT_RIDERS))

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> "RiderDistribution":
        return cls({**DEFAULT_RIDERS, **config.get("riders", {})})

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        mean = np.array([self.parameters[f][0] for f in RiderProfile.FIELDS], dtype=float)
        std = np.array([self.parameters[f][1] for f in RiderProfile.FIELDS], dtype=float)
        if np.any(mean - CLAMP_SIGMAS * std <= 0):
            raise CycleScoreError("Rider distribution admits non-positive lengths within 3 sigma")
        draws = rng.normal(mean, std, size=(n, len(mean)))
        return np.clip(draws, mean - CLAMP_SIGMAS * std, mean + CLAMP_SIGMAS * std)


def sample_conditions(n: int, seed: int, schema: DesignSchema, embedder: Embedder,
                      riders: RiderDistribution = RiderDistribution(),
                      prompts: Sequence[str] = ("",),
                      target_embeddings: Optional[np.ndarray] = None) -> List[Condition]:
    """`n` seeded conditions.

    Target embeddings are the embeddings of uniformly sampled designs, or rows
    drawn from `target_embeddings` when an external table is given.
    """
    if n < 1:
        raise CycleScoreError(f"Need at least one condition, got {n}")
    rng = np.random.default_rng(seed)
    bodies = riders.sample(rng, n)
    use_cases = list(UseCase)
    picks = rng.integers(0, len(use_cases), size=n)
    prompt_picks = rng.integers(0, len(prompts), size=n)
    if target_embeddings is not None:
        table = np.atleast_2d(np.asarray(target_embeddings, dtype=float))
        targets = table[rng.integers(0, len(table), size=n)]
    else:
        targets = embedder.embed_frame(sample_frame(schema, n, int(rng.integers(2 ** 31))))
    return [
        Condition(
            rider=RiderProfile(*bodies[i]),
            use_case=use_cases[picks[i]],
            target_embedding=Embedding(targets[i]),
            prompt_text=prompts[prompt_picks[i]],
        )
        for i in range(n)
    ]


def read_target_embeddings(path: str | Path) -> np.ndarray:
    """External target embeddings: a CSV with a header row and one embedding per row."""
    try:
        table = pd.read_csv(path).to_numpy(dtype=float)
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise CycleScoreError(f"Cannot read target embeddings from {path}: {e}") from e
    if table.ndim != 2 or len(table) == 0 or not np.all(np.isfinite(table)):
        raise CycleScoreError(f"Target embeddings in {path} must be a non-empty table of finite values")
    return table


def conditions_from_config(n: int, seed: int, schema: DesignSchema, embedder: Embedder,
                           config: Mapping[str, Any]) -> List[Condition]:
    """`sample_conditions` with riders, prompts and target source taken from config.

    `conditions.target_embeddings` names an external embedding CSV; when unset
    targets come from the embedder.
    """
    path = (config.get("conditions") or {}).get("target_embeddings")
    targets = None
    if path:
        targets = read_target_embeddings(resolve_path(path))
        if targets.shape[1] != embedder.dimension:
            raise CycleScoreError(f"Target embeddings have {targets.shape[1]} columns, "
                                  f"the embedder produces {embedder.dimension}")
        logger.info("Drawing target embeddings from %s (%d rows)", path, len(targets))
    return sample_conditions(n, seed, schema, embedder, RiderDistribution.from_config(config),
                             config.get("prompts") or [""], targets)


def write_conditions(path: str | Path, conditions: Sequence[Condition]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump([c.to_dict() for c in conditions], f, indent=2)


def read_conditions(path: str | Path) -> List[Condition]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            records = json.load(f)
        return [Condition.from_dict(r) for r in records]
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as e:
        raise CycleScoreError(f"Cannot read conditions from {path}: {e}") from e
