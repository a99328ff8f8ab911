"""Full-design evaluation: 10 objectives and 15 signed constraint margins.

An EvaluatorBundle dispatches a design table to every evaluator family. A
family that fails on a batch is retried row by row so one bad design cannot
take down its neighbours; rows that still fail get NaN for that family's
criteria and are flagged invalid.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from cyclescore.conditions import Condition, ConditionBatch
from cyclescore.config import resolve_path
from cyclescore.design_space import DesignSchema, coerce_frame, validate
from cyclescore.ergonomics import ErgonomicsConfig, ergonomic_frame, interface_frame
from cyclescore.errors import CycleScoreError, DesignError
from cyclescore.geometry_constraints import (
    FRAME_VALIDITY, GEOMETRIC_CHECKS, FrameClosureProxy, FrameValidityClassifier, GeometryConfig,
    geometric_frame,
)
from cyclescore.performance_proxies import (
    COSINE_DISTANCE, DRAG, ECCENTRIC_COMPLIANCE, ECCENTRIC_SF, MASS, PLANAR_COMPLIANCE, PLANAR_SF,
    TRANSVERSE_COMPLIANCE, USABILITY, AeroConfig, AestheticsEvaluator, DragProxy, Embedder, Evaluator,
    LinearEmbedder, MaterialTable, PrecomputedEmbedder, StructuralLoads, StructuralProxy, UsabilityProxy,
    UsabilityWeights,
)

logger = logging.getLogger(__name__)

KNEE_ERROR = "Knee Angle Error"
HIP_ERROR = "Hip Angle Error"
ARM_ERROR = "Arm Angle Error"

OBJECTIVES = (
    USABILITY, DRAG, KNEE_ERROR, HIP_ERROR, ARM_ERROR, COSINE_DISTANCE,
    MASS, PLANAR_COMPLIANCE, TRANSVERSE_COMPLIANCE, ECCENTRIC_COMPLIANCE,
)
CONSTRAINTS = (PLANAR_SF, ECCENTRIC_SF) + GEOMETRIC_CHECKS + (FRAME_VALIDITY,)

ConditionsLike = Union[Condition, Sequence[Condition], ConditionBatch]


class ErgonomicsEvaluator:
    outputs = (KNEE_ERROR, HIP_ERROR, ARM_ERROR)
    substitute = False

    def __init__(self, config: ErgonomicsConfig = ErgonomicsConfig()):
        self.config = config

    def evaluate(self, frame: pd.DataFrame, conditions: ConditionBatch) -> pd.DataFrame:
        points = interface_frame(frame, self.config)
        result = ergonomic_frame(points, conditions.riders, conditions.use_cases, self.config)
        return pd.DataFrame({KNEE_ERROR: result["knee_error"].to_numpy(),
                             HIP_ERROR: result["hip_error"].to_numpy(),
                             ARM_ERROR: result["arm_error"].to_numpy()}, index=frame.index)


class GeometryEvaluator:
    """Closed-form checks plus the frame-validity classifier.

    Only the classifier column can be a substitute.
    """
    outputs = GEOMETRIC_CHECKS + (FRAME_VALIDITY,)

    def __init__(self, config: GeometryConfig = GeometryConfig(),
                 classifier: Optional[FrameValidityClassifier] = None):
        self.config = config
        self.classifier = classifier or FrameClosureProxy(config)
        self.substitute = bool(getattr(self.classifier, "substitute", False))
        self.substitute_outputs = (FRAME_VALIDITY,) if self.substitute else ()

    def evaluate(self, frame: pd.DataFrame, conditions: Any = None) -> pd.DataFrame:
        result = geometric_frame(frame, self.config)
        margin = np.asarray(self.classifier.classify(frame), dtype=float).reshape(-1)
        result[FRAME_VALIDITY] = np.where(np.isfinite(margin), margin, np.inf)
        return result


@dataclass
class EvaluationReport:
    objectives: Dict[str, float]
    constraints: Dict[str, float]
    provenance: Dict[str, str] = field(default_factory=dict)
    invalid: bool = False
    failing_criterion: Optional[str] = None
    diagnostic: str = ""

    @property
    def satisfied(self) -> bool:
        return all(v <= 0 for v in self.constraints.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "objectives": self.objectives,
            "constraints": self.constraints,
            "provenance": self.provenance,
            "invalid": self.invalid,
            "failing_criterion": self.failing_criterion,
            "diagnostic": self.diagnostic,
        }


@dataclass
class Failure:
    row: int
    criterion: str
    message: str


@dataclass
class BatchEvaluation:
    objectives: np.ndarray
    constraints: np.ndarray
    invalid: np.ndarray
    failures: List[Failure] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.invalid)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(np.hstack([self.objectives, self.constraints]),
                             columns=list(OBJECTIVES + CONSTRAINTS))
        frame["invalid"] = self.invalid
        return frame

    def reports(self, provenance: Mapping[str, str]) -> List[EvaluationReport]:
        first_failure: Dict[int, Failure] = {}
        for failure in self.failures:
            first_failure.setdefault(failure.row, failure)
        reports = []
        for i in range(len(self)):
            failure = first_failure.get(i)
            reports.append(EvaluationReport(
                objectives=dict(zip(OBJECTIVES, map(float, self.objectives[i]))),
                constraints=dict(zip(CONSTRAINTS, map(float, self.constraints[i]))),
                provenance=dict(provenance),
                invalid=bool(self.invalid[i]),
                failing_criterion=failure.criterion if failure else None,
                diagnostic=failure.message if failure else "",
            ))
        return reports


def substituted_outputs(family: Evaluator) -> Tuple[str, ...]:
    """Criteria a family computes with a substitute model."""
    explicit = getattr(family, "substitute_outputs", None)
    if explicit is not None:
        return tuple(explicit)
    return tuple(family.outputs) if family.substitute else ()


def embedder_from_config(schema: DesignSchema, config: Mapping[str, Any]) -> Embedder:
    """`evaluators.embedder.kind`: `linear` (seeded projection) or `precomputed`.

    `precomputed` reads `designs_csv` and `embeddings_csv`, aligned row by row.
    """
    selection = (config.get("evaluators") or {}).get("embedder") or {}
    kind = selection.get("kind", "linear")
    if kind == "linear":
        aesthetics = config.get("aesthetics", {})
        return LinearEmbedder(schema, int(aesthetics.get("embedding_dim", 512)),
                              int(aesthetics.get("embedder_seed", 0)))
    if kind == "precomputed":
        designs, embeddings = selection.get("designs_csv"), selection.get("embeddings_csv")
        if not designs or not embeddings:
            raise CycleScoreError("The precomputed embedder needs designs_csv and embeddings_csv")
        logger.info("Using precomputed embeddings from %s", embeddings)
        return PrecomputedEmbedder.from_files(schema, resolve_path(designs), resolve_path(embeddings))
    raise CycleScoreError(f"Unknown embedder kind {kind!r}; expected 'linear' or 'precomputed'")


class EvaluatorBundle:
    """Evaluator families whose outputs together cover all 25 criteria."""

    def __init__(self, schema: DesignSchema, families: Sequence[Evaluator]):
        covered = [name for family in families for name in family.outputs]
        expected = set(OBJECTIVES + CONSTRAINTS)
        if len(covered) != len(set(covered)) or set(covered) != expected:
            missing = sorted(expected - set(covered))
            raise CycleScoreError(f"Evaluator families must cover each criterion once; missing {missing}")
        self.schema = schema
        self.families = list(families)

    @classmethod
    def default(cls, schema: DesignSchema, config: Mapping[str, Any],
                embedder: Optional[Embedder] = None,
                classifier: Optional[FrameValidityClassifier] = None) -> "EvaluatorBundle":
        ergonomics = ErgonomicsConfig.from_config(config)
        geometry = GeometryConfig.from_config(config)
        embedder = embedder or embedder_from_config(schema, config)
        materials = MaterialTable.load(config.get("materials_path"))
        return cls(schema, [
            StructuralProxy(materials, StructuralLoads.from_config(config)),
            DragProxy(AeroConfig.from_config(config), ergonomics),
            ErgonomicsEvaluator(ergonomics),
            UsabilityProxy(UsabilityWeights.from_config(config)),
            AestheticsEvaluator(embedder),
            GeometryEvaluator(geometry, classifier),
        ])

    @property
    def provenance(self) -> Dict[str, str]:
        provenance = {}
        for family in self.families:
            substituted = substituted_outputs(family)
            for name in family.outputs:
                provenance[name] = "substitute" if name in substituted else "reference"
        return provenance

    @property
    def substitutes(self) -> List[str]:
        return [type(f).__name__ for f in self.families if f.substitute]

    def _family_values(self, family: Evaluator, frame: pd.DataFrame,
                       batch: ConditionBatch) -> Tuple[pd.DataFrame, List[Failure]]:
        try:
            return family.evaluate(frame, batch), []
        except Exception as e:
            if len(frame) == 1:
                return self._failed_rows(family, frame, [0], e)
            logger.debug("%s failed on a batch of %d, isolating rows: %s",
                         type(family).__name__, len(frame), e)
        parts, failures = [], []
        for i in range(len(frame)):
            try:
                parts.append(family.evaluate(frame.iloc[[i]], batch.subset([i])))
            except Exception as e:
                values, failed = self._failed_rows(family, frame.iloc[[i]], [i], e)
                parts.append(values)
                failures.extend(failed)
        return pd.concat(parts), failures

    @staticmethod
    def _failed_rows(family: Evaluator, frame: pd.DataFrame, rows: List[int],
                     error: Exception) -> Tuple[pd.DataFrame, List[Failure]]:
        criterion = getattr(error, "criterion", None) or family.outputs[0]
        logger.warning("%s failed on design %s: %s", type(family).__name__, rows[0], error)
        values = pd.DataFrame(np.nan, index=frame.index, columns=list(family.outputs))
        return values, [Failure(r, criterion, f"{type(error).__name__}: {error}") for r in rows]

    def evaluate_frame(self, frame: pd.DataFrame, conditions: ConditionsLike) -> BatchEvaluation:
        frame = coerce_frame(frame, self.schema)
        n = len(frame)
        if isinstance(conditions, Condition):
            batch = ConditionBatch.repeat(conditions, n)
        elif isinstance(conditions, ConditionBatch):
            batch = conditions
        else:
            batch = ConditionBatch.from_conditions(list(conditions))
        if len(batch) != n:
            raise CycleScoreError(f"Got {len(batch)} conditions for {n} designs")

        columns: Dict[str, np.ndarray] = {}
        failures: List[Failure] = []
        for family in self.families:
            values, failed = self._family_values(family, frame, batch)
            failures.extend(failed)
            for name in family.outputs:
                columns[name] = values[name].to_numpy(dtype=float)
        invalid = np.zeros(n, dtype=bool)
        for failure in failures:
            invalid[failure.row] = True
        return BatchEvaluation(
            objectives=np.column_stack([columns[name] for name in OBJECTIVES]) if n else np.zeros((0, 10)),
            constraints=np.column_stack([columns[name] for name in CONSTRAINTS]) if n else np.zeros((0, 15)),
            invalid=invalid,
            failures=sorted(failures, key=lambda f: f.row),
        )

    def evaluate(self, design: Mapping[str, Any], condition: Condition) -> EvaluationReport:
        report = validate(design, self.schema)
        if not report.ok:
            raise DesignError(f"invalid design: {report}")
        result = self.evaluate_frame(pd.DataFrame([dict(design)]), condition)
        return result.reports(self.provenance)[0]


def evaluate_design(design: Mapping[str, Any], condition: Condition,
                    evaluators: EvaluatorBundle) -> EvaluationReport:
    return evaluators.evaluate(design, condition)
