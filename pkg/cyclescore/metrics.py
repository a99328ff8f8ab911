"""Benchmark scores: validity, hypervolume optimality and MMD similarity,
plus the consensus rule used to label usability ratings."""
import logging
from collections import Counter
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pymoo.indicators.hv import HV  # type: ignore
from pymoo.util.nds.non_dominated_sorting import NonDominatedSorting  # type: ignore
from scipy.spatial.distance import cdist, pdist  # type: ignore

from cyclescore.errors import MetricError

logger = logging.getLogger(__name__)

MC_CELLS_PER_CHUNK = 2_000_000
MMD_BLOCK = 2048
BANDWIDTH_SUBSAMPLE = 2000
STD_FLOOR = 1e-12


@dataclass(frozen=True)
class MetricSettings:
    hv_mode: str = "montecarlo"
    mc_samples: int = 100_000
    mmd_bandwidth: Any = "auto"
    mmd_fallback_bandwidth: Optional[float] = 1.0
    usable_threshold: float = 0.7
    unusable_threshold: float = 0.3

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> "MetricSettings":
        return cls(**config.get("metrics", {}))


@dataclass(frozen=True)
class ScoreSummary:
    validity: float
    optimality: float
    similarity: float
    hv_standard_error: float = 0.0
    n_designs: int = 0
    n_valid: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "ScoreSummary":
        return cls(**record)

    @classmethod
    def mean(cls, summaries: Sequence["ScoreSummary"]) -> "ScoreSummary":
        if not summaries:
            raise MetricError("Cannot average an empty list of score summaries")
        return cls(
            validity=float(np.mean([s.validity for s in summaries])),
            optimality=float(np.mean([s.optimality for s in summaries])),
            similarity=float(np.mean([s.similarity for s in summaries])),
            hv_standard_error=float(np.sqrt(np.mean([s.hv_standard_error ** 2 for s in summaries]))),
            n_designs=int(sum(s.n_designs for s in summaries)),
            n_valid=int(sum(s.n_valid for s in summaries)),
        )


def _matrix(reports, attribute: str) -> np.ndarray:
    if isinstance(reports, np.ndarray):
        matrix = reports
    else:
        reports = list(reports)
        if not reports:
            raise MetricError("Empty report list")
        matrix = np.array([list(getattr(r, attribute).values()) for r in reports], dtype=float)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] == 0:
        raise MetricError("Empty report list")
    return matrix


def valid_mask(constraints: np.ndarray) -> np.ndarray:
    """Rows whose margins are all <= 0; NaN counts as violated."""
    return np.all(np.asarray(constraints, dtype=float) <= 0, axis=1)


def validity_rate(reports) -> float:
    """Share of reports satisfying every constraint.

    Takes EvaluationReports or an (n, n_constraints) margin matrix.
    """
    return float(valid_mask(_matrix(reports, "constraints")).mean())


def reference_point(dataset_reports) -> np.ndarray:
    objectives = _matrix(dataset_reports, "objectives")
    finite = np.where(np.isfinite(objectives), objectives, np.nan)
    if not np.isfinite(finite).any(axis=0).all():
        raise MetricError("Reference point needs at least one finite value per objective")
    return np.nanmax(finite, axis=0)


def normalize_objectives(points: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Divide by the reference point and clip into the unit box."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ref = np.asarray(ref, dtype=float)
    if points.shape[1] != ref.shape[0]:
        raise MetricError(f"Points have {points.shape[1]} objectives, reference has {ref.shape[0]}")
    positive = ref > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(positive, points / np.where(positive, ref, 1.0),
                          np.where(points <= ref, 0.0, 1.0))
    return np.clip(scaled, 0.0, 1.0)


def _dominating(normalized: np.ndarray) -> np.ndarray:
    inside = normalized[np.all(normalized < 1.0, axis=1)]
    if len(inside) > 1:
        front = NonDominatedSorting().do(inside, only_non_dominated_front=True)
        inside = inside[front]
    return inside


def _montecarlo(front: np.ndarray, samples: int, seed: int) -> Tuple[float, float]:
    rng = np.random.default_rng(seed)
    m = front.shape[1]
    chunk = max(1, MC_CELLS_PER_CHUNK // max(1, len(front) * m))
    hits = 0
    remaining = samples
    while remaining > 0:
        size = min(chunk, remaining)
        u = rng.random((size, m))
        dominated = np.any(np.all(front[None, :, :] <= u[:, None, :], axis=2), axis=1)
        hits += int(dominated.sum())
        remaining -= size
    value = hits / samples
    return value, float(np.sqrt(value * (1 - value) / samples))


def hypervolume_with_error(points, ref, mode: str = "montecarlo", mc_samples: int = 100_000,
                           seed: int = 0) -> Tuple[float, float]:
    """Hypervolume of the normalised points in the unit box and its standard error.

    Points are divided by `ref`; anything not strictly better than the
    reference in every objective contributes nothing. Exact mode has zero error.
    """
    points = np.asarray(points, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if points.size == 0:
        return 0.0, 0.0
    front = _dominating(normalize_objectives(points, ref))
    if len(front) == 0:
        return 0.0, 0.0
    if mode == "exact":
        return float(HV(ref_point=np.ones(front.shape[1]))(front)), 0.0
    if mode == "montecarlo":
        return _montecarlo(front, mc_samples, seed)
    raise MetricError(f"Unknown hypervolume mode {mode!r}")


def hypervolume(points, ref, mode: str = "montecarlo", mc_samples: int = 100_000, seed: int = 0) -> float:
    return hypervolume_with_error(points, ref, mode, mc_samples, seed)[0]


class Standardizer:
    """Per-dimension dataset mean and std; constant dimensions keep std 1."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=float)
        self.std = np.where(np.asarray(std, dtype=float) > STD_FLOOR, std, 1.0)

    @classmethod
    def fit(cls, matrix: np.ndarray) -> "Standardizer":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(matrix.mean(axis=0), matrix.std(axis=0))

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(np.asarray(matrix, dtype=float)) - self.mean) / self.std


def _kernel_mean(x: np.ndarray, y: np.ndarray, bandwidth: float) -> float:
    total = 0.0
    for i in range(0, len(x), MMD_BLOCK):
        block = cdist(x[i:i + MMD_BLOCK], y, "sqeuclidean")
        total += float(np.exp(-0.5 * block / bandwidth ** 2).sum())
    return total / (len(x) * len(y))


def median_bandwidth(pooled: np.ndarray, seed: int = 0) -> float:
    if len(pooled) > BANDWIDTH_SUBSAMPLE:
        rows = np.random.default_rng(seed).choice(len(pooled), BANDWIDTH_SUBSAMPLE, replace=False)
        pooled = pooled[np.sort(rows)]
    if len(pooled) < 2:
        return 0.0
    return float(np.median(pdist(pooled)))


def mmd(set_a, set_b, bandwidth: Any = "auto", fallback_bandwidth: Optional[float] = None,
        seed: int = 0) -> float:
    """Biased MMD with a Gaussian kernel, returned as sqrt(max(0, MMD^2)).

    `bandwidth="auto"` uses the median pairwise distance of the pooled set;
    if that is zero, `fallback_bandwidth` is used or MetricError raised.
    """
    a = np.atleast_2d(np.asarray(set_a, dtype=float))
    b = np.atleast_2d(np.asarray(set_b, dtype=float))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise MetricError("MMD needs two non-empty sets")
    if a.shape[1] != b.shape[1]:
        raise MetricError(f"MMD dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if bandwidth == "auto":
        bw = median_bandwidth(np.vstack([a, b]), seed)
        if bw <= 0:
            if fallback_bandwidth is None:
                raise MetricError("Median pairwise distance is zero; an explicit bandwidth is required")
            logger.warning("Median bandwidth is zero, using fallback %s", fallback_bandwidth)
            bw = float(fallback_bandwidth)
    else:
        bw = float(bandwidth)
        if bw <= 0:
            raise MetricError(f"Bandwidth must be positive, got {bw}")
    squared = _kernel_mean(a, a, bw) + _kernel_mean(b, b, bw) - 2 * _kernel_mean(a, b, bw)
    return float(np.sqrt(max(0.0, squared)))


class ConsensusLabel(str, Enum):
    USABLE = "usable"
    UNUSABLE = "unusable"
    UNLABELED = "unlabeled"


def consensus_labels(yes_counts: Sequence[float], totals: Sequence[float],
                     usable: float = 0.7, unusable: float = 0.3) -> List[ConsensusLabel]:
    """Label each design by the share of raters answering yes."""
    labels = []
    for yes, total in zip(yes_counts, totals):
        if total <= 0:
            labels.append(ConsensusLabel.UNLABELED)
            continue
        share = yes / total
        if share >= usable:
            labels.append(ConsensusLabel.USABLE)
        elif share <= unusable:
            labels.append(ConsensusLabel.UNUSABLE)
        else:
            labels.append(ConsensusLabel.UNLABELED)
    return labels


def label_counts(labels: Sequence[ConsensusLabel]) -> Dict[str, int]:
    counts = Counter(ConsensusLabel(label).value for label in labels)
    return {label.value: counts.get(label.value, 0) for label in ConsensusLabel}


def score_design_set(objectives: np.ndarray, constraints: np.ndarray, ref: np.ndarray,
                     design_matrix: np.ndarray, reference_matrix: np.ndarray,
                     settings: MetricSettings = MetricSettings(), seed: int = 0) -> ScoreSummary:
    """Validity, HV over the valid rows only, and MMD against a reference set.

    Design matrices are expected already standardised.
    """
    objectives = np.atleast_2d(np.asarray(objectives, dtype=float))
    # a report with a failed objective family cannot count as valid
    mask = valid_mask(constraints) & np.all(np.isfinite(objectives), axis=1)
    hv, err = hypervolume_with_error(objectives[mask], ref, settings.hv_mode,
                                     settings.mc_samples, seed)
    similarity = mmd(design_matrix, reference_matrix, settings.mmd_bandwidth,
                     settings.mmd_fallback_bandwidth, seed)
    return ScoreSummary(
        validity=float(mask.mean()) if len(mask) else 0.0,
        optimality=hv,
        similarity=similarity,
        hv_standard_error=err,
        n_designs=int(len(mask)),
        n_valid=int(mask.sum()),
    )
