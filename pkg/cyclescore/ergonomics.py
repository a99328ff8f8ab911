"""Static rider fit: interface points, joint angles and their errors.

Angles are static extremes: the knee at full extension (crank pointing away
from the saddle), the hip at the top of the stroke (crank pointing toward the
saddle) and the arm at the shoulder between torso and arm.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from cyclescore.errors import DegenerateGeometryError
from cyclescore.geometry_constraints import SADDLE_HEIGHT, SEAT_ANGLE, frame_points

logger = logging.getLogger(__name__)

STEM_KIND = "Stem kind"
HANDLEBAR_STYLE = "Handlebar style"
ANGLE_COLUMNS = ("knee_angle", "hip_angle", "arm_angle")
ERROR_COLUMNS = ("knee_error", "hip_error", "arm_error")


class UseCase(str, Enum):
    ROAD = "road"
    MOUNTAIN = "mountain"
    COMMUTING = "commuting"

    @property
    def label(self) -> str:
        return {"road": "Road Biking", "mountain": "Mountain Biking",
                "commuting": "Commuting"}[self.value]


@dataclass(frozen=True)
class RiderProfile:
    upper_leg: float
    lower_leg: float
    arm: float
    torso: float
    neck_head: float
    torso_width: float

    FIELDS = ("upper_leg", "lower_leg", "arm", "torso", "neck_head", "torso_width")

    def __post_init__(self):
        for name in self.FIELDS:
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"Rider {name} must be a positive length, got {value}")

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.FIELDS], dtype=float)

    def to_dict(self) -> Dict[str, float]:
        return {name: float(getattr(self, name)) for name in self.FIELDS}

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "RiderProfile":
        return cls(**{name: float(record[name]) for name in cls.FIELDS})


@dataclass(frozen=True)
class TargetRanges:
    knee: Tuple[float, float]
    hip: Tuple[float, float]
    arm: Tuple[float, float]

    def __post_init__(self):
        for joint in ("knee", "hip", "arm"):
            lo, hi = getattr(self, joint)
            if not lo < hi:
                raise ValueError(f"Target range for {joint} must have lo < hi, got [{lo}, {hi}]")

    def as_array(self) -> np.ndarray:
        return np.array([self.knee, self.hip, self.arm], dtype=float)


DEFAULT_TARGETS = {
    UseCase.ROAD: TargetRanges((140.0, 150.0), (45.0, 90.0), (80.0, 100.0)),
    UseCase.MOUNTAIN: TargetRanges((135.0, 155.0), (40.0, 95.0), (75.0, 105.0)),
    UseCase.COMMUTING: TargetRanges((135.0, 155.0), (40.0, 95.0), (75.0, 105.0)),
}


@dataclass(frozen=True)
class ErgonomicsConfig:
    targets: Mapping[UseCase, TargetRanges] = field(default_factory=lambda: dict(DEFAULT_TARGETS))
    incompatibility_penalty_deg: float = 100.0
    deficit_deg_per_mm: float = 0.1
    stem_offsets_mm: Mapping[str, Tuple[float, float]] = field(default_factory=lambda: {
        "0": (100.0, 10.0), "1": (90.0, 30.0), "2": (80.0, 50.0)})
    handlebar_offsets_mm: Mapping[str, Tuple[float, float]] = field(default_factory=lambda: {
        "0": (80.0, 10.0), "1": (-10.0, 20.0), "2": (120.0, 0.0)})
    crank_length_mm: float = 172.5

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> "ErgonomicsConfig":
        section = config.get("ergonomics", {})
        kwargs: Dict[str, Any] = {}
        if "targets" in section:
            kwargs["targets"] = {
                UseCase(name): TargetRanges(**{j: tuple(v) for j, v in ranges.items()})
                for name, ranges in section["targets"].items()
            }
        for key in ("incompatibility_penalty_deg", "deficit_deg_per_mm"):
            if key in section:
                kwargs[key] = float(section[key])
        for key in ("stem_offsets_mm", "handlebar_offsets_mm"):
            if key in section:
                kwargs[key] = {str(k): tuple(v) for k, v in section[key].items()}
        if "crank_length_mm" in config.get("geometry", {}):
            kwargs["crank_length_mm"] = float(config["geometry"]["crank_length_mm"])
        return cls(**kwargs)


@dataclass(frozen=True)
class InterfacePoints:
    """Bike/rider contact points relative to the bottom bracket.

    Fields are (2,) arrays for one design or (n, 2) arrays for a batch.
    """
    saddle: np.ndarray
    grip: np.ndarray
    pedal_far: np.ndarray
    pedal_near: np.ndarray

    def row(self, i: int) -> "InterfacePoints":
        return InterfacePoints(*(np.atleast_2d(getattr(self, f))[i] for f in
                                 ("saddle", "grip", "pedal_far", "pedal_near")))


@dataclass(frozen=True)
class JointAngles:
    knee: float
    hip: float
    arm: float
    incompatible: bool
    deficit_mm: float = 0.0
    torso_angle: float = 0.0

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.knee, self.hip, self.arm


def _offsets(labels: pd.Series, table: Mapping[str, Tuple[float, float]], name: str) -> np.ndarray:
    keys = labels.astype(str)
    unknown = set(keys) - set(table)
    if unknown:
        raise DegenerateGeometryError(f"No {name} offset for {sorted(unknown)}")
    return np.array([table[k] for k in keys], dtype=float).reshape(-1, 2)


def interface_frame(frame: pd.DataFrame, config: ErgonomicsConfig = ErgonomicsConfig()) -> InterfacePoints:
    sa = np.radians(frame[SEAT_ANGLE].to_numpy(dtype=float))
    if np.any(np.isclose(np.sin(sa), 0.0)):
        raise DegenerateGeometryError("Seat angle of 0 or 180 degrees leaves the saddle undefined")
    height = frame[SADDLE_HEIGHT].to_numpy(dtype=float)
    saddle = np.stack([-height * np.cos(sa) / np.sin(sa), height], axis=1)

    head_top = frame_points(frame).head_top
    # stack and reach locate the head-tube top; the upper extension only moves the top-tube junction
    grip = (head_top
            + _offsets(frame[STEM_KIND], config.stem_offsets_mm, "stem")
            + _offsets(frame[HANDLEBAR_STYLE], config.handlebar_offsets_mm, "handlebar"))

    toward_saddle = saddle / np.linalg.norm(saddle, axis=1, keepdims=True)
    crank = config.crank_length_mm * toward_saddle
    return InterfacePoints(saddle=saddle, grip=grip, pedal_far=-crank, pedal_near=crank)


def interface_points(design: Mapping[str, Any],
                     config: ErgonomicsConfig = ErgonomicsConfig()) -> InterfacePoints:
    return interface_frame(pd.DataFrame([dict(design)]), config).row(0)


def _angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angle in degrees between row vectors."""
    norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosine = np.einsum("ij,ij->i", a, b) / norms
    return np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0)))


def _circle_meet(a: np.ndarray, ra: np.ndarray, b: np.ndarray, rb: np.ndarray,
                 pick: str) -> Tuple[np.ndarray, np.ndarray]:
    """Point at distance ra from a and rb from b.

    Returns the point and the reach deficit in mm. Out of reach (or folded
    too far) the point is placed on the a->b line and the deficit is positive.
    """
    delta = b - a
    d = np.linalg.norm(delta, axis=1)
    u = delta / np.where(d > 0, d, 1.0)[:, None]
    deficit = np.maximum(d - (ra + rb), 0.0) + np.maximum(np.abs(ra - rb) - d, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        along = (ra ** 2 - rb ** 2 + d ** 2) / (2 * d)
    along = np.where(deficit > 0, ra, along)
    h = np.sqrt(np.maximum(ra ** 2 - along ** 2, 0.0))
    perp = np.stack([-u[:, 1], u[:, 0]], axis=1)
    base = a + along[:, None] * u
    first, second = base + h[:, None] * perp, base - h[:, None] * perp
    axis = 1 if pick == "higher" else 0
    point = np.where((first[:, axis] >= second[:, axis])[:, None], first, second)
    return point, deficit


def solve_angles(points: InterfacePoints, riders: np.ndarray) -> pd.DataFrame:
    """Joint angles for a batch; `riders` is (n, 6) in RiderProfile.FIELDS order."""
    saddle = np.atleast_2d(points.saddle)
    grip = np.atleast_2d(points.grip)
    riders = np.atleast_2d(np.asarray(riders, dtype=float))
    upper, lower, arm, torso = riders[:, 0], riders[:, 1], riders[:, 2], riders[:, 3]

    leg_reach = np.linalg.norm(saddle - np.atleast_2d(points.pedal_far), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosine = (upper ** 2 + lower ** 2 - leg_reach ** 2) / (2 * upper * lower)
    knee = np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0)))
    knee = np.where(leg_reach >= upper + lower, 180.0, knee)
    leg_deficit = np.maximum(leg_reach - (upper + lower), 0.0)

    shoulder, reach_deficit = _circle_meet(saddle, torso, grip, arm, pick="higher")
    knee_near, _ = _circle_meet(saddle, upper, np.atleast_2d(points.pedal_near), lower,
                                pick="forward")
    torso_vec = shoulder - saddle
    hip = _angle(torso_vec, knee_near - saddle)
    arm_angle = _angle(saddle - shoulder, grip - shoulder)
    torso_angle = np.degrees(np.arctan2(torso_vec[:, 1], np.abs(torso_vec[:, 0])))

    deficit = leg_deficit + reach_deficit
    return pd.DataFrame({
        "knee_angle": knee,
        "hip_angle": hip,
        "arm_angle": arm_angle,
        "torso_angle": torso_angle,
        "incompatible": deficit > 0,
        "deficit_mm": deficit,
    })


def joint_angles(points: InterfacePoints, rider: RiderProfile) -> JointAngles:
    row = solve_angles(points, rider.to_array()).iloc[0]
    return JointAngles(float(row["knee_angle"]), float(row["hip_angle"]), float(row["arm_angle"]),
                       bool(row["incompatible"]), float(row["deficit_mm"]),
                       float(row["torso_angle"]))


def _range_errors(angles: np.ndarray, ranges: np.ndarray) -> np.ndarray:
    """Distance of (n, 3) angles to (n, 3, 2) target intervals."""
    lo, hi = ranges[..., 0], ranges[..., 1]
    return np.maximum(lo - angles, 0.0) + np.maximum(angles - hi, 0.0)


def ergonomic_errors(angles: Sequence[float], incompatible: bool, use_case: UseCase,
                     config: ErgonomicsConfig = ErgonomicsConfig(),
                     deficit_mm: float = 0.0) -> Tuple[float, float, float]:
    errors = _range_errors(np.asarray(angles, dtype=float)[None, :],
                           config.targets[UseCase(use_case)].as_array()[None, ...])[0]
    if incompatible:
        errors = errors + config.incompatibility_penalty_deg + config.deficit_deg_per_mm * deficit_mm
    return tuple(float(e) for e in errors)


def ergonomic_frame(points: InterfacePoints, riders: np.ndarray, use_cases: Sequence[UseCase],
                    config: ErgonomicsConfig = ErgonomicsConfig()) -> pd.DataFrame:
    """Angles and errors for a batch of (design, rider, use case) triples."""
    solved = solve_angles(points, riders)
    ranges = np.stack([config.targets[UseCase(u)].as_array() for u in use_cases])
    errors = _range_errors(solved[list(ANGLE_COLUMNS)].to_numpy(), ranges)
    penalty = np.where(solved["incompatible"],
                       config.incompatibility_penalty_deg
                       + config.deficit_deg_per_mm * solved["deficit_mm"], 0.0)
    errors = errors + penalty[:, None]
    for i, name in enumerate(ERROR_COLUMNS):
        solved[name] = errors[:, i]
    return solved
