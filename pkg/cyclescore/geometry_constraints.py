"""Closed-form geometric feasibility checks and the frame-validity constraint.

Every check returns a signed margin in the units of the quantity it compares;
a margin <= 0 is satisfied. The frame is modelled in the side plane with the
bottom bracket at the origin, x pointing forward and y up:

  * rear axle at height `BB textfield` (positive drop puts the BB below the
    axle), behind the BB by the horizontal leg of the chain stay;
  * the head tube axis runs down-forward along (cos HA, -sin HA) from the
    head tube top at height `Stack`; its x position follows from requiring the
    down tube (length `DT Length`) to meet the head tube at the lower extension;
  * the front axle sits on the line parallel to the head tube axis, offset
    forward by `FORK0R` along (sin HA, cos HA), at the height that puts both
    wheels on the same ground line.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Protocol

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CHAIN_STAY = "CS textfield"
BB_DROP = "BB textfield"
STACK = "Stack"
HEAD_ANGLE = "Head angle"
HEAD_TUBE = "Head tube length textfield"
SEAT_STAY_JUNCTION = "Seat stay junction0"
SEAT_TUBE = "Seat tube length"
SEAT_ANGLE = "Seat angle"
DOWN_TUBE = "DT Length"
FORK_OFFSET = "FORK0R"
HEAD_UPPER = "Head tube upper extension2"
SEAT_EXTENSION = "Seat tube extension2"
HEAD_LOWER = "Head tube lower extension2"
WHEEL_FRONT = "Wheel diameter front"
WHEEL_REAR = "Wheel diameter rear"
SADDLE_HEIGHT = "Saddle height"
SEATPOST = "Seatpost LENGTH"
RGB = ("FIRST color R_RGB", "FIRST color G_RGB", "FIRST color B_RGB")

POSITIVE_PARAMETERS = (
    "CS textfield", "Stack", "Head angle", "Head tube length textfield",
    "Seat stay junction0", "Seat tube length", "Seat angle", "DT Length",
    "FORK0R", "BB diameter", "ttd", "csd", "ssd", "dtd",
    "Chain stay position on BB", "SSTopZOFFSET", "Head tube upper extension2",
    "Seat tube extension2", "Head tube lower extension2", "SEATSTAYbrdgdia1",
    "CHAINSTAYbrdgdia1", "Dropout spacing", "Wall thickness Bottom Bracket",
    "Wall thickness Top tube", "Wall thickness Head tube",
    "Wall thickness Down tube", "Wall thickness Chain stay",
    "Wall thickness Seat stay", "Wall thickness Seat tube",
    "Wheel diameter front", "RDBSD", "Wheel diameter rear", "FDBSD",
    "BB length", "Head tube diameter", "Seat tube diameter", "SBLADEW front",
    "SBLADEW rear", "Saddle length", "Saddle height", "Down tube diameter",
    "Seatpost LENGTH",
)

GEOMETRIC_CHECKS = (
    "Saddle height too small",
    "Seat post too short",
    "Head tube lower extension too great",
    "Head tube length too great",
    "Certain parameters must be positive",
    "Chain stay should be greater than wheel radius",
    "Chain stay should be greater than BB",
    "Seat stay should be greater than wheel radius",
    "Down tube must reach head tube",
    "The pedal shouldn't intersect the front wheel",
    "The crank shouldn't hit the ground when it is in its lower position",
    "RGB value should be less than 255",
)
FRAME_VALIDITY = "Predicted Frame Validity"


@dataclass(frozen=True)
class GeometryConfig:
    crank_length_mm: float = 172.5
    toe_allowance_mm: float = 0.0
    min_tube_length_mm: float = 20.0

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> "GeometryConfig":
        return cls(**config.get("geometry", {}))


@dataclass(frozen=True)
class ConstraintValue:
    name: str
    value: float
    satisfied: bool
    diagnostic: str = ""

    @classmethod
    def of(cls, name: str, value: float, diagnostic: str = "") -> "ConstraintValue":
        value = float(value) if np.isfinite(value) else float("inf")
        return cls(name, value, value <= 0, diagnostic)


@dataclass(frozen=True)
class FramePoints:
    """Side-plane frame model, one row per design. Points are (n, 2) arrays."""
    rear_axle: np.ndarray
    front_axle: np.ndarray
    head_top: np.ndarray
    head_bottom: np.ndarray
    head_axis: np.ndarray
    down_tube_junction: np.ndarray
    top_tube_head_junction: np.ndarray
    top_tube_seat_junction: np.ndarray
    seat_stay_junction: np.ndarray
    seat_tube_top: np.ndarray
    ground_y: np.ndarray
    down_tube_shortfall: np.ndarray

    @property
    def top_tube_length(self) -> np.ndarray:
        return np.linalg.norm(self.top_tube_head_junction - self.top_tube_seat_junction, axis=1)

    @property
    def seat_stay_length(self) -> np.ndarray:
        return np.linalg.norm(self.seat_stay_junction - self.rear_axle, axis=1)


def _col(frame: pd.DataFrame, name: str) -> np.ndarray:
    return frame[name].to_numpy(dtype=float)


def frame_points(frame: pd.DataFrame) -> FramePoints:
    ha = np.radians(_col(frame, HEAD_ANGLE))
    sa = np.radians(_col(frame, SEAT_ANGLE))
    stack = _col(frame, STACK)
    head_tube = _col(frame, HEAD_TUBE)
    down_tube = _col(frame, DOWN_TUBE)
    seat_tube = _col(frame, SEAT_TUBE)
    bb_drop = _col(frame, BB_DROP)
    chain_stay = _col(frame, CHAIN_STAY)
    offset = _col(frame, FORK_OFFSET)
    rear_radius = _col(frame, WHEEL_REAR) / 2
    front_radius = _col(frame, WHEEL_FRONT) / 2

    axis = np.stack([np.cos(ha), -np.sin(ha)], axis=1)
    seat_dir = np.stack([-np.cos(sa), np.sin(sa)], axis=1)

    with np.errstate(invalid="ignore"):
        rear_x = -np.sqrt(np.maximum(chain_stay ** 2 - bb_drop ** 2, 0.0))
        rear_axle = np.stack([rear_x, bb_drop], axis=1)

        along = head_tube - _col(frame, HEAD_LOWER)
        junction_y = stack - along * np.sin(ha)
        shortfall = np.abs(junction_y) - down_tube
        junction_x = np.sqrt(np.maximum(down_tube ** 2 - junction_y ** 2, 0.0))
        head_top = np.stack([junction_x - along * np.cos(ha), stack], axis=1)

        ground_y = bb_drop - rear_radius
        front_y = ground_y + front_radius
        # head_top + offset * normal + s * axis, solved for the front axle height
        s = (stack + offset * np.cos(ha) - front_y) / np.sin(ha)
        front_x = head_top[:, 0] + offset * np.sin(ha) + s * np.cos(ha)

    return FramePoints(
        rear_axle=rear_axle,
        front_axle=np.stack([front_x, front_y], axis=1),
        head_top=head_top,
        head_bottom=head_top + head_tube[:, None] * axis,
        head_axis=axis,
        down_tube_junction=np.stack([junction_x, junction_y], axis=1),
        top_tube_head_junction=head_top + _col(frame, HEAD_UPPER)[:, None] * axis,
        top_tube_seat_junction=(seat_tube - _col(frame, SEAT_EXTENSION))[:, None] * seat_dir,
        seat_stay_junction=(seat_tube - _col(frame, SEAT_STAY_JUNCTION))[:, None] * seat_dir,
        seat_tube_top=seat_tube[:, None] * seat_dir,
        ground_y=ground_y,
        down_tube_shortfall=shortfall,
    )


def geometric_frame(frame: pd.DataFrame, config: GeometryConfig = GeometryConfig()) -> pd.DataFrame:
    """The 12 closed-form margins for every design in `frame`, in report order."""
    points = frame_points(frame)
    sa = np.radians(_col(frame, SEAT_ANGLE))
    seat_tube = _col(frame, SEAT_TUBE)
    saddle = _col(frame, SADDLE_HEIGHT)
    head_tube = _col(frame, HEAD_TUBE)
    upper = _col(frame, HEAD_UPPER)
    lower = _col(frame, HEAD_LOWER)
    ttd = _col(frame, "ttd")
    dtd = _col(frame, "dtd")
    chain_stay = _col(frame, CHAIN_STAY)
    rear_radius = _col(frame, WHEEL_REAR) / 2
    front_radius = _col(frame, WHEEL_FRONT) / 2
    crank = config.crank_length_mm
    seat_top_height = seat_tube * np.sin(sa)
    pedal = np.array([crank, 0.0])

    with np.errstate(invalid="ignore", divide="ignore"):
        margins = [
            seat_top_height - saddle,
            (saddle - seat_top_height) / np.sin(sa) - _col(frame, SEATPOST),
            lower + dtd / 2 - head_tube,
            (ttd + dtd) / 2 - (head_tube - upper - lower),
            np.max(-frame[list(POSITIVE_PARAMETERS)].to_numpy(dtype=float), axis=1),
            rear_radius - chain_stay,
            np.abs(_col(frame, BB_DROP)) - chain_stay,
            rear_radius - points.seat_stay_length,
            points.down_tube_shortfall,
            front_radius + config.toe_allowance_mm
            - np.linalg.norm(points.front_axle - pedal, axis=1),
            points.ground_y + crank,
            np.max(frame[list(RGB)].to_numpy(dtype=float), axis=1) - 255.0,
        ]
    values = np.stack(margins, axis=1)
    values[~np.isfinite(values)] = np.inf
    return pd.DataFrame(values, columns=list(GEOMETRIC_CHECKS), index=frame.index)


def geometric_checks(design: Mapping[str, Any],
                     config: GeometryConfig = GeometryConfig()) -> List[ConstraintValue]:
    row = geometric_frame(pd.DataFrame([dict(design)]), config).iloc[0]
    return [ConstraintValue.of(name, row[name]) for name in GEOMETRIC_CHECKS]


class FrameValidityClassifier(Protocol):
    """Scores frames; a margin <= 0 means the frame is expected to regenerate."""

    def classify(self, frame: pd.DataFrame) -> np.ndarray:
        ...


class FrameClosureProxy:
    """Substitute for a trained frame-validity classifier.

    The seat tube, top tube, down tube and head tube must close into a
    quadrilateral with every tube at least `min_tube_length_mm` long and the
    head tube junctions ahead of the seat tube junction.
    """
    substitute = True

    def __init__(self, config: GeometryConfig = GeometryConfig()):
        self.config = config

    @staticmethod
    def margin_from_lengths(lengths: Mapping[str, np.ndarray], min_length: float) -> np.ndarray:
        stacked = np.stack([np.asarray(v, dtype=float) for v in lengths.values()], axis=1)
        return np.max(min_length - stacked, axis=1)

    def tube_lengths(self, frame: pd.DataFrame) -> Dict[str, np.ndarray]:
        points = frame_points(frame)
        return {
            "seat tube": np.linalg.norm(points.top_tube_seat_junction, axis=1),
            "top tube": points.top_tube_length,
            "down tube": np.where(points.down_tube_shortfall > 0, 0.0, _col(frame, DOWN_TUBE)),
            "head tube": _col(frame, HEAD_TUBE) - _col(frame, HEAD_UPPER) - _col(frame, HEAD_LOWER),
        }

    def classify(self, frame: pd.DataFrame) -> np.ndarray:
        points = frame_points(frame)
        min_length = self.config.min_tube_length_mm
        closure = self.margin_from_lengths(self.tube_lengths(frame), min_length)
        ordering = (points.top_tube_seat_junction[:, 0]
                    - points.top_tube_head_junction[:, 0] + min_length)
        margin = np.maximum(closure, ordering)
        return np.where(np.isfinite(margin), margin, np.inf)


def frame_validity(design: Mapping[str, Any], classifier: FrameValidityClassifier) -> ConstraintValue:
    try:
        margin = np.asarray(classifier.classify(pd.DataFrame([dict(design)])), dtype=float)
        return ConstraintValue.of(FRAME_VALIDITY, margin.reshape(-1)[0])
    except Exception as e:
        logger.warning("Frame validity classifier failed: %s", e)
        return ConstraintValue(FRAME_VALIDITY, float("inf"), False,
                               diagnostic=f"{type(e).__name__}: {e}")
