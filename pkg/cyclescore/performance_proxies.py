"""Analytic stand-ins for the trained structural, aerodynamic, usability and
aesthetics evaluators.

Each family is a class with `outputs`, `substitute` and a batch
`evaluate(frame, conditions)` returning one column per output, so a trained
model with the same surface can replace it without touching callers.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Mapping, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit  # type: ignore

from cyclescore.config import resolve_path
from cyclescore.design_space import DesignSchema, encode_frame, read_designs_csv
from cyclescore.ergonomics import ErgonomicsConfig, RiderProfile, interface_frame, solve_angles
from cyclescore.errors import CycleScoreError, EvaluatorError
from cyclescore.geometry_constraints import (
    CHAIN_STAY, DOWN_TUBE, HEAD_TUBE, RGB, SEAT_TUBE, WHEEL_FRONT, WHEEL_REAR, frame_points,
)

if TYPE_CHECKING:
    from cyclescore.conditions import ConditionBatch

logger = logging.getLogger(__name__)

DEFAULT_MATERIALS_PATH = "data/materials.json"
MATERIAL = "MATERIAL"

MASS = "Mass"
PLANAR_COMPLIANCE = "Planar Compliance"
TRANSVERSE_COMPLIANCE = "Transverse Compliance"
ECCENTRIC_COMPLIANCE = "Eccentric Compliance"
PLANAR_SF = "Planar Safety Factor"
ECCENTRIC_SF = "Eccentric Safety Factor"
DRAG = "Aerodynamic Drag"
USABILITY = "Usability Score"
COSINE_DISTANCE = "Cosine Distance to Embedding"

# tube -> (length source, diameter column, wall thickness column, count)
TUBES = {
    "top tube": ("frame", "ttd", "Wall thickness Top tube", 1),
    "down tube": (DOWN_TUBE, "Down tube diameter", "Wall thickness Down tube", 1),
    "seat tube": (SEAT_TUBE, "Seat tube diameter", "Wall thickness Seat tube", 1),
    "head tube": (HEAD_TUBE, "Head tube diameter", "Wall thickness Head tube", 1),
    "chain stay": (CHAIN_STAY, "csd", "Wall thickness Chain stay", 2),
    "seat stay": ("frame", "ssd", "Wall thickness Seat stay", 2),
}
PLANAR_PATH = ("seat tube", "down tube", "chain stay", "seat stay")
TRANSVERSE_PATH = ("chain stay", "seat stay")
ECCENTRIC_PATH = ("seat tube", "top tube", "head tube")


class Evaluator(Protocol):
    outputs: Tuple[str, ...]
    substitute: bool

    def evaluate(self, frame: pd.DataFrame, conditions: "ConditionBatch") -> pd.DataFrame:
        ...


@dataclass(frozen=True)
class Material:
    name: str
    density_kg_m3: float
    modulus_mpa: float
    yield_mpa: float
    substituted_from: Optional[str] = None


class MaterialTable:
    def __init__(self, records: Mapping[str, Mapping[str, Any]]):
        self.records = dict(records)

    @classmethod
    def load(cls, path: Optional[str | Path] = None) -> "MaterialTable":
        path = resolve_path(path or DEFAULT_MATERIALS_PATH)
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls(json.load(f)["materials"])
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise CycleScoreError(f"Cannot read material table {path}: {e}") from e

    def lookup(self, name: str) -> Material:
        """Properties for `name`, following substitutes (carbon -> steel)."""
        record = self.records.get(name)
        if record is None:
            raise EvaluatorError(f"Unknown material {name!r}", criterion=MASS)
        if "substitute" in record:
            target = self.lookup(record["substitute"])
            return Material(target.name, target.density_kg_m3, target.modulus_mpa,
                            target.yield_mpa, substituted_from=name)
        return Material(name, float(record["density_kg_m3"]), float(record["modulus_mpa"]),
                        float(record["yield_mpa"]))

    def columns(self, labels: pd.Series) -> Dict[str, np.ndarray]:
        props = [self.lookup(str(label)) for label in labels]
        return {
            "density": np.array([p.density_kg_m3 for p in props]),
            "modulus": np.array([p.modulus_mpa for p in props]),
            "yield": np.array([p.yield_mpa for p in props]),
        }


def tube_area(d: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.pi / 4 * (d ** 2 - (d - 2 * t) ** 2)


def tube_inertia(d: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.pi / 64 * (d ** 4 - (d - 2 * t) ** 4)


def tube_mass(d, t, length, density) -> np.ndarray:
    """Shell mass in kg from mm dimensions and density in kg/m^3."""
    return density * tube_area(np.asarray(d, float), np.asarray(t, float)) * 1e-6 * np.asarray(length, float) * 1e-3


@dataclass(frozen=True)
class StructuralLoads:
    planar_saddle_load_n: float = 1200.0
    planar_bb_load_n: float = 1200.0
    eccentric_load_n: float = 600.0
    eccentric_offset_mm: float = 150.0
    required_safety_factor: float = 1.5

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> "StructuralLoads":
        return cls(**config.get("structural", {}))


@dataclass(frozen=True)
class StructuralReport:
    mass: float
    planar_compliance: float
    transverse_compliance: float
    eccentric_compliance: float
    planar_sf_margin: float
    eccentric_sf_margin: float


class StructuralProxy:
    """Thin-walled tube beam model of the frame.

    Compliances are sums of L^3/(E I) over a load path in mm/kN; stays come in
    pairs and act in parallel. Stresses are M c / I with point loads at tube
    mid-span.
    """
    outputs = (MASS, PLANAR_COMPLIANCE, TRANSVERSE_COMPLIANCE, ECCENTRIC_COMPLIANCE,
               PLANAR_SF, ECCENTRIC_SF)
    substitute = True

    def __init__(self, materials: Optional[MaterialTable] = None,
                 loads: StructuralLoads = StructuralLoads()):
        self.materials = materials or MaterialTable.load()
        self.loads = loads

    def tubes(self, frame: pd.DataFrame) -> Dict[str, Dict[str, np.ndarray]]:
        points = frame_points(frame)
        derived = {"top tube": points.top_tube_length, "seat stay": points.seat_stay_length}
        tubes = {}
        for name, (source, d_col, t_col, count) in TUBES.items():
            d = frame[d_col].to_numpy(dtype=float)
            t = frame[t_col].to_numpy(dtype=float)
            if np.any(t >= d / 2):
                raise EvaluatorError(f"Wall thickness of the {name} reaches its radius",
                                     criterion=MASS)
            length = derived[name] if source == "frame" else frame[source].to_numpy(dtype=float)
            tubes[name] = {"d": d, "t": t, "length": length, "count": count,
                           "inertia": tube_inertia(d, t)}
        return tubes

    def evaluate(self, frame: pd.DataFrame, conditions: Any = None) -> pd.DataFrame:
        props = self.materials.columns(frame[MATERIAL])
        tubes = self.tubes(frame)

        mass = sum(tube["count"] * tube_mass(tube["d"], tube["t"], tube["length"], props["density"])
                   for tube in tubes.values())

        def compliance(path: Sequence[str]) -> np.ndarray:
            return sum(tubes[n]["length"] ** 3 / (props["modulus"] * tubes[n]["inertia"])
                       / tubes[n]["count"] for n in path) * 1000.0

        def stress(name: str, moment: np.ndarray) -> np.ndarray:
            tube = tubes[name]
            return moment * (tube["d"] / 2) / tube["inertia"]

        loads = self.loads
        st, dt, cs = tubes["seat tube"], tubes["down tube"], tubes["chain stay"]
        planar_stress = np.maximum.reduce([
            stress("seat tube", loads.planar_saddle_load_n * st["length"] / 4),
            stress("down tube", loads.planar_bb_load_n * dt["length"] / 4),
            stress("chain stay", loads.planar_bb_load_n / 2 * cs["length"] / 4),
        ])
        eccentric_stress = np.maximum(
            stress("seat tube", loads.eccentric_load_n * (st["length"] / 4 + loads.eccentric_offset_mm)),
            stress("top tube", loads.eccentric_load_n * loads.eccentric_offset_mm),
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            planar_margin = loads.required_safety_factor - props["yield"] / planar_stress
            eccentric_margin = loads.required_safety_factor - props["yield"] / eccentric_stress

        return pd.DataFrame({
            MASS: mass,
            PLANAR_COMPLIANCE: compliance(PLANAR_PATH),
            TRANSVERSE_COMPLIANCE: compliance(TRANSVERSE_PATH),
            ECCENTRIC_COMPLIANCE: compliance(ECCENTRIC_PATH),
            PLANAR_SF: planar_margin,
            ECCENTRIC_SF: eccentric_margin,
        }, index=frame.index)


def structural_eval(design: Mapping[str, Any], proxy: Optional[StructuralProxy] = None) -> StructuralReport:
    row = (proxy or StructuralProxy()).evaluate(pd.DataFrame([dict(design)])).iloc[0]
    return StructuralReport(*(float(row[name]) for name in StructuralProxy.outputs))


@dataclass(frozen=True)
class AeroConfig:
    air_density_kg_m3: float = 1.225
    drag_coefficient: float = 0.9
    wind_speed_m_s: float = 10.0
    leg_area_m2: float = 0.14
    head_area_m2: float = 0.05

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> "AeroConfig":
        return cls(**config.get("aerodynamics", {}))

    def force(self, area_m2):
        return 0.5 * self.air_density_kg_m3 * self.drag_coefficient * np.asarray(area_m2) * self.wind_speed_m_s ** 2


class DragProxy:
    """Frontal-area drag: torso projection plus fixed leg and head areas."""
    outputs = (DRAG,)
    substitute = True

    def __init__(self, aero: AeroConfig = AeroConfig(), ergonomics: ErgonomicsConfig = ErgonomicsConfig()):
        self.aero = aero
        self.ergonomics = ergonomics

    def frontal_area(self, torso_angle_deg: np.ndarray, riders: np.ndarray) -> np.ndarray:
        riders = np.atleast_2d(riders)
        rise = np.clip(np.sin(np.radians(torso_angle_deg)), 0.0, 1.0)
        torso = riders[:, 5] * riders[:, 3] * rise * 1e-6
        return torso + self.aero.leg_area_m2 + self.aero.head_area_m2

    def evaluate(self, frame: pd.DataFrame, conditions: "ConditionBatch") -> pd.DataFrame:
        angles = solve_angles(interface_frame(frame, self.ergonomics), conditions.riders)
        area = self.frontal_area(angles["torso_angle"].to_numpy(), conditions.riders)
        return pd.DataFrame({DRAG: self.aero.force(area)}, index=frame.index)


def drag_force(design: Mapping[str, Any], rider: RiderProfile, proxy: Optional[DragProxy] = None) -> float:
    proxy = proxy or DragProxy()
    angles = solve_angles(interface_frame(pd.DataFrame([dict(design)]), proxy.ergonomics),
                          rider.to_array())
    area = proxy.frontal_area(angles["torso_angle"].to_numpy(), rider.to_array())
    return float(proxy.aero.force(area)[0])


@dataclass(frozen=True)
class UsabilityWeights:
    intercept: float = 0.0
    handlebar_style: Mapping[str, float] = field(default_factory=lambda: {"0": -0.4, "1": -0.8, "2": 0.3})
    front_fender: float = -0.3
    rear_fender: float = -0.3
    rack: float = -0.5
    aerobars: float = 0.8
    wheel_diameter_per_100mm: float = 0.2
    wheel_diameter_reference_mm: float = 650.0
    brightness: float = -0.4

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> "UsabilityWeights":
        return cls(**config.get("usability", {}))


class UsabilityProxy:
    """Logistic model of the share of raters who would NOT call a bike easy to use.

    Features: handlebar style, fenders, rack, aerobars, mean wheel diameter and
    frame colour brightness. Positive weights make a bike harder to use.
    """
    outputs = (USABILITY,)
    substitute = True

    def __init__(self, weights: UsabilityWeights = UsabilityWeights()):
        self.weights = weights

    def logit(self, frame: pd.DataFrame) -> np.ndarray:
        w = self.weights
        handlebar = frame["Handlebar style"].astype(str).map(lambda k: w.handlebar_style.get(k, 0.0))
        wheels = (frame[WHEEL_FRONT].to_numpy(dtype=float) + frame[WHEEL_REAR].to_numpy(dtype=float)) / 2
        brightness = np.clip(frame[list(RGB)].to_numpy(dtype=float).mean(axis=1) / 255.0, 0.0, 1.0)
        return (w.intercept
                + handlebar.to_numpy(dtype=float)
                + w.front_fender * frame["Front Fender include"].to_numpy(dtype=float)
                + w.rear_fender * frame["Rear Fender include"].to_numpy(dtype=float)
                + w.rack * frame["Display RACK"].to_numpy(dtype=float)
                + w.aerobars * frame["Display AEROBARS"].to_numpy(dtype=float)
                + w.wheel_diameter_per_100mm * (wheels - w.wheel_diameter_reference_mm) / 100.0
                + w.brightness * brightness)

    def evaluate(self, frame: pd.DataFrame, conditions: Any = None) -> pd.DataFrame:
        return pd.DataFrame({USABILITY: expit(self.logit(frame))}, index=frame.index)


def usability_score(design: Mapping[str, Any], proxy: Optional[UsabilityProxy] = None) -> float:
    return float((proxy or UsabilityProxy()).evaluate(pd.DataFrame([dict(design)]))[USABILITY].iloc[0])


@dataclass(frozen=True)
class Embedding:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float).reshape(-1)
        if not np.all(np.isfinite(data)):
            raise EvaluatorError("Embedding has non-finite entries", criterion=COSINE_DISTANCE)
        object.__setattr__(self, "data", data)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    @property
    def dimension(self) -> int:
        return self.data.shape[0]


class Embedder(Protocol):
    dimension: int
    substitute: bool

    def embed_frame(self, frame: pd.DataFrame) -> np.ndarray:
        ...


class LinearEmbedder:
    """Fixed random projection of the standardised one-hot design vector."""
    substitute = True

    def __init__(self, schema: DesignSchema, dimension: int = 512, seed: int = 0):
        self.schema = schema
        self.dimension = dimension
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.matrix = rng.standard_normal((dimension, schema.continuous_dim)) / np.sqrt(schema.continuous_dim)
        self.mean, self.std = schema.uniform_moments()

    def embed_frame(self, frame: pd.DataFrame) -> np.ndarray:
        standardized = (encode_frame(frame, self.schema) - self.mean) / self.std
        return standardized @ self.matrix.T


class PrecomputedEmbedder:
    """Embeddings produced outside this package, looked up by design.

    `designs` and `embeddings` are aligned row by row; lookups match on the
    encoded design vector.
    """
    substitute = False

    def __init__(self, schema: DesignSchema, designs: pd.DataFrame, embeddings: np.ndarray):
        embeddings = np.asarray(embeddings, dtype=float)
        if len(designs) != len(embeddings):
            raise EvaluatorError("Design and embedding files differ in length", criterion=COSINE_DISTANCE)
        self.schema = schema
        self.dimension = embeddings.shape[1]
        self._table = {self._key(row): vec for row, vec in zip(encode_frame(designs, schema), embeddings)}

    @staticmethod
    def _key(row: np.ndarray) -> Tuple[float, ...]:
        return tuple(np.round(row, 9))

    @classmethod
    def from_files(cls, schema: DesignSchema, designs_csv: str | Path,
                   embeddings_csv: str | Path) -> "PrecomputedEmbedder":
        designs = read_designs_csv(designs_csv, schema)
        embeddings = pd.read_csv(embeddings_csv).to_numpy(dtype=float)
        return cls(schema, designs, embeddings)

    def embed_frame(self, frame: pd.DataFrame) -> np.ndarray:
        rows = []
        for i, row in enumerate(encode_frame(frame, self.schema)):
            vec = self._table.get(self._key(row))
            if vec is None:
                raise EvaluatorError(f"No precomputed embedding for design row {i}",
                                     criterion=COSINE_DISTANCE)
            rows.append(vec)
        return np.vstack(rows)


def embed_design(design: Mapping[str, Any], embedder: Embedder) -> Embedding:
    try:
        return Embedding(embedder.embed_frame(pd.DataFrame([dict(design)]))[0])
    except EvaluatorError:
        raise
    except Exception as e:
        raise EvaluatorError(f"Embedder {type(embedder).__name__} failed: {e}",
                             criterion=COSINE_DISTANCE) from e


def cosine_distances(embeddings: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Row-wise 1 - cos between (n, E) embeddings and (n, E) or (E,) targets."""
    embeddings = np.atleast_2d(embeddings)
    targets = np.broadcast_to(np.atleast_2d(targets), embeddings.shape)
    norms = np.linalg.norm(embeddings, axis=1) * np.linalg.norm(targets, axis=1)
    if np.any(norms == 0):
        raise EvaluatorError("Cosine distance is undefined for a zero-norm embedding",
                             criterion=COSINE_DISTANCE)
    cosine = np.einsum("ij,ij->i", embeddings, targets) / norms
    return 1.0 - np.clip(cosine, -1.0, 1.0)


def aesthetic_distance(e: Embedding | np.ndarray, target: Embedding | np.ndarray) -> float:
    e_data = e.data if isinstance(e, Embedding) else np.asarray(e, dtype=float)
    t_data = target.data if isinstance(target, Embedding) else np.asarray(target, dtype=float)
    return float(cosine_distances(e_data, t_data)[0])


class AestheticsEvaluator:
    outputs = (COSINE_DISTANCE,)

    def __init__(self, embedder: Embedder):
        self.embedder = embedder
        self.substitute = embedder.substitute

    def evaluate(self, frame: pd.DataFrame, conditions: "ConditionBatch") -> pd.DataFrame:
        embeddings = self.embedder.embed_frame(frame)
        return pd.DataFrame({COSINE_DISTANCE: cosine_distances(embeddings, conditions.targets)},
                            index=frame.index)
