"""Mixed-datatype design space.

Holds the parameter schema, per-design validation, the one-hot continuous
relaxation used by gradient methods and distribution metrics, uniform
sampling, and the design CSV format.
"""
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cyclescore.config import resolve_path
from cyclescore.errors import DesignError, SchemaError

logger = logging.getLogger(__name__)

DEFAULT_SCHEMA_PATH = "data/schema.json"
PARAMETER_COUNT = 70
CATEGORICAL_COUNT = 8
TRUE_LABELS = {"true", "1", "1.0", "yes"}
FALSE_LABELS = {"false", "0", "0.0", "no"}

# One row of the relaxed design space; length is schema.continuous_dim.
ContinuousVector = np.ndarray


class ParameterKind(str, Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"
    BOOLEAN = "boolean"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    kind: ParameterKind
    lower: float = 0.0
    upper: float = 1.0
    categories: Tuple[str, ...] = ()

    @property
    def width(self) -> int:
        """Number of relaxed slots this parameter occupies."""
        if self.kind is ParameterKind.CATEGORICAL:
            return len(self.categories)
        return 1

    @property
    def is_numeric(self) -> bool:
        return self.kind in (ParameterKind.CONTINUOUS, ParameterKind.INTEGER)

    def check(self) -> None:
        if self.kind is ParameterKind.CATEGORICAL:
            if not self.categories:
                raise SchemaError("categorical parameter needs categories", self.name)
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError("duplicate categories", self.name)
        elif self.kind is not ParameterKind.BOOLEAN:
            if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
                raise SchemaError("bounds must be finite", self.name)
            if not self.lower < self.upper:
                raise SchemaError(
                    f"lower ({self.lower}) must be below upper ({self.upper})",
                    self.name)

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "ParameterSpec":
        name = record.get("name")
        if not isinstance(name, str) or not name:
            raise SchemaError("parameter without a name", "name")
        try:
            kind = ParameterKind(record.get("kind"))
        except ValueError as e:
            raise SchemaError(f"unknown kind {record.get('kind')!r}", name) from e
        if kind is ParameterKind.CATEGORICAL:
            categories = tuple(str(c) for c in record.get("categories") or ())
            spec = cls(name, kind, 0.0, 1.0, categories)
        elif kind is ParameterKind.BOOLEAN:
            spec = cls(name, kind, 0.0, 1.0)
        else:
            try:
                spec = cls(name, kind, float(record["lower"]),
                           float(record["upper"]))
            except (KeyError, TypeError, ValueError) as e:
                raise SchemaError("missing or non-numeric bounds", name) from e
        spec.check()
        return spec

    def to_record(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {"name": self.name, "kind": self.kind.value}
        if self.kind is ParameterKind.CATEGORICAL:
            record["categories"] = list(self.categories)
        else:
            record["lower"] = self.lower
            record["upper"] = self.upper
        return record


@dataclass(frozen=True)
class DesignSchema:
    parameters: Tuple[ParameterSpec, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)
    _slices: Tuple[slice, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        index: Dict[str, int] = {}
        slices = []
        offset = 0
        for i, spec in enumerate(self.parameters):
            if spec.name in index:
                raise SchemaError("duplicate parameter name", spec.name)
            spec.check()
            index[spec.name] = i
            slices.append(slice(offset, offset + spec.width))
            offset += spec.width
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_slices", tuple(slices))

    def __len__(self) -> int:
        return len(self.parameters)

    def __iter__(self) -> Iterator[ParameterSpec]:
        return iter(self.parameters)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> ParameterSpec:
        try:
            return self.parameters[self._index[name]]
        except KeyError:
            raise KeyError(f"Unknown parameter {name!r}") from None

    @property
    def names(self) -> List[str]:
        return [p.name for p in self.parameters]

    @property
    def continuous_dim(self) -> int:
        return sum(p.width for p in self.parameters)

    def slot(self, name: str) -> slice:
        """Slice of the relaxed vector holding `name`."""
        return self._slices[self._index[name]]

    def of_kind(self, kind: ParameterKind) -> List[ParameterSpec]:
        return [p for p in self.parameters if p.kind is kind]

    @property
    def encoded_columns(self) -> List[str]:
        columns = []
        for spec in self.parameters:
            if spec.kind is ParameterKind.CATEGORICAL:
                columns.extend(f"{spec.name}={c}" for c in spec.categories)
            else:
                columns.append(spec.name)
        return columns

    def relaxed_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Box of the relaxed space: parameter bounds, [0, 1] for indicators."""
        lower = np.zeros(self.continuous_dim)
        upper = np.ones(self.continuous_dim)
        for spec, sl in zip(self.parameters, self._slices):
            if spec.is_numeric:
                lower[sl] = spec.lower
                upper[sl] = spec.upper
        return lower, upper

    def uniform_moments(self) -> Tuple[np.ndarray, np.ndarray]:
        """Mean and std of each relaxed slot under uniform sampling."""
        mean = np.zeros(self.continuous_dim)
        std = np.ones(self.continuous_dim)
        for spec, sl in zip(self.parameters, self._slices):
            if spec.is_numeric:
                mean[sl] = (spec.lower + spec.upper) / 2
                std[sl] = (spec.upper - spec.lower) / np.sqrt(12.0)
            elif spec.kind is ParameterKind.BOOLEAN:
                mean[sl] = 0.5
                std[sl] = 0.5
            else:
                p = 1.0 / spec.width
                mean[sl] = p
                std[sl] = np.sqrt(p * (1 - p)) if spec.width > 1 else 1.0
        return mean, std

    def check_counts(self, parameters: int = PARAMETER_COUNT,
                     categorical: int = CATEGORICAL_COUNT) -> None:
        if len(self.parameters) != parameters:
            raise SchemaError(
                f"expected {parameters} parameters, found {len(self.parameters)}",
                "parameters")
        found = len(self.of_kind(ParameterKind.CATEGORICAL))
        if found != categorical:
            raise SchemaError(
                f"expected {categorical} categorical parameters, found {found}",
                "parameters")

    def with_dataset_bounds(self, frame: pd.DataFrame) -> "DesignSchema":
        """Copy whose numeric bounds are the min/max observed in `frame`."""
        specs = []
        for spec in self.parameters:
            if spec.is_numeric and spec.name in frame:
                values = pd.to_numeric(frame[spec.name], errors="coerce").dropna()
                lo, hi = float(values.min()), float(values.max())
                if len(values) and lo < hi:
                    spec = ParameterSpec(spec.name, spec.kind, lo, hi)
            specs.append(spec)
        return DesignSchema(tuple(specs))

    def to_json(self) -> str:
        return json.dumps(
            {"parameters": [p.to_record() for p in self.parameters]}, indent=2)


def load_schema(path: Optional[str | Path] = None, strict: bool = True) -> DesignSchema:
    """Load a schema file; the bundled schema when `path` is None."""
    path = resolve_path(path or DEFAULT_SCHEMA_PATH)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise SchemaError(f"cannot read schema file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SchemaError(f"schema file {path} is not valid JSON: {e}") from e
    records = raw.get("parameters") if isinstance(raw, dict) else None
    if not isinstance(records, list):
        raise SchemaError("schema needs a 'parameters' list", "parameters")
    schema = DesignSchema(tuple(ParameterSpec.from_record(r) for r in records))
    if strict:
        schema.check_counts()
    logger.debug("Loaded schema with %d parameters from %s", len(schema), path)
    return schema


class Design(Mapping[str, Any]):
    """One design: parameter name -> typed value."""
    __slots__ = ("_values",)

    def __init__(self, values: Mapping[str, Any]):
        self._values = dict(values)

    def __getitem__(self, name: str) -> Any:
        return self._values[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        return f"Design({len(self._values)} parameters)"

    def updated(self, changes: Mapping[str, Any]) -> "Design":
        values = dict(self._values)
        values.update(changes)
        return Design(values)

    def to_frame(self, schema: DesignSchema) -> pd.DataFrame:
        return designs_to_frame([self], schema)


@dataclass(frozen=True)
class Violation:
    name: str
    message: str


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def __str__(self) -> str:
        return "; ".join(f"{v.name}: {v.message}" for v in self.violations)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(
        value, (bool, np.bool_))


def validate(design: Mapping[str, Any], schema: DesignSchema) -> ValidationReport:
    """List every schema violation of `design`; values are never modified."""
    report = ValidationReport()
    for name in design:
        if name not in schema:
            report.violations.append(Violation(name, "unknown parameter"))
    for spec in schema:
        if spec.name not in design:
            report.violations.append(Violation(spec.name, "missing"))
            continue
        value = design[spec.name]
        if spec.kind is ParameterKind.CATEGORICAL:
            if str(value) not in spec.categories:
                report.violations.append(
                    Violation(spec.name, f"{value!r} is not one of {list(spec.categories)}"))
        elif spec.kind is ParameterKind.BOOLEAN:
            if not isinstance(value, (bool, np.bool_)):
                report.violations.append(Violation(spec.name, f"{value!r} is not a boolean"))
        elif not _is_number(value) or not np.isfinite(value):
            report.violations.append(Violation(spec.name, f"{value!r} is not a finite number"))
        elif spec.kind is ParameterKind.INTEGER and float(value) != round(float(value)):
            report.violations.append(Violation(spec.name, f"{value!r} is not an integer"))
        elif not spec.lower <= value <= spec.upper:
            report.violations.append(
                Violation(spec.name, f"{value} outside [{spec.lower}, {spec.upper}]"))
    return report


def _as_bool(column: pd.Series, name: str) -> np.ndarray:
    if column.dtype == bool:
        return column.to_numpy()
    labels = column.astype(str).str.strip().str.lower()
    unknown = ~labels.isin(TRUE_LABELS | FALSE_LABELS)
    if unknown.any():
        raise DesignError(f"{name}: cannot read {column[unknown].iloc[0]!r} as a boolean")
    return labels.isin(TRUE_LABELS).to_numpy()


def coerce_frame(frame: pd.DataFrame, schema: DesignSchema) -> pd.DataFrame:
    """Design table in schema column order with canonical dtypes."""
    missing = [n for n in schema.names if n not in frame.columns]
    if missing:
        raise DesignError(f"missing parameters: {missing}")
    columns = {}
    for spec in schema:
        column = frame[spec.name]
        if spec.kind is ParameterKind.CATEGORICAL:
            columns[spec.name] = column.astype(str).to_numpy(dtype=object)
        elif spec.kind is ParameterKind.BOOLEAN:
            columns[spec.name] = _as_bool(column, spec.name)
        elif spec.kind is ParameterKind.INTEGER:
            columns[spec.name] = pd.to_numeric(column).round().astype(np.int64).to_numpy()
        else:
            columns[spec.name] = pd.to_numeric(column).astype(float).to_numpy()
    return pd.DataFrame(columns, index=range(len(frame)))


def _native(spec: ParameterSpec, value: Any) -> Any:
    if spec.kind is ParameterKind.CATEGORICAL:
        return str(value)
    if spec.kind is ParameterKind.BOOLEAN:
        return bool(value)
    if spec.kind is ParameterKind.INTEGER:
        return int(value)
    return float(value)


def designs_to_frame(designs: Iterable[Mapping[str, Any]], schema: DesignSchema) -> pd.DataFrame:
    rows = [dict(d) for d in designs]
    frame = pd.DataFrame(rows, columns=schema.names)
    return coerce_frame(frame, schema)


def frame_to_designs(frame: pd.DataFrame, schema: DesignSchema) -> List[Design]:
    designs = []
    for row in frame[schema.names].itertuples(index=False, name=None):
        designs.append(Design({spec.name: _native(spec, v) for spec, v in zip(schema, row)}))
    return designs


def encode_frame(frame: pd.DataFrame, schema: DesignSchema) -> np.ndarray:
    """(n, continuous_dim) relaxation of a design table."""
    frame = coerce_frame(frame, schema)
    n = len(frame)
    out = np.zeros((n, schema.continuous_dim))
    rows = np.arange(n)
    for spec in schema:
        sl = schema.slot(spec.name)
        column = frame[spec.name]
        if spec.kind is ParameterKind.CATEGORICAL:
            codes = pd.Categorical(column, categories=list(spec.categories)).codes
            if (codes < 0).any():
                bad = column[codes < 0].iloc[0]
                raise DesignError(f"{spec.name}: {bad!r} is not one of {list(spec.categories)}")
            out[rows, sl.start + codes] = 1.0
        else:
            out[:, sl.start] = column.to_numpy(dtype=float)
    return out


def encode_continuous(design: Mapping[str, Any], schema: DesignSchema) -> ContinuousVector:
    report = validate(design, schema)
    if not report.ok:
        raise DesignError(f"invalid design: {report}")
    return encode_frame(designs_to_frame([design], schema), schema)[0]


def _round_half_away(values: np.ndarray) -> np.ndarray:
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def decode_matrix(matrix: np.ndarray, schema: DesignSchema) -> pd.DataFrame:
    """Map relaxed rows back to a valid design table.

    Booleans are true at >= 0.5, categoricals take the argmax of their block
    (lowest index on ties), integers round half away from zero, and numeric
    values are clamped to their bounds.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[1] != schema.continuous_dim:
        raise DesignError(
            f"expected vectors of length {schema.continuous_dim}, got {matrix.shape[1]}")
    columns = {}
    for spec in schema:
        block = matrix[:, schema.slot(spec.name)]
        if spec.kind is ParameterKind.CATEGORICAL:
            labels = np.array(spec.categories, dtype=object)
            columns[spec.name] = labels[np.argmax(block, axis=1)]
        elif spec.kind is ParameterKind.BOOLEAN:
            columns[spec.name] = block[:, 0] >= 0.5
        elif spec.kind is ParameterKind.INTEGER:
            rounded = np.clip(_round_half_away(block[:, 0]), spec.lower, spec.upper)
            columns[spec.name] = rounded.astype(np.int64)
        else:
            columns[spec.name] = np.clip(block[:, 0], spec.lower, spec.upper)
    return pd.DataFrame(columns, index=range(len(matrix)))


def decode_continuous(vector: Sequence[float], schema: DesignSchema) -> Design:
    vector = np.asarray(vector, dtype=float)
    if vector.ndim != 1:
        raise DesignError("decode_continuous expects a single vector")
    return frame_to_designs(decode_matrix(vector, schema), schema)[0]


def sample_frame(schema: DesignSchema, n: int, seed: int) -> pd.DataFrame:
    """`n` designs drawn independently and uniformly per parameter."""
    rng = np.random.default_rng(seed)
    columns = {}
    for spec in schema:
        if spec.kind is ParameterKind.CATEGORICAL:
            labels = np.array(spec.categories, dtype=object)
            columns[spec.name] = labels[rng.integers(0, spec.width, size=n)]
        elif spec.kind is ParameterKind.BOOLEAN:
            columns[spec.name] = rng.random(n) < 0.5
        elif spec.kind is ParameterKind.INTEGER:
            columns[spec.name] = rng.integers(int(spec.lower), int(spec.upper) + 1, size=n)
        else:
            columns[spec.name] = rng.uniform(spec.lower, spec.upper, size=n)
    return pd.DataFrame(columns, index=range(n))


def sample_uniform(schema: DesignSchema, seed: int) -> Design:
    return frame_to_designs(sample_frame(schema, 1, seed), schema)[0]


def read_designs_csv(path: str | Path, schema: DesignSchema) -> pd.DataFrame:
    """Read a design CSV (header row of parameter names, one design per row)."""
    dtypes = {p.name: str for p in schema
              if p.kind in (ParameterKind.CATEGORICAL, ParameterKind.BOOLEAN)}
    try:
        frame = pd.read_csv(path, dtype=dtypes, float_precision="round_trip")
    except (OSError, pd.errors.ParserError) as e:
        raise DesignError(f"cannot read designs from {path}: {e}") from e
    return coerce_frame(frame, schema)


def write_designs_csv(frame: pd.DataFrame, path: str | Path, schema: DesignSchema) -> None:
    frame = coerce_frame(frame, schema).copy()
    for spec in schema.of_kind(ParameterKind.BOOLEAN):
        frame[spec.name] = np.where(frame[spec.name], "true", "false")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
