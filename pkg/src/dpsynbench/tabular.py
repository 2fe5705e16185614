"""Column-typed tabular datasets: schemas, validation, encoding, CSV persistence.

Every other module trades in the :class:`Dataset` defined here. Categorical
cells are stored as integer level indices (the schema carries the level
count), count cells as non-negative integers, continuous cells as floats.
All values live in one immutable float64 array.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
COUNT = "count"

_KINDS = (CONTINUOUS, CATEGORICAL, COUNT)


class SchemaError(ValueError):
    """Schema construction or schema/data mismatch problem."""


class CsvError(ValueError):
    """Malformed CSV content, with row/column location in the message."""


@dataclass(frozen=True)
class Column:
    """One typed column. ``levels`` is meaningful for categorical columns only."""

    name: str
    kind: str
    levels: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise SchemaError(f"unknown column kind {self.kind!r} for {self.name!r}")
        if self.kind == CATEGORICAL and self.levels < 2:
            raise SchemaError(f"categorical column {self.name!r} needs >= 2 levels")
        if self.kind != CATEGORICAL and self.levels:
            raise SchemaError(f"{self.kind} column {self.name!r} must not declare levels")


@dataclass(frozen=True)
class StructuralZeroRule:
    """Whenever row[guard_column] == guard_level, row[forced_column] must equal forced_level."""

    guard_column: str
    guard_level: int
    forced_column: str
    forced_level: int

    def label(self) -> str:
        return (f"zero:{self.guard_column}={self.guard_level}"
                f"=>{self.forced_column}={self.forced_level}")


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]
    zero_rules: tuple[StructuralZeroRule, ...] = ()
    outcome: str | None = None

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        by_name = {c.name: c for c in self.columns}
        for rule in self.zero_rules:
            for col_name, level in ((rule.guard_column, rule.guard_level),
                                    (rule.forced_column, rule.forced_level)):
                col = by_name.get(col_name)
                if col is None:
                    raise SchemaError(f"zero rule references unknown column {col_name!r}")
                if col.kind != CATEGORICAL:
                    raise SchemaError(f"zero rule column {col_name!r} is not categorical")
                if not 0 <= level < col.levels:
                    raise SchemaError(f"zero rule level {level} out of range for {col_name!r}")
        if self.outcome is not None and self.outcome not in by_name:
            raise SchemaError(f"outcome column {self.outcome!r} not in schema")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise SchemaError(f"no column named {name!r}")

    def column(self, name: str) -> Column:
        return self.columns[self.index(name)]


class Violation(NamedTuple):
    row: int
    rule: str


class Dataset:
    """Immutable table of shape (n_rows, n_columns) with a :class:`Schema`.

    ``values`` is copied and locked; categorical and count cells must hold
    integral floats (out-of-range levels and negative counts are reported by
    :func:`validate` rather than rejected at construction).
    """

    __slots__ = ("schema", "values")

    def __init__(self, schema: Schema, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise SchemaError(f"values must be 2-d, got shape {values.shape}")
        if values.shape[1] != len(schema.columns):
            raise SchemaError(
                f"values have {values.shape[1]} columns, schema has {len(schema.columns)}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    def take(self, indices) -> "Dataset":
        return Dataset(self.schema, self.values[np.asarray(indices, dtype=np.intp)])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.schema == other.schema and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"Dataset({self.n_rows} rows x {len(self.schema.columns)} columns)"


def validate(d: Dataset) -> list[Violation]:
    """Return every domain and structural-zero violation in ``d``.

    The list is empty iff the dataset is valid. Domain rules: categorical
    cells must be integral and in [0, levels), count cells integral and >= 0.
    """
    out: list[Violation] = []
    for j, col in enumerate(d.schema.columns):
        v = d.values[:, j]
        if col.kind == CATEGORICAL:
            bad = (v != np.floor(v)) | (v < 0) | (v >= col.levels)
            tag = f"domain:{col.name}:level"
        elif col.kind == COUNT:
            bad = (v != np.floor(v)) | (v < 0)
            tag = f"domain:{col.name}:count"
        else:
            bad = ~np.isfinite(v)
            tag = f"domain:{col.name}:finite"
        for i in np.flatnonzero(bad):
            out.append(Violation(int(i), tag))
    for rule in d.schema.zero_rules:
        guard = d.column(rule.guard_column)
        forced = d.column(rule.forced_column)
        bad = (guard == rule.guard_level) & (forced != rule.forced_level)
        for i in np.flatnonzero(bad):
            out.append(Violation(int(i), rule.label()))
    out.sort()
    return out


@dataclass(frozen=True)
class ColumnBlock:
    """Location of one schema column inside the encoded matrix."""

    name: str
    kind: str
    start: int
    stop: int
    mean: float = 0.0
    sd: float = 1.0


@dataclass
class OneHotEncoder:
    """One-hot expansion of categorical columns plus standardization of the rest.

    Standardization parameters are estimated by :meth:`fit` once (on training
    data) and reused for any dataset encoded afterwards, so no statistics of
    test or synthetic data leak into the encoding.
    """

    schema: Schema
    blocks: list[ColumnBlock] = field(default_factory=list)

    def fit(self, d: Dataset) -> "OneHotEncoder":
        if d.schema != self.schema:
            raise SchemaError("encoder schema does not match dataset schema")
        blocks = []
        pos = 0
        for col in self.schema.columns:
            v = d.column(col.name)
            if col.kind == CATEGORICAL:
                blocks.append(ColumnBlock(col.name, col.kind, pos, pos + col.levels))
                pos += col.levels
            else:
                mean = float(np.mean(v)) if v.size else 0.0
                sd = float(np.std(v)) if v.size else 1.0
                if sd == 0.0:
                    raise ValueError(f"zero-variance column {col.name!r} cannot be standardized")
                blocks.append(ColumnBlock(col.name, col.kind, pos, pos + 1, mean, sd))
                pos += 1
        self.blocks = blocks
        return self

    @property
    def width(self) -> int:
        if not self.blocks:
            raise ValueError("encoder is not fitted")
        return self.blocks[-1].stop

    def encode(self, d: Dataset) -> np.ndarray:
        if d.schema != self.schema:
            raise SchemaError("encoder schema does not match dataset schema")
        out = np.zeros((d.n_rows, self.width))
        for block in self.blocks:
            v = d.column(block.name)
            if block.kind == CATEGORICAL:
                idx = v.astype(np.intp)
                out[np.arange(d.n_rows), block.start + idx] = 1.0
            else:
                out[:, block.start] = (v - block.mean) / block.sd
        return out

    def decode(self, mat: np.ndarray) -> Dataset:
        """Invert :meth:`encode`. Categorical blocks decode by argmax, so soft
        probability blocks (e.g. generator output) decode to the modal level;
        count columns are rounded to the nearest non-negative integer."""
        mat = np.asarray(mat, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] != self.width:
            raise ValueError(f"expected matrix with {self.width} columns, got {mat.shape}")
        values = np.zeros((mat.shape[0], len(self.schema.columns)))
        for j, block in enumerate(self.blocks):
            if block.kind == CATEGORICAL:
                values[:, j] = np.argmax(mat[:, block.start:block.stop], axis=1)
            else:
                raw = mat[:, block.start] * block.sd + block.mean
                if block.kind == COUNT:
                    raw = np.maximum(np.rint(raw), 0.0)
                values[:, j] = raw
        return Dataset(self.schema, values)


def one_hot(d: Dataset) -> tuple[np.ndarray, OneHotEncoder]:
    """Fit an encoder on ``d`` and return (encoded matrix, encoder)."""
    enc = OneHotEncoder(d.schema).fit(d)
    return enc.encode(d), enc


def split_holdout(d: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint (train, test) row partition; ``fraction`` is the held-out share."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n_test = int(round(d.n_rows * fraction))
    if n_test == 0 or n_test == d.n_rows:
        raise ValueError(f"fraction {fraction} yields an empty part for {d.n_rows} rows")
    perm = np.random.default_rng(seed).permutation(d.n_rows)
    return d.take(np.sort(perm[n_test:])), d.take(np.sort(perm[:n_test]))


def _format_cell(value: float, kind: str) -> str:
    if kind == CONTINUOUS:
        return repr(float(value))
    return str(int(value))


def write_csv(d: Dataset, path) -> None:
    """Write ``d`` as headered CSV. Floats use shortest round-trip formatting,
    so write/read is lossless and byte-deterministic."""
    kinds = [c.kind for c in d.schema.columns]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(d.schema.names) + "\n")
        for row in d.values:
            fh.write(",".join(_format_cell(x, k) for x, k in zip(row, kinds)) + "\n")


def read_csv(path, schema: Schema) -> Dataset:
    """Read a CSV written by :func:`write_csv` (or compatible) under ``schema``.

    Raises :class:`CsvError` with the offending row/column on unknown columns,
    non-numeric cells, non-integral categorical or count cells, and
    out-of-range levels.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        names = header.split(",") if header else []
        if tuple(names) != schema.names:
            raise CsvError(f"header {names} does not match schema columns {list(schema.names)}")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(names):
                raise CsvError(f"line {lineno}: expected {len(names)} cells, got {len(cells)}")
            parsed = np.empty(len(cells))
            for j, (cell, col) in enumerate(zip(cells, schema.columns)):
                try:
                    x = float(cell)
                except ValueError:
                    raise CsvError(
                        f"line {lineno}, column {col.name!r}: non-numeric cell {cell!r}") from None
                if col.kind in (CATEGORICAL, COUNT) and x != np.floor(x):
                    raise CsvError(
                        f"line {lineno}, column {col.name!r}: non-integer cell {cell!r}")
                if col.kind == CATEGORICAL and not 0 <= x < col.levels:
                    raise CsvError(
                        f"line {lineno}, column {col.name!r}: level {int(x)} out of "
                        f"range [0, {col.levels})")
                if col.kind == COUNT and x < 0:
                    raise CsvError(f"line {lineno}, column {col.name!r}: negative count {cell!r}")
                parsed[j] = x
            rows.append(parsed)
    values = np.array(rows) if rows else np.empty((0, len(schema.columns)))
    return Dataset(schema, values)


_ZERO_RULE_RE = re.compile(
    r"^zero\s+(\S+)\s+(\d+)\s*=>\s*(\S+)\s+(\d+)$")


def schema_to_text(schema: Schema) -> str:
    lines = []
    for col in schema.columns:
        if col.kind == CATEGORICAL:
            lines.append(f"column {col.name} categorical {col.levels}")
        else:
            lines.append(f"column {col.name} {col.kind}")
    for rule in schema.zero_rules:
        lines.append(f"zero {rule.guard_column} {rule.guard_level} "
                     f"=> {rule.forced_column} {rule.forced_level}")
    if schema.outcome is not None:
        lines.append(f"outcome {schema.outcome}")
    return "\n".join(lines) + "\n"


def write_schema(schema: Schema, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(schema_to_text(schema))


def schema_from_text(text: str) -> Schema:
    """Parse the declarative schema format written by :func:`schema_to_text`.

    Lines: ``column <name> continuous|count``, ``column <name> categorical <k>``,
    ``zero <guard> <level> => <forced> <level>``, ``outcome <name>``.
    ``#`` starts a comment.
    """
    columns: list[Column] = []
    rules: list[StructuralZeroRule] = []
    outcome = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "column":
            if len(parts) == 3 and parts[2] in (CONTINUOUS, COUNT):
                columns.append(Column(parts[1], parts[2]))
            elif len(parts) == 4 and parts[2] == CATEGORICAL:
                columns.append(Column(parts[1], CATEGORICAL, int(parts[3])))
            else:
                raise SchemaError(f"line {lineno}: bad column declaration {line!r}")
        elif parts[0] == "zero":
            m = _ZERO_RULE_RE.match(line)
            if not m:
                raise SchemaError(f"line {lineno}: bad zero rule {line!r}")
            rules.append(StructuralZeroRule(m.group(1), int(m.group(2)),
                                            m.group(3), int(m.group(4))))
        elif parts[0] == "outcome":
            if len(parts) != 2:
                raise SchemaError(f"line {lineno}: bad outcome declaration {line!r}")
            outcome = parts[1]
        else:
            raise SchemaError(f"line {lineno}: unknown directive {parts[0]!r}")
    return Schema(tuple(columns), tuple(rules), outcome)


def read_schema(path) -> Schema:
    with open(path, "r", encoding="utf-8") as fh:
        return schema_from_text(fh.read())
