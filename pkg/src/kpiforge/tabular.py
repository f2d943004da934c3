"""Tabular data layer: schemas, CSV ingestion, cleaning, splits.

A :class:`Table` is a column store over a validated schema. Numeric
columns are float64 arrays, categorical columns are int32 code arrays
with a per-column dictionary in first-appearance order. Missing cells
are tracked in a boolean mask per column; downstream estimators require
tables whose masks are all false (see :func:`clean`).

Schemas are written as key-value configuration files, one section per
column::

    [column.case_duration_days]
    kind = numeric
    role = target

    [column.channel]
    kind = categorical
    missing = impute

``role`` defaults to ``feature`` and ``missing`` to ``reject``. Columns
with ``role = ignored`` must exist in the file but are dropped at load
time and never enter the Table.
"""
from __future__ import annotations

import configparser
import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllMissingError,
    ConfigError,
    DataError,
    DegenerateSplitError,
    DuplicateColumnError,
    EmptyFileError,
    InvalidParamsError,
    MissingColumnError,
    RejectedMissingError,
    TargetMissingValueError,
)
from .seeding import HOLDOUT, child_rng


class ColumnKind(str, enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


class Role(str, enum.Enum):
    FEATURE = "feature"
    TARGET = "target"
    IGNORED = "ignored"


class MissingPolicy(str, enum.Enum):
    REJECT = "reject"
    IMPUTE = "impute"


@dataclass(frozen=True)
class ColumnSpec:
    """Declared name, kind, role, and missing-value policy of one column."""

    name: str
    kind: ColumnKind
    role: Role = Role.FEATURE
    missing: MissingPolicy = MissingPolicy.REJECT


def validate_schema(specs: list[ColumnSpec] | tuple[ColumnSpec, ...]) -> tuple[ColumnSpec, ...]:
    """Check schema invariants and return the specs as a tuple.

    Exactly one column must carry the target role, names must be unique
    and non-empty, and the target must not be ignored.
    """
    specs = tuple(specs)
    if not specs:
        raise ConfigError("schema declares no columns")
    seen: set[str] = set()
    for s in specs:
        if not s.name:
            raise ConfigError("schema contains a column with an empty name")
        if s.name in seen:
            raise DuplicateColumnError(f"schema names column {s.name!r} twice")
        seen.add(s.name)
    targets = [s for s in specs if s.role is Role.TARGET]
    if len(targets) != 1:
        raise ConfigError(
            f"schema must declare exactly one target column, found {len(targets)}"
        )
    return specs


def read_schema(path: str) -> tuple[ColumnSpec, ...]:
    """Parse a schema configuration file into column specs (file order)."""
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"schema file not found: {path}")
    specs = []
    for section in parser.sections():
        if not section.startswith("column."):
            raise ConfigError(
                f"{path}: unexpected section [{section}]; schema sections are [column.<name>]"
            )
        name = section[len("column."):]
        opts = parser[section]
        try:
            kind = ColumnKind(opts.get("kind", ""))
        except ValueError:
            raise ConfigError(
                f"{path}: column {name!r} needs kind = numeric or categorical"
            ) from None
        try:
            role = Role(opts.get("role", "feature"))
            missing = MissingPolicy(opts.get("missing", "reject"))
        except ValueError as exc:
            raise ConfigError(f"{path}: column {name!r}: {exc}") from None
        specs.append(ColumnSpec(name=name, kind=kind, role=role, missing=missing))
    return validate_schema(specs)


def write_schema(specs: tuple[ColumnSpec, ...], path: str) -> None:
    """Write specs back out in the configuration format read_schema accepts."""
    parser = configparser.ConfigParser(interpolation=None)
    for s in specs:
        section = f"column.{s.name}"
        parser.add_section(section)
        parser[section]["kind"] = s.kind.value
        if s.role is not Role.FEATURE:
            parser[section]["role"] = s.role.value
        if s.missing is not MissingPolicy.REJECT:
            parser[section]["missing"] = s.missing.value
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def _parse_numeric(cell: str) -> float:
    """Parse one numeric cell; returns NaN for missing/unparseable cells.

    Only plain decimal notation is accepted: no locale separators, no
    underscores. Non-finite values are treated as missing because no
    estimator here can consume them.
    """
    text = cell.strip()
    if not text or "_" in text:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        return math.nan
    return value if math.isfinite(value) else math.nan


@dataclass(eq=False)
class Table:
    """Immutable-by-convention column store bound to a schema.

    ``columns`` maps column name to a float64 array (numeric) or an
    int32 code array (categorical); ``dictionaries`` maps categorical
    names to their code-to-string dictionaries; ``masks`` marks missing
    cells. Missing categorical cells hold code -1.
    """

    schema: tuple[ColumnSpec, ...]
    n_rows: int
    columns: dict[str, np.ndarray]
    masks: dict[str, np.ndarray]
    dictionaries: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def target_spec(self) -> ColumnSpec:
        return next(s for s in self.schema if s.role is Role.TARGET)

    @property
    def feature_specs(self) -> tuple[ColumnSpec, ...]:
        return tuple(s for s in self.schema if s.role is Role.FEATURE)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.feature_specs)

    @property
    def task(self) -> str:
        """"classification" for a categorical target, else "regression"."""
        return (
            "classification"
            if self.target_spec.kind is ColumnKind.CATEGORICAL
            else "regression"
        )

    @property
    def has_missing(self) -> bool:
        return any(bool(m.any()) for m in self.masks.values())

    def decode(self, name: str) -> list[str | None]:
        """Categorical column as strings, None at missing positions."""
        dictionary = self.dictionaries[name]
        codes = self.columns[name]
        mask = self.masks[name]
        return [
            None if mask[i] else dictionary[codes[i]] for i in range(self.n_rows)
        ]

    def take(self, indices: np.ndarray) -> "Table":
        """Row subset (with repetition allowed); dictionaries are shared."""
        indices = np.asarray(indices, dtype=np.intp)
        return Table(
            schema=self.schema,
            n_rows=int(indices.size),
            columns={k: v[indices] for k, v in self.columns.items()},
            masks={k: v[indices] for k, v in self.masks.items()},
            dictionaries=dict(self.dictionaries),
        )

    def equals(self, other: "Table") -> bool:
        """Semantic equality: same schema, masks, and observed values.

        Categorical columns compare by decoded strings so two tables
        with differently ordered dictionaries but identical content are
        equal.
        """
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        for s in self.schema:
            if not np.array_equal(self.masks[s.name], other.masks[s.name]):
                return False
            observed = ~self.masks[s.name]
            if s.kind is ColumnKind.NUMERIC:
                a = self.columns[s.name][observed]
                b = other.columns[s.name][observed]
                if not np.array_equal(a, b):
                    return False
            else:
                if self.decode(s.name) != other.decode(s.name):
                    return False
        return True


def from_columns(
    schema: list[ColumnSpec] | tuple[ColumnSpec, ...],
    data: dict[str, list],
) -> Table:
    """Build a Table from in-memory columns.

    Numeric columns take floats (NaN or None for missing), categorical
    columns take strings (None or "" for missing). The same validation
    as :func:`load_table` applies; ignored columns are dropped.
    """
    specs = validate_schema(schema)
    kept = tuple(s for s in specs if s.role is not Role.IGNORED)
    lengths = {len(data[s.name]) for s in kept}
    if len(lengths) != 1:
        raise DataError("columns have differing lengths")
    n_rows = lengths.pop()
    if n_rows == 0:
        raise EmptyFileError("table has no rows")
    columns: dict[str, np.ndarray] = {}
    masks: dict[str, np.ndarray] = {}
    dictionaries: dict[str, tuple[str, ...]] = {}
    for s in kept:
        raw = data[s.name]
        if s.kind is ColumnKind.NUMERIC:
            values = np.array(
                [math.nan if v is None else float(v) for v in raw], dtype=np.float64
            )
            mask = ~np.isfinite(values)
            values[mask] = math.nan
        else:
            code_of: dict[str, int] = {}
            codes = np.full(n_rows, -1, dtype=np.int32)
            mask = np.zeros(n_rows, dtype=bool)
            for i, v in enumerate(raw):
                if v is None or v == "":
                    mask[i] = True
                    continue
                text = str(v)
                if text not in code_of:
                    code_of[text] = len(code_of)
                codes[i] = code_of[text]
            values = codes
            dictionaries[s.name] = tuple(code_of)
        if s.role is Role.TARGET and mask.any():
            row = int(np.flatnonzero(mask)[0])
            raise TargetMissingValueError(
                f"target column {s.name!r} is missing at row {row}"
            )
        columns[s.name] = values
        masks[s.name] = mask
    return Table(
        schema=kept, n_rows=n_rows, columns=columns, masks=masks,
        dictionaries=dictionaries,
    )


def load_table(path: str, schema: list[ColumnSpec] | tuple[ColumnSpec, ...]) -> Table:
    """Load a CSV file against a schema.

    The file must be UTF-8 with a header row; the header must contain
    exactly the schema's column names (any order). Empty fields are
    missing. A missing value in the target column is fatal.
    """
    specs = validate_schema(schema)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFileError(f"{path}: file is empty") from None
        except UnicodeDecodeError as exc:
            raise DataError(f"{path}: not valid UTF-8: {exc}") from None
        seen: set[str] = set()
        for name in header:
            if name in seen:
                raise DuplicateColumnError(f"{path}: header names {name!r} twice")
            seen.add(name)
        wanted = {s.name for s in specs}
        missing = wanted - seen
        if missing:
            raise MissingColumnError(
                f"{path}: header lacks schema column(s) {sorted(missing)}"
            )
        extra = seen - wanted
        if extra:
            raise MissingColumnError(
                f"{path}: schema does not describe file column(s) {sorted(extra)}"
            )
        position = {name: i for i, name in enumerate(header)}
        kept = tuple(s for s in specs if s.role is not Role.IGNORED)
        cells: dict[str, list[str]] = {s.name: [] for s in kept}
        n_rows = 0
        try:
            for line_no, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise DataError(
                        f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
                    )
                for s in kept:
                    cells[s.name].append(row[position[s.name]])
                n_rows += 1
        except UnicodeDecodeError as exc:
            raise DataError(f"{path}: not valid UTF-8: {exc}") from None
    if n_rows == 0:
        raise EmptyFileError(f"{path}: no data rows")

    columns: dict[str, np.ndarray] = {}
    masks: dict[str, np.ndarray] = {}
    dictionaries: dict[str, tuple[str, ...]] = {}
    for s in kept:
        raw = cells[s.name]
        if s.kind is ColumnKind.NUMERIC:
            values = np.array([_parse_numeric(c) for c in raw], dtype=np.float64)
            mask = np.isnan(values)
        else:
            code_of: dict[str, int] = {}
            codes = np.full(n_rows, -1, dtype=np.int32)
            mask = np.zeros(n_rows, dtype=bool)
            for i, cell in enumerate(raw):
                if cell == "":
                    mask[i] = True
                    continue
                if cell not in code_of:
                    code_of[cell] = len(code_of)
                codes[i] = code_of[cell]
            values = codes
            dictionaries[s.name] = tuple(code_of)
        if s.role is Role.TARGET and mask.any():
            row = int(np.flatnonzero(mask)[0])
            raise TargetMissingValueError(
                f"{path}: target column {s.name!r} is missing at data row {row + 1}"
            )
        columns[s.name] = values
        masks[s.name] = mask
    return Table(
        schema=kept, n_rows=n_rows, columns=columns, masks=masks,
        dictionaries=dictionaries,
    )


def clean(table: Table) -> Table:
    """Resolve missing cells according to each column's policy.

    Reject-policy columns with missing cells raise; impute-policy
    columns receive the observed mean (numeric) or the modal code with
    ties broken toward the lowest code (categorical). Cleaning an
    already-clean table returns an equal table, so the operation is
    idempotent.
    """
    columns: dict[str, np.ndarray] = {}
    masks: dict[str, np.ndarray] = {}
    for s in table.schema:
        values = table.columns[s.name]
        mask = table.masks[s.name]
        if not mask.any():
            columns[s.name] = values.copy()
            masks[s.name] = np.zeros(table.n_rows, dtype=bool)
            continue
        if s.role is Role.TARGET:
            raise TargetMissingValueError(
                f"target column {s.name!r} has missing values"
            )
        if s.missing is MissingPolicy.REJECT:
            raise RejectedMissingError(
                f"column {s.name!r} has {int(mask.sum())} missing value(s) "
                "and policy reject"
            )
        observed = ~mask
        if not observed.any():
            raise AllMissingError(f"column {s.name!r} has no observed values")
        filled = values.copy()
        if s.kind is ColumnKind.NUMERIC:
            filled[mask] = float(np.mean(values[observed]))
        else:
            size = max(len(table.dictionaries[s.name]), 1)
            counts = np.bincount(values[observed], minlength=size)
            filled[mask] = int(np.argmax(counts))
        columns[s.name] = filled
        masks[s.name] = np.zeros(table.n_rows, dtype=bool)
    return Table(
        schema=table.schema, n_rows=table.n_rows, columns=columns, masks=masks,
        dictionaries=dict(table.dictionaries),
    )


def split_holdout(table: Table, fraction: float, seed: int) -> tuple[Table, Table]:
    """Deterministic shuffled split.

    The first table receives round(fraction * n_rows) rows, clamped so
    neither side is empty. Both sides keep the original relative row
    order. Tables with fewer than two rows cannot be split.
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidParamsError(f"fraction must lie in (0, 1), got {fraction}")
    n = table.n_rows
    if n < 2:
        raise DegenerateSplitError(f"cannot split a table with {n} row(s)")
    n_first = min(max(round(fraction * n), 1), n - 1)
    perm = child_rng(seed, HOLDOUT).permutation(n)
    first = np.sort(perm[:n_first])
    second = np.sort(perm[n_first:])
    return table.take(first), table.take(second)


def write_table(table: Table, path: str) -> None:
    """Write a Table as CSV, the inverse of :func:`load_table`.

    Numeric cells use repr formatting so reloading reproduces the exact
    float; missing cells become empty fields. For tables without
    missing values, load_table(write_table(t)) equals t.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        names = [s.name for s in table.schema]
        writer.writerow(names)
        decoded = {
            s.name: table.decode(s.name)
            for s in table.schema
            if s.kind is ColumnKind.CATEGORICAL
        }
        for i in range(table.n_rows):
            row = []
            for s in table.schema:
                if table.masks[s.name][i]:
                    row.append("")
                elif s.kind is ColumnKind.NUMERIC:
                    row.append(repr(float(table.columns[s.name][i])))
                else:
                    row.append(decoded[s.name][i])
            writer.writerow(row)
