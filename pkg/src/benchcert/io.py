"""CSV ingestion and CSV/JSON emission.

Candidate files carry an ``id`` column, evidence columns prefixed ``e_``,
optional ``d_label`` and ``y_star`` columns, and optional per-action loss
columns prefixed ``loss_``. Any error names the file, line and column.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .fibers import CONTINUOUS, DISCRETE, CandidateTable

EVIDENCE_PREFIX = "e_"
LOSS_PREFIX = "loss_"
LABEL_COLUMN = "d_label"
RESPONSE_COLUMN = "y_star"


@dataclass(frozen=True)
class CsvData:
    path: str
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    lines: tuple[int, ...]

    def column(self, name: str) -> list[str]:
        j = self.header.index(name)
        return [r[j] for r in self.rows]

    def where(self, i: int, column: str) -> str:
        return f"{self.path}: line {self.lines[i]}, column {column!r}"


def read_csv(path: str | Path, rename: Mapping[str, str] | None = None) -> CsvData:
    """Read a headered UTF-8 CSV, rejecting ragged rows and repeated column names."""
    path = str(path)
    try:
        handle = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise ValidationError(f"cannot open {path}: {exc.strerror}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: file is empty (a header row is required)") from None
        except (csv.Error, UnicodeDecodeError) as exc:
            raise ValidationError(f"{path}: unreadable header: {exc}") from None
        header = [h.strip() for h in header]
        if rename:
            unknown = sorted(set(rename) - set(header))
            if unknown:
                raise ValidationError(f"{path}: mapped columns {unknown} are not in the header")
            header = [rename.get(h, h) for h in header]
        dup = sorted({h for h in header if header.count(h) > 1})
        if dup:
            raise ValidationError(f"{path}: repeated column names {dup}")
        if any(h == "" for h in header):
            raise ValidationError(f"{path}: empty column name in header")
        rows, lines = [], []
        try:
            for row in reader:
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise ValidationError(
                        f"{path}: line {reader.line_num} has {len(row)} fields, header has {len(header)}"
                    )
                rows.append(tuple(c.strip() for c in row))
                lines.append(reader.line_num)
        except (csv.Error, UnicodeDecodeError) as exc:
            raise ValidationError(f"{path}: line {reader.line_num}: {exc}") from None
    return CsvData(path, tuple(header), tuple(rows), tuple(lines))


def _parse_float(data: CsvData, i: int, column: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"{data.where(i, column)}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise ValidationError(f"{data.where(i, column)}: value {text!r} is not finite")
    return value


def _is_number(text: str) -> bool:
    try:
        return math.isfinite(float(text))
    except ValueError:
        return False


def _tokens(values: Sequence[str]) -> tuple[Any, ...]:
    """Label/action tokens: integers when every value is an integer literal, else strings."""
    try:
        return tuple(int(v) for v in values)
    except ValueError:
        return tuple(values)


def read_schema(path: str | Path) -> dict[str, str]:
    """A JSON object mapping evidence column names to ``discrete`` or ``continuous``."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot open schema {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"schema {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict) or not all(v in (DISCRETE, CONTINUOUS) for v in obj.values()):
        raise ValidationError(f"schema {path} must map column names to 'discrete' or 'continuous'")
    return dict(obj)


def parse_mapping(items: Iterable[str]) -> dict[str, str]:
    """``SRC=DST`` pairs from the command line."""
    out = {}
    for item in items:
        src, sep, dst = item.partition("=")
        if not sep or not src or not dst:
            raise ValidationError(f"column mapping {item!r} must look like SOURCE=TARGET")
        out[src] = dst
    return out


def ingest_candidates(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    rename: Mapping[str, str] | None = None,
) -> CandidateTable:
    data = read_csv(path, rename)
    if "id" not in data.header:
        raise ValidationError(f"{data.path}: required column 'id' is missing")
    if not data.rows:
        raise ValidationError(f"{data.path}: no data rows")
    ids = data.column("id")
    seen: dict[str, int] = {}
    for i, cid in enumerate(ids):
        if not cid:
            raise ValidationError(f"{data.where(i, 'id')}: empty id")
        if cid in seen:
            raise ValidationError(f"{data.where(i, 'id')}: duplicate id {cid!r} (first on line {data.lines[seen[cid]]})")
        seen[cid] = i

    ev_cols = [h for h in data.header if h.startswith(EVIDENCE_PREFIX)]
    schema = dict(schema or {})
    unknown = sorted(set(schema) - set(ev_cols))
    if unknown:
        raise ValidationError(f"schema names columns {unknown} that are not evidence columns")
    kinds = []
    columns = []
    for col in ev_cols:
        raw = data.column(col)
        for i, text in enumerate(raw):
            if text == "":
                raise ValidationError(f"{data.where(i, col)}: missing evidence value")
        kind = schema.get(col) or (CONTINUOUS if all(_is_number(t) for t in raw) else DISCRETE)
        if kind == CONTINUOUS:
            columns.append([_parse_float(data, i, col, t) for i, t in enumerate(raw)])
        else:
            columns.append(raw)
        kinds.append(kind)
    evidence = tuple(tuple(col[i] for col in columns) for i in range(len(ids)))

    labels = None
    if LABEL_COLUMN in data.header:
        raw = data.column(LABEL_COLUMN)
        for i, text in enumerate(raw):
            if text == "":
                raise ValidationError(f"{data.where(i, LABEL_COLUMN)}: missing label")
        labels = _tokens(raw)

    responses = None
    if RESPONSE_COLUMN in data.header:
        raw = data.column(RESPONSE_COLUMN)
        responses = tuple(_parse_float(data, i, RESPONSE_COLUMN, t) for i, t in enumerate(raw))

    losses = None
    alphabet = None
    loss_cols = [h for h in data.header if h.startswith(LOSS_PREFIX)]
    if loss_cols:
        actions = _tokens([h[len(LOSS_PREFIX):] for h in loss_cols])
        values = {
            a: [_parse_float(data, i, col, t) for i, t in enumerate(data.column(col))]
            for a, col in zip(actions, loss_cols)
        }
        losses = tuple({a: values[a][i] for a in actions} for i in range(len(ids)))
        extra = sorted(set(labels or ()) - set(actions), key=repr)
        if extra:
            raise ValidationError(f"{data.path}: labels {extra} have no loss_ column")
        alphabet = tuple(sorted(actions, key=repr))

    return CandidateTable(
        ids=tuple(ids),
        evidence=evidence,
        kinds=tuple(kinds),
        evidence_names=tuple(ev_cols),
        labels=labels,
        alphabet=alphabet,
        responses=responses,
        losses=losses,
    )


@dataclass(frozen=True)
class Bounds:
    ids: tuple[str, ...]
    centers: np.ndarray
    deltas: np.ndarray
    radii: np.ndarray


def read_bounds(path: str | Path, radius: float | None = None) -> Bounds:
    """Per-candidate ``y_hat``, ``delta`` and ``radius`` columns.

    A global ``radius`` replaces a missing ``radius`` column.
    """
    data = read_csv(path)
    need = ["id", "y_hat", "delta"] + ([] if radius is not None else ["radius"])
    missing = [c for c in need if c not in data.header]
    if missing:
        raise ValidationError(f"{data.path}: missing bound columns {missing}")
    if not data.rows:
        raise ValidationError(f"{data.path}: no data rows")
    ids = data.column("id")
    if len(set(ids)) != len(ids):
        dup = next(x for x in ids if ids.count(x) > 1)
        raise ValidationError(f"{data.path}: duplicate id {dup!r}")

    def numbers(col: str) -> np.ndarray:
        return np.array([_parse_float(data, i, col, t) for i, t in enumerate(data.column(col))])

    centers = numbers("y_hat")
    deltas = numbers("delta")
    radii = np.full(len(ids), float(radius)) if radius is not None else numbers("radius")
    for name, arr in (("delta", deltas), ("radius", radii)):
        bad = np.flatnonzero(arr < 0)
        if bad.size:
            raise ValidationError(f"{data.where(int(bad[0]), name)}: must be nonnegative")
    return Bounds(tuple(ids), centers, deltas, radii)


@dataclass(frozen=True)
class Vectors:
    ids: tuple[str, ...]
    matrix: np.ndarray
    costs: tuple[float, ...]


def read_vectors(path: str | Path, allow_empty: bool = False) -> Vectors:
    """One vector per row; optional ``id`` and ``cost`` columns, every other column a coordinate."""
    data = read_csv(path)
    coords = [h for h in data.header if h not in ("id", "cost")]
    if not coords:
        raise ValidationError(f"{data.path}: no coordinate columns")
    if not data.rows and not allow_empty:
        raise ValidationError(f"{data.path}: no vectors")
    ids = data.column("id") if "id" in data.header else [f"q{i}" for i in range(len(data.rows))]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{data.path}: vector ids must be unique")
    matrix = np.array(
        [[_parse_float(data, i, c, data.rows[i][data.header.index(c)]) for c in coords] for i in range(len(data.rows))],
        dtype=float,
    ).reshape(len(data.rows), len(coords))
    if "cost" in data.header:
        costs = tuple(_parse_float(data, i, "cost", t) for i, t in enumerate(data.column("cost")))
        for i, c in enumerate(costs):
            if c <= 0:
                raise ValidationError(f"{data.where(i, 'cost')}: cost must be positive")
    else:
        costs = (1.0,) * len(ids)
    return Vectors(tuple(ids), matrix, costs)


def read_probe_values(path: str | Path) -> dict[str, list[float]]:
    """Calibration measurements, one column per pool probe id."""
    data = read_csv(path)
    return {
        col: [_parse_float(data, i, col, t) for i, t in enumerate(data.column(col)) if t != ""]
        for col in data.header
    }


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"))
    return str(value)


def write_csv(rows: Sequence[Mapping[str, Any]], path: str | Path, columns: Sequence[str] | None = None) -> Path:
    """Rows as CSV with ``\\n`` line endings; column order follows the first row."""
    path = Path(path)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
    return path


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dump_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(obj: Any, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dump_json(obj), encoding="utf-8")
    return path


def write_candidates(table: CandidateTable, path: str | Path) -> Path:
    """Inverse of :func:`ingest_candidates` for tables built in code."""
    names = [n if n.startswith(EVIDENCE_PREFIX) else EVIDENCE_PREFIX + n for n in table.evidence_names]
    rows = []
    for i, cid in enumerate(table.ids):
        row: dict[str, Any] = {"id": cid}
        row.update(zip(names, table.evidence[i]))
        if table.labels is not None:
            row[LABEL_COLUMN] = table.labels[i]
        if table.responses is not None:
            row[RESPONSE_COLUMN] = float(table.responses[i])
        if table.losses is not None:
            for a, v in table.losses[i].items():
                row[f"{LOSS_PREFIX}{a}"] = float(v)
        rows.append(row)
    return write_csv(rows, path)
