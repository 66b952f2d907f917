"""Reading and writing run logs, fitted laws and routing tables.

Run logs are CSV or JSON with the columns listed in :data:`RUN_COLUMNS`.
Fits are stored as small JSON documents tagged with :data:`FIT_SCHEMA`; the
JSON Schema describing them ships as ``data/fit.schema.json``. Floats are
written with ``repr`` precision, so a save/load round trip is exact.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Union

from .core import (AssignmentTable, FrontierLaws, LossSurfaceFit, PowerLawFit, RunRecord,
                   SparseLossSurfaceFit, validate_dataset)
from .errors import EmptyDataset, InvariantViolation, ParseError, SchemaMismatch

RUN_COLUMNS = ("run_id", "arch", "n_active", "n_total", "n_vision", "tokens", "vision_token_fraction",
               "mixture", "eval_set", "loss", "figure")
REQUIRED_COLUMNS = ("run_id", "arch", "n_active", "n_total", "tokens", "eval_set", "loss")
NUMERIC_COLUMNS = ("n_active", "n_total", "n_vision", "tokens", "vision_token_fraction", "loss")
ASSIGNMENT_COLUMNS = ("layer", "expert", "text_tokens", "image_tokens", "source")

FIT_SCHEMA = "nmm-scalelab/fit/v1"

FIXTURES = {
    "early": "runs_early.csv",
    "late": "runs_late.csv",
    "moe": "runs_moe.csv",
    "heldout_8b": "heldout_8b.csv",
}

Fit = Union[LossSurfaceFit, SparseLossSurfaceFit, PowerLawFit, FrontierLaws]
_KINDS = {
    "loss_surface": LossSurfaceFit,
    "sparse_loss_surface": SparseLossSurfaceFit,
    "power_law": PowerLawFit,
    "frontier": FrontierLaws,
}


# --- run logs ---------------------------------------------------------------

def _number(text: str, line: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", line, column) from None


def _record(row: dict[str, Any], line: int | None) -> RunRecord:
    for col in REQUIRED_COLUMNS:
        if row.get(col) in (None, ""):
            raise ParseError("missing value", line, col)
    vals: dict[str, Any] = {}
    for col in NUMERIC_COLUMNS:
        raw = row.get(col)
        if raw is None or raw == "":
            vals[col] = None
        elif isinstance(raw, str):
            vals[col] = _number(raw.strip(), line, col)
        elif isinstance(raw, (int, float)) and not isinstance(raw, bool):
            vals[col] = float(raw)
        else:
            raise ParseError(f"not a number: {raw!r}", line, col)
    mixture = row.get("mixture") or "45-45-10"
    return RunRecord(run_id=str(row["run_id"]), arch=str(row["arch"]).strip(), n_active=vals["n_active"],
                     n_total=vals["n_total"], tokens=vals["tokens"], loss=vals["loss"],
                     eval_set=str(row["eval_set"]).strip(), mixture=str(mixture), n_vision=vals["n_vision"],
                     vision_token_fraction=vals["vision_token_fraction"])


def _rows_from_csv(text: str, require_figure: bool):
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames
    if not header:
        raise ParseError("missing header", 1)
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if require_figure and "figure" not in header:
        missing.append("figure")
    if missing:
        raise ParseError(f"header lacks columns {missing}", 1)
    for row in reader:
        if None in row:
            raise ParseError("too many fields", reader.line_num)
        yield reader.line_num, row


def _rows_from_json(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    rows = doc.get("runs") if isinstance(doc, dict) else doc
    if not isinstance(rows, list):
        raise ParseError("expected a list of runs or an object with a 'runs' list")
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise ParseError(f"run #{i} is not an object")
        yield None, row


def parse_runs(text: str, fmt: str = "csv", require_figure: bool = False) -> list[RunRecord]:
    """Parse run records from CSV or JSON text and validate them as a dataset."""
    if fmt == "csv":
        rows = _rows_from_csv(text, require_figure)
    elif fmt == "json":
        rows = _rows_from_json(text)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    records = []
    for line, row in rows:
        if require_figure and not row.get("figure"):
            raise ParseError("fixture rows need a figure provenance value", line, "figure")
        records.append(_record(row, line))
    if not records:
        raise EmptyDataset("no runs in input")
    validate_dataset(records)
    return records


def load_runs(path, fmt: str | None = None, require_figure: bool = False) -> list[RunRecord]:
    path = Path(path)
    fmt = fmt or ("json" if path.suffix.lower() == ".json" else "csv")
    return parse_runs(path.read_text(encoding="utf-8"), fmt, require_figure)


def format_runs_csv(records: Iterable[RunRecord], figure: str = "") -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(RUN_COLUMNS)
    for r in records:
        writer.writerow([r.run_id, r.arch.value, repr(r.n_active), repr(r.n_total),
                         "" if r.n_vision is None else repr(r.n_vision), repr(r.tokens),
                         "" if r.vision_token_fraction is None else repr(r.vision_token_fraction),
                         r.mixture, r.eval_set.value, repr(r.loss), figure])
    return out.getvalue()


def fixture_path(name: str):
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    return resources.files("nmm_scalelab") / "data" / FIXTURES[name]


def load_fixture(name: str) -> list[RunRecord]:
    """Bundled runs transcribed from published figure coordinates."""
    return parse_runs(fixture_path(name).read_text(encoding="utf-8"), "csv", require_figure=True)


# --- fits -------------------------------------------------------------------------

def _encode(value):
    if isinstance(value, float) and not math.isfinite(value):
        raise InvariantViolation("value", "non-finite numbers cannot be serialized")
    if hasattr(value, "value") and not isinstance(value, (int, float)):
        return value.value  # enums
    return value


def fit_to_dict(fit: Fit) -> dict:
    for kind, cls in _KINDS.items():
        if type(fit) is cls:
            break
    else:
        raise TypeError(f"cannot serialize {type(fit).__name__}")
    if isinstance(fit, FrontierLaws):
        fields = {f.name: (fit_to_dict(getattr(fit, f.name))["fields"] if f.name != "source"
                           else fit.source.value) for f in dataclasses.fields(fit)}
    else:
        fields = {f.name: _encode(getattr(fit, f.name)) for f in dataclasses.fields(fit)}
    return {"schema": FIT_SCHEMA, "kind": kind, "fields": fields}


def _build(cls, fields: dict):
    if not isinstance(fields, dict):
        raise SchemaMismatch("'fields' must be an object")
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = set(fields) - set(names)
    if unknown:
        raise SchemaMismatch(f"unexpected fields {sorted(unknown)} for {cls.__name__}")
    if cls is FrontierLaws:
        missing = [n for n in names if n not in fields]
        if missing:
            raise SchemaMismatch(f"missing fields {missing}")
        parts = {n: _build(PowerLawFit, fields[n]) for n in names if n != "source"}
        return FrontierLaws(source=fields["source"], **parts)
    required = [f.name for f in dataclasses.fields(cls)
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
    missing = [n for n in required if n not in fields]
    if missing:
        raise SchemaMismatch(f"missing fields {missing} for {cls.__name__}")
    return cls(**fields)


def fit_from_dict(doc: Any) -> Fit:
    if not isinstance(doc, dict) or "schema" not in doc:
        raise SchemaMismatch("document has no 'schema' field")
    if doc["schema"] != FIT_SCHEMA:
        raise SchemaMismatch(f"schema {doc['schema']!r} is not {FIT_SCHEMA!r}")
    kind = doc.get("kind")
    if kind not in _KINDS:
        raise SchemaMismatch(f"unknown kind {kind!r}")
    return _build(_KINDS[kind], doc.get("fields"))


def dumps_fit(fit: Fit) -> str:
    return json.dumps(fit_to_dict(fit), indent=2, allow_nan=False) + "\n"


def loads_fit(text: str) -> Fit:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    return fit_from_dict(doc)


def save_fit(fit: Fit, path) -> None:
    Path(path).write_text(dumps_fit(fit), encoding="utf-8")


def load_fit(path) -> Fit:
    return loads_fit(Path(path).read_text(encoding="utf-8"))


def fit_json_schema() -> dict:
    """The published JSON Schema for fit documents."""
    return json.loads((resources.files("nmm_scalelab") / "data" / "fit.schema.json").read_text(encoding="utf-8"))


# --- routing tables ---------------------------------------------------------------

def parse_assignments(text: str) -> AssignmentTable:
    reader = csv.DictReader(io.StringIO(text))
    if not reader.fieldnames:
        raise ParseError("missing header", 1)
    missing = [c for c in ASSIGNMENT_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise ParseError(f"header lacks columns {missing}", 1)
    cells: dict[tuple[int, int], tuple[float, float]] = {}
    sources = set()
    for row in reader:
        line = reader.line_num
        try:
            key = (int(row["layer"]), int(row["expert"]))
        except (TypeError, ValueError):
            raise ParseError("layer and expert must be integers", line) from None
        if key in cells:
            raise ParseError(f"duplicate cell {key}", line)
        cells[key] = (_number(row["text_tokens"], line, "text_tokens"),
                      _number(row["image_tokens"], line, "image_tokens"))
        sources.add(row["source"])
    if not cells:
        raise EmptyDataset("no assignment rows")
    if len(sources) != 1:
        raise ParseError(f"expected one source label, found {sorted(sources)}")
    return AssignmentTable.from_cells(sources.pop(), cells)


def load_assignments(path) -> AssignmentTable:
    return parse_assignments(Path(path).read_text(encoding="utf-8"))


def format_assignments(table: AssignmentTable) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(ASSIGNMENT_COLUMNS)
    for layer in range(table.num_layers):
        for e in range(table.num_experts):
            writer.writerow([layer, e, repr(float(table.text_tokens[layer, e])),
                             repr(float(table.image_tokens[layer, e])), table.source])
    return out.getvalue()


def save_assignments(table: AssignmentTable, path) -> None:
    Path(path).write_text(format_assignments(table), encoding="utf-8")
