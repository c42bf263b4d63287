"""File formats: CSV data tables, tier manifests, and result documents.

Floats in CSV output use the shortest round-trip representation, so files are
byte-stable across runs and platforms for identical inputs.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .graphs import AncestralMatrix, RelationKind
from .sample import SampleResult


class DataError(ValueError):
    """Raised when an input table or manifest is malformed."""


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partials."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_csv(path: str | Path, values: np.ndarray, columns: Sequence[str]) -> None:
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[1] != len(columns):
        raise DataError("values shape does not match the column list")
    lines = [",".join(columns)]
    for row in values:
        lines.append(",".join(repr(float(v)) for v in row))
    write_atomic(path, "\n".join(lines) + "\n")


def read_csv(path: str | Path) -> tuple[np.ndarray, list[str]]:
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            columns = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(columns):
                raise DataError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(rec)}")
            try:
                rows.append([float(v) for v in rec])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric value ({exc})")
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float), columns


def write_tiers(path: str | Path, tiers: Mapping[str, str]) -> None:
    doc = {
        "background": [k for k, t in tiers.items() if t == "background"],
        "foreground": [k for k, t in tiers.items() if t == "foreground"],
    }
    write_atomic(path, json.dumps(doc, indent=2) + "\n")


def read_tiers(path: str | Path, columns: Sequence[str]) -> tuple[list[int], list[int]]:
    """Resolve a tier manifest against a table header; returns column indices."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    index = {name: k for k, name in enumerate(columns)}
    out = []
    for key in ("background", "foreground"):
        names = doc.get(key)
        if not isinstance(names, list):
            raise DataError(f"{path}: manifest needs a '{key}' list")
        cols = []
        for name in names:
            if name not in index:
                raise DataError(f"{path}: column {name!r} not present in the data table")
            cols.append(index[name])
        out.append(cols)
    return out[0], out[1]


def matrix_document(
    matrix: AncestralMatrix, names: Mapping[int, str] | None = None
) -> dict:
    return matrix.to_json_dict(names)


def sample_result_document(
    result: SampleResult,
    names: Mapping[int, str] | None = None,
    evidence: str = "summary",
) -> dict:
    doc = matrix_document(result.matrix, names)
    doc["passes"] = result.passes
    doc["selector_calls"] = result.selector_calls
    doc["skipped_conflicts"] = result.skipped_conflicts
    doc["pairs"] = {
        f"{i},{j}": ev.to_json_dict(full=(evidence == "full"))
        for (i, j), ev in sorted(result.evidence.items())
    }
    return doc


def parse_relation(value: str) -> RelationKind:
    try:
        return RelationKind(value)
    except ValueError:
        raise DataError(f"unknown relation kind {value!r}")


def load_matrix_document(doc: Mapping) -> tuple[AncestralMatrix, dict]:
    """Rebuild a matrix from its JSON document; returns it plus name->id map."""
    fg = doc.get("foreground")
    if not isinstance(fg, list) or len(fg) < 2:
        raise DataError("matrix document needs a 'foreground' list")
    if all(isinstance(v, int) for v in fg):
        ids = {v: v for v in fg}
    else:
        ids = {name: k for k, name in enumerate(fg)}
    matrix = AncestralMatrix(list(ids.values()))
    for rec in doc.get("entries", []):
        kind = parse_relation(rec["relation"])
        if kind is RelationKind.NA:
            continue
        matrix.update(ids[rec["i"]], ids[rec["j"]], kind, rec.get("provenance"))
    return matrix, ids
