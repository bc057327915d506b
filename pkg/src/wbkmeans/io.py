"""Text formats: point files, sparse assignment triplets and JSON documents."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .core import TAU_ZERO, Assignment, WeightedDataset, duplicate_pair


class IngestError(ValueError):
    """A point file row could not be used; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def _split(line: str):
    if "," in line:
        return [t.strip() for t in line.split(",")]
    if ";" in line:
        return [t.strip() for t in line.split(";")]
    return line.split()


def _numeric(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _parse_rows(text: str, what: str):
    rows, lines = [], []
    header_allowed = True
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = _split(line)
        try:
            values = [float(f) for f in fields]
        except ValueError:
            if header_allowed and not any(_numeric(f) for f in fields):
                header_allowed = False
                continue
            raise IngestError(f"malformed {what} row {raw.strip()!r}", lineno) from None
        header_allowed = False
        if not all(math.isfinite(v) for v in values):
            raise IngestError(f"non-finite value in {what} row", lineno)
        if rows and len(values) != len(rows[0]):
            raise IngestError(
                f"expected {len(rows[0])} columns like line {lines[0]}, found {len(values)}", lineno
            )
        rows.append(values)
        lines.append(lineno)
    return rows, lines


def ingest(path) -> WeightedDataset:
    """Read points: ``d`` coordinate columns then a weight column per row.

    Comma, semicolon or whitespace delimited; an optional header line and
    ``#`` comments are skipped.
    """
    text = Path(path).read_text()
    rows, lines = _parse_rows(text, "point")
    if not rows:
        raise IngestError(f"{path}: no points found")
    if len(rows[0]) < 2:
        raise IngestError("each row needs at least one coordinate and a weight", lines[0])
    arr = np.array(rows)
    pts, w = arr[:, :-1], arr[:, -1]
    for r, wt in enumerate(w):
        if wt <= 0:
            raise IngestError(f"weight {wt!r} is not positive", lines[r])
    dup = duplicate_pair(pts)
    if dup is not None:
        a, b = dup
        raise IngestError(
            f"duplicates the point on line {lines[a]}; merge them into one row with the summed weight",
            lines[b],
        )
    return WeightedDataset(pts, w)


def serialize_points(data: WeightedDataset) -> str:
    d = data.d
    header = ",".join([f"x{i}" for i in range(d)] + ["weight"])
    body = "\n".join(
        ",".join(repr(float(v)) for v in (*p, w)) for p, w in zip(data.points, data.weights)
    )
    return header + "\n" + body + "\n"


def write_points(path, data: WeightedDataset) -> None:
    Path(path).write_text(serialize_points(data))


def read_matrix(path, what: str = "value") -> np.ndarray:
    """Numeric rows of a delimited file as a 2-D array."""
    rows, _ = _parse_rows(Path(path).read_text(), what)
    if not rows:
        raise IngestError(f"{path}: no rows found")
    return np.array(rows)


def read_sites(path) -> np.ndarray:
    """Sites from a delimited file or a JSON document with a ``sites`` list."""
    p = Path(path)
    if p.suffix == ".json":
        doc = json.loads(p.read_text())
        return np.array(doc["sites"] if isinstance(doc, dict) else doc, dtype=float)
    return read_matrix(p, "site")


def serialize_assignment(assignment: Assignment, tau: float = TAU_ZERO) -> str:
    """Sparse triplets ``cluster,point,fraction`` for entries above ``tau``."""
    lines = ["cluster,point,fraction"]
    i_idx, j_idx = np.nonzero(assignment.y > tau)
    order = np.lexsort((i_idx, j_idx))
    for t in order:
        i, j = int(i_idx[t]), int(j_idx[t])
        lines.append(f"{i},{j},{float(assignment.y[i, j])!r}")
    return "\n".join(lines) + "\n"


def read_assignment(path, k: int, n: int) -> Assignment:
    rows, lines = _parse_rows(Path(path).read_text(), "assignment")
    y = np.zeros((k, n))
    for (i, j, v), lineno in zip(rows, lines):
        if int(i) != i or int(j) != j or not (0 <= i < k and 0 <= j < n):
            raise IngestError(f"entry ({i}, {j}) outside a {k} x {n} assignment", lineno)
        y[int(i), int(j)] = v
    return Assignment(y)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(doc) -> str:
    return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc))
