"""Flat-file formats.

Features are numeric columns ``x1..xp``. Responses use ``y1..yd``
(euclidean), ``y1,y2,y3`` (sphere, unit-checked) or the upper triangle of
an SPD matrix in row-major order, ``m11,m12,...,m1d,m22,...,mdd``.
"""
from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .errors import FrechetError, SchemaError
from .metric_space import EUCLIDEAN, SPD, SPHERE, MetricPoint, get_space

_X_COL = re.compile(r"x(\d+)$")
_Y_COL = re.compile(r"y(\d+)$")
_M_COL = re.compile(r"m(\d)(\d)$")


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        rows = [(reader.line_num, row) for row in reader if row and any(c.strip() for c in row)]
    return [h.strip() for h in header], rows


def _numbered(header: list[str], pattern: re.Pattern, path, what: str) -> list[int]:
    cols = [(int(m.group(1)), i) for i, h in enumerate(header) if (m := pattern.match(h))]
    cols.sort()
    if not cols:
        raise SchemaError(f"{path}: no {what} columns found in header {header}")
    expected = list(range(1, len(cols) + 1))
    if [c for c, _ in cols] != expected:
        raise SchemaError(f"{path}: {what} columns must be numbered 1..{len(cols)}")
    return [i for _, i in cols]


def _spd_columns(header: list[str], path) -> tuple[int, list[int]]:
    found = {}
    for i, h in enumerate(header):
        m = _M_COL.match(h)
        if m:
            found[(int(m.group(1)), int(m.group(2)))] = i
    if not found:
        raise SchemaError(f"{path}: no m<i><j> columns found in header {header}")
    d = max(max(k) for k in found)
    wanted = [(i, j) for i in range(1, d + 1) for j in range(i, d + 1)]
    if sorted(found) != wanted:
        raise SchemaError(f"{path}: SPD columns must be the upper triangle m11..m{d}{d}")
    return d, [found[k] for k in wanted]


def _parse_float(value: str, path, line: int, col: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise SchemaError(f"{path}:{line}: column {col}: {value!r} is not a number") from None
    if not math.isfinite(out):
        raise SchemaError(f"{path}:{line}: column {col}: value must be finite")
    return out


def _matrix(header, rows, idx, path) -> np.ndarray:
    out = np.empty((len(rows), len(idx)))
    for r, (line, row) in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        for c, i in enumerate(idx):
            out[r, c] = _parse_float(row[i], path, line, header[i])
    return out


def read_features(path) -> np.ndarray:
    """``(N, p)`` feature matrix from a CSV with ``x1..xp`` columns."""
    header, rows = _read_rows(path)
    return _matrix(header, rows, _numbered(header, _X_COL, path, "x"), path).reshape(len(rows), -1)


def read_query_ids(path) -> list[str]:
    header, rows = _read_rows(path)
    if "query_id" in header:
        i = header.index("query_id")
        return [row[i] for _, row in rows]
    return [str(r) for r in range(len(rows))]


def read_labeled(path, space: str) -> tuple[np.ndarray, np.ndarray]:
    """Features and stacked, validated responses from a training CSV."""
    header, rows = _read_rows(path)
    x = _matrix(header, rows, _numbered(header, _X_COL, path, "x"), path)
    if space == SPD:
        d, idx = _spd_columns(header, path)
        flat = _matrix(header, rows, idx, path)
        iu = np.triu_indices(d)
        y = np.zeros((len(rows), d, d))
        y[:, iu[0], iu[1]] = flat
        y[:, iu[1], iu[0]] = flat
    elif space in (EUCLIDEAN, SPHERE):
        y = _matrix(header, rows, _numbered(header, _Y_COL, path, "y"), path)
    else:
        raise SchemaError(f"unknown response space {space!r}")
    metric = get_space(space)
    for r, (line, _) in enumerate(rows):
        try:
            metric.validate(y[r])
        except FrechetError as exc:
            raise SchemaError(
                f"{path}:{line}: response violates {space} invariant ({type(exc).__name__}: {exc})"
            ) from None
    return x, y


def write_features(path, x: np.ndarray, extra: dict[str, list] | None = None) -> None:
    x = np.atleast_2d(x)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        extra = extra or {}
        w.writerow(list(extra) + [f"x{j + 1}" for j in range(x.shape[1])])
        for i, row in enumerate(x):
            w.writerow([extra[k][i] for k in extra] + [repr(float(v)) for v in row])


def response_columns(space: str, shape: tuple) -> list[str]:
    if space == SPD:
        d = shape[0]
        return [f"m{i}{j}" for i in range(1, d + 1) for j in range(i, d + 1)]
    return [f"y{j + 1}" for j in range(shape[0])]


def flatten_response(space: str, y: np.ndarray) -> list[float]:
    if space == SPD:
        iu = np.triu_indices(y.shape[0])
        return y[iu].tolist()
    return np.asarray(y).tolist()


def write_labeled(path, x: np.ndarray, y: np.ndarray, space: str) -> None:
    x = np.atleast_2d(x)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(x.shape[1])] + response_columns(space, y[0].shape))
        for xi, yi in zip(x, y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in flatten_response(space, yi)])


def write_predictions(fh, ids, predictions, errors) -> None:
    """Rows ``query_id,response,error``; ``response`` is the JSON point encoding."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["query_id", "response", "error"])
    for qid, pred, err in zip(ids, predictions, errors):
        w.writerow([qid, "" if pred is None else json.dumps(pred.to_json()), err])


def read_predictions(path) -> list[tuple[str, MetricPoint | None, str]]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pt = MetricPoint.from_json(json.loads(row["response"])) if row["response"] else None
            out.append((row["query_id"], pt, row["error"]))
    return out


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
