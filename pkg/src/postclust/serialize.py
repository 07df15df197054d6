"""CSV and JSON interchange for data, fits, sets, and results.

Floats are written with repr (shortest round-trip form), so identical inputs
produce byte-identical files; infinities serialize as "inf".
"""
from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .clustering import ClusterAssignment, Dendrogram
from .errors import ParseError
from .inference import PValueResult
from .truncation import IntervalUnion

PVALUE_COLUMNS = ("g1", "g2", "statistic", "df", "p", "method", "mc_stderr", "n_intervals")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_float(tok: str, where: str) -> float:
    try:
        return float(tok)
    except ValueError as exc:
        raise ParseError(f"bad number {tok!r} in {where}") from exc


def write_matrix_csv(path, m: np.ndarray) -> None:
    m = np.asarray(m, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in m:
            w.writerow([_fmt(v) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    """Numeric matrix, one observation per row; a non-numeric first row is
    treated as a header and skipped."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ParseError(f"{path}: empty matrix file")
    start = 0
    try:
        [float(tok) for tok in rows[0]]
    except ValueError:
        start = 1
        if len(rows) == 1:
            raise ParseError(f"{path}: header but no data rows")
    width = len(rows[start])
    out = []
    for idx, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise ParseError(f"{path}: row {idx} has {len(row)} fields, expected {width}")
        out.append([_parse_float(tok, f"{path} row {idx}") for tok in row])
    return np.asarray(out)


def write_assignment_csv(path, assignment: ClusterAssignment) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"])
        for lbl in assignment.labels:
            w.writerow([_fmt(int(lbl))])


def write_dendrogram_csv(path, dend: Dendrogram) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "left", "right", "height"])
        for step, (left, right, height) in enumerate(dend.merges):
            w.writerow([step, left, right, _fmt(height)])


def read_dendrogram_csv(path) -> Dendrogram:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or [c.strip() for c in rows[0]] != ["step", "left", "right", "height"]:
        raise ParseError(f"{path}: expected a (step,left,right,height) header")
    merges = []
    for row in rows[1:]:
        if len(row) != 4:
            raise ParseError(f"{path}: merge rows need 4 fields")
        merges.append((int(row[1]), int(row[2]), _parse_float(row[3], path)))
    n = len(merges) + 1
    return Dendrogram(tuple(merges), n)


def intervals_to_rows(s: IntervalUnion) -> List[List[str]]:
    return [[_fmt(lo), _fmt(hi)] for lo, hi in s.to_pairs()]


def write_intervals_csv(path, s: IntervalUnion) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lo", "hi"])
        w.writerows(intervals_to_rows(s))


def read_intervals_csv(path) -> IntervalUnion:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or [c.strip() for c in rows[0]] != ["lo", "hi"]:
        raise ParseError(f"{path}: expected a (lo,hi) header")
    pairs = []
    for row in rows[1:]:
        if len(row) != 2:
            raise ParseError(f"{path}: interval rows need 2 fields")
        pairs.append((_parse_float(row[0], path), _parse_float(row[1], path)))
    return IntervalUnion(pairs)


def pvalue_row(result: PValueResult) -> List[str]:
    return [
        _fmt(result.g1),
        _fmt(result.g2),
        _fmt(result.statistic),
        _fmt(result.df),
        _fmt(result.p),
        result.method,
        _fmt(result.mc_stderr),
        _fmt(result.trunc_set.n_intervals),
    ]


def write_pvalue_csv(
    path,
    results: Sequence[PValueResult],
    adjusted: Optional[Sequence[float]] = None,
) -> None:
    """One row per tested pair; optionally appends a p_holm column."""
    header = list(PVALUE_COLUMNS)
    if adjusted is not None:
        header.append("p_holm")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for idx, res in enumerate(results):
            row = pvalue_row(res)
            if adjusted is not None:
                row.append(_fmt(float(adjusted[idx])))
            w.writerow(row)


def write_column_csv(path, name: str, values: Iterable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([name])
        for v in values:
            w.writerow([_fmt(v)])


def read_column_csv(path, name: str) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0] != [name]:
        raise ParseError(f"{path}: expected a single {name!r} column")
    return np.asarray([_parse_float(r[0], path) for r in rows[1:]])


def write_manifest(path, payload: dict) -> None:
    """Deterministic run manifest: sorted keys, no timestamps."""
    clean = json.loads(json.dumps(payload, default=_json_default))
    with open(path, "w") as fh:
        json.dump(clean, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    raise TypeError(f"cannot serialize {type(v)!r}")


def format_rows(rows: Sequence[Sequence]) -> str:
    """CSV text for a list of rows, for tests and small in-memory tables."""
    buf = io.StringIO()
    w = csv.writer(buf)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()
