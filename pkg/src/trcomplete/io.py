"""File formats: COO observation files, run-trace CSV, plot data, and
factor serialization.  The only module besides the CLI that touches disk."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .objective import SparseSample, make_sample
from .solvers import RunRecord
from .tensors import linearize_indices
from .tr import TRPoint, make_point

__all__ = [
    "CooFormatError",
    "parse_coo",
    "write_coo",
    "write_run_csv",
    "write_summary",
    "emit_plotdata",
    "save_point",
    "load_point",
]

RUN_CSV_COLUMNS = ["iter", "time_s", "f", "eps_omega", "eps_gamma",
                   "grad_norm", "step", "beta"]


class CooFormatError(ValueError):
    """Malformed COO observation file; message carries the line number."""


def _data_lines(path: Path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def parse_coo(path) -> SparseSample:
    """Read whitespace-separated observations: header (d, extents), then
    one '<i_1> ... <i_d> <value>' record per line, 1-based indices."""
    path = Path(path)
    lines = _data_lines(path)

    try:
        lineno, line = next(lines)
    except StopIteration:
        raise CooFormatError("empty file: missing order header") from None
    try:
        d = int(line)
    except ValueError:
        raise CooFormatError(f"line {lineno}: order must be an integer, got {line!r}") from None
    if d < 3:
        raise CooFormatError(f"line {lineno}: order must be >= 3, got {d}")

    try:
        lineno, line = next(lines)
    except StopIteration:
        raise CooFormatError("missing extents header") from None
    parts = line.split()
    if len(parts) != d:
        raise CooFormatError(f"line {lineno}: expected {d} extents, got {len(parts)}")
    try:
        dims = tuple(int(x) for x in parts)
    except ValueError:
        raise CooFormatError(f"line {lineno}: extents must be integers") from None
    if any(n < 1 for n in dims):
        raise CooFormatError(f"line {lineno}: extents must be >= 1")

    indices, values, linenos = [], [], []
    for lineno, line in lines:
        parts = line.split()
        if len(parts) != d + 1:
            raise CooFormatError(f"line {lineno}: expected {d + 1} fields, got {len(parts)}")
        try:
            idx = [int(x) for x in parts[:d]]
            val = float(parts[d])
        except ValueError:
            raise CooFormatError(f"line {lineno}: malformed record {line!r}") from None
        for i, n in zip(idx, dims):
            if not 1 <= i <= n:
                raise CooFormatError(f"line {lineno}: index {i} out of range [1, {n}]")
        if not math.isfinite(val):
            raise CooFormatError(f"line {lineno}: non-finite value")
        indices.append(idx)
        values.append(val)
        linenos.append(lineno)

    if not indices:
        raise CooFormatError("file contains no records")
    lin = linearize_indices(dims, np.asarray(indices))
    seen: dict[int, int] = {}
    for pos, key in enumerate(lin):
        if int(key) in seen:
            raise CooFormatError(
                f"line {linenos[pos]}: duplicate of the entry on line {seen[int(key)]}")
        seen[int(key)] = linenos[pos]
    return make_sample(dims, np.asarray(indices), np.asarray(values))


def write_coo(path, sample: SparseSample):
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"{len(sample.dims)}\n")
        fh.write(" ".join(str(n) for n in sample.dims) + "\n")
        for idx, val in zip(sample.indices, sample.values):
            fh.write(" ".join(str(int(i)) for i in idx) + f" {float(val)!r}\n")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return ""
    return repr(float(x)) if not isinstance(x, int) else str(x)


def write_run_csv(path, rec: RunRecord):
    """Per-iteration trace with the fixed column schema."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_CSV_COLUMNS)
        for log in rec.iterations:
            w.writerow([log.iter, _fmt(log.time_s), _fmt(log.f), _fmt(log.eps_omega),
                        _fmt(log.eps_gamma), _fmt(log.grad_norm), _fmt(log.step),
                        _fmt(log.beta)])


def read_run_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def write_summary(path, summary: dict):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_plotdata(rec: RunRecord, path_prefix):
    """Two CSV series for plotting: error against time and against iteration."""
    if not rec.iterations:
        raise ValueError("empty run record")
    prefix = Path(path_prefix)
    with open(prefix.with_name(prefix.name + "_time.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "eps_omega"])
        for log in rec.iterations:
            w.writerow([_fmt(log.time_s), _fmt(log.eps_omega)])
    with open(prefix.with_name(prefix.name + "_iter.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "eps_omega"])
        for log in rec.iterations:
            w.writerow([log.iter, _fmt(log.eps_omega)])


def save_point(path, p: TRPoint):
    """Binary serialization of a ring point (npz with dims, ranks, factors)."""
    arrays = {f"factor_{k}": w for k, w in enumerate(p.factors)}
    np.savez(path, dims=np.asarray(p.dims), ranks=np.asarray(p.ranks), **arrays)


def load_point(path) -> TRPoint:
    with np.load(path) as data:
        dims = tuple(int(n) for n in data["dims"])
        ranks = tuple(int(r) for r in data["ranks"])
        factors = [data[f"factor_{k}"] for k in range(len(dims))]
    return make_point(dims, ranks, factors)
