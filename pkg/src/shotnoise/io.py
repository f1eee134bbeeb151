"""Versioned CSV artifacts.

Every file starts with ``#`` comment lines naming the schema, its version,
the scenario hash and the seed, followed by one header row. Floats are
written with ``repr`` so re-runs give byte-identical files.

Schemas (version 1):

* ``fringe``        delay_s, signal[, stderr]
* ``distribution``  N, probability
* ``trajectory``    time_s, delta   (first row: time 0, delta = initial N)
* ``fit``           FitResult.csv_header() columns
* ``table``         free-form columns given by the writer
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaError
from .quantum import FringeData

SCHEMA_VERSION = 1
FRINGE_COLUMNS = ("delay_s", "signal", "stderr")


def scenario_hash(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(
    path: str | Path,
    schema: str,
    header: Sequence[str],
    rows: Iterable[Sequence],
    scenario: str = "",
    seed=None,
    notes: Sequence[str] = (),
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema={schema} version={SCHEMA_VERSION}\n")
        fh.write(f"# scenario_hash={scenario}\n")
        fh.write(f"# seed={'none' if seed is None else seed}\n")
        for n in notes:
            fh.write(f"# {n}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path: str | Path) -> tuple[dict[str, str], list[str], list[tuple[int, list[str]]]]:
    """Return (header comments as key=value, column names, [(line number, fields)])."""
    path = Path(path)
    meta: dict[str, str] = {}
    columns: list[str] | None = None
    rows = []
    with path.open(newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
                continue
            if not line.strip():
                continue
            fields = next(csv.reader([line]))
            if columns is None:
                columns = [c.strip() for c in fields]
            else:
                rows.append((lineno, fields))
    if columns is None:
        raise SchemaError(f"{path}: no header row")
    return meta, columns, rows


def write_fringe(path, data: FringeData, scenario: str = "", seed=None, notes=()) -> Path:
    if data.stderr is None:
        rows = zip(data.delays, data.signal)
        header = FRINGE_COLUMNS[:2]
    else:
        rows = zip(data.delays, data.signal, data.stderr)
        header = FRINGE_COLUMNS
    return write_csv(path, "fringe", header, rows, scenario, seed, notes)


def read_fringe(path) -> FringeData:
    meta, columns, rows = read_csv(path)
    if meta.get("schema", "fringe") != "fringe":
        raise SchemaError(f"{path}: schema is {meta['schema']!r}, expected 'fringe'")
    if tuple(columns[:2]) != FRINGE_COLUMNS[:2] or len(columns) > 3 or (
        len(columns) == 3 and columns[2] != "stderr"
    ):
        raise SchemaError(f"{path}: expected columns delay_s,signal[,stderr], got {','.join(columns)}")
    width = len(columns)
    t, y, e = [], [], []
    last = -math.inf
    for lineno, fields in rows:
        if len(fields) != width:
            raise SchemaError(f"{path}: line {lineno}: expected {width} fields, got {len(fields)}", row=lineno)
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            raise SchemaError(f"{path}: line {lineno}: non-numeric field in {fields}", row=lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise SchemaError(f"{path}: line {lineno}: non-finite value", row=lineno)
        if vals[0] < 0 or vals[0] <= last:
            raise SchemaError(f"{path}: line {lineno}: delays must be >= 0 and increasing", row=lineno)
        if width == 3 and vals[2] < 0:
            raise SchemaError(f"{path}: line {lineno}: negative stderr", row=lineno)
        last = vals[0]
        t.append(vals[0])
        y.append(vals[1])
        if width == 3:
            e.append(vals[2])
    if not t:
        raise SchemaError(f"{path}: no data rows")
    return FringeData(np.array(t), np.array(y), np.array(e) if width == 3 else None, {"source": str(path)})


def write_distribution(path, probs, scenario: str = "", seed=None) -> Path:
    probs = np.asarray(probs, dtype=float)
    return write_csv(path, "distribution", ("N", "probability"), enumerate(probs), scenario, seed)


def write_trajectory(path, traj, scenario: str = "", seed=None) -> Path:
    rows = [(0.0, traj.initial_n)] + list(zip(traj.times, traj.deltas))
    return write_csv(
        path, "trajectory", ("time_s", "delta"), rows, scenario, seed, [f"horizon_s={traj.horizon!r}"]
    )


def write_fits(path, results, labels: Sequence[str] | None = None, scenario: str = "", seed=None) -> Path:
    results = list(results)
    if not results:
        raise ValueError("no fit results to write")
    header = results[0].csv_header()
    if any(r.csv_header() != header for r in results):
        raise ValueError("fit results use different models")
    labels = list(labels) if labels is not None else [str(i) for i in range(len(results))]
    rows = [[lab] + r.csv_row() for lab, r in zip(labels, results)]
    return write_csv(path, "fit", ["label"] + header, rows, scenario, seed)
