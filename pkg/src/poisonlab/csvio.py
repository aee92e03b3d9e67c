"""CSV ingestion and export for :class:`TimeSeriesDataset`.

Layout: ``#`` comment lines carrying lineage and attribute kinds, a header
``device,time,<attr...>``, then one row per (device, time).  Floats are written
with ``repr`` so export followed by ingest is exact.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dataset import AttributeKind, Continuous, Discrete, Provenance, TimeSeriesDataset
from .errors import ConfigurationError, MissingDataError, ParseError


@dataclass(frozen=True)
class CsvSchema:
    """Maps CSV columns to attributes.

    ``columns`` maps a column name to its kind; ``None`` means "use the kind
    stored in the file header, or infer ``[min, max]`` for a numeric column".
    ``rename`` optionally renames columns to attribute names.  With
    ``rescale`` every continuous column is Min-Max mapped to ``[-1, 1]``.
    """

    columns: Mapping[str, AttributeKind | None] = field(default_factory=dict)
    rename: Mapping[str, str] = field(default_factory=dict)
    rescale: bool = False
    device_column: str = "device"
    time_column: str = "time"


def _kind_to_json(kind: AttributeKind) -> dict:
    if isinstance(kind, Continuous):
        return {"kind": "continuous", "lo": kind.lo, "hi": kind.hi}
    return {"kind": "discrete", "labels": list(kind.labels)}


def _kind_from_json(obj: dict) -> AttributeKind:
    if obj.get("kind") == "continuous":
        return Continuous(float(obj["lo"]), float(obj["hi"]))
    if obj.get("kind") == "discrete":
        return Discrete(tuple(obj["labels"]))
    raise ParseError(f"unknown attribute kind in header: {obj!r}")


def export_csv(ds: TimeSeriesDataset, path: str | os.PathLike) -> None:
    if not str(path):
        raise ConfigurationError("export path must be non-empty")
    kinds = {name: _kind_to_json(kind) for name, kind in zip(ds.names, ds.kinds)}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# provenance: {ds.provenance.value}\n")
        fh.write(f"# lineage: {','.join(p.value for p in ds.lineage)}\n")
        fh.write(f"# kinds: {json.dumps(kinds, sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["device", "time", *ds.names])
        for i, dev in enumerate(ds.device_ids):
            for t, tm in enumerate(ds.times):
                row = [dev, tm]
                for j, kind in enumerate(ds.kinds):
                    v = ds.values[i, j, t]
                    row.append(kind.labels[int(v)] if isinstance(kind, Discrete) else repr(float(v)))
                writer.writerow(row)


def ingest_csv(path: str | os.PathLike, schema: CsvSchema | None = None) -> TimeSeriesDataset:
    """Read a dataset; every (device, time) cell must be present exactly once."""
    schema = schema or CsvSchema()
    if not str(path):
        raise ConfigurationError("ingest path must be non-empty")
    meta: dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    body_start = 0
    for body_start, line in enumerate(lines):
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif line.strip():
            break
    else:
        raise ParseError("file has no header row")
    reader = csv.reader(lines[body_start:])
    header = next(reader)
    dcol, tcol = schema.device_column, schema.time_column
    if dcol not in header or tcol not in header:
        raise ParseError(f"header must contain {dcol!r} and {tcol!r} columns", row=1)
    stored = {k: _kind_from_json(v) for k, v in json.loads(meta["kinds"]).items()} if "kinds" in meta else {}
    attr_cols = list(schema.columns) if schema.columns else [c for c in header if c not in (dcol, tcol)]
    missing_cols = [c for c in attr_cols if c not in header]
    if missing_cols:
        raise ParseError(f"columns {missing_cols} not found in header", row=1)
    if not attr_cols:
        raise ParseError("no attribute columns")
    col_idx = [header.index(c) for c in attr_cols]
    declared = [schema.columns.get(c) if schema.columns else None for c in attr_cols]
    declared = [d if d is not None else stored.get(c) for d, c in zip(declared, attr_cols)]

    devices: dict[str, int] = {}
    times: dict[str, int] = {}
    cells: dict[tuple[int, int], list[float]] = {}
    first_data_row = body_start + 2
    for r, row in enumerate(reader, start=first_data_row):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=r)
        dev = row[header.index(dcol)]
        tm = row[header.index(tcol)]
        key = (devices.setdefault(dev, len(devices)), times.setdefault(tm, len(times)))
        if key in cells:
            raise ParseError(f"duplicate cell device={dev!r} time={tm!r}", row=r)
        vals = []
        for c, ci, kind in zip(attr_cols, col_idx, declared):
            raw = row[ci].strip()
            if isinstance(kind, Discrete):
                if raw not in kind.labels:
                    raise ParseError(f"value {raw!r} of column {c!r} is not a declared category", row=r)
                vals.append(float(kind.labels.index(raw)))
            else:
                try:
                    v = float(raw)
                except ValueError:
                    raise ParseError(f"value {raw!r} of column {c!r} is not a number", row=r) from None
                if not math.isfinite(v):
                    raise ParseError(f"value {raw!r} of column {c!r} is not finite", row=r)
                vals.append(v)
        cells[key] = vals

    n, T, k = len(devices), len(times), len(attr_cols)
    if n == 0:
        raise MissingDataError("file contains no data rows")
    if len(cells) != n * T:
        dev_names, time_names = list(devices), list(times)
        for i in range(n):
            for t in range(T):
                if (i, t) not in cells:
                    raise MissingDataError(f"missing cell device={dev_names[i]!r} time={time_names[t]!r}")
    values = np.empty((n, k, T))
    for (i, t), vals in cells.items():
        values[i, :, t] = vals

    kinds: list[AttributeKind] = []
    for j, kind in enumerate(declared):
        col = values[:, j, :]
        if isinstance(kind, Discrete):
            kinds.append(kind)
            continue
        if schema.rescale:
            lo, hi = float(col.min()), float(col.max())
            values[:, j, :] = 0.0 if hi == lo else 2.0 * (col - lo) / (hi - lo) - 1.0
            kinds.append(Continuous(-1.0, 1.0))
        elif kind is not None:
            kinds.append(kind)
        else:
            lo, hi = float(col.min()), float(col.max())
            if lo == hi:
                raise ParseError(f"cannot infer a domain for constant column {attr_cols[j]!r}")
            kinds.append(Continuous(lo, hi))

    lineage = (Provenance.RAW,)
    if "lineage" in meta:
        try:
            lineage = tuple(Provenance(p) for p in meta["lineage"].split(","))
        except ValueError:
            raise ParseError(f"bad lineage comment {meta['lineage']!r}") from None
    if schema.rescale:
        lineage = (Provenance.RAW,)
    names = tuple(schema.rename.get(c, c) for c in attr_cols)
    return TimeSeriesDataset(names, tuple(kinds), values, lineage, tuple(devices), tuple(times))
