"""CSV exchange format for time series.

The first row is a header of channel names and must include ``time_s``.
Rows are samples.  Floats are written with ``repr`` so a write/read cycle
is lossless.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import IngestError
from .surrogate import UNITS
from .timeseries import TimeSeriesDataset

TIME = "time_s"
JITTER = 1e-6  # s


def read_header(path) -> list[str]:
    with open(path, newline="") as fh:
        row = next(csv.reader(fh), None)
    if not row:
        raise IngestError(f"{path}: file is empty")
    return [h.strip() for h in row]


def ingest_csv(path, roles: dict | None = None) -> TimeSeriesDataset:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise IngestError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise IngestError(f"{path}: duplicate column(s) {dupes}")
    if TIME not in header:
        raise IngestError(f"{path}: no {TIME!r} column")
    body = rows[1:]
    if len(body) < 2:
        raise IngestError(f"{path}: need at least 2 data rows, found {len(body)}")

    data = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        line = i + 2  # 1-based, counting the header
        if len(row) != len(header):
            raise IngestError(f"{path}: row {line} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if math.isnan(v):
                raise IngestError(f"{path}: row {line}, column {header[j]!r}: missing or NaN value {cell!r}")
            data[i, j] = v

    t = data[:, header.index(TIME)]
    dt = np.diff(t)
    if np.any(dt <= 0):
        i = int(np.flatnonzero(dt <= 0)[0])
        raise IngestError(f"{path}: {TIME} not strictly increasing at row {i + 3}")
    step = (t[-1] - t[0]) / (len(t) - 1)
    ideal = t[0] + step * np.arange(len(t))
    off = np.abs(t - ideal)
    if off.max() > JITTER:
        i = int(np.argmax(off))
        raise IngestError(f"{path}: non-uniform sampling, row {i + 2} is off by {off[i]:.3g} s")
    rate = 1.0 / step
    if abs(rate - round(rate, 6)) < 1e-9 * rate:
        rate = round(rate, 6)

    channels = {h: data[:, j].copy() for j, h in enumerate(header) if h != TIME}
    return TimeSeriesDataset(
        name=path.stem,
        sample_rate=rate,
        channels=channels,
        units={h: UNITS[h] for h in channels if h in UNITS},
        roles=dict(roles or {}),
    )


def write_csv(dataset: TimeSeriesDataset, path) -> None:
    names = list(dataset.channels)
    cols = [dataset.time] + [dataset.channels[n] for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([TIME] + names)
        for i in range(dataset.length):
            w.writerow([repr(float(c[i])) for c in cols])


def write_columns(path, columns: dict) -> None:
    """Write equal-length named arrays as a CSV (used for trajectories)."""
    names = list(columns)
    arrs = [np.asarray(columns[n], dtype=np.float64) for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(len(arrs[0])):
            w.writerow([repr(float(a[i])) for a in arrs])
