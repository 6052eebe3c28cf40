"""NRMSE, R-squared and MAPE, plus table formatting.

The error is ``e = predicted - measured``.  By default NRMSE divides the RMS
error by the mean of the *predicted* signal; pass ``denominator="measured"``
for the more common convention.  Reports carry both.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError


class DegenerateMetricError(InvalidInputError):
    pass


def _pair(measured, predicted, min_len=1):
    y = np.asarray(measured, dtype=np.float64).ravel()
    yh = np.asarray(predicted, dtype=np.float64).ravel()
    if y.shape != yh.shape:
        raise ShapeError(f"length mismatch: {y.size} measured vs {yh.size} predicted")
    if y.size < min_len:
        raise ShapeError(f"need at least {min_len} points, got {y.size}")
    return y, yh


def nrmse(measured, predicted, denominator: str = "predicted") -> float:
    y, yh = _pair(measured, predicted)
    rms = np.sqrt(np.mean((yh - y) ** 2))
    if denominator == "predicted":
        ref = np.mean(yh)
    elif denominator == "measured":
        ref = np.mean(y)
    else:
        raise InvalidInputError(f"denominator must be 'predicted' or 'measured', not {denominator!r}")
    if ref == 0:
        raise DegenerateMetricError(f"mean of the {denominator} signal is zero")
    return float(rms / abs(ref))


def r_squared(measured, predicted) -> float:
    y, yh = _pair(measured, predicted, min_len=2)
    sst = np.sum((y - np.mean(y)) ** 2)
    if sst == 0:
        raise DegenerateMetricError("measured signal is constant; R^2 undefined")
    return float(1.0 - np.sum((yh - y) ** 2) / sst)


def mape(measured, predicted) -> float:
    y, yh = _pair(measured, predicted)
    zeros = np.flatnonzero(y == 0)
    if zeros.size:
        raise DegenerateMetricError(
            f"MAPE undefined: measured value is zero at indices {zeros.tolist()}"
        )
    return float(np.mean(np.abs(yh - y) / np.abs(y)) * 100.0)


@dataclass(frozen=True)
class MetricReport:
    channel: str
    nrmse: float
    r_squared: float
    mape: float
    n_points: int
    nrmse_measured: float

    def as_row(self) -> dict:
        return asdict(self)


def evaluate_channels(measured, predicted, names) -> list[MetricReport]:
    """One :class:`MetricReport` per row of the ``channels x time`` matrices."""
    y = np.atleast_2d(np.asarray(measured, dtype=np.float64))
    yh = np.atleast_2d(np.asarray(predicted, dtype=np.float64))
    if y.shape != yh.shape:
        raise ShapeError(f"measured {y.shape} and predicted {yh.shape} differ")
    if len(names) != y.shape[0]:
        raise ShapeError(f"{len(names)} names for {y.shape[0]} channels")
    return [
        MetricReport(
            channel=name,
            nrmse=nrmse(y[i], yh[i]),
            r_squared=r_squared(y[i], yh[i]),
            mape=mape(y[i], yh[i]),
            n_points=y.shape[1],
            nrmse_measured=nrmse(y[i], yh[i], denominator="measured"),
        )
        for i, name in enumerate(names)
    ]


METRIC_COLUMNS = ("nrmse", "r_squared", "mape", "nrmse_measured", "n_points")


def rows_to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in columns})
    return buf.getvalue()


def format_table(rows: list[dict], columns, float_fmt="{:.4f}") -> str:
    """Aligned plain-text table."""
    cells = [[str(c) for c in columns]]
    for r in rows:
        cells.append(
            [float_fmt.format(r[c]) if isinstance(r[c], float) else str(r[c]) for c in columns]
        )
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    numeric = [all(isinstance(r[c], (int, float)) for r in rows) for c in columns]
    lines = []
    for k, row in enumerate(cells):
        lines.append("  ".join(
            v.rjust(w) if (k and num) else v.ljust(w) for v, w, num in zip(row, widths, numeric)
        ).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_comparison(rows: list[dict]) -> str:
    """Group rows by cycle, then channel, one line per method.

    Each row needs ``cycle``, ``channel``, ``method`` and the metric fields.
    """
    out = []
    cycles = list(dict.fromkeys(r["cycle"] for r in rows))
    for cyc in cycles:
        out.append(f"Model accuracy: {cyc}")
        sub = [r for r in rows if r["cycle"] == cyc]
        for ch in dict.fromkeys(r["channel"] for r in sub):
            out.append(f"  [{ch}]")
            table = format_table(
                [r for r in sub if r["channel"] == ch], ("method", "nrmse", "r_squared", "mape")
            )
            out.extend("    " + line for line in table.rstrip("\n").split("\n"))
        out.append("")
    return "\n".join(out)
