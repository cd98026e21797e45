"""
Scan-log reading and writing, dataset assembly and result files.

A scan log is UTF-8 text, one scan per line::

    timestamp,device_id,x_or_lat,y_or_lon,CID:RSS[,CID:RSS...]

with 1 to 7 tower fields. Bad lines are reported, never fatal.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .domain import MAX_HEARD, Dataset, Grid, RssScan, TowerInventory
from .features import (LinearMap, apply_linear_map, power_difference,
                       power_ratio, vectorize_scans)

RSS_RANGE = (-120.0, -30.0)
EARTH_RADIUS_M = 6_371_008.8


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Diagnostic:
    line: int
    reason: str
    severity: str = "error"

    def __str__(self):
        return f"line {self.line}: {self.reason}"


def _parse_line(line: str, lineno: int, diags: list) -> RssScan | None:
    fields = [f.strip() for f in line.split(",")]
    if len(fields) < 5:
        diags.append(Diagnostic(lineno, "expected timestamp,device,x,y and at least one CID:RSS"))
        return None
    ts_s, dev, xs, ys, *towers = fields
    if len(towers) > MAX_HEARD:
        diags.append(Diagnostic(lineno, f"exceeds {MAX_HEARD} towers ({len(towers)})"))
        return None
    try:
        ts = int(ts_s)
    except ValueError:
        diags.append(Diagnostic(lineno, f"bad timestamp {ts_s!r}"))
        return None
    if not dev:
        diags.append(Diagnostic(lineno, "empty device id"))
        return None
    try:
        x, y = float(xs), float(ys)
    except ValueError:
        diags.append(Diagnostic(lineno, f"bad coordinates {xs!r},{ys!r}"))
        return None
    if not (math.isfinite(x) and math.isfinite(y)):
        diags.append(Diagnostic(lineno, "non-finite coordinates"))
        return None
    readings = []
    for tf in towers:
        cid, sep, rs = tf.partition(":")
        if not sep or not cid:
            diags.append(Diagnostic(lineno, f"bad tower field {tf!r}"))
            return None
        try:
            rss = float(rs)
        except ValueError:
            diags.append(Diagnostic(lineno, f"bad RSS in {tf!r}"))
            return None
        if not math.isfinite(rss):
            diags.append(Diagnostic(lineno, f"non-finite RSS in {tf!r}"))
            return None
        readings.append((cid, rss))
    if len({c for c, _ in readings}) != len(readings):
        diags.append(Diagnostic(lineno, "duplicate tower id"))
        return None
    out_of_range = [c for c, r in readings if not RSS_RANGE[0] <= r <= RSS_RANGE[1]]
    if out_of_range:
        diags.append(Diagnostic(lineno, f"RSS outside {RSS_RANGE} for {out_of_range}",
                                "warning"))
    return RssScan(dev, ts, (x, y), tuple(readings))


def parse_scan_log(stream: TextIO | Iterable[str]):
    """Parse a scan log.

    Returns ``(scans, diagnostics)``. Rejected lines get an ``error``
    diagnostic; out-of-range RSS is kept and flagged as a ``warning``.
    Blank lines and ``#`` comments are skipped.
    """
    scans, diags = [], []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        scan = _parse_line(line, lineno, diags)
        if scan is not None:
            scans.append(scan)
    return scans, diags


def read_scan_log(path):
    with open(path, encoding="utf-8") as fh:
        return parse_scan_log(fh)


def format_scan(scan: RssScan) -> str:
    x, y = scan.position
    towers = ",".join(f"{t}:{r:.1f}" for t, r in scan.readings)
    return f"{scan.timestamp},{scan.device_id},{x:.1f},{y:.1f},{towers}"


def write_scan_log(scans: Iterable[RssScan], stream: TextIO):
    for s in scans:
        stream.write(format_scan(s) + "\n")


def save_scan_log(scans: Iterable[RssScan], path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_scan_log(scans, fh)


def scan_log_text(scans: Iterable[RssScan]) -> str:
    buf = io.StringIO()
    write_scan_log(scans, buf)
    return buf.getvalue()


def project_latlon(scans: Sequence[RssScan]) -> list[RssScan]:
    """Local equirectangular projection of (lat, lon) positions to meters.

    Anchored at the mean coordinate of ``scans``; x grows east, y north.
    """
    if not scans:
        return []
    lat = np.array([s.position[0] for s in scans])
    lon = np.array([s.position[1] for s in scans])
    lat0, lon0 = np.radians(lat.mean()), np.radians(lon.mean())
    x = EARTH_RADIUS_M * (np.radians(lon) - lon0) * np.cos(lat0)
    y = EARTH_RADIUS_M * (np.radians(lat) - lat0)
    return [RssScan(s.device_id, s.timestamp, (float(xi), float(yi)), s.readings)
            for s, xi, yi in zip(scans, x, y)]


def build_dataset(scans: Sequence[RssScan], inventory: TowerInventory, grid: Grid,
                  mode: str = "raw", calibration: LinearMap | None = None) -> Dataset:
    """Vectorize, optionally calibrate, optionally expand pairwise, and label.

    Calibration is applied to the raw vectors before any pairwise transform.
    """
    if not scans:
        raise ValueError("no scans to build a dataset from")
    if calibration is not None and calibration.M != inventory.M:
        raise ConfigurationError(
            f"calibration covers {calibration.M} towers, inventory has {inventory.M}")
    X, _ = vectorize_scans(scans, inventory)
    out_mode = "raw"
    if calibration is not None:
        X = apply_linear_map(calibration, X)
        out_mode = "calibrated"
    if mode == "ratio":
        X, out_mode = power_ratio(X), "ratio"
    elif mode == "difference":
        X, out_mode = power_difference(X), "difference"
    elif mode != "raw":
        raise ConfigurationError(f"unknown feature mode {mode!r}")
    positions = np.array([s.position for s in scans], dtype=float)
    return Dataset(inventory, grid, X, grid.cells_of(positions),
                   tuple(s.device_id for s in scans), positions, out_mode,
                   np.array([s.timestamp for s in scans], dtype=np.int64))


# results -------------------------------------------------------------------

RESULTS_HEADER = ("experiment", "technique", "percentile", "error_m")
CDF_HEADER = ("error_m", "cumulative_fraction")


def write_results_csv(rows: Iterable[tuple], path):
    """Rows of (experiment, technique, percentile, error_m)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for exp, tech, pct, err in rows:
            w.writerow([exp, tech, pct, f"{err:.3f}"])


def write_cdf_csv(errors, path):
    e = np.sort(np.asarray(errors, dtype=float))
    frac = np.arange(1, len(e) + 1) / len(e)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CDF_HEADER)
        for a, b in zip(e, frac):
            w.writerow([f"{a:.3f}", f"{b:.6f}"])


def read_csv_rows(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
