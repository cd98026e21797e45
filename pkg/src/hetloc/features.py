"""
Fixed-size RSS feature vectors and the three mapping-based heterogeneity
techniques: per-tower linear calibration, pairwise power ratio and pairwise
power difference.

Unheard towers are encoded as 0.0 everywhere. Every transform here keeps that
sentinel: an output entry that depends on an unheard tower is exactly 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import RssScan, TowerInventory

log = logging.getLogger(__name__)


def vectorize(scan: RssScan, inventory: TowerInventory) -> np.ndarray:
    """Raw length-M vector for one scan, zero for unheard towers."""
    X, dropped = vectorize_scans([scan], inventory)
    return X[0]


def vectorize_scans(scans: Sequence[RssScan], inventory: TowerInventory):
    """Stack raw vectors for many scans.

    Returns ``(X, dropped)`` where ``dropped`` counts readings from towers that
    are not in the inventory.
    """
    X = np.zeros((len(scans), inventory.M))
    dropped = 0
    for n, scan in enumerate(scans):
        for tower, rss in scan.readings:
            k = inventory.index_of(tower)
            if k is None:
                dropped += 1
                continue
            X[n, k] = rss
    if dropped:
        log.warning("dropped %d readings from towers outside the inventory",
                    dropped)
    return X, dropped


def pair_index(i: int, j: int, M: int) -> int:
    """Flat position of tower pair (i, j), i < j, in lexicographic order."""
    if not 0 <= i < j < M:
        raise ValueError(f"need 0 <= i < j < M, got ({i}, {j}, {M})")
    return i * M - i * (i + 1) // 2 + (j - i - 1)


def _pairs(x):
    x = np.asarray(x, dtype=float)
    M = x.shape[-1]
    if M < 2:
        raise ValueError("pairwise transforms need at least 2 towers")
    i, j = np.triu_indices(M, k=1)
    fi, fj = x[..., i], x[..., j]
    return fi, fj, (fi != 0) & (fj != 0)


def power_ratio(x) -> np.ndarray:
    """r_ij = f_i / f_j over all pairs i < j, on the stored dBm values.

    Accepts a single vector or a (n, M) batch.
    """
    fi, fj, both = _pairs(x)
    out = np.zeros(fi.shape)
    np.divide(fi, fj, out=out, where=both)
    return out


def power_difference(x) -> np.ndarray:
    """d_ij = f_i - f_j over all pairs i < j. Accepts a vector or a batch."""
    fi, fj, both = _pairs(x)
    return np.where(both, fi - fj, 0.0)


@dataclass(frozen=True)
class LinearMap:
    """Per-tower affine map from slave RSS to master RSS.

    ``fitted[k]`` is False when tower k had too few co-heard pairs, or no spread
    in its slave readings, and carries the identity map instead.
    """

    slopes: np.ndarray
    intercepts: np.ndarray
    counts: np.ndarray
    fitted: np.ndarray

    @classmethod
    def identity(cls, M: int) -> LinearMap:
        return cls(np.ones(M), np.zeros(M), np.zeros(M, dtype=np.int64),
                   np.zeros(M, dtype=bool))

    @property
    def M(self) -> int:
        return len(self.slopes)

    def to_dict(self) -> dict:
        return {"slopes": self.slopes.tolist(),
                "intercepts": self.intercepts.tolist(),
                "counts": self.counts.tolist(),
                "fitted": self.fitted.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> LinearMap:
        return cls(np.asarray(d["slopes"], dtype=float),
                   np.asarray(d["intercepts"], dtype=float),
                   np.asarray(d["counts"], dtype=np.int64),
                   np.asarray(d["fitted"], dtype=bool))


def fit_linear_map(master, slave) -> LinearMap:
    """Least-squares line per tower mapping slave readings onto master ones.

    ``master`` and ``slave`` are (n, M) arrays of co-located, co-timed raw
    vectors; row n of one is paired with row n of the other. Only towers heard
    by both devices in a pair contribute to that tower's fit.
    """
    master = np.asarray(master, dtype=float)
    slave = np.asarray(slave, dtype=float)
    if master.ndim == 1:
        master, slave = master[None, :], slave[None, :]
    if master.size == 0 or master.shape[0] == 0:
        raise ValueError("no calibration pairs given")
    if master.shape != slave.shape:
        raise ValueError(f"shape mismatch {master.shape} vs {slave.shape}")
    M = master.shape[1]
    slopes, intercepts = np.ones(M), np.zeros(M)
    counts = np.zeros(M, dtype=np.int64)
    fitted = np.zeros(M, dtype=bool)
    both = (master != 0) & (slave != 0)
    for k in range(M):
        use = both[:, k]
        n = int(use.sum())
        counts[k] = n
        if n < 2:
            continue
        xs, ys = slave[use, k], master[use, k]
        mx, my = xs.mean(), ys.mean()
        dx = xs - mx
        var = np.dot(dx, dx)
        if var <= 1e-12 * max(1.0, mx * mx) * n:
            log.info("tower %d: slave readings have no spread, keeping identity", k)
            continue
        slopes[k] = np.dot(dx, ys - my) / var
        intercepts[k] = my - slopes[k] * mx
        fitted[k] = True
    return LinearMap(slopes, intercepts, counts, fitted)


def apply_linear_map(lmap: LinearMap, slave) -> np.ndarray:
    """Map slave raw vectors into master space; zeros stay zeros."""
    x = np.asarray(slave, dtype=float)
    if x.shape[-1] != lmap.M:
        raise ValueError(f"expected width {lmap.M}, got {x.shape[-1]}")
    return np.where(x != 0, lmap.slopes * x + lmap.intercepts, 0.0)


def pair_scans(master: Sequence[RssScan], slave: Sequence[RssScan],
               window: float = 2.0):
    """Match each slave scan with the master scan nearest in time.

    Pairs further apart than ``window`` seconds are discarded. A master scan is
    used at most once. Returns a list of (master_scan, slave_scan).
    """
    if not master or not slave:
        return []
    m_sorted = sorted(master, key=lambda s: s.timestamp)
    m_times = np.array([s.timestamp for s in m_sorted], dtype=float)
    used = np.zeros(len(m_sorted), dtype=bool)
    pairs = []
    for s in sorted(slave, key=lambda s: s.timestamp):
        pos = np.searchsorted(m_times, s.timestamp)
        best, best_dt = None, None
        for cand in (pos - 1, pos, pos + 1):
            if 0 <= cand < len(m_times) and not used[cand]:
                dt = abs(m_times[cand] - s.timestamp)
                if dt <= window and (best_dt is None or dt < best_dt):
                    best, best_dt = cand, dt
        if best is not None:
            used[best] = True
            pairs.append((m_sorted[best], s))
    return pairs
