"""
Core types shared across the package: tower inventory, scans, grid geometry
and labelled datasets.

All types are frozen dataclasses. Arrays held by a Dataset are marked
read-only on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_HEARD = 7
FEATURE_MODES = ("raw", "calibrated", "ratio", "difference")


@dataclass(frozen=True)
class TowerInventory:
    """Sorted, unique cell-tower ids. Feature index k belongs to ``ids[k]``."""

    ids: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = tuple(str(t) for t in self.ids)
        if len(set(ids)) != len(ids):
            raise ValueError("tower ids must be unique")
        if list(ids) != sorted(ids):
            raise ValueError("tower ids must be sorted lexicographically")
        if len(ids) < 2:
            raise ValueError("inventory needs at least 2 towers")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "_index", {t: k for k, t in enumerate(ids)})

    @classmethod
    def from_ids(cls, ids: Iterable[str]) -> TowerInventory:
        return cls(tuple(sorted(set(str(t) for t in ids))))

    @classmethod
    def from_scans(cls, scans: Iterable[RssScan]) -> TowerInventory:
        return cls.from_ids(t for s in scans for t, _ in s.readings)

    @property
    def M(self) -> int:
        return len(self.ids)

    def index_of(self, tower_id: str) -> int | None:
        return self._index.get(tower_id)

    def __len__(self):
        return len(self.ids)

    def __contains__(self, tower_id):
        return tower_id in self._index


@dataclass(frozen=True)
class RssScan:
    """One timestamped observation by one device at a known position."""

    device_id: str
    timestamp: int
    position: tuple[float, float]
    readings: tuple[tuple[str, float], ...]

    def __post_init__(self):
        readings = tuple((str(t), float(r)) for t, r in self.readings)
        if not 1 <= len(readings) <= MAX_HEARD:
            raise ValueError(
                f"a scan holds 1..{MAX_HEARD} readings, got {len(readings)}")
        towers = [t for t, _ in readings]
        if len(set(towers)) != len(towers):
            raise ValueError("duplicate tower id in scan")
        object.__setattr__(self, "readings", readings)
        object.__setattr__(self, "position",
                           (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "timestamp", int(self.timestamp))

    def as_dict(self) -> dict[str, float]:
        return dict(self.readings)


@dataclass(frozen=True)
class Grid:
    """Square-cell partition of a rectangle; cells are indexed row-major."""

    origin: tuple[float, float]
    cell_size: float
    cols: int
    rows: int

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if self.cols < 1 or self.rows < 1:
            raise ValueError("grid needs at least one row and one column")
        object.__setattr__(self, "origin",
                           (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def covering(cls, width: float, height: float, cell_size: float = 100.0,
                 origin=(0.0, 0.0)) -> Grid:
        """Smallest grid anchored at ``origin`` that covers width x height."""
        return cls(origin, cell_size,
                   max(1, math.ceil(width / cell_size - 1e-9)),
                   max(1, math.ceil(height / cell_size - 1e-9)))

    @property
    def K(self) -> int:
        return self.cols * self.rows

    @property
    def extent(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, y0, x0 + self.cols * self.cell_size,
                y0 + self.rows * self.cell_size)

    def cell_of(self, position) -> int:
        """Row-major index of the cell containing ``position``.

        Boundaries belong to the higher cell (floor semantics); positions
        outside the box are clamped onto the nearest border cell.
        """
        return int(self.cells_of(np.asarray(position, dtype=float)[None, :])[0])

    def cells_of(self, positions: np.ndarray) -> np.ndarray:
        p = np.asarray(positions, dtype=float)
        c = np.floor((p[:, 0] - self.origin[0]) / self.cell_size)
        r = np.floor((p[:, 1] - self.origin[1]) / self.cell_size)
        c = np.clip(c, 0, self.cols - 1).astype(np.int64)
        r = np.clip(r, 0, self.rows - 1).astype(np.int64)
        return r * self.cols + c

    def cell_center(self, cell: int) -> tuple[float, float]:
        if not 0 <= cell < self.K:
            raise ValueError(f"cell {cell} outside [0, {self.K})")
        r, c = divmod(int(cell), self.cols)
        return (self.origin[0] + (c + 0.5) * self.cell_size,
                self.origin[1] + (r + 0.5) * self.cell_size)

    def centers(self) -> np.ndarray:
        """(K, 2) array of all cell centers in index order."""
        idx = np.arange(self.K)
        r, c = np.divmod(idx, self.cols)
        return np.column_stack([self.origin[0] + (c + 0.5) * self.cell_size,
                                self.origin[1] + (r + 0.5) * self.cell_size])


def pair_count(M: int) -> int:
    return M * (M - 1) // 2


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with cell labels, device ids and ground-truth positions.

    Row ``n`` of ``X`` is one feature vector; its length is M for the raw and
    calibrated modes and M(M-1)/2 for the pairwise modes.
    """

    inventory: TowerInventory
    grid: Grid
    X: np.ndarray
    labels: np.ndarray
    device_ids: tuple[str, ...]
    positions: np.ndarray
    mode: str = "raw"
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in FEATURE_MODES:
            raise ValueError(f"unknown feature mode {self.mode!r}")
        X = np.array(self.X, dtype=float, ndmin=2)
        labels = np.asarray(self.labels, dtype=np.int64)
        positions = np.array(self.positions, dtype=float).reshape(-1, 2)
        n = len(labels)
        if X.shape[0] != n or positions.shape[0] != n or len(self.device_ids) != n:
            raise ValueError("dataset columns have inconsistent lengths")
        width = self.feature_width(self.inventory.M, self.mode)
        if n and X.shape[1] != width:
            raise ValueError(
                f"mode {self.mode} needs width {width}, got {X.shape[1]}")
        if n and (labels.min() < 0 or labels.max() >= self.grid.K):
            raise ValueError("labels must lie in [0, K)")
        ts = None
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps, dtype=np.int64)
            ts.flags.writeable = False
        for a in (X, labels, positions):
            a.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "device_ids", tuple(self.device_ids))
        object.__setattr__(self, "timestamps", ts)

    @staticmethod
    def feature_width(M: int, mode: str) -> int:
        return pair_count(M) if mode in ("ratio", "difference") else M

    @property
    def width(self) -> int:
        return self.feature_width(self.inventory.M, self.mode)

    def __len__(self):
        return len(self.labels)

    def subset(self, index: Sequence[int] | np.ndarray | slice) -> Dataset:
        idx = np.arange(len(self))[index]
        return Dataset(self.inventory, self.grid, self.X[idx], self.labels[idx],
                       tuple(self.device_ids[i] for i in idx),
                       self.positions[idx], self.mode,
                       None if self.timestamps is None else self.timestamps[idx])

    def with_features(self, X: np.ndarray, mode: str) -> Dataset:
        return Dataset(self.inventory, self.grid, X, self.labels,
                       self.device_ids, self.positions, mode, self.timestamps)
