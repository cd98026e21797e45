"""
Synthetic cellular worlds for desk-scale experiments.

Towers are dropped uniformly over a rectangle. Ideal RSS follows log-distance
path loss with log-normal shadowing; a phone model distorts it with an affine
map in dBm, an optional fixed per-tower offset and per-reading noise.

Shadowing is a spatially correlated field fixed per (position, tower), so two
devices scanning at the same place see the same channel and differ only by
their own distortion. That is what makes co-timed calibration pairs
meaningful. Reading noise is keyed on (world seed, phone seed, timestamp).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .domain import MAX_HEARD, Dataset, Grid, RssScan, TowerInventory


@dataclass(frozen=True)
class WorldConfig:
    area: tuple[float, float] = (500.0, 400.0)
    cell_size: float = 100.0
    tower_count: int = 25
    tx_power_dbm: float = -40.0       # at the 1 m reference distance
    path_loss_exponent: float = 3.0
    shadowing_sigma_db: float = 4.0
    max_heard: int = MAX_HEARD
    hearability_floor_dbm: float = -110.0
    seed: int = 0
    tower_margin: float = 0.0         # towers may sit this far outside the area
    shadowing_corr_m: float = 30.0

    def __post_init__(self):
        if self.tower_count < 2:
            raise ValueError("need at least 2 towers")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing sigma must be >= 0")
        if self.max_heard != MAX_HEARD:
            raise ValueError(f"max_heard is fixed at {MAX_HEARD}")
        if self.shadowing_corr_m <= 0:
            raise ValueError("shadowing correlation length must be positive")
        if min(self.area) <= 0 or self.cell_size <= 0:
            raise ValueError("area and cell size must be positive")


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    gain: float = 1.0
    offset_db: float = 0.0
    per_tower_jitter_db: float = 0.0
    noise_sigma_db: float = 1.0
    seed: int = 0                     # noise / jitter stream of this phone

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("gain must be positive")
        if self.per_tower_jitter_db < 0 or self.noise_sigma_db < 0:
            raise ValueError("jitter and noise must be >= 0")


@dataclass(frozen=True)
class World:
    config: WorldConfig
    tower_ids: tuple[str, ...]
    tower_positions: np.ndarray
    inventory: TowerInventory
    grid: Grid
    _field: tuple | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        c = self.config
        return {"config": {**c.__dict__, "area": list(c.area)},
                "towers": [{"id": t, "x": float(p[0]), "y": float(p[1])}
                           for t, p in zip(self.tower_ids, self.tower_positions)]}

    @classmethod
    def from_dict(cls, d: dict) -> World:
        cfg = dict(d["config"])
        cfg["area"] = tuple(cfg["area"])
        config = WorldConfig(**cfg)
        ids = tuple(t["id"] for t in d["towers"])
        pos = np.array([[t["x"], t["y"]] for t in d["towers"]], dtype=float)
        return cls(config, ids, pos, TowerInventory.from_ids(ids),
                   Grid.covering(*config.area, config.cell_size))


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def generate_world(config: WorldConfig) -> World:
    rng = _rng(config.seed, 0)
    w, h = config.area
    g = config.tower_margin
    pos = rng.uniform((-g, -g), (w + g, h + g), size=(config.tower_count, 2))
    width = len(str(config.tower_count - 1))
    ids = tuple(f"T{k:0{width}d}" for k in range(config.tower_count))
    pos.flags.writeable = False
    return World(config, ids, pos, TowerInventory.from_ids(ids),
                 Grid.covering(w, h, config.cell_size))


_FIELD_TERMS = 64


def _shadowing_field(world: World):
    """Per-tower random Fourier features of a stationary Gaussian field.

    The field has variance ``shadowing_sigma_db**2`` and a Gaussian
    correlation with length ``shadowing_corr_m``.
    """
    cached = world._field
    if cached is None:
        c = world.config
        rng = _rng(c.seed, 1)
        M = len(world.tower_ids)
        omega = rng.normal(0.0, 1.0 / c.shadowing_corr_m, size=(M, _FIELD_TERMS, 2))
        phase = rng.uniform(0.0, 2 * np.pi, size=(M, _FIELD_TERMS))
        cached = (omega, phase)
        object.__setattr__(world, "_field", cached)
    return cached


def shadowing(world: World, position) -> np.ndarray:
    """Shadowing in dB per tower at ``position``; fixed in time."""
    c = world.config
    if c.shadowing_sigma_db == 0:
        return np.zeros(len(world.tower_ids))
    omega, phase = _shadowing_field(world)
    p = np.asarray(position, dtype=float)
    arg = omega @ p + phase
    return c.shadowing_sigma_db * np.sqrt(2.0 / _FIELD_TERMS) * np.cos(arg).sum(axis=1)


def ideal_rss(world: World, position) -> np.ndarray:
    """Channel RSS per tower (in ``tower_ids`` order) before device distortion."""
    c = world.config
    d = np.hypot(*(world.tower_positions - np.asarray(position, dtype=float)).T)
    rss = c.tx_power_dbm - 10.0 * c.path_loss_exponent * np.log10(np.maximum(d, 1.0))
    return rss + shadowing(world, position)


def _device_key(profile: DeviceProfile) -> int:
    return profile.seed


def tower_jitter(world: World, profile: DeviceProfile) -> np.ndarray:
    """Fixed per-tower offsets of a phone model."""
    if profile.per_tower_jitter_db == 0:
        return np.zeros(len(world.tower_ids))
    return _rng(world.config.seed, 2, _device_key(profile)).normal(
        0.0, profile.per_tower_jitter_db, len(world.tower_ids))


def device_rss(world: World, profile: DeviceProfile, position, timestamp: int) -> np.ndarray:
    ideal = ideal_rss(world, position)
    reading = profile.gain * ideal + profile.offset_db + tower_jitter(world, profile)
    if profile.noise_sigma_db > 0:
        reading = reading + _rng(world.config.seed, 3, _device_key(profile),
                                 timestamp).normal(0.0, profile.noise_sigma_db,
                                                   len(reading))
    return reading


def sample_scan(world: World, profile: DeviceProfile, position, timestamp: int) -> RssScan:
    """One scan: towers above the floor, at most the 7 strongest, never empty."""
    x0, y0, x1, y1 = 0.0, 0.0, *world.config.area
    px, py = float(position[0]), float(position[1])
    if not (x0 <= px <= x1 and y0 <= py <= y1):
        raise ValueError(f"position {position} outside the world area")
    rss = device_rss(world, profile, (px, py), timestamp)
    # stable sort: equal readings resolve to the lower tower index
    order = np.argsort(-rss, kind="stable")
    keep = [k for k in order[:world.config.max_heard]
            if rss[k] >= world.config.hearability_floor_dbm]
    if not keep:
        keep = [order[0]]
    keep.sort()
    readings = tuple((world.tower_ids[k], float(rss[k])) for k in keep)
    return RssScan(profile.device_id, timestamp, (px, py), readings)


def sample_positions(world: World, samples_per_cell: int, seed: int = 0) -> np.ndarray:
    """Uniform positions inside every grid cell (clipped to the area), cell by cell."""
    if samples_per_cell < 1:
        raise ValueError("samples_per_cell must be >= 1")
    grid = world.grid
    w, h = world.config.area
    rng = _rng(world.config.seed, 4, seed)
    out = []
    for cell in range(grid.K):
        cx, cy = grid.cell_center(cell)
        half = grid.cell_size / 2
        lo = (max(cx - half, 0.0), max(cy - half, 0.0))
        hi = (min(cx + half, w), min(cy + half, h))
        pts = rng.uniform(lo, hi, size=(samples_per_cell, 2))
        # uniform() may return hi after rounding; keep points in their own cell
        pts = np.minimum(pts, np.nextafter(np.array([cx + half, cy + half]), -np.inf))
        out.append(pts)
    return np.concatenate(out)


def generate_scans(world: World, profile: DeviceProfile, samples_per_cell: int,
                   seed: int = 0, t0: int = 1_700_000_000) -> list[RssScan]:
    """Scans at 1 Hz over positions drawn in every cell, returned shuffled.

    Two profiles generated with the same ``seed`` share positions, timestamps
    and order, so their scans pair up one-to-one.
    """
    pos = sample_positions(world, samples_per_cell, seed)
    scans = [sample_scan(world, profile, p, t0 + n) for n, p in enumerate(pos)]
    order = _rng(world.config.seed, 5, seed).permutation(len(scans))
    return [scans[i] for i in order]


def generate_dataset(world: World, profile: DeviceProfile, samples_per_cell: int,
                     seed: int = 0, t0: int = 1_700_000_000) -> Dataset:
    from .ingest import build_dataset

    scans = generate_scans(world, profile, samples_per_cell, seed, t0)
    return build_dataset(scans, world.inventory, world.grid)


def device_seed(device_id: str) -> int:
    return zlib.crc32(device_id.encode())
