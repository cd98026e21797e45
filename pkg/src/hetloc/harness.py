"""
Experiment driver: train on one phone, test on another, under each
heterogeneity technique, and summarise the localization error distribution.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import ingest
from .adapt import MultitaskPlan, TransferPlan, multitask_train, transfer_fine_tune
from .domain import Grid, RssScan, TowerInventory
from .features import fit_linear_map, pair_scans, vectorize_scans
from .netcore import (DEFAULT_HEAD, MlpConfig, init_model, predict_locations,
                      train)
from .worldgen import DeviceProfile, WorldConfig, generate_scans, generate_world

log = logging.getLogger(__name__)

TECHNIQUES = ("none", "linear", "ratio", "difference", "transfer", "multitask")
ENABLED = TECHNIQUES[1:]
PERCENTILES = (25, 50, 75)
SUMMARY_HEADER = ("experiment", "handling", "technique", "p25_m", "p50_m", "p75_m",
                  "p25_change_pct", "p50_change_pct", "p75_change_pct")


@dataclass(frozen=True)
class DataSplits:
    """Scan sets feeding one experiment.

    ``calib_master``/``calib_slave`` are co-located, co-timed scans; the slave
    half doubles as the small fine-tuning set D_s.
    """

    inventory: TowerInventory
    grid: Grid
    master_train: tuple[RssScan, ...]
    slave_train: tuple[RssScan, ...]
    calib_master: tuple[RssScan, ...]
    calib_slave: tuple[RssScan, ...]
    slave_test: tuple[RssScan, ...]


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    technique: str
    master: DeviceProfile
    slave: DeviceProfile
    world: WorldConfig = field(default_factory=WorldConfig)
    strategy: str = "argmax"
    seed: int = 0
    train_per_cell: int = 50
    calib_per_cell: int = 50
    test_per_cell: int = 25
    config: MlpConfig | None = None
    fine_tune_epochs: int = 100
    pair_window: float = 2.0
    splits: DataSplits | None = None

    def __post_init__(self):
        if self.technique not in TECHNIQUES:
            raise ValueError(f"unknown technique {self.technique!r}")
        if self.strategy not in ("argmax", "center_of_mass"):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def data_key(self):
        return (self.world, self.master, self.slave, self.seed, self.train_per_cell,
                self.calib_per_cell, self.test_per_cell,
                None if self.splits is None else id(self.splits))


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    errors: np.ndarray
    p25: float
    p50: float
    p75: float
    cdf: np.ndarray            # (n, 2): sorted error, cumulative fraction

    @property
    def percentiles(self) -> dict[int, float]:
        return {25: self.p25, 50: self.p50, 75: self.p75}


def percentiles(errors, qs=PERCENTILES) -> np.ndarray:
    """Percentiles by linear interpolation between closest order statistics."""
    return np.percentile(np.asarray(errors, dtype=float), qs, method="linear")


def error_cdf(errors) -> np.ndarray:
    e = np.sort(np.asarray(errors, dtype=float))
    return np.column_stack([e, np.arange(1, len(e) + 1) / len(e)])


def relative_change(enabled: float, disabled: float) -> float:
    """How much worse ``disabled`` is than ``enabled``, in percent of enabled."""
    return (disabled - enabled) / enabled * 100.0


def default_config(input_width: int, K: int, seed: int, epochs: int = 100) -> MlpConfig:
    return MlpConfig(layer_sizes=(input_width, 256, 128, 64, K), epochs=epochs,
                     seed=seed, optimizer="adam")


def synthetic_splits(spec: ExperimentSpec) -> DataSplits:
    world = generate_world(spec.world)
    base = spec.seed * 10
    calib_m = generate_scans(world, spec.master, spec.calib_per_cell, base + 3, t0=3_000_000)
    calib_s = generate_scans(world, spec.slave, spec.calib_per_cell, base + 3, t0=3_000_000)
    return DataSplits(
        world.inventory, world.grid,
        tuple(generate_scans(world, spec.master, spec.train_per_cell, base + 1, t0=1_000_000)),
        tuple(generate_scans(world, spec.slave, spec.train_per_cell, base + 2, t0=2_000_000)),
        tuple(calib_m), tuple(calib_s),
        tuple(generate_scans(world, spec.slave, spec.test_per_cell, base + 4, t0=4_000_000)),
    )


def _build(scans, splits, mode="raw", calibration=None):
    return ingest.build_dataset(list(scans), splits.inventory, splits.grid, mode,
                                calibration)


class _Cache(dict):
    def get_or(self, key, fn):
        if key not in self:
            self[key] = fn()
        return self[key]


def _config(spec, width, K):
    if spec.config is None:
        return default_config(width, K, spec.seed)
    return replace(spec.config, layer_sizes=(width, *spec.config.hidden_sizes, K))


def _trained(spec, splits, mode, cache):
    def fit():
        data = _build(splits.master_train, splits, mode)
        model = init_model(_config(spec, data.width, splits.grid.K))
        model.fit_input_scaling(data.X)
        train(model, data)
        return model
    return cache.get_or(("master", spec.data_key(), mode, spec.config), fit)


def run_experiment(spec: ExperimentSpec, cache: dict | None = None) -> ExperimentReport:
    """Train, adapt and test one (master, slave, technique) configuration."""
    cache = _Cache() if cache is None else cache
    if not isinstance(cache, _Cache):
        cache = _Cache(cache)
    splits = spec.splits or cache.get_or(("splits", spec.data_key()),
                                         lambda: synthetic_splits(spec))
    if not splits.slave_test:
        raise ValueError("no slave test scans")
    tech = spec.technique
    if tech in ("linear", "transfer") and not splits.calib_slave:
        raise ingest.ConfigurationError(f"technique {tech} needs slave calibration scans")
    grid = splits.grid
    head = DEFAULT_HEAD

    if tech in ("none", "linear", "transfer"):
        model = _trained(spec, splits, "raw", cache)
        calibration = None
        if tech == "linear":
            pairs = pair_scans(list(splits.calib_master), list(splits.calib_slave),
                               spec.pair_window)
            if not pairs:
                raise ingest.ConfigurationError("no co-timed calibration pairs")
            Xm, _ = vectorize_scans([m for m, _ in pairs], splits.inventory)
            Xs, _ = vectorize_scans([s for _, s in pairs], splits.inventory)
            calibration = fit_linear_map(Xm, Xs)
        elif tech == "transfer":
            ds = _build(splits.calib_slave, splits)
            model = transfer_fine_tune(TransferPlan(
                model, ds, fine_tune_epochs=spec.fine_tune_epochs,
                fine_tune_rate=model.config.learning_rate,
                master_count=len(splits.master_train)))
        test = _build(splits.slave_test, splits, "raw", calibration)
    elif tech in ("ratio", "difference"):
        model = _trained(spec, splits, tech, cache)
        test = _build(splits.slave_test, splits, tech)
    else:
        dm = _build(splits.master_train, splits)
        dsl = _build(splits.slave_train, splits)
        names = ("master", "slave") if spec.master.device_id == spec.slave.device_id \
            else (spec.master.device_id, spec.slave.device_id)
        model = multitask_train(MultitaskPlan({names[0]: dm, names[1]: dsl}),
                                _config(spec, dm.width, grid.K))
        head = names[1]
        test = _build(splits.slave_test, splits)

    pred = predict_locations(model, test.X, head, grid, spec.strategy)
    errors = np.hypot(*(pred - test.positions).T)
    p25, p50, p75 = percentiles(errors)
    return ExperimentReport(spec, errors, float(p25), float(p50), float(p75),
                            error_cdf(errors))


@dataclass
class MatrixResult:
    reports: list[ExperimentReport]
    failures: list[tuple[ExperimentSpec, str]]
    summary: list[dict]

    @property
    def ok(self) -> bool:
        return not self.failures


def summarize(reports: list[ExperimentReport]) -> list[dict]:
    """Summary-table rows: per experiment an Enabled and a Disabled row.

    Enabled is the multitask run when present, otherwise the enabled technique
    with the lowest median. Disabled rows carry the relative change against
    the Enabled row.
    """
    by_exp: dict[str, dict[str, ExperimentReport]] = {}
    for r in reports:
        by_exp.setdefault(r.spec.name, {})[r.spec.technique] = r
    rows = []
    for name, techs in by_exp.items():
        enabled = [t for t in ENABLED if t in techs]
        if not enabled or "none" not in techs:
            continue
        best = "multitask" if "multitask" in techs else min(enabled, key=lambda t: techs[t].p50)
        en, dis = techs[best], techs["none"]
        rows.append({"experiment": name, "handling": "enabled", "technique": best,
                     **{f"p{q}_m": en.percentiles[q] for q in PERCENTILES},
                     **{f"p{q}_change_pct": "" for q in PERCENTILES}})
        rows.append({"experiment": name, "handling": "disabled", "technique": "none",
                     **{f"p{q}_m": dis.percentiles[q] for q in PERCENTILES},
                     **{f"p{q}_change_pct": relative_change(en.percentiles[q],
                                                            dis.percentiles[q])
                        for q in PERCENTILES}})
    return rows


def write_bundle(result: MatrixResult, out_dir):
    ingest.ensure_dir(out_dir)
    rows = [(r.spec.name, r.spec.technique, q, r.percentiles[q])
            for r in result.reports for q in PERCENTILES]
    ingest.write_results_csv(rows, os.path.join(out_dir, "results.csv"))
    cdf_dir = ingest.ensure_dir(os.path.join(out_dir, "cdf"))
    for r in result.reports:
        ingest.write_cdf_csv(r.errors, os.path.join(
            cdf_dir, f"{r.spec.name}_{r.spec.technique}.csv"))
    import csv
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SUMMARY_HEADER, lineterminator="\n")
        w.writeheader()
        for row in result.summary:
            w.writerow({k: (f"{v:.3f}" if isinstance(v, float) else v)
                        for k, v in row.items()})
    if result.failures:
        with open(os.path.join(out_dir, "failures.txt"), "w", encoding="utf-8") as fh:
            for spec, msg in result.failures:
                fh.write(f"{spec.name}\t{spec.technique}\t{msg}\n")


def run_matrix(specs, out_dir=None) -> MatrixResult:
    """Run every spec; a failing spec is recorded and the rest still run."""
    specs = list(specs)
    if not specs:
        raise ValueError("no experiment specs given")
    cache = _Cache()
    reports, failures = [], []
    for spec in specs:
        try:
            reports.append(run_experiment(spec, cache))
            log.info("%s/%s p50=%.1f m", spec.name, spec.technique, reports[-1].p50)
        except Exception as exc:  # one bad spec must not sink the bundle
            log.exception("spec %s/%s failed", spec.name, spec.technique)
            failures.append((spec, f"{type(exc).__name__}: {exc}"))
    result = MatrixResult(reports, failures, summarize(reports))
    if out_dir is not None:
        write_bundle(result, out_dir)
    return result


# synthetic four-experiment matrix -------------------------------------------

URBAN_WORLD = WorldConfig(area=(500.0, 400.0), cell_size=100.0, tower_count=25)
RURAL_WORLD = WorldConfig(area=(600.0, 500.0), cell_size=100.0, tower_count=16,
                          path_loss_exponent=3.3)

PROFILES = {
    "A": DeviceProfile("A", seed=11),
    "B": DeviceProfile("B", offset_db=10.0, seed=12),
    "C": DeviceProfile("C", seed=13),
    "D": DeviceProfile("D", gain=1.25, offset_db=12.0, per_tower_jitter_db=4.0, seed=14),
}

EXPERIMENTS = {
    "I": ("A", "B", URBAN_WORLD),
    "II": ("B", "A", URBAN_WORLD),
    "III": ("C", "D", RURAL_WORLD),
    "IV": ("D", "C", RURAL_WORLD),
}


def matrix_specs(seed: int, epochs: int = 100, techniques=TECHNIQUES,
                 experiments=tuple(EXPERIMENTS), strategy: str = "argmax",
                 **overrides) -> list[ExperimentSpec]:
    specs = []
    for k, name in enumerate(experiments):
        m, s, world = EXPERIMENTS[name]
        world = replace(world, seed=seed + k)
        for tech in techniques:
            specs.append(ExperimentSpec(
                name, tech, PROFILES[m], PROFILES[s], world, strategy=strategy,
                seed=seed + k, config=MlpConfig(layer_sizes=(1, 256, 128, 64, 1),
                                                epochs=epochs, seed=seed + k,
                                                optimizer="adam"),
                **overrides))
    return specs


def same_device_spec(spec: ExperimentSpec) -> ExperimentSpec:
    """Train and test on the slave phone: the no-heterogeneity reference."""
    return replace(spec, name=f"{spec.name}-same", technique="none", master=spec.slave)
