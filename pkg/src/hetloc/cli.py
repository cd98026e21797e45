"""Command line entry point: ``hetloc <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import defaultdict

import numpy as np

from . import harness, ingest
from .adapt import MultitaskPlan, TransferPlan, multitask_train, transfer_fine_tune
from .domain import Grid, TowerInventory
from .features import LinearMap, fit_linear_map, pair_scans, vectorize_scans
from .netcore import (DEFAULT_HEAD, MlpConfig, init_model, load_model,
                      predict_locations, save_model, train)
from .worldgen import (DeviceProfile, World, WorldConfig, device_seed,
                       generate_scans, generate_world)

log = logging.getLogger("hetloc")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_json(obj, path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1)


def _load_scans(paths, latlon=False):
    scans = []
    for p in paths:
        got, diags = ingest.read_scan_log(p)
        for d in diags:
            (log.warning if d.severity == "warning" else log.error)("%s: %s", p, d)
        scans.extend(got)
    if latlon:
        scans = ingest.project_latlon(scans)
    if not scans:
        raise SystemExit(f"no usable scans in {', '.join(paths)}")
    return scans


def _grid_dict(g: Grid):
    return {"origin": list(g.origin), "cell_size": g.cell_size, "cols": g.cols,
            "rows": g.rows}


def _grid_from(d):
    return Grid(tuple(d["origin"]), d["cell_size"], d["cols"], d["rows"])


def _context(args, scans):
    """Inventory and grid from --world, else derived from the scans."""
    if getattr(args, "world", None):
        w = World.from_dict(_read_json(args.world))
        return w.inventory, w.grid
    inv = TowerInventory.from_scans(scans)
    pos = np.array([s.position for s in scans])
    lo = pos.min(axis=0)
    span = pos.max(axis=0) - lo
    g = Grid.covering(max(span[0], 1e-6), max(span[1], 1e-6), args.cell_size,
                      origin=tuple(lo))
    return inv, g


def _model_context(model):
    meta = model.meta
    return (TowerInventory(tuple(meta["inventory"])), _grid_from(meta["grid"]),
            meta.get("mode", "raw"))


def _mlp_config(args, width, K):
    return MlpConfig(layer_sizes=(width, *args.hidden, K), learning_rate=args.lr,
                     batch_size=args.batch_size, dropout_rate=args.dropout,
                     epochs=args.epochs, seed=args.seed, optimizer=args.optimizer)


def cmd_genworld(args):
    cfg = WorldConfig(area=(args.width, args.height), cell_size=args.cell_size,
                      tower_count=args.towers, tx_power_dbm=args.tx_power,
                      path_loss_exponent=args.exponent,
                      shadowing_sigma_db=args.shadowing,
                      hearability_floor_dbm=args.floor, seed=args.seed,
                      tower_margin=args.margin)
    world = generate_world(cfg)
    path = os.path.join(ingest.ensure_dir(args.out), "world.json")
    _write_json(world.to_dict(), path)
    print(f"{path}: {cfg.tower_count} towers, K={world.grid.K}")


def cmd_gendata(args):
    world = World.from_dict(_read_json(args.world))
    profile = DeviceProfile(args.device, args.gain, args.offset, args.jitter,
                            args.noise, device_seed(args.device)
                            if args.noise_seed is None else args.noise_seed)
    scans = generate_scans(world, profile, args.per_cell, args.seed, args.t0)
    ingest.save_scan_log(scans, args.out)
    print(f"{args.out}: {len(scans)} scans from {args.device}")


def cmd_train(args):
    scans = _load_scans(args.scans, args.latlon)
    inv, grid = _context(args, scans)
    data = ingest.build_dataset(scans, inv, grid, args.mode)
    model = init_model(_mlp_config(args, data.width, grid.K))
    model.fit_input_scaling(data.X)
    hist = train(model, data)
    model.meta = {"inventory": list(inv.ids), "grid": _grid_dict(grid),
                  "mode": args.mode}
    save_model(model, args.out)
    print(f"{args.out}: {len(data)} samples, final loss {hist[-1]:.4f}"
          if hist else f"{args.out}: untrained")


def cmd_calibrate(args):
    master = _load_scans([args.master], args.latlon)
    slave = _load_scans([args.slave], args.latlon)
    if args.model:
        inv = _model_context(load_model(args.model))[0]
    else:
        inv, _ = _context(args, master + slave)
    pairs = pair_scans(master, slave, args.window)
    if not pairs:
        raise SystemExit("no co-timed scan pairs within the window")
    Xm, _ = vectorize_scans([m for m, _ in pairs], inv)
    Xs, _ = vectorize_scans([s for _, s in pairs], inv)
    lmap = fit_linear_map(Xm, Xs)
    _write_json({"inventory": list(inv.ids), "pairs": len(pairs), **lmap.to_dict()},
                args.out)
    print(f"{args.out}: {len(pairs)} pairs, {int(lmap.fitted.sum())}/{lmap.M} towers fitted")


def cmd_adapt(args):
    if args.method == "transfer":
        if not args.model:
            raise SystemExit("transfer needs --model")
        base = load_model(args.model)
        inv, grid, mode = _model_context(base)
        data = ingest.build_dataset(_load_scans(args.scans, args.latlon), inv, grid, mode)
        model = transfer_fine_tune(TransferPlan(base, data, args.fine_tune_epochs,
                                                args.lr, args.head, args.copy_head))
    else:
        scans = _load_scans(args.scans, args.latlon)
        inv, grid = _context(args, scans)
        by_dev = defaultdict(list)
        for s in scans:
            by_dev[s.device_id].append(s)
        datasets = {d: ingest.build_dataset(v, inv, grid, args.mode)
                    for d, v in sorted(by_dev.items())}
        width = next(iter(datasets.values())).width
        model = multitask_train(MultitaskPlan(datasets), _mlp_config(args, width, grid.K))
        model.meta.update({"inventory": list(inv.ids), "grid": _grid_dict(grid),
                           "mode": args.mode})
    save_model(model, args.out)
    print(f"{args.out}: heads {sorted(model.heads)}")


def cmd_evaluate(args):
    model = load_model(args.model)
    inv, grid, mode = _model_context(model)
    calibration = None
    if args.calibration:
        d = _read_json(args.calibration)
        if tuple(d["inventory"]) != inv.ids:
            raise SystemExit("calibration inventory does not match the model")
        calibration = LinearMap.from_dict(d)
    scans = _load_scans(args.scans, args.latlon)
    data = ingest.build_dataset(scans, inv, grid, mode, calibration)
    pred = predict_locations(model, data.X, args.head, grid, args.strategy)
    errors = np.hypot(*(pred - data.positions).T)
    pcts = harness.percentiles(errors)
    out = ingest.ensure_dir(args.out)
    rows = [(args.name, args.technique, q, v) for q, v in zip(harness.PERCENTILES, pcts)]
    ingest.write_results_csv(rows, os.path.join(out, "results.csv"))
    ingest.write_cdf_csv(errors, os.path.join(out, f"{args.name}_{args.technique}_cdf.csv"))
    print(" ".join(f"p{q}={v:.1f}m" for q, v in zip(harness.PERCENTILES, pcts)))


def cmd_matrix(args):
    techniques = tuple(args.techniques.split(","))
    experiments = tuple(args.experiments.split(","))
    specs = harness.matrix_specs(args.seed, args.epochs, techniques, experiments,
                                 args.strategy, train_per_cell=args.train_per_cell,
                                 calib_per_cell=args.calib_per_cell,
                                 test_per_cell=args.test_per_cell)
    if args.same_device:
        specs += [harness.same_device_spec(s) for s in specs if s.technique == "none"]
    result = harness.run_matrix(specs, args.out)
    for r in result.reports:
        print(f"{r.spec.name:>8} {r.spec.technique:<10} p25={r.p25:7.1f} "
              f"p50={r.p50:7.1f} p75={r.p75:7.1f}")
    for spec, msg in result.failures:
        print(f"FAILED {spec.name}/{spec.technique}: {msg}", file=sys.stderr)
    return 0 if result.ok else 1


def _add_training(p, default_epochs=100):
    p.add_argument("--epochs", type=int, default=default_epochs)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--batch-size", type=int, default=40)
    p.add_argument("--dropout", type=float, default=0.10)
    p.add_argument("--hidden", type=int, nargs="+", default=[256, 128, 64])
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hetloc", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("genworld", help="generate a synthetic tower layout")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--towers", type=int, default=25)
    p.add_argument("--width", type=float, default=500.0)
    p.add_argument("--height", type=float, default=400.0)
    p.add_argument("--cell-size", type=float, default=100.0)
    p.add_argument("--tx-power", type=float, default=-40.0)
    p.add_argument("--exponent", type=float, default=3.0)
    p.add_argument("--shadowing", type=float, default=4.0)
    p.add_argument("--floor", type=float, default=-110.0)
    p.add_argument("--margin", type=float, default=0.0)
    p.set_defaults(func=cmd_genworld)

    p = sub.add_parser("gendata", help="sample a scan log for one device")
    p.add_argument("--world", required=True)
    p.add_argument("--device", required=True)
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--noise-seed", type=int, default=None)
    p.add_argument("--per-cell", type=int, default=50)
    p.add_argument("--seed", type=int, default=0, help="position/timestamp stream")
    p.add_argument("--t0", type=int, default=1_700_000_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gendata)

    def scan_inputs(p, many=True):
        p.add_argument("--scans", required=True, nargs="+" if many else None)
        p.add_argument("--world", help="world.json giving inventory and grid")
        p.add_argument("--cell-size", type=float, default=100.0,
                       help="grid cell size when no --world is given")
        p.add_argument("--latlon", action="store_true",
                       help="positions are lat,lon; project to local meters")

    p = sub.add_parser("train", help="train a localization model on scan logs")
    scan_inputs(p)
    p.add_argument("--mode", choices=("raw", "ratio", "difference"), default="raw")
    _add_training(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="fit a per-tower slave-to-master linear map")
    p.add_argument("--master", required=True)
    p.add_argument("--slave", required=True)
    p.add_argument("--model", help="take the tower inventory from this model")
    p.add_argument("--world")
    p.add_argument("--cell-size", type=float, default=100.0)
    p.add_argument("--latlon", action="store_true")
    p.add_argument("--window", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("adapt", help="transfer fine-tuning or multitask training")
    p.add_argument("--method", choices=("transfer", "multitask"), required=True)
    p.add_argument("--model", help="base model (transfer)")
    scan_inputs(p)
    p.add_argument("--mode", choices=("raw", "ratio", "difference"), default="raw")
    p.add_argument("--head", default=DEFAULT_HEAD)
    p.add_argument("--copy-head", action="store_true")
    p.add_argument("--fine-tune-epochs", type=int, default=100)
    _add_training(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("evaluate", help="error percentiles and CDF on a test log")
    p.add_argument("--model", required=True)
    p.add_argument("--scans", required=True, nargs="+")
    p.add_argument("--latlon", action="store_true")
    p.add_argument("--head", default=DEFAULT_HEAD)
    p.add_argument("--calibration")
    p.add_argument("--strategy", choices=("argmax", "center_of_mass"), default="argmax")
    p.add_argument("--name", default="eval")
    p.add_argument("--technique", default="none")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("matrix", help="run the four-experiment synthetic matrix")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--experiments", default="I,II,III,IV")
    p.add_argument("--techniques", default=",".join(harness.TECHNIQUES))
    p.add_argument("--strategy", choices=("argmax", "center_of_mass"), default="argmax")
    p.add_argument("--train-per-cell", type=int, default=50)
    p.add_argument("--calib-per-cell", type=int, default=50)
    p.add_argument("--test-per-cell", type=int, default=25)
    p.add_argument("--same-device", action="store_true",
                   help="also run train-and-test-on-slave references")
    p.set_defaults(func=cmd_matrix)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
