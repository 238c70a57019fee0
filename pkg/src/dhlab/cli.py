"""Command-line interface for the district-heating control laboratory."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import control, dqn, harness, mdp, surrogate, thermal, weather


def _load_config(args) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.ExperimentConfig.from_file(args.config)
    else:
        cfg = harness.ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    return cfg


def cmd_gen_weather(args) -> int:
    cfg = _load_config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    pool = harness.synthesize_city_pool(cfg)
    for city, series in pool.items():
        path = os.path.join(cfg.out_dir, f"weather_{city}.csv")
        weather.save_weather(series, path)
        print(f"wrote {path} ({len(series)} hours)")
    return 0


def cmd_gen_dataset(args) -> int:
    cfg = _load_config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    building = cfg.make_building()
    dataset = surrogate.generate_dataset(
        args.n_series, cfg.seed, building=building,
        season_len=cfg.season_len, cities=tuple(cfg.training_cities))
    path = os.path.join(cfg.out_dir, "dataset.npz")
    np.savez_compressed(
        path,
        inputs=np.array([s.inputs for s in dataset.series]),
        targets=np.array([s.targets for s in dataset.series]),
        cities=np.array([s.city for s in dataset.series]),
        train_idx=np.array(dataset.train_idx),
        val_idx=np.array(dataset.val_idx),
        test_idx=np.array(dataset.test_idx))
    print(f"wrote {path}: {args.n_series} series "
          f"({len(dataset.train_idx)}/{len(dataset.val_idx)}/"
          f"{len(dataset.test_idx)} train/val/test)")
    return 0


def _load_dataset(path) -> surrogate.Dataset:
    d = np.load(path)
    series = [surrogate.TrainingSeries(str(c), x, y)
              for c, x, y in zip(d["cities"], d["inputs"], d["targets"])]
    return surrogate.Dataset(series, list(d["train_idx"]),
                             list(d["val_idx"]), list(d["test_idx"]))


def cmd_train_surrogate(args) -> int:
    cfg = _load_config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    dataset_path = args.dataset or os.path.join(cfg.out_dir, "dataset.npz")
    if os.path.exists(dataset_path):
        dataset = _load_dataset(dataset_path)
    else:
        dataset = surrogate.generate_dataset(
            cfg.surrogate_series, cfg.seed, building=cfg.make_building(),
            season_len=cfg.season_len, cities=tuple(cfg.training_cities))
    model, report = surrogate.train(
        dataset, surrogate.TrainConfig(epochs=cfg.surrogate_epochs,
                                       seed=cfg.seed))
    path = os.path.join(cfg.out_dir, "surrogate.npz")
    model.save(path)
    print(f"wrote {path}")
    print(f"train MAE {report.train_mae:.4f} °C, val {report.val_mae:.4f}, "
          f"test {report.test_mae:.4f} (std {report.test_std:.4f})")
    return 0


def cmd_fit_baseline(args) -> int:
    cfg = _load_config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    building = cfg.make_building()
    pool = harness.synthesize_city_pool(cfg)
    fit_weather = [pool[c] for c in cfg.training_cities[:cfg.fit_cities]]
    curve, result = control.fit_water_curve(building, fit_weather,
                                            cfg.schedule, cfg.pso)
    path = os.path.join(cfg.out_dir, "water_curve.json")
    curve.save(path)
    print(f"wrote {path}: alpha={curve.alpha:.3f} beta={curve.beta:.3f} "
          f"(cost {result.value:.1f})")
    return 0


def cmd_tune_pid(args) -> int:
    cfg = _load_config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    building = cfg.make_building()
    pool = harness.synthesize_city_pool(cfg)
    curve_path = os.path.join(cfg.out_dir, "water_curve.json")
    if os.path.exists(curve_path):
        curve = control.WaterCurve.load(curve_path)
    else:
        curve, _ = control.fit_water_curve(
            building, [pool[c] for c in cfg.training_cities[:cfg.fit_cities]],
            cfg.schedule, cfg.pso)
    gains, cost = control.tune_pid(building, pool[cfg.training_cities[0]],
                                   cfg.schedule, curve)
    path = os.path.join(cfg.out_dir, "pid_gains.json")
    gains.save(path)
    print(f"wrote {path}: kp={gains.kp} ki={gains.ki} kd={gains.kd} "
          f"(cost {cost:.1f})")
    return 0


def cmd_train_agent(args) -> int:
    cfg = _load_config(args)
    name = f"agent{args.kind}"
    cfg = dataclasses.replace(cfg, policies=["baseline", name])
    reports, artifacts = harness.run_comparison(cfg)
    for r in reports:
        print(f"{r.policy_name}: MAE {r.mae_t_in:.3f} °C, "
              f"energy {r.seasonal_energy_kwh:.1f} kWh")
    if artifacts["errors"]:
        print(f"errors: {artifacts['errors']}", file=sys.stderr)
        return 1
    return 0


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    reports, artifacts = harness.run_comparison(cfg)
    with open(os.path.join(cfg.out_dir, "reports.txt"), encoding="utf-8") as f:
        print(f.read(), end="")
    if artifacts["errors"]:
        print(f"errors: {artifacts['errors']}", file=sys.stderr)
    return 0


def cmd_plots(args) -> int:
    cfg = _load_config(args)
    trajectories = {}
    for name in cfg.policies:
        path = os.path.join(cfg.out_dir, f"trajectory_{name}.csv")
        if os.path.exists(path):
            trajectories[name] = _load_trajectory(path)
    warnings = harness.emit_plots(trajectories, [], cfg.out_dir)
    for w in warnings:
        print(f"warning: {w}")
    print(f"plot files written to {cfg.out_dir}")
    return 0


def _load_trajectory(path) -> mdp.Trajectory:
    import csv as _csv
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(_csv.DictReader(f))
    n_air = sum(1 for k in rows[0] if k.startswith("t_air_"))
    get = lambda k: np.array([float(r[k]) for r in rows])
    return mdp.Trajectory(
        hour_index=get("hour").astype(np.int64), t_supply=get("t_supply"),
        m_dot=float(rows[0]["m_dot"]), t_out=get("t_out"), ghi=get("ghi"),
        t_return=get("t_return"),
        t_air=np.column_stack([get(f"t_air_{j}") for j in range(n_air)]))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dhlab",
        description="District-heating supply-temperature control laboratory")
    parser.add_argument("--config", help="experiment config file (JSON/TOML)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="override the output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-weather", help="synthesize per-city weather CSVs")
    p = sub.add_parser("gen-dataset", help="simulate surrogate training data")
    p.add_argument("--n-series", type=int, default=100)
    p = sub.add_parser("train-surrogate", help="train the recurrent surrogate")
    p.add_argument("--dataset", help="path to a cached dataset.npz")
    sub.add_parser("fit-baseline", help="fit the water curve with PSO")
    sub.add_parser("tune-pid", help="grid-search PID gains")
    p = sub.add_parser("train-agent", help="train a DQN agent")
    p.add_argument("--kind", type=int, choices=(1, 2), required=True)
    sub.add_parser("compare", help="run the full policy comparison")
    sub.add_parser("plots", help="re-emit plots from saved trajectories")

    args = parser.parse_args(argv)
    handlers = {
        "gen-weather": cmd_gen_weather,
        "gen-dataset": cmd_gen_dataset,
        "train-surrogate": cmd_train_surrogate,
        "fit-baseline": cmd_fit_baseline,
        "tune-pid": cmd_tune_pid,
        "train-agent": cmd_train_agent,
        "compare": cmd_compare,
        "plots": cmd_plots,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
