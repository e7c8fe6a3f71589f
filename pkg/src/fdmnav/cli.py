"""Command-line entry point.

Subcommands: gen-env, train-fdm, eval-fdm, collect-its, train-its, bench,
teleop-serve, plot. Every run writes its fully resolved configuration next to
its outputs (INI, one section per subcommand) so results are reproducible
from the echoed file alone; outputs are written atomically.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

import numpy as np


def _atomic_write(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _echo_config(out_dir: str, section: str, values: dict):
    os.makedirs(out_dir, exist_ok=True)
    cp = configparser.ConfigParser()
    cp[section] = {k: str(v) for k, v in sorted(values.items())}
    from io import StringIO
    buf = StringIO()
    cp.write(buf)
    _atomic_write(os.path.join(out_dir, f"{section}.config.ini"), buf.getvalue())


def _load_config_section(path: str | None, section: str) -> dict:
    if not path:
        return {}
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise SystemExit(f"config file not found: {path}")
    if section not in cp:
        return {}
    return dict(cp[section])


def _merge(defaults: dict, file_values: dict, args: argparse.Namespace) -> dict:
    """defaults < config file < explicit command-line flags."""
    merged = dict(defaults)
    for k, v in file_values.items():
        if k not in merged:
            raise SystemExit(f"unknown config key {k!r}")
        merged[k] = type(merged[k])(v) if not isinstance(merged[k], bool) \
            else v.lower() in ("1", "true", "yes")
    for k in merged:
        v = getattr(args, k.replace("-", "_"), None)
        if v is not None:
            merged[k] = v
    return merged


# --- subcommands ---------------------------------------------------------------


def cmd_gen_env(args) -> int:
    from .env import EnvParams, generate_environment
    defaults = {"seed": 0, "env_type": "open_field", "obstacle_kind": "cylinder",
                "cylinder_radius": 0.5, "box_side": 1.0, "grid_size": 4.0,
                "center_randomness": 0.5, "corridor_width": 4.0,
                "corridor_length": 20.0, "cells_x": 5, "cells_y": 5,
                "out": "env.json"}
    cfg = _merge(defaults, _load_config_section(args.config, "gen-env"), args)
    params = EnvParams(**{k: v for k, v in cfg.items() if k != "out"})
    try:
        params.validate()
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    env = generate_environment(params)
    _atomic_write(cfg["out"], env.to_json())
    _echo_config(os.path.dirname(cfg["out"]) or ".", "gen-env", cfg)
    print(f"wrote {cfg['out']} ({env.obstacle_count()} obstacles)")
    return 0


def cmd_train_fdm(args) -> int:
    from . import fdm
    defaults = {"rounds": 6, "n_env": 48, "episodes_per_env": 60, "max_ticks": 26,
                "epochs_per_round": 4, "batch_size": 256, "lr": 3e-4,
                "seed": 0, "rnn_hidden": 96, "out_dir": "runs/fdm",
                "dataset_out": "", "dataset_limit": 5000}
    cfg = _merge(defaults, _load_config_section(args.config, "train-fdm"), args)
    if cfg["rounds"] < 1:
        print("error: rounds must be >= 1", file=sys.stderr)
        return 1
    os.makedirs(cfg["out_dir"], exist_ok=True)
    _echo_config(cfg["out_dir"], "train-fdm", cfg)
    tcfg = fdm.FdmTrainConfig(
        rounds=cfg["rounds"], n_env=cfg["n_env"],
        episodes_per_env=cfg["episodes_per_env"], max_ticks=cfg["max_ticks"],
        epochs_per_round=cfg["epochs_per_round"], batch_size=cfg["batch_size"],
        lr=cfg["lr"], seed=cfg["seed"],
        model=fdm.FdmConfig(rnn_hidden=cfg["rnn_hidden"]))
    model, val_data, log_rows, buffer = fdm.train_fdm(
        tcfg, log_path=os.path.join(cfg["out_dir"], "train_log.csv"))
    fdm.save_model(os.path.join(cfg["out_dir"], "fdm.ckpt"), model)
    if cfg["dataset_out"]:
        from . import recordio
        limit = cfg["dataset_limit"]
        sample = tuple(a[:limit] for a in buffer.arrays())
        n = recordio.write_fdm_tuples(cfg["dataset_out"], sample,
                                      beam_count=360, horizon=tcfg.horizon)
        print(f"wrote {n} labeled tuples to {cfg['dataset_out']}")
    metrics = fdm.evaluate(model, val_data)
    _atomic_write(os.path.join(cfg["out_dir"], "val_metrics.json"),
                  json.dumps(metrics, indent=1))
    print(f"saved {cfg['out_dir']}/fdm.ckpt "
          f"(val coord err {metrics['coord_error']:.3f} m, "
          f"val collision acc {metrics['collision_accuracy']:.3f})")
    return 0


def cmd_eval_fdm(args) -> int:
    from . import fdm
    defaults = {"checkpoint": "runs/fdm/fdm.ckpt", "n_env": 12,
                "episodes_per_env": 20, "seed": 9000,
                "out": "runs/fdm/eval.json"}
    cfg = _merge(defaults, _load_config_section(args.config, "eval-fdm"), args)
    model = fdm.load_model(cfg["checkpoint"])
    tcfg = fdm.FdmTrainConfig()
    env_seeds = [tcfg.val_seed_base + 5000 + i for i in range(cfg["n_env"])]
    data = fdm.collect_tuples(tcfg, env_seeds, cfg["episodes_per_env"],
                              np.random.default_rng(cfg["seed"]))
    metrics = fdm.evaluate(model, data)
    metrics["reliability"] = fdm.reliability_diagram(model, data)
    _atomic_write(cfg["out"], json.dumps(metrics, indent=1))
    _echo_config(os.path.dirname(cfg["out"]) or ".", "eval-fdm", cfg)
    print(json.dumps({k: v for k, v in metrics.items() if k != "reliability"}, indent=1))
    return 0


def cmd_collect_its(args) -> int:
    from . import fdm, its
    defaults = {"checkpoint": "runs/fdm/fdm.ckpt", "count": 40_000, "seed": 0,
                "out": "runs/its/its_dataset.bin"}
    cfg = _merge(defaults, _load_config_section(args.config, "collect-its"), args)
    model = fdm.load_model(cfg["checkpoint"])
    os.makedirs(os.path.dirname(cfg["out"]) or ".", exist_ok=True)
    ds = its.collect_its_dataset(model, cfg["count"], np.random.default_rng(cfg["seed"]))
    ds.save(cfg["out"])
    _echo_config(os.path.dirname(cfg["out"]) or ".", "collect-its", cfg)
    print(f"wrote {cfg['out']} ({len(ds)} tuples)")
    return 0


def cmd_train_its(args) -> int:
    from . import its
    defaults = {"dataset": "runs/its/its_dataset.bin", "epochs": 20,
                "batch_size": 256, "lr": 3e-4, "k_samples": 4, "kl_weight": 0.5,
                "seed": 0, "out_dir": "runs/its"}
    cfg = _merge(defaults, _load_config_section(args.config, "train-its"), args)
    if cfg["epochs"] < 1:
        print("error: epochs must be >= 1", file=sys.stderr)
        return 1
    ds = its.ItsDataset.load(cfg["dataset"])
    tcfg = its.ItsTrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                              lr=cfg["lr"], k_samples=cfg["k_samples"],
                              kl_weight=cfg["kl_weight"], seed=cfg["seed"])
    model, history = its.train_its(ds, tcfg, np.random.default_rng(cfg["seed"]))
    os.makedirs(cfg["out_dir"], exist_ok=True)
    its.save_model(os.path.join(cfg["out_dir"], "its.ckpt"), model)
    _atomic_write(os.path.join(cfg["out_dir"], "train_history.json"),
                  json.dumps(history, indent=1))
    _echo_config(cfg["out_dir"], "train-its", cfg)
    print(f"saved {cfg['out_dir']}/its.ckpt (final val loss "
          f"{history[-1]['val_loss']:.4f})")
    return 0


def cmd_bench(args) -> int:
    from . import bench, fdm, its
    defaults = {"task": "pointgoal", "methods": "ours,pd,random_only,its_only",
                "fdm_checkpoint": "runs/fdm/fdm.ckpt",
                "its_checkpoint": "runs/its/its.ckpt",
                "n_envs": 20, "n_goals": 4, "n_seeds": 3,
                "densities": "0.43,0.33,0.25,0.2",
                "safety_densities": "0.4,0.2", "cmds_per_env": 300,
                "safety_envs": 10, "seed": 0, "out_dir": "runs/bench"}
    cfg = _merge(defaults, _load_config_section(args.config, "bench"), args)
    os.makedirs(cfg["out_dir"], exist_ok=True)
    _echo_config(cfg["out_dir"], "bench", cfg)
    methods = [m.strip() for m in cfg["methods"].split(",") if m.strip()]
    unknown = set(methods) - set(bench.METHODS)
    if unknown:
        print(f"error: unknown methods {sorted(unknown)}", file=sys.stderr)
        return 1
    fdm_model = fdm.load_model(cfg["fdm_checkpoint"]) if cfg["fdm_checkpoint"] else None
    its_model = None
    if cfg["its_checkpoint"] and os.path.exists(cfg["its_checkpoint"]):
        its_model = its.load_model(cfg["its_checkpoint"])

    if cfg["task"] == "pointgoal":
        densities = tuple(float(d) for d in cfg["densities"].split(","))
        suite = bench.SuiteConfig(densities=densities, n_envs=cfg["n_envs"],
                                  n_goals=cfg["n_goals"], n_seeds=cfg["n_seeds"],
                                  seed=cfg["seed"])
        rows, table = bench.run_point_goal(methods, fdm_model, its_model,
                                           cfg=suite, out_dir=cfg["out_dir"])
        for key, entry in sorted(table.items()):
            print(f"{key}: SR {entry['sr']:.1f}% time {entry['time_all']:.1f}s "
                  f"dtw {entry['dtw_per_step']:.3f}")
    elif cfg["task"] == "safety":
        results = []
        for d in (float(x) for x in cfg["safety_densities"].split(",")):
            results.append(bench.run_safety_suite(
                fdm_model, d, n_envs=cfg["safety_envs"],
                cmds_per_env=cfg["cmds_per_env"], seed=cfg["seed"]))
            print(results[-1])
        _atomic_write(os.path.join(cfg["out_dir"], "safety.json"),
                      json.dumps(results, indent=1))
    elif cfg["task"] == "unexpected":
        results = bench.run_unexpected_suite(fdm_model, its_model, seed=cfg["seed"])
        _atomic_write(os.path.join(cfg["out_dir"], "unexpected.json"),
                      json.dumps(results, indent=1))
        print(results)
    else:
        print(f"error: unknown task {cfg['task']!r}", file=sys.stderr)
        return 1
    return 0


def cmd_teleop_serve(args) -> int:
    from . import fdm, teleop
    defaults = {"checkpoint": "runs/fdm/fdm.ckpt", "host": "127.0.0.1",
                "port": 8765, "env_seed": 0, "grid_size": 3.5, "time_scale": 1.0}
    cfg = _merge(defaults, _load_config_section(args.config, "teleop-serve"), args)
    model = fdm.load_model(cfg["checkpoint"])
    tcfg = teleop.TeleopConfig(host=cfg["host"], port=cfg["port"],
                               env_seed=cfg["env_seed"], grid_size=cfg["grid_size"],
                               time_scale=cfg["time_scale"])
    print(f"serving on ws://{cfg['host']}:{cfg['port']} (ctrl-c to stop)")
    teleop.serve(model, tcfg)
    return 0


def cmd_plot(args) -> int:
    defaults = {"results": "runs/bench", "out_dir": "runs/plots"}
    cfg = _merge(defaults, _load_config_section(args.config, "plot"), args)
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("error: plotting requires matplotlib (pip install fdmnav[plot])",
              file=sys.stderr)
        return 1
    os.makedirs(cfg["out_dir"], exist_ok=True)
    summary_path = os.path.join(cfg["results"], "summary.json")
    if not os.path.exists(summary_path):
        print(f"error: {summary_path} not found", file=sys.stderr)
        return 1
    with open(summary_path) as f:
        table = json.load(f)
    methods = sorted({v["method"] for v in table.values()})
    densities = sorted({v["density"] for v in table.values()}, reverse=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    for m in methods:
        srs = [table[f"{d}|{m}"]["sr"] for d in densities if f"{d}|{m}" in table]
        ax.plot(densities[:len(srs)], srs, marker="o", label=m)
    ax.set_xlabel("obstacle density [1/m]")
    ax.set_ylabel("success rate [%]")
    ax.invert_xaxis()
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = os.path.join(cfg["out_dir"], "success_rates.png")
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")
    traj_path = os.path.join(cfg["results"], "trajectories.json")
    if os.path.exists(traj_path):
        with open(traj_path) as f:
            trajs = json.load(f)
        fig, ax = plt.subplots(figsize=(6, 6))
        for key, pts in list(trajs.items())[:20]:
            if pts:
                arr = np.asarray(pts)
                ax.plot(arr[:, 0], arr[:, 1], alpha=0.6)
        ax.set_aspect("equal")
        fig.tight_layout()
        out = os.path.join(cfg["out_dir"], "trajectories.png")
        fig.savefig(out, dpi=120)
        print(f"wrote {out}")
    return 0


# --- parser ---------------------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", help="INI config file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdmnav",
                                description="learned-dynamics navigation stack")
    sp = p.add_subparsers(dest="command", required=True)

    g = sp.add_parser("gen-env", help="generate a procedural environment JSON")
    _add_common(g)
    g.add_argument("--seed", type=int)
    g.add_argument("--env-type", choices=["open_field", "cross_corridor"], dest="env_type")
    g.add_argument("--obstacle-kind", choices=["cylinder", "box"], dest="obstacle_kind")
    g.add_argument("--cylinder-radius", type=float, dest="cylinder_radius")
    g.add_argument("--box-side", type=float, dest="box_side")
    g.add_argument("--grid-size", type=float, dest="grid_size")
    g.add_argument("--center-randomness", type=float, dest="center_randomness")
    g.add_argument("--corridor-width", type=float, dest="corridor_width")
    g.add_argument("--corridor-length", type=float, dest="corridor_length")
    g.add_argument("--cells-x", type=int, dest="cells_x")
    g.add_argument("--cells-y", type=int, dest="cells_y")
    g.add_argument("--out")
    g.set_defaults(fn=cmd_gen_env)

    t = sp.add_parser("train-fdm", help="train the forward dynamics model")
    _add_common(t)
    for name, typ in [("rounds", int), ("n-env", int), ("episodes-per-env", int),
                      ("max-ticks", int), ("epochs-per-round", int),
                      ("batch-size", int), ("lr", float), ("seed", int),
                      ("rnn-hidden", int)]:
        t.add_argument(f"--{name}", type=typ, dest=name.replace("-", "_"))
    t.add_argument("--out-dir", dest="out_dir")
    t.add_argument("--dataset-out", dest="dataset_out")
    t.add_argument("--dataset-limit", type=int, dest="dataset_limit")
    t.set_defaults(fn=cmd_train_fdm)

    e = sp.add_parser("eval-fdm", help="held-out evaluation of a checkpoint")
    _add_common(e)
    e.add_argument("--checkpoint")
    e.add_argument("--n-env", type=int, dest="n_env")
    e.add_argument("--episodes-per-env", type=int, dest="episodes_per_env")
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.set_defaults(fn=cmd_eval_fdm)

    c = sp.add_parser("collect-its", help="collect trajectory-sampler data")
    _add_common(c)
    c.add_argument("--checkpoint")
    c.add_argument("--count", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_collect_its)

    ti = sp.add_parser("train-its", help="train the trajectory sampler")
    _add_common(ti)
    for name, typ in [("epochs", int), ("batch-size", int), ("lr", float),
                      ("k-samples", int), ("kl-weight", float), ("seed", int)]:
        ti.add_argument(f"--{name}", type=typ, dest=name.replace("-", "_"))
    ti.add_argument("--dataset")
    ti.add_argument("--out-dir", dest="out_dir")
    ti.set_defaults(fn=cmd_train_its)

    b = sp.add_parser("bench", help="run benchmark suites")
    _add_common(b)
    b.add_argument("--task", choices=["pointgoal", "safety", "unexpected"])
    b.add_argument("--methods")
    b.add_argument("--fdm-checkpoint", dest="fdm_checkpoint")
    b.add_argument("--its-checkpoint", dest="its_checkpoint")
    b.add_argument("--n-envs", type=int, dest="n_envs")
    b.add_argument("--n-goals", type=int, dest="n_goals")
    b.add_argument("--n-seeds", type=int, dest="n_seeds")
    b.add_argument("--densities")
    b.add_argument("--safety-densities", dest="safety_densities")
    b.add_argument("--cmds-per-env", type=int, dest="cmds_per_env")
    b.add_argument("--safety-envs", type=int, dest="safety_envs")
    b.add_argument("--seed", type=int)
    b.add_argument("--out-dir", dest="out_dir")
    b.set_defaults(fn=cmd_bench)

    ts = sp.add_parser("teleop-serve", help="run the safety-remote-control service")
    _add_common(ts)
    ts.add_argument("--checkpoint")
    ts.add_argument("--host")
    ts.add_argument("--port", type=int)
    ts.add_argument("--env-seed", type=int, dest="env_seed")
    ts.add_argument("--grid-size", type=float, dest="grid_size")
    ts.add_argument("--time-scale", type=float, dest="time_scale")
    ts.set_defaults(fn=cmd_teleop_serve)

    pl = sp.add_parser("plot", help="plot benchmark results")
    _add_common(pl)
    pl.add_argument("--results")
    pl.add_argument("--out-dir", dest="out_dir")
    pl.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    if hasattr(sys.stdout, "reconfigure"):
        sys.stdout.reconfigure(line_buffering=True)  # live progress under nohup
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
