"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Cheap criteria run live. Criteria that need trained models or long benchmark
runs read artifacts from the run directory (FDMNAV_RUNDIR, default ./runs),
produced by the pipeline in scripts/run_pipeline.sh. Missing artifacts skip
with instructions unless FDMNAV_ACCEPTANCE_STRICT=1 makes them failures.
"""

import csv
import json
import math
import os
import subprocess
import time
from pathlib import Path

import numpy as np
import pytest

from fdmnav import bench, fdm, its, mpc
from fdmnav.env import EnvParams, LidarConfig, generate_environment
from fdmnav.geom import Pose2
from fdmnav.sim import CMD_HIGH, CMD_LOW, Command, SimConfig, Simulator, rollout_and_label
from tests.test_mpc import dtw_oracle
from tests.test_nn import check_grads, to64

RUNDIR = Path(os.environ.get("FDMNAV_RUNDIR", "runs"))
STRICT = os.environ.get("FDMNAV_ACCEPTANCE_STRICT", "") == "1"


def report(name: str, ok: bool, detail: str = ""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


def artifact(rel: str, hint: str) -> Path:
    path = RUNDIR / rel
    if not path.exists():
        msg = f"missing artifact {path}; produce it with: {hint}"
        if STRICT:
            pytest.fail(msg)
        pytest.skip(msg)
    return path


@pytest.fixture(scope="module")
def trained_fdm():
    return fdm.load_model(str(artifact("fdm/fdm.ckpt", "fdmnav train-fdm")))


# --- criterion: nn gradient suite -------------------------------------------------


def test_gradient_suite_all_layers():
    from fdmnav.nn import autodiff as ad
    from fdmnav.nn import losses
    from fdmnav.nn.layers import MLP, Dense, GRUCell, LSTMCell, parameter

    t0 = time.time()
    rng = np.random.default_rng(0)

    mlp = to64(MLP([4, 6, 3], rng, activation="relu"))
    x = rng.normal(size=(5, 4))
    y = rng.normal(size=(5, 3))
    check_grads(lambda: losses.mse(mlp(x), y), list(mlp.parameters()))

    lstm = to64(LSTMCell(3, 4, rng))
    head = to64(Dense(4, 2, rng))
    xs = rng.normal(size=(12, 2, 3))
    t = rng.normal(size=(12, 2, 2))

    def lstm_loss():
        h = ad.as_tensor(np.zeros((2, 4)))
        c = ad.as_tensor(np.zeros((2, 4)))
        outs = []
        for k in range(12):
            h, c = lstm.step(xs[k], h, c)
            outs.append(head(h))
        return losses.mse(ad.stack(outs), t)

    check_grads(lstm_loss, list(lstm.parameters()) + list(head.parameters()))

    gru = to64(GRUCell(2, 4, rng))
    xg = rng.normal(size=(12, 2, 2))
    tg = rng.normal(size=(2, 4))

    def gru_loss():
        h = ad.as_tensor(np.zeros((2, 4)))
        for k in range(12):
            h = gru.step(xg[k], h)
        return losses.mse(h, tg)

    check_grads(gru_loss, list(gru.parameters()))

    w = parameter(rng.normal(size=(3, 4)))
    xb = rng.normal(size=(6, 3))
    tb = (rng.uniform(size=(6, 4)) > 0.5).astype(np.float64)
    check_grads(lambda: losses.bce_with_logits_mean(ad.matmul(ad.as_tensor(xb), w), tb), [w])

    mu = parameter(rng.normal(size=(4, 3)))
    logvar = parameter(rng.normal(scale=0.4, size=(4, 3)))
    check_grads(lambda: losses.kl_standard_normal(mu, logvar), [mu, logvar])

    eps = rng.normal(size=(4, 3))
    target = rng.normal(size=(4, 3))
    check_grads(lambda: losses.mse(ad.add(mu, ad.mul(ad.exp(ad.mul(logvar, 0.5)), eps)),
                                   target), [mu, logvar])

    elapsed = time.time() - t0
    report("nn gradient suite", elapsed < 60.0,
           f"dense/LSTM(12)/GRU(12)/BCE/KL/reparam all within 1e-2, {elapsed:.1f}s")


# --- criterion: DTW oracle equivalence ---------------------------------------------


def test_dtw_exhaustive_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        n, m = rng.integers(1, 7, 2)
        a = rng.uniform(-3, 3, (n, 2))
        b = rng.uniform(-3, 3, (m, 2))
        got = mpc.dtw(a, b)
        want = dtw_oracle(a, b)
        worst = max(worst, abs(got - want))
        assert abs(got - want) < 1e-12
    elapsed = time.time() - t0
    report("dtw oracle equivalence", elapsed < 60.0,
           f"1000 pairs exact (worst |diff| {worst:.2e}), {elapsed:.1f}s")


# --- criterion: sampler/update properties -------------------------------------------


def test_sampler_and_update_properties():
    t0 = time.time()
    rng = np.random.default_rng(2)

    cfg = mpc.MpcConfig(n_samples=64, beta=1.0)
    prev = rng.uniform(CMD_LOW, CMD_HIGH, (12, 3))
    out = mpc.sample_commands(cfg, prev, rng)
    assert np.abs(out - prev[None]).max() < 1e-12

    samples = rng.uniform(-1, 1, (50, 12, 3))
    rewards = rng.uniform(0, 1, 50)
    assert np.abs(mpc.reward_weighted_update(samples, rewards, 0.0)
                  - samples.mean(axis=0)).max() < 1e-12
    assert np.abs(mpc.reward_weighted_update(samples, rewards, 1e6)
                  - samples[np.argmax(rewards)]).max() < 1e-6
    assert np.abs(mpc.reward_weighted_update(samples, rewards, 20.0)
                  - mpc.reward_weighted_update(samples, rewards + 77.7, 20.0)).max() < 1e-6

    firsts = mpc.bin_sample_first(np.random.default_rng(3), 100_000, 4)
    width = (CMD_HIGH - CMD_LOW) / 4
    idx = np.clip(((firsts - CMD_LOW) / width).astype(int), 0, 3)
    counts = np.bincount(idx[:, 0] * 16 + idx[:, 1] * 4 + idx[:, 2], minlength=64)
    rel_err = np.abs(counts - 100_000 / 64) / (100_000 / 64)
    assert rel_err.max() < 0.05

    elapsed = time.time() - t0
    report("sampler/update properties", elapsed < 60.0,
           f"beta=1 identity, gamma limits, shift invariance, "
           f"bin coverage err {rel_err.max() * 100:.2f}%, {elapsed:.1f}s")


# --- criterion: padding and hard filter ---------------------------------------------


def test_padding_and_filter_boundaries():
    rng = np.random.default_rng(4)
    ps = rng.uniform(0, 1, (100, 12))
    xs = rng.normal(size=(100, 12))
    once = fdm.apply_padding_arrays(xs, xs, ps, 0.3)
    twice = fdm.apply_padding_arrays(*once, 0.3)
    for a, b in zip(once, twice):
        np.testing.assert_array_equal(a, b)

    cfg = mpc.MpcConfig()
    ps = np.zeros((2, 12))
    ps[0, 5] = 0.3   # step 6, exactly at threshold, inside 3 s -> dropped
    ps[1, 6] = 0.99  # step 7, outside the 3 s window -> survives
    keep = mpc.hard_filter(ps, cfg)
    np.testing.assert_array_equal(keep, [1])
    report("padding & hard filter", True,
           "padding idempotent; 3 s boundary drops step 6, keeps step 7")


# --- criterion: FDM quality ----------------------------------------------------------


def test_fdm_training_volume_and_budget():
    log_path = artifact("fdm/train_log.csv", "fdmnav train-fdm")
    with open(log_path) as f:
        rows = list(csv.DictReader(f))
    buffer_final = int(rows[-1]["buffer"])
    total_s = sum(float(r["seconds"]) for r in rows)
    report("fdm training volume/budget",
           buffer_final >= 200_000 and total_s <= 4 * 3600,
           f"{buffer_final} tuples, {total_s / 60:.0f} min")


def test_fdm_heldout_quality(trained_fdm):
    t0 = time.time()
    tcfg = fdm.FdmTrainConfig()
    env_seeds = [tcfg.val_seed_base + 100 + i for i in range(12)]
    data = fdm.collect_tuples(tcfg, env_seeds, 15, np.random.default_rng(555))
    metrics = fdm.evaluate(trained_fdm, data)
    elapsed = time.time() - t0
    ok = (metrics["collision_accuracy"] >= 0.85
          and metrics["coord_error"] <= 0.2 and elapsed < 300)
    report("fdm held-out quality", ok,
           f"collision acc {metrics['collision_accuracy'] * 100:.1f}% (>=85), "
           f"coord err {metrics['coord_error']:.3f} m (<=0.2), "
           f"{metrics['n_tuples']} tuples, {elapsed:.0f}s")


# --- criterion: throughput ------------------------------------------------------------


def test_throughput_batch_rollout(trained_fdm):
    obs = np.random.default_rng(6).uniform(0, 1, 430).astype(np.float32)
    cmds = np.random.default_rng(7).uniform(CMD_LOW, CMD_HIGH, (1500, 12, 3))
    trained_fdm.rollout_batch(obs, cmds)  # warm-up
    best = math.inf
    for _ in range(5):
        t0 = time.perf_counter()
        trained_fdm.rollout_batch(obs, cmds)
        best = min(best, time.perf_counter() - t0)

    # ground-truth-geometry baseline at equal batch, training-scale scene,
    # free pose (rollouts mostly run their full horizon)
    env = generate_environment(EnvParams(seed=3, grid_size=2.3, cylinder_radius=0.4,
                                         center_randomness=0.5, cells_x=13, cells_y=13))
    pose = fdm.sample_free_pose(env, np.random.default_rng(5), clearance=0.75)
    bench.approximate_rollout(env, pose, cmds)
    best_approx = math.inf
    for _ in range(3):
        t0 = time.perf_counter()
        bench.approximate_rollout(env, pose, cmds)
        best_approx = min(best_approx, time.perf_counter() - t0)

    ratio = best_approx / best
    ok = best <= 0.100 and ratio >= 5.0
    report("throughput", ok,
           f"batch_rollout 1500x12 = {best * 1e3:.1f} ms (<=100), "
           f"approximate = {best_approx * 1e3:.1f} ms, ratio {ratio:.1f}x (>=5)")


# --- criterion: horizon error ordering -------------------------------------------------


def test_horizon_error_ordering(trained_fdm):
    """Approximate's perfect-tracking assumption drifts more than the learned
    model at the horizon end, on held-out rollouts with lag/noise enabled."""
    rng = np.random.default_rng(8)
    sim_cfg = SimConfig()
    lidar_cfg = LidarConfig()
    err_fdm, err_approx = [], []
    n_done = 0
    env_seed = 0
    while n_done < 1000:
        params = fdm._round_env_params(np.random.default_rng(3_000_000 + env_seed),
                                       3_000_000 + env_seed)
        env = generate_environment(params)
        env_seed += 1
        for _ in range(25):
            if n_done >= 1000:
                break
            start = fdm.sample_free_pose(env, rng)
            if start is None:
                break
            sim = Simulator(env, sim_cfg, lidar_cfg, rng)
            sim.reset(start)
            cmds = fdm.random_walk_commands(rng, 12, (0.15, 0.06, 0.2))
            obs, xs, ys, ps = rollout_and_label(env, sim.state, sim.history, cmds,
                                                rng, sim_cfg, lidar_cfg)
            pred = fdm.fdm_forward(trained_fdm, obs.vector(), cmds)
            approx = bench.approximate_rollout(env, sim.state.pose, cmds)
            err_fdm.append(math.hypot(pred.xs[11] - xs[11], pred.ys[11] - ys[11]))
            err_approx.append(math.hypot(approx.xs[0, 11] - xs[11],
                                         approx.ys[0, 11] - ys[11]))
            n_done += 1
    mean_fdm = float(np.mean(err_fdm))
    mean_approx = float(np.mean(err_approx))
    report("horizon error ordering", mean_approx > mean_fdm,
           f"step-12 coord error: approximate {mean_approx:.3f} m > "
           f"learned {mean_fdm:.3f} m over {n_done} held-out rollouts")


# --- criterion: point-goal table orderings ----------------------------------------------


@pytest.fixture(scope="module")
def bench_summary():
    path = artifact("bench/summary.json", "fdmnav bench --task pointgoal")
    with open(path) as f:
        return json.load(f)


def _sr(table, density, method):
    return table[f"{density}|{method}"]["sr"]


def test_table_orderings(bench_summary):
    t = bench_summary
    gap_ok = _sr(t, 0.43, "ours") >= _sr(t, 0.43, "pd") + 10.0
    abl_ok = (_sr(t, 0.43, "ours") >= _sr(t, 0.43, "random_only")
              >= _sr(t, 0.43, "its_only"))
    gaps = [_sr(t, d, "ours") - _sr(t, d, "pd") for d in (0.43, 0.33, 0.25, 0.2)]
    trend_ok = all(a >= b - 1e-9 for a, b in zip(gaps, gaps[1:]))
    detail = (f"SR@0.43 ours {_sr(t, 0.43, 'ours'):.1f} vs pd {_sr(t, 0.43, 'pd'):.1f}; "
              f"ablations {_sr(t, 0.43, 'random_only'):.1f}/{_sr(t, 0.43, 'its_only'):.1f}; "
              f"ours-pd gaps {['%.1f' % g for g in gaps]}")
    report("point-goal success-rate orderings", gap_ok and abl_ok and trend_ok, detail)


def test_smoothness_ordering():
    path = artifact("bench/episodes.csv", "fdmnav bench --task pointgoal")
    with open(path) as f:
        rows = list(csv.DictReader(f))
    vals = {"ours": [], "pd": []}
    for r in rows:
        if r["method"] in vals and r["smoothness"] not in ("", "nan"):
            if r["plan_failed"] == "False":
                vals[r["method"]].append(float(r["smoothness"]))
    m_ours = float(np.mean(vals["ours"]))
    m_pd = float(np.mean(vals["pd"]))
    report("command smoothness ordering", m_ours < m_pd,
           f"mean |successive command diff|: ours {m_ours:.3f} < pd {m_pd:.3f}")


# --- criterion: safety remote control ----------------------------------------------------


def test_safety_remote_control():
    path = artifact("bench/safety.json", "fdmnav bench --task safety")
    with open(path) as f:
        results = {r["density"]: r for r in json.load(f)}
    ok = (results[0.2]["no_collision_safe_pct"] >= 95.0
          and results[0.4]["collision_safe_pct"] >= 70.0)
    report("safety remote control", ok,
           f"no-collision-safe @0.2 = {results[0.2]['no_collision_safe_pct']:.1f}% (>=95), "
           f"collision-safe @0.4 = {results[0.4]['collision_safe_pct']:.1f}% (>=70)")


# --- criterion: trajectory-sampler training ------------------------------------------------


def test_its_overfit_memorization():
    ds_path = artifact("its/its_dataset.bin", "fdmnav collect-its")
    ds = its.ItsDataset.load(str(ds_path)).subset(np.arange(32))
    cfg = its.ItsTrainConfig(epochs=500, batch_size=32, lr=1e-3, k_samples=4,
                             kl_weight=0.1, val_fraction=0.0)
    model, history = its.train_its(ds, cfg, np.random.default_rng(9),
                                   progress=lambda *a: None)
    # memorization error: best-of-K teacher-forced reconstruction
    from fdmnav.nn import autodiff as ad
    with ad.no_grad():
        y = model.encode_condition(ds.obs, ds.wps)
        mu, logvar = model.posterior(ds.cmds, y)
        best = None
        rng = np.random.default_rng(0)
        for _ in range(4):
            eps = rng.standard_normal(mu.shape).astype(np.float32)
            z = ad.add(mu, ad.mul(ad.exp(ad.mul(logvar, 0.5)), eps))
            dec = model.decode(z, y, teacher=ds.cmds, horizon=ds.cmds.shape[1]).data
            err = ((dec - ds.cmds) ** 2).mean(axis=(1, 2))
            best = err if best is None else np.minimum(best, err)
        mse = float(best.mean())
    kl_term = float(np.mean(0.5 * (np.exp(logvar.data) + mu.data ** 2 - 1 - logvar.data)))
    report("its overfit memorization", mse < 0.01,
           f"32-datum reconstruction MSE {mse:.4f} (<0.01), KL/dim {kl_term:.3f}")


def test_its_conditioning_matters():
    model = its.load_model(str(artifact("its/its.ckpt", "fdmnav train-its")))
    ds = its.ItsDataset.load(str(artifact("its/its_dataset.bin", "fdmnav collect-its")))
    held = ds.subset(np.arange(len(ds) - 512, len(ds)))
    rng = np.random.default_rng(10)

    def recon_error(obs, wps):
        from fdmnav.nn import autodiff as ad
        with ad.no_grad():
            y = model.encode_condition(obs, wps)
            mu, logvar = model.posterior(held.cmds, y)
            dec = model.decode(mu, y, teacher=held.cmds,
                               horizon=held.cmds.shape[1]).data
        return float(((dec - held.cmds) ** 2).mean())

    true_err = recon_error(held.obs, held.wps)
    perm = rng.permutation(len(held))
    shuf_err = recon_error(held.obs[perm], held.wps[perm])
    report("its conditioning matters", true_err < shuf_err,
           f"recon with true condition {true_err:.4f} < shuffled {shuf_err:.4f}")


def test_its_diversity_ordering():
    """Best-of-many (K=4) training yields more diverse samples than K=1 on the
    same data and seed."""
    ds_path = artifact("its/its_dataset.bin", "fdmnav collect-its")
    full = its.ItsDataset.load(str(ds_path))
    sub = full.subset(np.arange(min(4000, len(full))))
    models = {}
    for k in (1, 4):
        cfg = its.ItsTrainConfig(epochs=6, batch_size=256, lr=3e-4, k_samples=k,
                                 kl_weight=0.5, val_fraction=0.0, seed=11)
        models[k], _ = its.train_its(sub, cfg, np.random.default_rng(11),
                                     progress=lambda *a: None)

    def mean_pairwise(model):
        dists = []
        for i in range(0, 40, 10):
            s = its.sample(model, sub.obs[i], sub.wps[i], 16, np.random.default_rng(i))
            flat = s.reshape(16, -1)
            d = np.linalg.norm(flat[:, None] - flat[None, :], axis=2)
            dists.append(d[np.triu_indices(16, 1)].mean())
        return float(np.mean(dists))

    d4 = mean_pairwise(models[4])
    d1 = mean_pairwise(models[1])
    report("its k>1 diversity ordering", d4 > d1,
           f"mean pairwise sample distance: K=4 {d4:.3f} > K=1 {d1:.3f}")


# --- reactivity to unexpected obstacles (module examples, not a core criterion) -------------


def test_unexpected_obstacle_reactivity():
    path = artifact("bench/unexpected.json", "fdmnav bench --task unexpected")
    with open(path) as f:
        results = json.load(f)
    ours = results["ours"]
    pd = results["pd"]
    ours_rate = ours["successes"] / max(ours["trials"], 1)
    ok = ours_rate >= 0.8 and ours["successes"] > pd["successes"]
    report("unexpected-obstacle reactivity", ok,
           f"ours {ours['successes']}/{ours['trials']} (>=80%), "
           f"pd {pd['successes']}/{pd['trials']} (strictly fewer)")


# --- secondary: teleop round trip -----------------------------------------------------------


def test_secondary_teleop_roundtrip_and_intervention(trained_fdm):
    import asyncio
    import socket
    import threading
    from websockets.sync.client import connect
    from fdmnav.teleop import TeleopConfig, TeleopServer

    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    cfg = TeleopConfig(port=port, env_seed=0, time_scale=6.0, grid_size=3.0)
    server = TeleopServer(trained_fdm, cfg)
    threading.Thread(target=lambda: asyncio.run(server.serve_forever()),
                     daemon=True).start()
    deadline = time.time() + 5
    ws = None
    while time.time() < deadline:
        try:
            ws = connect(f"ws://127.0.0.1:{port}", open_timeout=1)
            break
        except OSError:
            time.sleep(0.05)
    assert ws is not None, "teleop server did not start"

    def recv_state(timeout=4.0):
        end = time.time() + timeout
        while time.time() < end:
            msg = json.loads(ws.recv(timeout=timeout))
            if msg["type"] == "state":
                return msg
        raise TimeoutError

    # round-trip: command seq echoed in a state frame within 500 ms (sim time;
    # scaled by time_scale on the wall clock, plus slack for the test host)
    json.loads(ws.recv(timeout=3))  # env frame
    t0 = time.time()
    ws.send(json.dumps({"type": "cmd", "v_forward": 0.0, "v_lateral": 0.0,
                        "yaw_rate": 0.0, "seq": 12345}))
    while True:
        msg = recv_state()
        if msg["applied_seq"] == 12345:
            break
    roundtrip = time.time() - t0
    report("teleop seq round-trip", roundtrip < 0.5 * cfg.time_scale,
           f"{roundtrip * 1000:.0f} ms wall at {cfg.time_scale}x time scale")

    # drive full-forward into obstacles: intervention precedes any collision
    wins = 0
    trials = 20
    for trial in range(trials):
        ws.send(json.dumps({"type": "reset", "env_seed": 100 + trial}))
        seq = trial * 10_000
        intervened_first = False
        end = time.time() + 10.0
        while time.time() < end:
            ws.send(json.dumps({"type": "cmd", "v_forward": 1.0, "v_lateral": 0.0,
                                "yaw_rate": 0.0, "seq": seq}))
            seq += 1
            try:
                msg = recv_state(timeout=2.0)
            except TimeoutError:
                break
            if msg["collided"]:
                break
            if msg["intervened"]:
                intervened_first = True
                break
        wins += int(intervened_first)
    ws.close()
    report("teleop intervention before collision", wins >= 18,
           f"{wins}/20 trials intervened before any ground-truth collision")


def test_secondary_ui_unit_suite():
    frontend = Path(__file__).resolve().parent.parent / "frontend"
    if not (frontend / "node_modules").exists():
        msg = "frontend dependencies missing; run `npm install` in frontend/"
        if STRICT:
            pytest.fail(msg)
        pytest.skip(msg)
    proc = subprocess.run(["npx", "vitest", "run", "--silent"], cwd=frontend,
                          capture_output=True, text=True, timeout=300)
    report("ui unit suite (threshold 0.3, input mapping, frame budget)",
           proc.returncode == 0, (proc.stdout + proc.stderr).strip().splitlines()[-1]
           if (proc.stdout + proc.stderr).strip() else "")
