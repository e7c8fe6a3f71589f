"""Experiment harness: point-goal navigation benchmarks, the PD and
ground-truth-rollout baselines, sampler ablations, the unexpected-obstacle
reactivity test, and the safety-remote-control filter."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, asdict
from types import SimpleNamespace

import numpy as np

from . import kernels, mpc
from .env import (FOOTPRINT_HALF_X, FOOTPRINT_HALF_Y, LidarConfig,
                  generate_environment, sample_env_params)
from .fdm import (COLLISION_THRESHOLD, FdmModel, RolloutBatch, apply_padding,
                  fdm_forward, sample_free_pose)
from .geom import (Pose2, arc_lengths, project_to_polyline, resample_polyline,
                   world_to_local, wrap_angle)
from .gplan import GlobalPath, PlanningFailed, plan, truncate_waypoints
from .sim import CMD_HIGH, CMD_LOW, Command, SimConfig, Simulator, clamp_commands

METHODS = ("ours", "pd", "approximate", "random_only", "its_only")
DESK_DENSITIES = (0.43, 0.33, 0.25, 0.2)
GOAL_RADIUS = 0.6
EPISODE_TIMEOUT = 120.0


def stable_seed(*parts) -> int:
    """Process-independent seed from mixed parts (hash() is randomized)."""
    import zlib
    return zlib.crc32("|".join(str(p) for p in parts).encode())


# --- baselines -----------------------------------------------------------------


def approximate_rollout(env, pose: Pose2, cmds: np.ndarray,
                        substeps: int = 10, dt: float = 0.05) -> RolloutBatch:
    """Ground-truth-geometry rollout: perfect command tracking, exact
    footprint collision checks at every substep, binary collision flags."""
    cmds = np.asarray(cmds, dtype=np.float64)
    squeeze = cmds.ndim == 2
    if squeeze:
        cmds = cmds[None]
    xs, ys, ps = kernels.approx_rollout(
        pose.as_array(), cmds, substeps, dt, FOOTPRINT_HALF_X, FOOTPRINT_HALF_Y,
        env.circles, env.boxes, env.walls)
    return RolloutBatch(xs, ys, ps)


@dataclass
class PdGains:
    kp_pos: float = 1.2
    kp_yaw: float = 2.0
    kd: float = 0.1
    lookahead: float = 1.5


def _point_and_tangent_at_arc(nodes: np.ndarray, arc: float):
    s = arc_lengths(nodes)
    arc = min(max(arc, 0.0), s[-1])
    x = np.interp(arc, s, nodes[:, 0])
    y = np.interp(arc, s, nodes[:, 1])
    seg = min(int(np.searchsorted(s, arc, side="right")) - 1, len(nodes) - 2)
    seg = max(seg, 0)
    d = nodes[seg + 1] - nodes[seg]
    return np.array([x, y]), math.atan2(d[1], d[0])


class PdTracker:
    """Waypoint-following baseline: P gains on the local-frame position error
    toward a fixed-lookahead waypoint plus heading alignment with the path
    tangent, D terms on the error rates."""

    def __init__(self, path: GlobalPath | np.ndarray, gains: PdGains | None = None):
        self.nodes = path.nodes if isinstance(path, GlobalPath) else np.asarray(path)
        self.gains = gains or PdGains()
        self._prev_err = None

    def step(self, pose: Pose2, dt: float = 0.5) -> Command:
        g = self.gains
        _, _, _, arc = project_to_polyline(self.nodes, (pose.x, pose.y))
        wp, tangent = _point_and_tangent_at_arc(self.nodes, arc + g.lookahead)
        local = world_to_local(pose, wp[None])[0]
        err = np.array([local[0], local[1], wrap_angle(tangent - pose.yaw)])
        derr = (err - self._prev_err) / dt if self._prev_err is not None else np.zeros(3)
        self._prev_err = err
        kp = np.array([g.kp_pos, g.kp_pos, g.kp_yaw])
        u = kp * err + g.kd * derr
        return Command.from_array(clamp_commands(u))


# --- point-goal episodes --------------------------------------------------------


@dataclass
class EpisodeResult:
    method: str
    success: bool
    collision: bool
    timeout: bool
    plan_failed: bool
    traversal_time: float
    dtw_per_step: float
    smoothness: float
    seed: int
    density: float = math.nan
    env_index: int = -1
    goal_index: int = -1
    path: np.ndarray | None = None

    def row(self) -> dict:
        d = asdict(self)
        d.pop("path")
        return d


def _mpc_config_for(method: str, base: mpc.MpcConfig | None) -> mpc.MpcConfig:
    cfg = base or mpc.MpcConfig()
    overrides = {"ours": None, "approximate": None,
                 "random_only": 0.0, "its_only": 1.0}
    frac = overrides.get(method, None)
    if frac is None:
        return cfg
    out = mpc.MpcConfig(**{**cfg.__dict__, "its_fraction": frac})
    return out


def run_episode(method: str, env, path: GlobalPath, goal, models,
                seed: int = 0, mpc_cfg: mpc.MpcConfig | None = None,
                timeout: float = EPISODE_TIMEOUT, record=None) -> EpisodeResult:
    """One point-goal episode at the 2 Hz planning rate."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    sim = Simulator(env, SimConfig(), LidarConfig(), rng)
    first_dir = path.nodes[min(1, len(path.nodes) - 1)] - path.nodes[0]
    yaw0 = math.atan2(first_dir[1], first_dir[0]) if np.linalg.norm(first_dir) > 0 else 0.0
    sim.reset(Pose2(path.nodes[0][0], path.nodes[0][1], yaw0))

    cfg = _mpc_config_for(method, mpc_cfg)
    its_model = models.its if method in ("ours", "approximate", "its_only") else None
    tracker = PdTracker(path) if method == "pd" else None
    goal = np.asarray(goal, dtype=np.float64)
    prev_opt = None
    traversed = [np.array([sim.state.pose.x, sim.state.pose.y])]
    exec_cmds = []
    status = "timeout"
    n_ticks = int(timeout / sim.cfg.command_period)
    t_used = timeout

    for tick in range(n_ticks):
        pose = sim.state.pose
        if np.linalg.norm(traversed[-1] - goal) <= GOAL_RADIUS:
            status = "success"
            t_used = tick * sim.cfg.command_period
            break
        if tracker is not None:
            cmd = tracker.step(pose)
        else:
            obs = sim.observe()
            wps = truncate_waypoints(path, pose)
            rollout_fn = None
            if method == "approximate":
                rollout_fn = lambda _obs, samples, _pose=pose: approximate_rollout(env, _pose, samples)
            cmd, prev_opt, diag = mpc.mpc_step(
                models.fdm, its_model, obs.vector(), wps, cfg, prev_opt, rng,
                rollout_fn=rollout_fn)
            if record is not None:
                record(tick, obs.vector(), wps, prev_opt)
        sim.run_command(cmd)
        exec_cmds.append(cmd.as_array())
        traversed.append(np.array([sim.state.pose.x, sim.state.pose.y]))
        if sim.state.collided:
            status = "collision"
            t_used = (tick + 1) * sim.cfg.command_period
            break

    traversed = np.array(traversed)
    steps = max(len(traversed) - 1, 1)
    # resample the plan to ~one-tick spacing so the metric reflects tracking
    # error rather than node sparsity
    ref = resample_polyline(path.nodes, max(int(path.cost / 0.4) + 1, 2))
    dtw_per_step = mpc.dtw(ref, traversed) / steps
    if len(exec_cmds) >= 2:
        diffs = np.diff(np.array(exec_cmds), axis=0)
        smoothness = float(np.linalg.norm(diffs, axis=1).mean())
    else:
        smoothness = 0.0
    return EpisodeResult(
        method=method, success=status == "success", collision=status == "collision",
        timeout=status == "timeout", plan_failed=False, traversal_time=t_used,
        dtw_per_step=dtw_per_step, smoothness=smoothness, seed=seed, path=traversed)


# --- benchmark suite ------------------------------------------------------------


@dataclass
class SuiteConfig:
    densities: tuple = DESK_DENSITIES
    n_envs: int = 20
    n_goals: int = 4
    n_seeds: int = 3
    world_extent: float = 18.0     # target field size [m]
    plan_iterations: int = 3000
    timeout: float = EPISODE_TIMEOUT
    seed: int = 0


def _suite_env(density: float, env_index: int, cfg: SuiteConfig):
    """Evaluation field at the requested obstacle density.

    Obstacle sizes are capped so the nominal grid keeps at least a
    robot-width route (density sets difficulty through spacing; uncapped
    sizes make half the dense fields globally impassable, which measures the
    planner's failure handling instead of local-planning skill)."""
    grid = 1.0 / density
    seed = cfg.seed * 1_000_000 + int(density * 1000) * 100 + env_index
    rng = np.random.default_rng(seed)
    kind = "cylinder" if env_index % 2 == 0 else "box"
    cells = max(int(round(cfg.world_extent / grid)), 3)
    params = sample_env_params(rng, "open_field", kind, seed=seed,
                               grid_size=grid, cells_x=cells, cells_y=cells)
    max_radius = max((grid - 1.5) / 2, 0.1)
    params.cylinder_radius = min(params.cylinder_radius, max_radius)
    params.box_side = min(params.box_side, 2 * max_radius)
    params.center_randomness = max(params.center_randomness, 0.3)
    return generate_environment(params)


def _find_free_near(env, nominal, rng, clearances=(1.1, 0.9, 0.7), tries: int = 400):
    """Free point near `nominal`, preferring generous clearance so endpoints
    do not sit in pockets the safety-aware planner refuses to enter."""
    nominal = np.asarray(nominal, dtype=np.float64)
    for clearance in clearances:
        for i in range(tries):
            radius = 0.02 * i
            p = nominal + rng.uniform(-radius, radius, 2)
            if not kernels.points_hit(p[None], clearance, env.circles, env.boxes, env.walls)[0]:
                return p
    return None


def suite_episode_specs(cfg: SuiteConfig):
    """(density, env_index, goal_index) grid with start/goal layout."""
    for density in cfg.densities:
        for env_index in range(cfg.n_envs):
            yield density, env_index


def _env_endpoints(env, cfg: SuiteConfig, density: float, env_index: int):
    xmin, ymin, xmax, ymax = env.bounds
    w = xmax - xmin
    h = ymax - ymin
    rng = np.random.default_rng(stable_seed(int(density * 1000), env_index, cfg.seed))
    start = _find_free_near(env, (xmin + 1.0, ymin + h / 2), rng)
    goals = []
    for k in range(cfg.n_goals):
        nominal = (xmax - 1.0, ymin + h * (k + 1) / (cfg.n_goals + 1))
        goals.append(_find_free_near(env, nominal, rng))
    return start, goals


def run_point_goal(methods, fdm_model: FdmModel, its_model, cfg: SuiteConfig | None = None,
                   mpc_cfg: mpc.MpcConfig | None = None, out_dir: str | None = None,
                   progress=print):
    """Run the desk benchmark suite; returns (per-episode rows, summary table).

    Global plans are computed once per (environment, goal) and shared across
    methods and repetition seeds.
    """
    cfg = cfg or SuiteConfig()
    models = SimpleNamespace(fdm=fdm_model, its=its_model)
    rows: list[EpisodeResult] = []
    t0 = time.time()
    for density, env_index in suite_episode_specs(cfg):
        env = _suite_env(density, env_index, cfg)
        start, goals = _env_endpoints(env, cfg, density, env_index)
        for goal_index, goal in enumerate(goals):
            path = None
            plan_failed = start is None or goal is None
            if not plan_failed:
                try:
                    path = plan(env, start, goal, max_iterations=cfg.plan_iterations,
                                seed=env_index * 100 + goal_index)
                except (ValueError, PlanningFailed):
                    plan_failed = True
            for method in methods:
                for rep in range(cfg.n_seeds):
                    seed = stable_seed(method, int(density * 1000), env_index, goal_index, rep)
                    if plan_failed:
                        res = EpisodeResult(method=method, success=False, collision=False,
                                            timeout=False, plan_failed=True,
                                            traversal_time=cfg.timeout, dtw_per_step=math.nan,
                                            smoothness=math.nan, seed=seed)
                    else:
                        res = run_episode(method, env, path, goal, models, seed=seed,
                                          mpc_cfg=mpc_cfg, timeout=cfg.timeout)
                    res.density = density
                    res.env_index = env_index
                    res.goal_index = goal_index
                    rows.append(res)
        done = len(rows)
        progress(f"density {density} env {env_index}: {done} episodes, "
                 f"{time.time() - t0:.0f}s elapsed")
    table = summarize(rows)
    if out_dir:
        write_results(out_dir, rows, table)
    return rows, table


def summarize(rows) -> dict:
    """Per (density, method) aggregates."""
    table = {}
    for r in rows:
        key = (r.density, r.method)
        table.setdefault(key, []).append(r)
    out = {}
    for (density, method), group in sorted(table.items()):
        n = len(group)
        successes = [g for g in group if g.success]
        dtws = [g.dtw_per_step for g in group if not math.isnan(g.dtw_per_step)]
        smooth = [g.smoothness for g in group if not math.isnan(g.smoothness)]
        out[f"{density}|{method}"] = {
            "density": density,
            "method": method,
            "episodes": n,
            "sr": 100.0 * len(successes) / n,
            "time_success": float(np.mean([g.traversal_time for g in successes])) if successes else math.nan,
            "time_all": float(np.mean([g.traversal_time for g in group])),
            "dtw_per_step": float(np.mean(dtws)) if dtws else math.nan,
            "smoothness": float(np.mean(smooth)) if smooth else math.nan,
            "plan_failures": sum(g.plan_failed for g in group),
        }
    return out


def write_results(out_dir: str, rows, table):
    import os
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "episodes.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].row()))
        writer.writeheader()
        writer.writerows([r.row() for r in rows])
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(table, f, indent=1, sort_keys=True)
    trajs = {f"{r.density}|{r.method}|{r.env_index}|{r.goal_index}|{r.seed}":
             (r.path.tolist() if r.path is not None else None) for r in rows[:200]}
    with open(os.path.join(out_dir, "trajectories.json"), "w") as f:
        json.dump(trajs, f)


# --- safety remote control -------------------------------------------------------


@dataclass
class SafetyFilterConfig:
    n_samples: int = 256
    sigma: tuple = (0.3, 0.12, 0.36)   # 10% of each command span
    gamma: float = 20.0
    threshold: float = COLLISION_THRESHOLD
    window_seconds: float = 3.0
    horizon: int = 12
    command_period: float = 0.5

    @property
    def window_steps(self) -> int:
        return int(self.window_seconds / self.command_period)


def safety_filter_step(model: FdmModel, obs_vec: np.ndarray, user_cmd: Command,
                       cfg: SafetyFilterConfig, rng: np.random.Generator):
    """Execute the user's command if predicted safe; otherwise optimize the
    safety reward over samples drawn around the user's intent.

    Returns (command to execute, intervened flag, diagnostics)."""
    user = clamp_commands(user_cmd.as_array())
    held = np.tile(user, (cfg.horizon, 1))
    pred = apply_padding(fdm_forward(model, obs_vec, held), cfg.threshold)
    unsafe = bool((pred.ps[:cfg.window_steps] >= cfg.threshold).any())
    if not unsafe:
        return Command.from_array(user), False, {"user_ps": pred.ps}

    samples = rng.normal(0.0, 1.0, (cfg.n_samples, 1, 3)) * np.asarray(cfg.sigma) + user
    samples = clamp_commands(np.repeat(samples, cfg.horizon, axis=1))
    batch = apply_padding(model.rollout_batch(obs_vec, samples), cfg.threshold)
    rewards = mpc.safety_reward(batch.ps)
    keep = ~(batch.ps[:, :cfg.window_steps] >= cfg.threshold).any(axis=1)
    if not keep.any():
        keep = np.ones(cfg.n_samples, dtype=bool)
    opt = mpc.reward_weighted_update(samples[keep], rewards[keep], cfg.gamma)
    opt = clamp_commands(opt)
    return Command.from_array(opt[0]), True, {
        "user_ps": pred.ps, "n_safe": int(keep.sum())}


def run_safety_suite(model: FdmModel, density: float, n_envs: int = 10,
                     cmds_per_env: int = 300, trial_ticks: int = 8,
                     seed: int = 0, fcfg: SafetyFilterConfig | None = None,
                     progress=print) -> dict:
    """Safety-remote-control benchmark: random user commands, success = the
    filtered execution stays collision-free. Results split by whether
    executing the raw command would have collided."""
    fcfg = fcfg or SafetyFilterConfig()
    counts = {"collision": [0, 0], "no_collision": [0, 0]}  # [success, total]
    rng = np.random.default_rng(seed)
    for e in range(n_envs):
        env_seed = seed * 10_000 + int(density * 1000) * 100 + e
        env_rng = np.random.default_rng(env_seed)
        params = sample_env_params(env_rng, "open_field",
                                   "cylinder" if e % 2 == 0 else "box",
                                   seed=env_seed, grid_size=1.0 / density,
                                   cells_x=4, cells_y=4)
        env = generate_environment(params)
        for trial in range(cmds_per_env):
            pose = sample_free_pose(env, rng, clearance=0.7)
            if pose is None:
                continue
            user = Command.from_array(rng.uniform(CMD_LOW, CMD_HIGH))
            trial_seed = int(rng.integers(0, 2 ** 32))
            # ground truth: would executing the raw command collide?
            sim_gt = Simulator(env, SimConfig(), LidarConfig(),
                               np.random.default_rng(trial_seed))
            sim_gt.reset(pose)
            for _ in range(trial_ticks):
                sim_gt.run_command(user)
                if sim_gt.state.collided:
                    break
            group = "collision" if sim_gt.state.collided else "no_collision"
            # filtered execution
            sim_f = Simulator(env, SimConfig(), LidarConfig(),
                              np.random.default_rng(trial_seed))
            sim_f.reset(pose)
            for _ in range(trial_ticks):
                obs = sim_f.observe()
                cmd, _, _ = safety_filter_step(model, obs.vector(), user, fcfg, rng)
                sim_f.run_command(cmd)
                if sim_f.state.collided:
                    break
            counts[group][1] += 1
            counts[group][0] += int(not sim_f.state.collided)
        progress(f"density {density} env {e}: collision {counts['collision']}, "
                 f"no-collision {counts['no_collision']}")
    def rate(key):
        s, t = counts[key]
        return 100.0 * s / t if t else math.nan
    return {"density": density,
            "collision_safe_pct": rate("collision"),
            "no_collision_safe_pct": rate("no_collision"),
            "n_collision": counts["collision"][1],
            "n_no_collision": counts["no_collision"][1]}


# --- unexpected obstacles ---------------------------------------------------------


def unexpected_obstacle_episode(env, inserted_circles, goal, models, start=None,
                                seed: int = 0, method: str = "ours",
                                mpc_cfg: mpc.MpcConfig | None = None,
                                plan_iterations: int = 3000) -> EpisodeResult:
    """Plan on the clean environment, then simulate (and sense) with the
    inserted obstacles present."""
    goal = np.asarray(goal, dtype=np.float64)
    if start is None:
        start = np.array([env.bounds[0] + 1.0, (env.bounds[1] + env.bounds[3]) / 2])
    path = plan(env, start, goal, max_iterations=plan_iterations, seed=seed)
    env_actual = env.with_extra(circles=inserted_circles)
    return run_episode(method, env_actual, path, goal, models, seed=seed, mpc_cfg=mpc_cfg)


def run_unexpected_suite(fdm_model, its_model, methods=("ours", "pd"),
                         n_trials: int = 20, blocker_radius: float = 0.5,
                         seed: int = 0, progress=print) -> dict:
    """Reactivity benchmark: a cylinder is inserted on the midpoint of the
    planned path after planning; the local planner must avoid it unaided."""
    from .env import EnvParams
    models = SimpleNamespace(fdm=fdm_model, its=its_model)
    results = {m: [] for m in methods}
    done = 0
    attempt = 0
    while done < n_trials and attempt < 3 * n_trials:
        trial = seed * 1000 + attempt
        attempt += 1
        env = generate_environment(EnvParams(
            seed=8_000_000 + trial, grid_size=4.0, cylinder_radius=0.4,
            center_randomness=0.6, cells_x=5, cells_y=5))
        rng = np.random.default_rng(trial)
        start = _find_free_near(env, (1.0, 10.0), rng)
        goal = _find_free_near(env, (19.0, 10.0), rng)
        if start is None or goal is None:
            continue
        try:
            path = plan(env, start, goal, seed=trial)
        except (ValueError, PlanningFailed):
            continue
        mid = path.nodes[np.searchsorted(
            arc_lengths(path.nodes), path.cost / 2)] if len(path.nodes) > 2 \
            else (np.asarray(start) + np.asarray(goal)) / 2
        blocker = [(float(mid[0]), float(mid[1]), blocker_radius)]
        env_actual = env.with_extra(circles=blocker)
        for method in methods:
            res = run_episode(method, env_actual, path, goal, models, seed=trial)
            results[method].append(bool(res.success))
        done += 1
        progress(f"unexpected-obstacle trial {done}/{n_trials}: " +
                 ", ".join(f"{m}={results[m][-1]}" for m in methods))
    return {m: {"successes": int(np.sum(v)), "trials": len(v)}
            for m, v in results.items()}


# --- trajectory-sampler data collection -------------------------------------------


def collection_episode(fdm_model: FdmModel, env_seed: int, rng: np.random.Generator,
                       mpc_cfg: mpc.MpcConfig | None = None):
    """One random-sampler point-goal episode in a fresh environment; records
    (observation, waypoints, optimized sequence) at every planning tick.
    Returns (obs list, wps list, cmd list, tick list) or None when the
    environment yields no valid plan."""
    env_rng = np.random.default_rng(env_seed)
    kind = "cylinder" if (env_seed // 2) % 2 == 0 else "box"
    env_type = "open_field" if env_seed % 4 else "cross_corridor"
    params = sample_env_params(env_rng, env_type, kind, seed=env_seed)
    env = generate_environment(params)
    start_pose = sample_free_pose(env, env_rng, clearance=0.8)
    goal_pose = sample_free_pose(env, env_rng, clearance=0.8)
    if start_pose is None or goal_pose is None:
        return None
    start = np.array([start_pose.x, start_pose.y])
    goal = np.array([goal_pose.x, goal_pose.y])
    if np.linalg.norm(goal - start) < 6.0:
        return None
    try:
        path = plan(env, start, goal, max_iterations=1500, seed=env_seed)
    except (ValueError, PlanningFailed):
        return None
    recorded = ([], [], [], [])

    def record(tick, obs_vec, wps, opt_seq):
        recorded[0].append(obs_vec)
        recorded[1].append(wps)
        recorded[2].append(opt_seq.copy())
        recorded[3].append(tick)

    models = SimpleNamespace(fdm=fdm_model, its=None)
    run_episode("random_only", env, path, goal, models, seed=env_seed,
                mpc_cfg=mpc_cfg, timeout=60.0, record=record)
    return recorded
