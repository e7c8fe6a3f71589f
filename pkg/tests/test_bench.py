import math
from types import SimpleNamespace

import numpy as np
import pytest

from fdmnav import bench, fdm
from fdmnav.geom import Pose2
from fdmnav.gplan import GlobalPath, PlannerStats
from fdmnav.sim import CMD_HIGH, CMD_LOW, Command, RobotState, SimConfig, step
from tests.conftest import make_env


def straight_path(length=10.0):
    return GlobalPath(np.array([[0.0, 0.0], [length, 0.0]]), PlannerStats(cost=length))


def test_approximate_rollout_zero_commands(empty_env):
    out = bench.approximate_rollout(empty_env, Pose2(1, 2, 0.3), np.zeros((1, 12, 3)))
    np.testing.assert_allclose(out.xs, 0.0, atol=1e-12)
    np.testing.assert_allclose(out.ps, 0.0)
    env_hit = make_env(circles=[(1.0, 2.0, 0.2)])
    out = bench.approximate_rollout(env_hit, Pose2(1, 2, 0.3), np.zeros((1, 12, 3)))
    np.testing.assert_allclose(out.ps, 1.0)


def test_approximate_matches_ideal_sim(empty_env):
    rng = np.random.default_rng(0)
    cmds = rng.uniform(CMD_LOW, CMD_HIGH, (12, 3))
    pose0 = Pose2(0.5, -1.0, 0.7)
    out = bench.approximate_rollout(empty_env, pose0, cmds)
    cfg = SimConfig().ideal()
    s = RobotState(pose=pose0)
    from fdmnav.geom import world_to_local
    world = []
    for k in range(12):
        for _ in range(10):
            s = step(s, Command.from_array(cmds[k]), empty_env, 0.05, None, cfg)
        world.append((s.pose.x, s.pose.y))
    local = world_to_local(pose0, world)
    np.testing.assert_allclose(out.xs[0], local[:, 0], atol=1e-5)
    np.testing.assert_allclose(out.ys[0], local[:, 1], atol=1e-5)


def test_approximate_error_grows_with_horizon(empty_env):
    """With tracking lag and noise on, the perfect-tracking assumption drifts
    more at step 12 than at step 2."""
    rng = np.random.default_rng(1)
    err2, err12 = [], []
    lag_cfg = SimConfig()  # lag + noise enabled
    for _ in range(300):
        cmds = rng.uniform(CMD_LOW, CMD_HIGH, (12, 3))
        out = bench.approximate_rollout(empty_env, Pose2(), cmds)
        s = RobotState()
        truth = []
        for k in range(12):
            for _ in range(10):
                s = step(s, Command.from_array(cmds[k]), empty_env, 0.05, rng, lag_cfg)
            truth.append((s.pose.x, s.pose.y))
        truth = np.asarray(truth)
        d = np.hypot(out.xs[0] - truth[:, 0], out.ys[0] - truth[:, 1])
        err2.append(d[1])
        err12.append(d[11])
    assert np.mean(err12) > np.mean(err2)


def test_pd_on_path_drives_forward(empty_env):
    tracker = bench.PdTracker(straight_path())
    cmd = tracker.step(Pose2(2.0, 0.0, 0.0))
    assert cmd.v_forward > 0
    assert abs(cmd.yaw_rate) < 1e-9
    assert abs(cmd.v_lateral) < 1e-9


def test_pd_waypoint_left_sign():
    # path runs along +y from the robot's position: waypoint is to the left
    path = GlobalPath(np.array([[0.0, 0.0], [0.0, 10.0]]), PlannerStats())
    tracker = bench.PdTracker(path)
    cmd = tracker.step(Pose2(0.0, 0.0, 0.0))
    assert cmd.v_lateral > 0
    assert cmd.yaw_rate > 0


def test_pd_step_response_no_big_overshoot(empty_env):
    """1 m lateral offset converges without overshooting more than 20%."""
    from fdmnav.sim import Simulator
    sim = Simulator(empty_env, SimConfig(cmd_noise_frac=0.0),
                    rng=np.random.default_rng(2))
    sim.reset(Pose2(0.0, 1.0, 0.0))
    tracker = bench.PdTracker(straight_path(40.0))
    ys = []
    for _ in range(60):
        cmd = tracker.step(sim.state.pose)
        sim.run_command(cmd)
        ys.append(sim.state.pose.y)
    ys = np.array(ys)
    assert abs(ys[-1]) < 0.1          # converged to the path
    assert ys.min() > -0.2            # overshoot below 20% of the 1 m offset


def test_run_episode_pd_empty_env_success(empty_env):
    models = SimpleNamespace(fdm=None, its=None)
    res = bench.run_episode("pd", empty_env, straight_path(6.0), (6.0, 0.0), models,
                            seed=3, timeout=60.0)
    assert res.success and not res.collision
    assert res.traversal_time < 30.0
    assert res.dtw_per_step < 0.5


def test_run_episode_rejects_unknown_method(empty_env):
    with pytest.raises(ValueError):
        bench.run_episode("zigzag", empty_env, straight_path(), (1, 0),
                          SimpleNamespace(fdm=None, its=None))


def test_summarize_and_write(tmp_path):
    rows = [
        bench.EpisodeResult("pd", True, False, False, False, 12.0, 0.3, 0.1, 1,
                            density=0.2, env_index=0, goal_index=0,
                            path=np.zeros((3, 2))),
        bench.EpisodeResult("pd", False, True, False, False, 5.0, 0.4, 0.2, 2,
                            density=0.2, env_index=0, goal_index=1,
                            path=np.zeros((3, 2))),
    ]
    table = bench.summarize(rows)
    entry = table["0.2|pd"]
    assert entry["sr"] == 50.0
    assert entry["episodes"] == 2
    assert entry["time_success"] == 12.0
    bench.write_results(str(tmp_path), rows, table)
    assert (tmp_path / "episodes.csv").exists()
    assert (tmp_path / "summary.json").exists()
    import csv as csvmod
    with open(tmp_path / "episodes.csv") as f:
        parsed = list(csvmod.DictReader(f))
    assert len(parsed) == 2
    assert parsed[0]["method"] == "pd"


def _stub_model(p_level: float):
    """Tiny model whose collision logit is pinned: p ~ p_level everywhere."""
    cfg = fdm.FdmConfig(obs_dim=430, enc_hidden=(16, 8), rnn_hidden=4)
    model = fdm.FdmModel(cfg, np.random.default_rng(0))
    model.head.w.data[:] = 0.0
    model.head.b.data[:] = 0.0
    model.head.b.data[2] = math.log(p_level / (1 - p_level))
    return model


def test_safety_filter_passthrough_when_safe():
    model = _stub_model(0.05)
    obs = np.zeros(430, dtype=np.float32)
    user = Command(0.8, 0.0, 0.0)
    out, intervened, _ = bench.safety_filter_step(model, obs, user,
                                                  bench.SafetyFilterConfig(),
                                                  np.random.default_rng(1))
    assert not intervened
    assert out == user


def test_safety_filter_intervenes_when_unsafe():
    model = _stub_model(0.9)
    obs = np.zeros(430, dtype=np.float32)
    user = Command(1.0, 0.0, 0.0)
    out, intervened, diag = bench.safety_filter_step(model, obs, user,
                                                     bench.SafetyFilterConfig(),
                                                     np.random.default_rng(2))
    assert intervened
    arr = out.as_array()
    assert np.all(arr >= CMD_LOW) and np.all(arr <= CMD_HIGH)


def test_unexpected_obstacle_far_off_path_matches_clean(empty_env):
    models = SimpleNamespace(fdm=None, its=None)
    res = bench.unexpected_obstacle_episode(
        empty_env, [(0.0, 15.0, 0.5)], (6.0, 0.0), models,
        start=(0.0, 0.0), seed=4, method="pd")
    assert res.success


def test_stable_seed_is_process_independent():
    # pinned values: a changed hashing scheme would silently re-randomize
    # every benchmark episode
    assert bench.stable_seed("pd", 430, 0, 0, 0) == 4262145787
    assert bench.stable_seed("ours", 200, 19, 3, 2) == bench.stable_seed("ours", 200, 19, 3, 2)
    assert bench.stable_seed("a") != bench.stable_seed("b")
