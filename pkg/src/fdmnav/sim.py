"""Ground-truth robot proxy.

Velocity commands are tracked with a first-order lag plus small multiplicative
noise, the pose is integrated with a body-frame Euler step, and collisions
latch for the remainder of an episode. The observation is a noisy normalized
lidar scan plus a 10-step state history at 0.05 s spacing.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .env import (Environment, FOOTPRINT_HALF_X, FOOTPRINT_HALF_Y, LidarConfig,
                  footprint_collides, raycast)
from .geom import Pose2, world_to_local

# Available command range: forward [m/s], lateral [m/s], yaw rate [rad/s].
CMD_LOW = np.array([-1.0, -0.4, -1.2])
CMD_HIGH = np.array([1.0, 0.4, 1.2])
CMD_DIM = 3

HISTORY_LEN = 10
HISTORY_ENTRY_DIM = 7  # cos/sin relative yaw, vx, vy, yaw rate, roll, pitch


def clamp_commands(cmds: np.ndarray) -> np.ndarray:
    return np.clip(cmds, CMD_LOW, CMD_HIGH)


@dataclass(frozen=True)
class Command:
    v_forward: float = 0.0
    v_lateral: float = 0.0
    yaw_rate: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.v_forward, self.v_lateral, self.yaw_rate])

    @staticmethod
    def from_array(a) -> "Command":
        return Command(float(a[0]), float(a[1]), float(a[2]))

    def clamped(self) -> "Command":
        return Command.from_array(clamp_commands(self.as_array()))


@dataclass
class SimConfig:
    dt_fine: float = 0.05
    command_period: float = 0.5
    tau_track: float = 0.3        # first-order velocity tracking lag
    cmd_noise_frac: float = 0.03  # tracking noise std as a fraction of |cmd|
    # command-tracking character: turning bleeds translational speed and
    # lateral commands track with a gain deficit (a simplified kinematic
    # model that assumes perfect tracking misses exactly this)
    turn_attenuation: float = 0.5
    lateral_gain: float = 0.8
    half_x: float = FOOTPRINT_HALF_X
    half_y: float = FOOTPRINT_HALF_Y
    bob_amplitude: float = 0.03   # synthetic roll/pitch bobbing
    gait_stride: float = 0.4      # meters of travel per leg cycle

    def ideal(self) -> "SimConfig":
        """Perfect-tracking variant (matches the analytic integrator)."""
        return replace(self, tau_track=0.0, cmd_noise_frac=0.0,
                       turn_attenuation=0.0, lateral_gain=1.0)

    @property
    def steps_per_command(self) -> int:
        return int(round(self.command_period / self.dt_fine))


@dataclass
class RobotState:
    pose: Pose2 = field(default_factory=Pose2)
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))  # body vx, vy, yaw rate
    collided: bool = False
    sim_time: float = 0.0
    gait_phase: float = 0.0


def step(state: RobotState, cmd: Command, env: Environment, dt: float,
         rng: np.random.Generator | None = None,
         cfg: SimConfig | None = None) -> RobotState:
    """One fine integration step. Pure: returns a new state.

    Once collided the pose freezes and the flag stays latched.
    """
    cfg = cfg or SimConfig()
    if state.collided:
        return replace(state, sim_time=state.sim_time + dt)

    c = cmd.as_array()
    scale = 1.0 / (1.0 + cfg.turn_attenuation * abs(c[2]))
    target = np.array([c[0] * scale, cfg.lateral_gain * c[1] * scale, c[2]])
    v = state.velocity
    if cfg.tau_track > 0.0:
        v = v + (dt / cfg.tau_track) * (target - v)
    else:
        v = target
    if cfg.cmd_noise_frac > 0.0 and rng is not None:
        v = v + rng.normal(0.0, 1.0, 3) * (cfg.cmd_noise_frac * np.abs(c))

    yaw = state.pose.yaw
    cy, sy = math.cos(yaw), math.sin(yaw)
    x = state.pose.x + dt * (v[0] * cy - v[1] * sy)
    y = state.pose.y + dt * (v[0] * sy + v[1] * cy)
    pose = Pose2(x, y, yaw + dt * v[2])

    speed = math.hypot(v[0], v[1]) + 0.3 * abs(v[2])
    phase = state.gait_phase + dt * 2.0 * math.pi * speed / cfg.gait_stride

    collided = footprint_collides(env, pose, cfg.half_x, cfg.half_y)
    if collided:
        v = np.zeros(3)
    return RobotState(pose, v, collided, state.sim_time + dt, phase)


def bobbing(state: RobotState, cfg: SimConfig) -> tuple[float, float]:
    """Synthetic roll/pitch from the leg-cycle phase."""
    roll = cfg.bob_amplitude * math.sin(state.gait_phase)
    pitch = cfg.bob_amplitude * math.sin(2.0 * state.gait_phase)
    return roll, pitch


class StateHistory:
    """Ring of the last 10 fine-step snapshots (yaw, vx, vy, wz, roll, pitch)."""

    def __init__(self):
        self._ring: deque[np.ndarray] = deque(maxlen=HISTORY_LEN)

    def push(self, state: RobotState, cfg: SimConfig):
        roll, pitch = bobbing(state, cfg)
        self._ring.append(np.array([
            state.pose.yaw, state.velocity[0], state.velocity[1],
            state.velocity[2], roll, pitch,
        ]))

    @property
    def warmed_up(self) -> bool:
        return len(self._ring) == HISTORY_LEN

    def clear(self):
        self._ring.clear()

    def snapshots(self) -> np.ndarray:
        """(10, 6) raw snapshots, oldest first."""
        return np.stack(list(self._ring))

    def copy(self) -> "StateHistory":
        h = StateHistory()
        h._ring = deque((e.copy() for e in self._ring), maxlen=HISTORY_LEN)
        return h


@dataclass
class Observation:
    scan: np.ndarray            # (beam_count,) normalized to [0, 1]
    history: np.ndarray         # (10, 7), oldest first

    def vector(self) -> np.ndarray:
        return np.concatenate([self.scan, self.history.ravel()]).astype(np.float32)


def observation_dim(lidar_cfg: LidarConfig) -> int:
    return lidar_cfg.beam_count + HISTORY_LEN * HISTORY_ENTRY_DIM


def observe(state: RobotState, history: StateHistory, env: Environment,
            lidar_cfg: LidarConfig, rng: np.random.Generator) -> Observation:
    """Assemble the observation at the current state.

    History yaw is expressed relative to the current yaw (as cos/sin), so the
    observation is invariant to the world heading; velocities are body-frame
    already.
    """
    if not history.warmed_up:
        raise RuntimeError(
            "state history is cold; run 0.5 s of zero-command settling before observing")
    sensor_pose = state.pose.compose(lidar_cfg.mount_offset)
    scan = raycast(env, sensor_pose, lidar_cfg, rng)
    snaps = history.snapshots()
    rel_yaw = snaps[:, 0] - state.pose.yaw
    hist = np.column_stack([
        np.cos(rel_yaw), np.sin(rel_yaw),
        snaps[:, 1], snaps[:, 2], snaps[:, 3], snaps[:, 4], snaps[:, 5],
    ])
    return Observation(scan, hist)


class Simulator:
    """Owns one episode: state, history, and seeded noise."""

    def __init__(self, env: Environment, sim_cfg: SimConfig | None = None,
                 lidar_cfg: LidarConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.env = env
        self.cfg = sim_cfg or SimConfig()
        self.lidar = lidar_cfg or LidarConfig()
        self.rng = rng or np.random.default_rng()
        self.state = RobotState()
        self.history = StateHistory()

    def reset(self, pose: Pose2, settle: bool = True):
        self.state = RobotState(pose=pose)
        self.history.clear()
        if settle:
            for _ in range(HISTORY_LEN):
                self.fine_step(Command())
        return self.state

    def fine_step(self, cmd: Command) -> RobotState:
        self.state = step(self.state, cmd, self.env, self.cfg.dt_fine, self.rng, self.cfg)
        self.history.push(self.state, self.cfg)
        return self.state

    def run_command(self, cmd: Command) -> RobotState:
        """Hold one command for a full command period."""
        for _ in range(self.cfg.steps_per_command):
            self.fine_step(cmd)
        return self.state

    def observe(self) -> Observation:
        return observe(self.state, self.history, self.env, self.lidar, self.rng)


def rollout_and_label(env: Environment, start: RobotState, history: StateHistory,
                      cmds: np.ndarray, rng: np.random.Generator,
                      sim_cfg: SimConfig | None = None,
                      lidar_cfg: LidarConfig | None = None):
    """Simulate a command sequence and emit self-supervised labels.

    cmds: (H, 3), each held for one command period. Returns
    (Observation at start, xs, ys, ps) where xs/ys are the body-frame
    coordinates of the robot relative to the start pose at each command
    boundary and ps are latched binary collision flags.
    """
    cfg = sim_cfg or SimConfig()
    lidar = lidar_cfg or LidarConfig()
    obs = observe(start, history, env, lidar, rng)
    state = start
    horizon = cmds.shape[0]
    world = np.empty((horizon, 2))
    ps = np.empty(horizon, dtype=np.float32)
    for k in range(horizon):
        cmd = Command.from_array(cmds[k])
        for _ in range(cfg.steps_per_command):
            state = step(state, cmd, env, cfg.dt_fine, rng, cfg)
        world[k] = (state.pose.x, state.pose.y)
        ps[k] = 1.0 if state.collided else 0.0
    local = world_to_local(start.pose, world)
    return obs, local[:, 0].astype(np.float32), local[:, 1].astype(np.float32), ps
