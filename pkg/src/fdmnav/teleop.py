"""Safety-remote-control teleop service.

One authoritative simulation loop runs in (scaled) real time. The latest user
command is passed through the safety filter at 2 Hz; the resulting command is
held until the next control tick. State frames are broadcast to every client
at 10 Hz over a JSON WebSocket protocol.

Protocol (all frames carry "v": 1):
  client -> server: {"type": "cmd", "v_forward", "v_lateral", "yaw_rate", "seq"}
                    {"type": "reset", "env_seed"}
  server -> client: {"type": "env", "seed", "bounds", "circles", "boxes",
                     "walls", "robot": {"half_x", "half_y"}}
                    {"type": "state", "tick", "sim_time", "pose", "scan",
                     "executed_cmd", "user_cmd", "intervened", "applied_seq",
                     "collided", "predicted_rollouts": [user, executed]}
                    {"type": "error", "message"}
  predicted_rollouts are world-frame {"xs", "ys", "ps"} polylines; the first
  is the held user command, the second the executed command.

Slow clients never block the loop: each client has a bounded frame queue and
new frames replace the oldest when it is full.
"""

from __future__ import annotations

import asyncio
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .bench import SafetyFilterConfig, safety_filter_step
from .env import LidarConfig, generate_environment, sample_env_params
from .fdm import FdmModel, apply_padding, fdm_forward, sample_free_pose
from .geom import Pose2, local_to_world
from .sim import CMD_DIM, Command, SimConfig, Simulator, clamp_commands

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
QUEUE_CAP = 8
CMD_STALE_SECONDS = 1.0


@dataclass
class TeleopConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    env_seed: int = 0
    grid_size: float = 3.5
    time_scale: float = 1.0      # >1 runs the sim faster than real time
    broadcast_every: int = 2     # fine steps between state frames (10 Hz)
    control_every: int = 10      # fine steps between filter runs (2 Hz)


def _make_env(seed: int, grid_size: float):
    rng = np.random.default_rng(seed)
    params = sample_env_params(rng, "open_field", "cylinder" if seed % 2 == 0 else "box",
                               seed=seed, grid_size=grid_size, cells_x=5, cells_y=5)
    return generate_environment(params)


class TeleopServer:
    def __init__(self, model: FdmModel, cfg: TeleopConfig,
                 filter_cfg: SafetyFilterConfig | None = None):
        self.model = model
        self.cfg = cfg
        self.fcfg = filter_cfg or SafetyFilterConfig()
        self.rng = np.random.default_rng(cfg.env_seed)
        # display scans draw from their own stream so broadcasting never
        # perturbs the simulation physics
        self.display_rng = np.random.default_rng(cfg.env_seed + 9999)
        self.clients: dict = {}
        self.tick = 0
        self.user_cmd = Command()
        self.user_seq = -1
        self.cmd_owner = None
        self.cmd_time = -math.inf
        self.executed = Command()
        self.intervened = False
        self.applied_seq = -1
        self._last_obs = None
        self._reset_env(cfg.env_seed)

    # --- sim management ---

    def _reset_env(self, env_seed: int):
        self.env_seed = env_seed
        self.env = _make_env(env_seed, self.cfg.grid_size)
        self.sim = Simulator(self.env, SimConfig(), LidarConfig(),
                             np.random.default_rng(env_seed + 1))
        pose = sample_free_pose(self.env, np.random.default_rng(env_seed + 2),
                                clearance=0.8)
        self.sim.reset(pose or Pose2(0, 0, 0))
        self.tick = 0
        self.user_cmd = Command()
        self.user_seq = -1
        self.executed = Command()
        self.intervened = False
        self.applied_seq = -1
        self._last_obs = None

    def env_frame(self) -> dict:
        return {
            "v": PROTOCOL_VERSION, "type": "env", "seed": self.env_seed,
            "bounds": list(self.env.bounds),
            "circles": self.env.circles.tolist(),
            "boxes": self.env.boxes.tolist(),
            "walls": self.env.walls.tolist(),
            "robot": {"half_x": self.sim.cfg.half_x, "half_y": self.sim.cfg.half_y},
        }

    def _rollout_world(self, cmd_seq: np.ndarray, obs_vec: np.ndarray) -> dict:
        pred = apply_padding(fdm_forward(self.model, obs_vec, cmd_seq))
        pts = local_to_world(self.sim.state.pose,
                             np.stack([pred.xs, pred.ys], axis=1))
        return {"xs": pts[:, 0].round(3).tolist(), "ys": pts[:, 1].round(3).tolist(),
                "ps": pred.ps.round(3).tolist()}

    def control_tick(self, loop_time: float):
        """2 Hz: run the safety filter on the freshest user command."""
        if loop_time - self.cmd_time > CMD_STALE_SECONDS:
            user = Command()
        else:
            user = self.user_cmd
        if self.sim.state.collided:
            self.executed = Command()
            return
        obs = self.sim.observe()
        self._last_obs = obs.vector()
        cmd, intervened, _ = safety_filter_step(self.model, self._last_obs, user,
                                                self.fcfg, self.rng)
        self.executed = cmd
        self.intervened = intervened
        self.applied_seq = self.user_seq

    def state_frame(self) -> dict:
        pose = self.sim.state.pose
        rollouts = []
        if self._last_obs is not None:
            user_seq = np.tile(clamp_commands(self.user_cmd.as_array()),
                               (self.model.cfg.horizon, 1))
            exec_seq = np.tile(self.executed.as_array(), (self.model.cfg.horizon, 1))
            rollouts = [self._rollout_world(user_seq, self._last_obs),
                        self._rollout_world(exec_seq, self._last_obs)]
        scan = []
        if self.sim.history.warmed_up:
            from .sim import observe
            scan = observe(self.sim.state, self.sim.history, self.env,
                           self.sim.lidar, self.display_rng).scan
        return {
            "v": PROTOCOL_VERSION, "type": "state", "tick": self.tick,
            "sim_time": round(self.sim.state.sim_time, 3),
            "pose": [round(pose.x, 4), round(pose.y, 4), round(pose.yaw, 4)],
            "scan": np.asarray(scan).round(4).tolist(),
            "executed_cmd": self.executed.as_array().round(4).tolist(),
            "user_cmd": self.user_cmd.as_array().round(4).tolist(),
            "intervened": self.intervened,
            "applied_seq": self.applied_seq,
            "collided": self.sim.state.collided,
            "predicted_rollouts": rollouts,
        }

    # --- asyncio plumbing ---

    async def _broadcast(self, frame: dict):
        text = json.dumps(frame)
        for queue in list(self.clients.values()):
            if queue.full():
                try:
                    queue.get_nowait()  # drop the oldest frame
                except asyncio.QueueEmpty:
                    pass
            queue.put_nowait(text)

    async def sim_loop(self):
        loop = asyncio.get_running_loop()
        dt_wall = self.sim.cfg.dt_fine / self.cfg.time_scale
        next_deadline = loop.time()
        while True:
            if self.tick % self.cfg.control_every == 0:
                self.control_tick(loop.time())
            self.sim.fine_step(self.executed if not self.sim.state.collided else Command())
            self.tick += 1
            if self.tick % self.cfg.broadcast_every == 0:
                await self._broadcast(self.state_frame())
            next_deadline += dt_wall
            delay = next_deadline - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                next_deadline = loop.time()  # fell behind; don't accumulate debt
                await asyncio.sleep(0)

    async def _sender(self, ws, queue: asyncio.Queue):
        while True:
            await ws.send(await queue.get())

    async def handler(self, ws):
        queue: asyncio.Queue = asyncio.Queue(maxsize=QUEUE_CAP)
        self.clients[ws] = queue
        sender = asyncio.create_task(self._sender(ws, queue))
        loop = asyncio.get_running_loop()
        try:
            await ws.send(json.dumps(self.env_frame()))
            async for raw in ws:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send(json.dumps({"v": PROTOCOL_VERSION, "type": "error",
                                              "message": "malformed JSON"}))
                    continue
                kind = msg.get("type")
                if kind == "cmd":
                    try:
                        seq = int(msg["seq"])
                        cmd = Command(float(msg["v_forward"]), float(msg["v_lateral"]),
                                      float(msg["yaw_rate"])).clamped()
                    except (KeyError, TypeError, ValueError):
                        await ws.send(json.dumps({"v": PROTOCOL_VERSION, "type": "error",
                                                  "message": "bad cmd frame"}))
                        continue
                    if self.cmd_owner is ws and seq <= self.user_seq:
                        continue  # stale within this connection
                    self.user_cmd = cmd
                    self.user_seq = seq
                    self.cmd_owner = ws
                    self.cmd_time = loop.time()
                elif kind == "reset":
                    self._reset_env(int(msg.get("env_seed", 0)))
                    await self._broadcast(self.env_frame())
                else:
                    await ws.send(json.dumps({"v": PROTOCOL_VERSION, "type": "error",
                                              "message": f"unknown type {kind!r}"}))
        finally:
            sender.cancel()
            del self.clients[ws]
            if self.cmd_owner is ws:
                self.user_cmd = Command()
                self.cmd_owner = None

    async def serve_forever(self, ready_event: asyncio.Event | None = None):
        import websockets
        async with websockets.serve(self.handler, self.cfg.host, self.cfg.port):
            if ready_event is not None:
                ready_event.set()
            await self.sim_loop()


def serve(model: FdmModel, cfg: TeleopConfig):
    server = TeleopServer(model, cfg)
    log.info("teleop service on ws://%s:%d (env seed %d)", cfg.host, cfg.port, cfg.env_seed)
    asyncio.run(server.serve_forever())
