"""Learned forward dynamics model: architecture, self-supervised training with
alternating collect/train rounds, batched rollout inference, and the collision
padding step.

The model maps (observation, H future commands) to body-frame positions and
collision probabilities for each of the H command periods. Training runs on
the autodiff tape; the batched inference path is hand-vectorized numpy with
the fused LSTM gate kernel, and the two are pinned together by tests.
"""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import kernels
from .env import LidarConfig, OPEN_FIELD, CROSS_CORRIDOR, generate_environment, sample_env_params
from .geom import Pose2
from .nn import autodiff as ad
from .nn import checkpoint, losses
from .nn.layers import MLP, Dense, LSTMCell, Module
from .nn.optim import Adam
from .sim import (CMD_DIM, CMD_HIGH, CMD_LOW, Command, SimConfig, Simulator,
                  observation_dim)

COLLISION_THRESHOLD = 0.3


@dataclass
class FdmConfig:
    obs_dim: int = 430
    enc_hidden: tuple = (512, 256)
    # 96 keeps the 1500-sequence batch rollout comfortably inside the 2 Hz
    # budget on a single core; see kernels.benchmark
    rnn_hidden: int = 96
    horizon: int = 12
    command_period: float = 0.5

    @property
    def horizon_seconds(self) -> float:
        return self.horizon * self.command_period


class FdmModel(Module):
    """Observation encoder -> LSTM over commands -> (x, y, collision logit)."""

    def __init__(self, cfg: FdmConfig, rng: np.random.Generator):
        self.cfg = cfg
        dims = [cfg.obs_dim, *cfg.enc_hidden]
        self.encoder = MLP(dims, rng, activation="relu")
        self.h0 = Dense(dims[-1], cfg.rnn_hidden, rng)
        self.c0 = Dense(dims[-1], cfg.rnn_hidden, rng)
        self.cell = LSTMCell(CMD_DIM, cfg.rnn_hidden, rng)
        self.head = Dense(cfg.rnn_hidden, 3, rng)

    # --- training-path forward (autodiff tape) ---

    def forward_tape(self, obs: np.ndarray, cmds: np.ndarray) -> ad.Tensor:
        """obs (B, obs_dim), cmds (B, H, 3) -> stacked outputs (B, H, 3)."""
        latent = ad.relu(self.encoder(obs))
        h = ad.tanh(self.h0(latent))
        c = self.c0(latent)
        outs = []
        for k in range(cmds.shape[1]):
            h, c = self.cell.step(cmds[:, k, :], h, c)
            outs.append(self.head(h))
        return ad.stack(outs, axis=1)

    # --- inference path (vectorized numpy + fused gate kernel) ---

    def encode_obs(self, obs_vec: np.ndarray) -> np.ndarray:
        x = np.asarray(obs_vec, dtype=np.float32).reshape(1, -1)
        if x.shape[1] != self.cfg.obs_dim:
            raise ValueError(f"observation dim {x.shape[1]} != model dim {self.cfg.obs_dim}")
        for layer in self.encoder.layers[:-1]:
            x = np.maximum(x @ layer.w.data + layer.b.data, 0.0)
        last = self.encoder.layers[-1]
        x = np.maximum(x @ last.w.data + last.b.data, 0.0)
        return x

    def rollout_batch(self, obs_vec: np.ndarray, cmds: np.ndarray) -> "RolloutBatch":
        """One observation, N command sequences. The encoder runs once and the
        latent is broadcast across the batch."""
        cmds = np.asarray(cmds, dtype=np.float32)
        if cmds.ndim != 3 or cmds.shape[2] != CMD_DIM:
            raise ValueError(f"command batch must be (N, H, 3), got {cmds.shape}")
        n, horizon, _ = cmds.shape
        latent = self.encode_obs(obs_vec)
        h = np.tanh(latent @ self.h0.w.data + self.h0.b.data)
        c = latent @ self.c0.w.data + self.c0.b.data
        h = np.repeat(h, n, axis=0)
        c = np.repeat(c, n, axis=0)
        # command-side pre-activations for every step in one matmul
        zx = (cmds.reshape(n * horizon, CMD_DIM) @ self.cell.wx.data
              + self.cell.b.data).reshape(n, horizon, -1)
        wh = self.cell.wh.data
        w_head = self.head.w.data
        b_head = self.head.b.data
        out = np.empty((n, horizon, 3), dtype=np.float32)
        for k in range(horizon):
            h, c = kernels.lstm_gates(zx[:, k, :] + h @ wh, c)
            out[:, k, :] = h @ w_head + b_head
        ps = 0.5 * (1.0 + np.tanh(0.5 * out[:, :, 2]))
        return RolloutBatch(out[:, :, 0], out[:, :, 1], ps)


@dataclass
class RolloutPrediction:
    """Per-step body-frame coordinates and collision probabilities (H,)."""
    xs: np.ndarray
    ys: np.ndarray
    ps: np.ndarray


@dataclass
class RolloutBatch:
    """Batched predictions, (N, H) each."""
    xs: np.ndarray
    ys: np.ndarray
    ps: np.ndarray

    def __len__(self):
        return self.xs.shape[0]

    def single(self, i: int) -> RolloutPrediction:
        return RolloutPrediction(self.xs[i].copy(), self.ys[i].copy(), self.ps[i].copy())

    def paths(self) -> np.ndarray:
        """(N, H, 2) predicted paths."""
        return np.stack([self.xs, self.ys], axis=2)


def fdm_forward(model: FdmModel, obs_vec: np.ndarray, cmds: np.ndarray) -> RolloutPrediction:
    """Single-sequence forward pass."""
    cmds = np.asarray(cmds, dtype=np.float32)
    if cmds.ndim != 2:
        raise ValueError(f"expected (H, 3) commands, got shape {cmds.shape}")
    return model.rollout_batch(obs_vec, cmds[None]).single(0)


def batch_rollout(model: FdmModel, obs_vec: np.ndarray, cmds: np.ndarray) -> list[RolloutPrediction]:
    batch = model.rollout_batch(obs_vec, cmds)
    return [batch.single(i) for i in range(len(batch))]


def apply_padding_arrays(xs, ys, ps, threshold: float = COLLISION_THRESHOLD):
    """From the first step whose collision probability crosses the threshold,
    hold all outputs constant."""
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    ps = np.asarray(ps)
    squeeze = xs.ndim == 1
    if squeeze:
        xs, ys, ps = xs[None], ys[None], ps[None]
    horizon = ps.shape[1]
    hit = ps >= threshold
    first = np.where(hit.any(axis=1), hit.argmax(axis=1), horizon)
    idx = np.minimum(np.arange(horizon)[None, :], first[:, None])
    out = (np.take_along_axis(xs, idx, 1), np.take_along_axis(ys, idx, 1),
           np.take_along_axis(ps, idx, 1))
    if squeeze:
        return out[0][0], out[1][0], out[2][0]
    return out


def apply_padding(pred, threshold: float = COLLISION_THRESHOLD):
    """Padding for a single prediction or a batch; returns the same type."""
    if isinstance(pred, RolloutBatch):
        return RolloutBatch(*apply_padding_arrays(pred.xs, pred.ys, pred.ps, threshold))
    return RolloutPrediction(*apply_padding_arrays(pred.xs, pred.ys, pred.ps, threshold))


def fdm_loss(out: ad.Tensor, xs, ys, ps, w_xy: float = 1.0, w_p: float = 0.5) -> ad.Tensor:
    """out: tape tensor (B, H, 3); labels (B, H) each."""
    loss_x = losses.mse(out[:, :, 0], xs)
    loss_y = losses.mse(out[:, :, 1], ys)
    loss_p = losses.bce_with_logits_mean(out[:, :, 2], ps)
    return ad.add(ad.mul(ad.add(loss_x, loss_y), w_xy), ad.mul(loss_p, w_p))


# --- dataset collection ------------------------------------------------------


@dataclass
class FdmTrainConfig:
    horizon: int = 12
    command_period: float = 0.5
    rounds: int = 6
    n_env: int = 48
    episodes_per_env: int = 60
    max_ticks: int = 26
    epochs_per_round: int = 4
    batch_size: int = 256
    lr: float = 3e-4
    w_xy: float = 1.0
    w_p: float = 0.5
    buffer_capacity: int = 1_000_000
    walk_sigma: tuple = (0.15, 0.06, 0.2)
    seed: int = 0
    val_envs: int = 12
    val_episodes_per_env: int = 20
    # training environments draw seeds below this bound, validation above it
    val_seed_base: int = 1_000_000
    model: FdmConfig = field(default_factory=FdmConfig)


def random_walk_commands(rng: np.random.Generator, length: int, sigma) -> np.ndarray:
    """Time-correlated command stream: uniform start, Gaussian walk, clamped."""
    out = np.empty((length, CMD_DIM))
    out[0] = rng.uniform(CMD_LOW, CMD_HIGH)
    steps = rng.normal(0.0, 1.0, (length - 1, CMD_DIM)) * np.asarray(sigma)
    out[1:] = out[0] + np.cumsum(steps, axis=0)
    return np.clip(out, CMD_LOW, CMD_HIGH)


def sample_free_pose(env, rng: np.random.Generator, clearance: float = 0.7,
                     tries: int = 200) -> Pose2 | None:
    xmin, ymin, xmax, ymax = env.bounds
    for _ in range(tries):
        p = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
        if not kernels.points_hit(p[None], clearance, env.circles, env.boxes, env.walls)[0]:
            return Pose2(p[0], p[1], rng.uniform(-math.pi, math.pi))
    return None


def collect_episode(env, rng: np.random.Generator, cfg: FdmTrainConfig,
                    sim_cfg: SimConfig | None = None,
                    lidar_cfg: LidarConfig | None = None):
    """Run one random-walk episode and emit sliding-window training tuples.

    Returns (obs (n, D), cmds (n, H, 3), xs (n, H), ys (n, H), ps (n, H)) or
    None when no free start pose exists.
    """
    start = sample_free_pose(env, rng)
    if start is None:
        return None
    sim = Simulator(env, sim_cfg or SimConfig(), lidar_cfg or LidarConfig(), rng)
    sim.reset(start)
    horizon = cfg.horizon
    stream = random_walk_commands(rng, cfg.max_ticks + horizon, cfg.walk_sigma)
    obs_rows = []
    poses = [sim.state.pose]
    tick = 0
    while tick < cfg.max_ticks and not sim.state.collided:
        obs_rows.append(sim.observe().vector())
        sim.run_command(Command.from_array(stream[tick]))
        poses.append(sim.state.pose)
        tick += 1
    collided = sim.state.collided
    last = len(poses) - 1  # index of the final (possibly frozen) pose
    n_tuples = last if collided else last - horizon + 1
    if n_tuples <= 0:
        return None
    obs = np.stack(obs_rows[:n_tuples])
    world = np.array([[p.x, p.y] for p in poses])
    cmds = np.empty((n_tuples, horizon, CMD_DIM), dtype=np.float32)
    xs = np.empty((n_tuples, horizon), dtype=np.float32)
    ys = np.empty((n_tuples, horizon), dtype=np.float32)
    ps = np.empty((n_tuples, horizon), dtype=np.float32)
    for t in range(n_tuples):
        cmds[t] = stream[t:t + horizon]
        ks = np.minimum(np.arange(t + 1, t + horizon + 1), last)
        pose_t = poses[t]
        c, s = math.cos(pose_t.yaw), math.sin(pose_t.yaw)
        dx = world[ks, 0] - pose_t.x
        dy = world[ks, 1] - pose_t.y
        xs[t] = c * dx + s * dy
        ys[t] = -s * dx + c * dy
        ps[t] = (collided & (np.arange(t + 1, t + horizon + 1) >= last)).astype(np.float32)
    return obs, cmds, xs, ys, ps


def _round_env_params(rng: np.random.Generator, seed: int):
    """Alternate env type and obstacle kind in equal proportion."""
    env_type = OPEN_FIELD if seed % 2 == 0 else CROSS_CORRIDOR
    kind = "cylinder" if (seed // 2) % 2 == 0 else "box"
    return sample_env_params(rng, env_type, kind, seed=seed)


def collect_tuples(cfg: FdmTrainConfig, env_seeds, episodes_per_env: int,
                   rng: np.random.Generator):
    """Collect labeled tuples across freshly generated environments."""
    chunks = []
    total = 0
    for seed in env_seeds:
        params = _round_env_params(rng, seed)
        env = generate_environment(params)
        for _ in range(episodes_per_env):
            out = collect_episode(env, rng, cfg)
            if out is not None:
                chunks.append(out)
                total += out[0].shape[0]
    if not chunks:
        raise RuntimeError("environment suite produced no training tuples")
    return tuple(np.concatenate([c[i] for c in chunks]) for i in range(5))


class ReplayBuffer:
    """FIFO tuple store; new rounds evict the oldest entries beyond capacity."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._parts = None

    def extend(self, tuples):
        if self._parts is None:
            self._parts = [t.copy() for t in tuples]
        else:
            self._parts = [np.concatenate([old, new]) for old, new in zip(self._parts, tuples)]
        if self._parts[0].shape[0] > self.capacity:
            keep = self._parts[0].shape[0] - self.capacity
            self._parts = [p[keep:] for p in self._parts]

    def __len__(self):
        return 0 if self._parts is None else self._parts[0].shape[0]

    def arrays(self):
        return self._parts


# --- evaluation ---------------------------------------------------------------


def evaluate(model: FdmModel, data, batch_size: int = 512,
             threshold: float = COLLISION_THRESHOLD) -> dict:
    """Held-out metrics: mean per-step Euclidean coordinate error and
    collision classification accuracy at the decision threshold."""
    obs, cmds, xs, ys, ps = data
    n = obs.shape[0]
    err_sum = 0.0
    correct = 0
    count = 0
    with ad.no_grad():
        for i in range(0, n, batch_size):
            sl = slice(i, min(i + batch_size, n))
            out = model.forward_tape(obs[sl].astype(np.float32),
                                     cmds[sl].astype(np.float32)).data
            dx = out[:, :, 0] - xs[sl]
            dy = out[:, :, 1] - ys[sl]
            err_sum += float(np.sqrt(dx * dx + dy * dy).sum())
            pred_p = 1.0 / (1.0 + np.exp(-out[:, :, 2]))
            correct += int(((pred_p >= threshold) == (ps[sl] >= 0.5)).sum())
            count += out.shape[0] * out.shape[1]
    return {
        "coord_error": err_sum / count,
        "collision_accuracy": correct / count,
        "n_tuples": n,
    }


def reliability_diagram(model: FdmModel, data, bins: int = 10) -> list[dict]:
    """Predicted-probability calibration table (informational)."""
    obs, cmds, _, _, ps = data
    with ad.no_grad():
        out = model.forward_tape(obs.astype(np.float32), cmds.astype(np.float32)).data
    pred = (1.0 / (1.0 + np.exp(-out[:, :, 2]))).ravel()
    actual = ps.ravel()
    rows = []
    edges = np.linspace(0, 1, bins + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (pred >= lo) & (pred < hi)
        if mask.sum() == 0:
            continue
        rows.append({"bin": f"[{lo:.1f},{hi:.1f})", "n": int(mask.sum()),
                     "mean_pred": float(pred[mask].mean()),
                     "frac_collision": float(actual[mask].mean())})
    return rows


def train_fdm(cfg: FdmTrainConfig, rng: np.random.Generator | None = None,
              log_path: str | None = None, progress=print):
    """Alternating data collection and optimization rounds."""
    rng = rng or np.random.default_rng(cfg.seed)
    model = FdmModel(cfg.model, rng)
    opt = Adam(model.parameters(), lr=cfg.lr)
    buffer = ReplayBuffer(cfg.buffer_capacity)

    val_seeds = [cfg.val_seed_base + i for i in range(cfg.val_envs)]
    val_rng = np.random.default_rng(cfg.seed + 777)
    val_data = collect_tuples(cfg, val_seeds, cfg.val_episodes_per_env, val_rng)

    log_rows = []
    for rnd in range(cfg.rounds):
        t0 = time.time()
        env_seeds = [cfg.seed * 100_000 + rnd * 10_000 + i for i in range(cfg.n_env)]
        tuples = collect_tuples(cfg, env_seeds, cfg.episodes_per_env, rng)
        buffer.extend(tuples)
        obs, cmds, xs, ys, ps = buffer.arrays()
        n = obs.shape[0]
        last_loss = math.nan
        for _ in range(cfg.epochs_per_round):
            order = rng.permutation(n)
            for i in range(0, n - cfg.batch_size + 1, cfg.batch_size):
                sl = order[i:i + cfg.batch_size]
                out = model.forward_tape(obs[sl].astype(np.float32),
                                         cmds[sl].astype(np.float32))
                loss = fdm_loss(out, xs[sl], ys[sl], ps[sl], cfg.w_xy, cfg.w_p)
                last_loss = loss.item()
                opt.zero_grad()
                loss.backward()
                opt.step()
        metrics = evaluate(model, val_data)
        row = {"round": rnd, "buffer": n, "loss": last_loss,
               "val_coord_error": metrics["coord_error"],
               "val_collision_accuracy": metrics["collision_accuracy"],
               "seconds": time.time() - t0}
        log_rows.append(row)
        progress(f"round {rnd}: buffer={n} loss={last_loss:.4f} "
                 f"val_err={metrics['coord_error']:.3f}m "
                 f"val_acc={metrics['collision_accuracy']:.3f} "
                 f"({row['seconds']:.0f}s)")
    if log_path:
        with open(log_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(log_rows[0]))
            writer.writeheader()
            writer.writerows(log_rows)
    return model, val_data, log_rows, buffer


def save_model(path: str, model: FdmModel):
    checkpoint.save_tensors(path, model.state_dict(), meta={
        "kind": "fdm", "config": asdict_config(model.cfg)})


def load_model(path: str) -> FdmModel:
    tensors, meta = checkpoint.load_tensors(path)
    if meta.get("kind") != "fdm":
        raise ValueError(f"{path} is not a dynamics-model checkpoint")
    cfg_dict = dict(meta["config"])
    cfg_dict["enc_hidden"] = tuple(cfg_dict["enc_hidden"])
    cfg = FdmConfig(**cfg_dict)
    model = FdmModel(cfg, np.random.default_rng(0))
    model.load_state_dict(tensors)
    return model


def asdict_config(cfg: FdmConfig) -> dict:
    return {"obs_dim": cfg.obs_dim, "enc_hidden": list(cfg.enc_hidden),
            "rnn_hidden": cfg.rnn_hidden, "horizon": cfg.horizon,
            "command_period": cfg.command_period}
