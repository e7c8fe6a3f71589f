"""Informed trajectory sampler: a conditional VAE over command sequences.

Condition y = (observation, waypoint trajectory); datum x = the command
sequence the sampling MPC settled on at that tick. Training uses a
best-of-many reconstruction: K posterior samples are decoded and only the
closest reconstruction is penalized, which keeps the decoder diverse. At
planning time, latents are drawn from the standard-normal prior and decoded
autoregressively, conditioned on the live observation and waypoints.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .nn import autodiff as ad
from .nn import checkpoint, losses
from .nn.layers import MLP, Dense, GRUCell, Module
from .nn.optim import Adam
from .sim import CMD_DIM, clamp_commands


@dataclass
class ItsConfig:
    obs_dim: int = 430
    wp_nodes: int = 12
    horizon: int = 12
    latent_dim: int = 16
    gru_hidden: int = 128
    y_dim: int = 128
    cond_hidden: int = 256


class ItsModel(Module):
    def __init__(self, cfg: ItsConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.wp_gru = GRUCell(2, cfg.gru_hidden, rng)
        self.cond = MLP([cfg.obs_dim + cfg.gru_hidden, cfg.cond_hidden, cfg.y_dim], rng)
        self.enc_gru = GRUCell(CMD_DIM, cfg.gru_hidden, rng)
        self.enc_head = Dense(cfg.gru_hidden + cfg.y_dim, 2 * cfg.latent_dim, rng)
        self.dec_init = Dense(cfg.latent_dim + cfg.y_dim, cfg.gru_hidden, rng)
        self.dec_gru = GRUCell(CMD_DIM, cfg.gru_hidden, rng)
        self.dec_head = Dense(cfg.gru_hidden, CMD_DIM, rng)

    # --- tape paths (training) ---

    def encode_condition(self, obs: np.ndarray, wps: np.ndarray) -> ad.Tensor:
        """obs (B, obs_dim), wps (B, M, 2) -> y embedding (B, y_dim)."""
        b = obs.shape[0]
        h = ad.as_tensor(np.zeros((b, self.cfg.gru_hidden), dtype=np.float32))
        for k in range(wps.shape[1]):
            h = self.wp_gru.step(wps[:, k, :], h)
        return ad.relu(self.cond(ad.concat([ad.as_tensor(obs.astype(np.float32)), h], axis=1)))

    def posterior(self, x: np.ndarray, y: ad.Tensor):
        """x (B, H, 3) command sequences -> (mu, logvar) of the latent."""
        b = x.shape[0]
        h = ad.as_tensor(np.zeros((b, self.cfg.gru_hidden), dtype=np.float32))
        for k in range(x.shape[1]):
            h = self.enc_gru.step(x[:, k, :], h)
        stats = self.enc_head(ad.concat([h, y], axis=1))
        d = self.cfg.latent_dim
        return stats[:, :d], stats[:, d:]

    def decode(self, z: ad.Tensor, y: ad.Tensor, teacher: np.ndarray | None,
               horizon: int) -> ad.Tensor:
        """Unroll the decoder GRU; teacher forcing when `teacher` is given,
        otherwise feed back its own outputs. Returns (B, H, 3)."""
        h = ad.tanh(self.dec_init(ad.concat([z, y], axis=1)))
        b = z.shape[0]
        inp = ad.as_tensor(np.zeros((b, CMD_DIM), dtype=np.float32))
        outs = []
        for k in range(horizon):
            h = self.dec_gru.step(inp, h)
            out = self.dec_head(h)
            outs.append(out)
            if teacher is not None:
                inp = ad.as_tensor(teacher[:, k, :].astype(np.float32))
            else:
                inp = ad.as_tensor(out.data)
        return ad.stack(outs, axis=1)


def cvae_loss(model: ItsModel, obs: np.ndarray, wps: np.ndarray, x: np.ndarray,
              k_samples: int, kl_weight: float, rng: np.random.Generator) -> ad.Tensor:
    """Best-of-many objective: min-over-K reconstruction plus weighted KL."""
    if k_samples < 1:
        raise ValueError("k_samples must be >= 1")
    b, horizon, _ = x.shape
    y = model.encode_condition(obs, wps)
    mu, logvar = model.posterior(x, y)
    std = ad.exp(ad.mul(logvar, 0.5))
    eps = rng.standard_normal((k_samples, b, model.cfg.latent_dim)).astype(np.float32)
    target = x.astype(np.float32)
    recon_each = []
    for k in range(k_samples):
        z = ad.add(mu, ad.mul(std, eps[k]))
        dec = model.decode(z, y, teacher=x, horizon=horizon)
        sq = ad.square(ad.add(dec, ad.mul(ad.as_tensor(target), -1.0)))
        recon_each.append(ad.reduce_mean(ad.reshape(sq, (b, horizon * CMD_DIM)), axis=1))
    best = ad.reduce_min(ad.stack(recon_each, axis=0), axis=0)
    recon = ad.reduce_mean(best)
    kl = losses.kl_standard_normal(mu, logvar)
    return ad.add(recon, ad.mul(kl, kl_weight))


# --- numpy inference path -----------------------------------------------------


def _gru_np(cell: GRUCell, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    zx = x @ cell.wx.data + cell.bx.data
    zh = h @ cell.wh.data + cell.bh.data
    n = cell.hidden
    r = 1.0 / (1.0 + np.exp(-(zx[:, :n] + zh[:, :n])))
    u = 1.0 / (1.0 + np.exp(-(zx[:, n:2 * n] + zh[:, n:2 * n])))
    cand = np.tanh(zx[:, 2 * n:] + r * zh[:, 2 * n:])
    return (1.0 - u) * cand + u * h


def encode_condition_np(model: ItsModel, obs_vec: np.ndarray, wps: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs_vec, dtype=np.float32).reshape(1, -1)
    wps = np.asarray(wps, dtype=np.float32).reshape(1, -1, 2)
    h = np.zeros((1, model.cfg.gru_hidden), dtype=np.float32)
    for k in range(wps.shape[1]):
        h = _gru_np(model.wp_gru, wps[:, k, :], h)
    x = np.concatenate([obs, h], axis=1)
    layers = model.cond.layers
    for layer in layers[:-1]:
        x = np.maximum(x @ layer.w.data + layer.b.data, 0.0)
    x = x @ layers[-1].w.data + layers[-1].b.data
    return np.maximum(x, 0.0)


def sample(model: ItsModel, obs_vec: np.ndarray, wps: np.ndarray, n: int,
           rng: np.random.Generator) -> np.ndarray:
    """Draw n command sequences from the prior, conditioned on (obs, waypoints)."""
    if n <= 0:
        return np.zeros((0, model.cfg.horizon, CMD_DIM), dtype=np.float32)
    y = np.repeat(encode_condition_np(model, obs_vec, wps), n, axis=0)
    z = rng.standard_normal((n, model.cfg.latent_dim)).astype(np.float32)
    h = np.tanh(np.concatenate([z, y], axis=1) @ model.dec_init.w.data + model.dec_init.b.data)
    inp = np.zeros((n, CMD_DIM), dtype=np.float32)
    out = np.empty((n, model.cfg.horizon, CMD_DIM), dtype=np.float32)
    for k in range(model.cfg.horizon):
        h = _gru_np(model.dec_gru, inp, h)
        step_out = h @ model.dec_head.w.data + model.dec_head.b.data
        out[:, k, :] = step_out
        inp = step_out
    return clamp_commands(out).astype(np.float32)


# --- dataset ------------------------------------------------------------------


@dataclass
class ItsDataset:
    obs: np.ndarray    # (n, obs_dim) float32
    wps: np.ndarray    # (n, M, 2) float32
    cmds: np.ndarray   # (n, H, 3) float32
    keys: np.ndarray   # (n, 2) int64: (env_seed, tick)

    def __len__(self):
        return self.obs.shape[0]

    def subset(self, idx) -> "ItsDataset":
        return ItsDataset(self.obs[idx], self.wps[idx], self.cmds[idx], self.keys[idx])

    def save(self, path: str):
        checkpoint.save_tensors(path, {
            "obs": self.obs, "wps": self.wps, "cmds": self.cmds, "keys": self.keys,
        }, meta={"kind": "its-dataset"})

    @staticmethod
    def load(path: str) -> "ItsDataset":
        tensors, meta = checkpoint.load_tensors(path)
        if meta.get("kind") != "its-dataset":
            raise ValueError(f"{path} is not a trajectory-sampler dataset")
        return ItsDataset(tensors["obs"], tensors["wps"], tensors["cmds"], tensors["keys"])


def collect_its_dataset(fdm_model, target_count: int, rng: np.random.Generator,
                        mpc_cfg=None, progress=print) -> ItsDataset:
    """Roll out point-goal episodes with the random-sampler MPC and record
    (condition, optimized command sequence) at every planning tick."""
    from . import bench  # runtime import; bench imports this module at top level

    rows_obs, rows_wps, rows_cmds, rows_keys = [], [], [], []
    env_seed = 0
    n_have = 0
    t0 = time.time()
    while n_have < target_count:
        episode = bench.collection_episode(fdm_model, env_seed, rng, mpc_cfg)
        env_seed += 1
        if episode is None or not episode[0]:
            continue
        obs_list, wps_list, cmd_list, tick_list = episode
        rows_obs.append(np.stack(obs_list))
        rows_wps.append(np.stack(wps_list).astype(np.float32))
        rows_cmds.append(np.stack(cmd_list).astype(np.float32))
        rows_keys.append(np.column_stack([
            np.full(len(tick_list), env_seed - 1, dtype=np.int64),
            np.asarray(tick_list, dtype=np.int64)]))
        n_have += len(obs_list)
        if env_seed % 20 == 0:
            progress(f"collected {n_have}/{target_count} tuples "
                     f"({env_seed} envs, {time.time() - t0:.0f}s)")
    ds = ItsDataset(np.concatenate(rows_obs)[:target_count],
                    np.concatenate(rows_wps)[:target_count],
                    np.concatenate(rows_cmds)[:target_count],
                    np.concatenate(rows_keys)[:target_count])
    return ds


# --- training -----------------------------------------------------------------


@dataclass
class ItsTrainConfig:
    epochs: int = 20
    batch_size: int = 256
    lr: float = 3e-4
    k_samples: int = 4
    kl_weight: float = 0.5
    val_fraction: float = 0.05
    seed: int = 0
    model: ItsConfig = field(default_factory=ItsConfig)


def train_its(dataset: ItsDataset, cfg: ItsTrainConfig,
              rng: np.random.Generator | None = None, progress=print):
    """Gradient descent on the best-of-many objective; returns the model and
    per-epoch train/validation history."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    rng = rng or np.random.default_rng(cfg.seed)
    model = ItsModel(cfg.model, rng)
    opt = Adam(model.parameters(), lr=cfg.lr)
    n_val = max(int(len(dataset) * cfg.val_fraction), 1) if len(dataset) > 8 else 0
    order = rng.permutation(len(dataset))
    val = dataset.subset(order[:n_val]) if n_val else None
    train = dataset.subset(order[n_val:])
    history = []
    for epoch in range(cfg.epochs):
        t0 = time.time()
        order = rng.permutation(len(train))
        total, count = 0.0, 0
        bs = min(cfg.batch_size, len(train))
        for i in range(0, len(train) - bs + 1, bs):
            sl = order[i:i + bs]
            loss = cvae_loss(model, train.obs[sl], train.wps[sl], train.cmds[sl],
                             cfg.k_samples, cfg.kl_weight, rng)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item()
            count += 1
        val_loss = math.nan
        if val is not None:
            with ad.no_grad():
                val_loss = cvae_loss(model, val.obs, val.wps, val.cmds,
                                     cfg.k_samples, cfg.kl_weight,
                                     np.random.default_rng(0)).item()
        history.append({"epoch": epoch, "train_loss": total / max(count, 1),
                        "val_loss": val_loss, "seconds": time.time() - t0})
        progress(f"epoch {epoch}: train={history[-1]['train_loss']:.4f} "
                 f"val={val_loss:.4f} ({history[-1]['seconds']:.0f}s)")
    return model, history


def save_model(path: str, model: ItsModel):
    cfg = model.cfg
    checkpoint.save_tensors(path, model.state_dict(), meta={
        "kind": "its",
        "config": {"obs_dim": cfg.obs_dim, "wp_nodes": cfg.wp_nodes,
                   "horizon": cfg.horizon, "latent_dim": cfg.latent_dim,
                   "gru_hidden": cfg.gru_hidden, "y_dim": cfg.y_dim,
                   "cond_hidden": cfg.cond_hidden}})


def load_model(path: str) -> ItsModel:
    tensors, meta = checkpoint.load_tensors(path)
    if meta.get("kind") != "its":
        raise ValueError(f"{path} is not a trajectory-sampler checkpoint")
    model = ItsModel(ItsConfig(**meta["config"]), np.random.default_rng(0))
    model.load_state_dict(tensors)
    return model
