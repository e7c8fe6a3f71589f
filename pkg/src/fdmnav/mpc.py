"""Online sampling-based model-predictive control.

Each planning tick: sample command sequences (time-correlated random walk
mixed with the previous optimum, optionally augmented by the learned
trajectory sampler), roll them through the dynamics model, pad after the
first predicted collision, drop sequences predicted to collide within the
hard-filter window, score the rest with the path-tracking and safety rewards,
and take the softmax-weighted average.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .fdm import COLLISION_THRESHOLD, FdmModel, RolloutBatch, apply_padding
from .geom import as_polyline
from .sim import CMD_DIM, CMD_HIGH, CMD_LOW, Command, clamp_commands

log = logging.getLogger(__name__)


@dataclass
class MpcConfig:
    n_samples: int = 1024
    beta: float = 0.5              # previous-optimum mixing factor
    gamma: float = 20.0            # reward weighting sharpness
    sigma: tuple = (0.15, 0.06, 0.2)  # random-walk std per command dim
    n_bins: int = 4                # bins per dim for first-element sampling
    tau: float = 0.5               # DTW temperature [m]
    hard_filter_seconds: float = 3.0
    threshold: float = COLLISION_THRESHOLD
    its_fraction: float = 0.5
    horizon: int = 12
    command_period: float = 0.5

    @property
    def hard_filter_steps(self) -> int:
        return int(self.hard_filter_seconds / self.command_period)


def dtw(a, b) -> float:
    """Minimal cumulative aligned Euclidean distance between two point series."""
    a = as_polyline(a)
    b = as_polyline(b)
    cost, _ = kernels.dtw_cost_steps(a[None], b)
    return float(cost[0])


def dtw_normalized(a, b) -> float:
    """DTW divided by the optimal alignment path length."""
    a = as_polyline(a)
    b = as_polyline(b)
    cost, steps = kernels.dtw_cost_steps(a[None], b)
    return float(cost[0] / steps[0])


def track_reward_batch(waypoints, paths: np.ndarray, tau: float) -> np.ndarray:
    """exp(-normalized_dtw / tau) for each predicted path (N, H, 2)."""
    cost, steps = kernels.dtw_cost_steps(np.asarray(paths, dtype=np.float64),
                                         as_polyline(waypoints))
    return np.exp(-(cost / steps) / tau)


def track_reward(waypoints, pred, tau: float) -> float:
    path = np.stack([np.asarray(pred.xs), np.asarray(pred.ys)], axis=1)
    return float(track_reward_batch(waypoints, path[None], tau)[0])


def safety_reward(ps) -> np.ndarray | float:
    """Mean of (1 - collision probability) over the horizon."""
    ps = np.asarray(ps)
    return (1.0 - ps).mean(axis=-1)


def bin_sample_first(rng: np.random.Generator, n: int, n_bins: int) -> np.ndarray:
    """First walk elements via stratified bin sampling over the command range.

    The n_bins^3 bin combinations are cycled across the batch so each is
    covered floor(n / n_bins^3) times; the remainder draws bins uniformly.
    """
    combos = np.array(list(itertools.product(range(n_bins), repeat=CMD_DIM)))
    n_combos = combos.shape[0]
    full = (n // n_combos) * n_combos
    idx = np.empty((n, CMD_DIM), dtype=np.int64)
    idx[:full] = np.tile(combos, (n // n_combos, 1))
    if n > full:
        idx[full:] = rng.integers(0, n_bins, size=(n - full, CMD_DIM))
    width = (CMD_HIGH - CMD_LOW) / n_bins
    return CMD_LOW + (idx + rng.uniform(0.0, 1.0, size=(n, CMD_DIM))) * width


def sample_commands(cfg: MpcConfig, prev_optimum: np.ndarray | None,
                    rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Time-correlated random sequences mixed with the previous optimum.

    raw[0] ~ Bin(C), raw[k+1] ~ N(raw[k], sigma); output =
    (1-beta)*raw + beta*prev_optimum, clamped to the command range.
    """
    n = cfg.n_samples if n is None else n
    raw = np.empty((n, cfg.horizon, CMD_DIM))
    raw[:, 0, :] = bin_sample_first(rng, n, cfg.n_bins)
    steps = rng.normal(0.0, 1.0, (n, cfg.horizon - 1, CMD_DIM)) * np.asarray(cfg.sigma)
    raw[:, 1:, :] = raw[:, 0:1, :] + np.cumsum(steps, axis=1)
    if prev_optimum is not None:
        mixed = (1.0 - cfg.beta) * raw + cfg.beta * np.asarray(prev_optimum)[None]
    else:
        mixed = raw
    return clamp_commands(mixed)


def shift_warm_start(prev_optimum: np.ndarray) -> np.ndarray:
    """Receding-horizon shift: drop the executed first command, repeat the last."""
    return np.concatenate([prev_optimum[1:], prev_optimum[-1:]], axis=0)


def reward_weighted_update(samples: np.ndarray, rewards: np.ndarray,
                           gamma: float) -> np.ndarray:
    """Softmax(gamma * reward)-weighted average of command sequences."""
    samples = np.asarray(samples)
    rewards = np.asarray(rewards, dtype=np.float64)
    if samples.shape[0] != rewards.shape[0] or rewards.shape[0] < 1:
        raise ValueError("need one reward per sample and at least one sample")
    z = gamma * rewards
    w = np.exp(z - z.max())
    w /= w.sum()
    return np.einsum("n,nhc->hc", w, samples)


def hard_filter_mask(ps: np.ndarray, cfg: MpcConfig) -> np.ndarray:
    """Keep samples not predicted to collide within the hard-filter window."""
    window = np.asarray(ps)[:, :cfg.hard_filter_steps]
    return ~(window >= cfg.threshold).any(axis=1)


def hard_filter(ps: np.ndarray, cfg: MpcConfig) -> np.ndarray:
    """Surviving sample indices."""
    return np.flatnonzero(hard_filter_mask(ps, cfg))


def mpc_step(model: FdmModel, its_model, obs_vec: np.ndarray, waypoints,
             cfg: MpcConfig, prev_optimum: np.ndarray | None,
             rng: np.random.Generator, rollout_fn=None):
    """One planning tick. Returns (command to execute, optimized sequence,
    diagnostics dict). `rollout_fn(obs_vec, samples) -> RolloutBatch` overrides
    the learned model (used by the ground-truth ablation)."""
    t0 = time.perf_counter()
    warm = shift_warm_start(np.asarray(prev_optimum)) if prev_optimum is not None else None
    n_its = int(round(cfg.n_samples * cfg.its_fraction)) if its_model is not None else 0
    n_random = cfg.n_samples - n_its
    parts = []
    if n_random > 0:
        parts.append(sample_commands(cfg, warm, rng, n=n_random))
    if n_its > 0:
        from . import its as its_mod
        parts.append(its_mod.sample(its_model, obs_vec, waypoints, n_its, rng))
    samples = np.concatenate(parts, axis=0)

    if rollout_fn is not None:
        batch = rollout_fn(obs_vec, samples)
    else:
        batch = model.rollout_batch(obs_vec, samples)
    padded = apply_padding(batch, cfg.threshold)

    r_track = track_reward_batch(waypoints, padded.paths(), cfg.tau)
    r_safety = safety_reward(padded.ps)
    rewards = r_track + r_safety

    mask = hard_filter_mask(padded.ps, cfg)
    n_survivors = int(mask.sum())
    if n_survivors == 0:
        log.warning("hard filter removed every sample; falling back to the full set")
        mask = np.ones(len(samples), dtype=bool)
    optimum = reward_weighted_update(samples[mask], rewards[mask], cfg.gamma)
    optimum = clamp_commands(optimum)

    latency = time.perf_counter() - t0
    diagnostics = {
        "latency_s": latency,
        "latency_overrun": latency > cfg.command_period,
        "n_samples": int(len(samples)),
        "n_survivors": n_survivors,
        "reward_mean": float(rewards.mean()),
        "reward_max": float(rewards.max()),
        "track_reward_max": float(r_track.max()),
        "safety_reward_mean": float(np.mean(r_safety)),
    }
    return Command.from_array(optimum[0]), optimum, diagnostics
