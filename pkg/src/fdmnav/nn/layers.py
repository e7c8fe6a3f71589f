"""Layers: dense, LSTM cell, GRU cell, built on the autodiff tape."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def kaiming_uniform(rng: np.random.Generator, fan_in: int, shape, gain: float = 1.0) -> np.ndarray:
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Module:
    """Parameter container with named traversal and checkpoint dict I/O."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{key}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{key}.{i}", item

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        mine = dict(self.named_parameters())
        missing = set(mine) - set(state)
        extra = set(state) - set(mine)
        if missing or extra:
            raise KeyError(f"state dict mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in mine.items():
            if p.data.shape != state[name].shape:
                raise ValueError(f"{name}: shape {state[name].shape} != expected {p.data.shape}")
            p.data = state[name].astype(p.data.dtype).copy()


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


class Dense(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, gain: float = 1.0):
        self.w = parameter(kaiming_uniform(rng, in_dim, (in_dim, out_dim), gain))
        self.b = parameter(np.zeros(out_dim, dtype=np.float32))

    def __call__(self, x) -> Tensor:
        x = ad.as_tensor(x)
        if x.shape[-1] != self.w.shape[0]:
            raise ValueError(
                f"dense layer expects input dim {self.w.shape[0]}, got {x.shape[-1]}")
        return ad.add(ad.matmul(x, self.w), self.b)


_ACTIVATIONS = {"relu": ad.relu, "tanh": ad.tanh, "sigmoid": ad.sigmoid}


class MLP(Module):
    """Dense stack with the activation applied between layers (not after the last)."""

    def __init__(self, dims: list[int], rng: np.random.Generator, activation: str = "relu"):
        gain = np.sqrt(2.0) if activation == "relu" else 1.0
        self.layers = [Dense(dims[i], dims[i + 1], rng, gain if i < len(dims) - 2 else 1.0)
                       for i in range(len(dims) - 1)]
        self.act = activation

    def __call__(self, x) -> Tensor:
        h = ad.as_tensor(x)
        act = _ACTIVATIONS[self.act]
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = act(h)
        return h


class LSTMCell(Module):
    """Standard LSTM cell. Gate order [input, forget, cell, output]; the
    forget-gate bias starts at +1."""

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.wx = parameter(kaiming_uniform(rng, in_dim, (in_dim, 4 * hidden)))
        self.wh = parameter(kaiming_uniform(rng, hidden, (hidden, 4 * hidden)))
        b = np.zeros(4 * hidden, dtype=np.float32)
        b[hidden:2 * hidden] = 1.0
        self.b = parameter(b)

    def step(self, x, h, c) -> tuple[Tensor, Tensor]:
        if ad.as_tensor(x).shape[-1] != self.wx.shape[0]:
            raise ValueError(f"lstm cell expects input dim {self.wx.shape[0]}")
        z = ad.add(ad.add(ad.matmul(ad.as_tensor(x), self.wx), ad.matmul(h, self.wh)), self.b)
        n = self.hidden
        i = ad.sigmoid(z[:, 0 * n:1 * n])
        f = ad.sigmoid(z[:, 1 * n:2 * n])
        g = ad.tanh(z[:, 2 * n:3 * n])
        o = ad.sigmoid(z[:, 3 * n:4 * n])
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return h_new, c_new


class GRUCell(Module):
    """Standard GRU cell: r, z gates then candidate n with reset-gated state.

    h' = (1 - z) * n + z * h, with separate input/hidden biases so the reset
    gate multiplies the hidden contribution of the candidate only.
    """

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.wx = parameter(kaiming_uniform(rng, in_dim, (in_dim, 3 * hidden)))
        self.wh = parameter(kaiming_uniform(rng, hidden, (hidden, 3 * hidden)))
        self.bx = parameter(np.zeros(3 * hidden, dtype=np.float32))
        self.bh = parameter(np.zeros(3 * hidden, dtype=np.float32))

    def step(self, x, h) -> Tensor:
        if ad.as_tensor(x).shape[-1] != self.wx.shape[0]:
            raise ValueError(f"gru cell expects input dim {self.wx.shape[0]}")
        n = self.hidden
        zx = ad.add(ad.matmul(ad.as_tensor(x), self.wx), self.bx)
        zh = ad.add(ad.matmul(h, self.wh), self.bh)
        r = ad.sigmoid(ad.add(zx[:, 0 * n:1 * n], zh[:, 0 * n:1 * n]))
        u = ad.sigmoid(ad.add(zx[:, 1 * n:2 * n], zh[:, 1 * n:2 * n]))
        cand = ad.tanh(ad.add(zx[:, 2 * n:3 * n], ad.mul(r, zh[:, 2 * n:3 * n])))
        return ad.add(ad.mul(ad.add(1.0, ad.mul(u, -1.0)), cand), ad.mul(u, h))


def zeros_state(batch: int, hidden: int) -> Tensor:
    return ad.as_tensor(np.zeros((batch, hidden), dtype=np.float32))
