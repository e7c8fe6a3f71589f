"""Minimal neural substrate: tape autodiff, layers, losses, Adam, checkpoints."""

from . import autodiff, checkpoint, layers, losses, optim
from .autodiff import Tensor, backward, no_grad

__all__ = ["autodiff", "checkpoint", "layers", "losses", "optim",
           "Tensor", "backward", "no_grad"]
