"""Loss functions used by the dynamics model and the trajectory sampler."""

from __future__ import annotations

from . import autodiff as ad


def mse(pred, target) -> ad.Tensor:
    """Mean squared error over all elements."""
    return ad.reduce_mean(ad.square(ad.as_tensor(pred) - ad.as_tensor(target)))


def bce_with_logits_mean(logits, targets) -> ad.Tensor:
    """Mean binary cross-entropy, computed on logits."""
    return ad.reduce_mean(ad.bce_with_logits(logits, targets))


def kl_standard_normal(mu, logvar) -> ad.Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over the latent dim, averaged
    over the batch."""
    mu = ad.as_tensor(mu)
    logvar = ad.as_tensor(logvar)
    per_dim = ad.mul(
        ad.add(ad.add(ad.exp(logvar), ad.square(mu)), ad.add(ad.mul(logvar, -1.0), -1.0)),
        0.5,
    )
    return ad.reduce_mean(ad.reduce_sum(per_dim, axis=1))
