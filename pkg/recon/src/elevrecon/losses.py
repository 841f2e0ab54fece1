"""Training objectives.

All pixel losses are normalized by element count so weights are comparable
across map sizes. The reconstruction loss is the heteroscedastic L1 form:
each pixel pays (sqrt(2)/sigma)|error| + log(sigma), so the model buys
slack where the terrain is genuinely uncertain and pays for it in the log
term; the per-pixel optimum is sigma = sqrt(2)|error|.
"""

from __future__ import annotations

import math

import torch

from .model import LossWeights

_EPS = 1e-6


def loss_bce(pred_edge: torch.Tensor, true_edge: torch.Tensor) -> torch.Tensor:
    """Pixel-wise binary cross-entropy with probabilities clamped for
    numerical stability, normalized by pixel count."""
    p = pred_edge.clamp(_EPS, 1.0 - _EPS)
    t = true_edge.to(p.dtype)
    return -(t * torch.log(p) + (1.0 - t) * torch.log(1.0 - p)).mean()


def loss_rec(pred_height: torch.Tensor, true_height: torch.Tensor,
             log_sigma: torch.Tensor) -> torch.Tensor:
    """Heteroscedastic L1 reconstruction loss, mean over pixels."""
    sigma = torch.exp(log_sigma)
    return (math.sqrt(2.0) / sigma * torch.abs(true_height - pred_height) + log_sigma).mean()


def loss_tv(pred_height: torch.Tensor) -> torch.Tensor:
    """Total variation: absolute neighbor differences along rows and
    columns, normalized by pixel count."""
    d_rows = torch.abs(pred_height[..., 1:, :] - pred_height[..., :-1, :]).sum()
    d_cols = torch.abs(pred_height[..., :, 1:] - pred_height[..., :, :-1]).sum()
    return (d_rows + d_cols) / pred_height.numel()


def loss_adv(d_fake_prob: torch.Tensor, non_saturating: bool = False) -> torch.Tensor:
    """Generator-side adversarial loss from discriminator probabilities.

    Default is the saturating mean log(1 - D(fake)); the non-saturating
    variant -mean log D(fake) is selectable.
    """
    p = d_fake_prob.clamp(_EPS, 1.0 - _EPS)
    if non_saturating:
        return -torch.log(p).mean()
    return torch.log(1.0 - p).mean()


def loss_fm(feats_real: list[torch.Tensor], feats_fake: list[torch.Tensor]) -> torch.Tensor:
    """Feature matching: mean L1 distance between discriminator activations
    on real vs generated inputs, averaged over the tapped layers."""
    if len(feats_real) != len(feats_fake) or not feats_real:
        raise ValueError("feature lists must be non-empty and aligned")
    total = torch.stack([
        torch.abs(r - f).mean() for r, f in zip(feats_real, feats_fake)
    ])
    return total.mean()


def loss_total(terms: dict, weights: LossWeights) -> torch.Tensor:
    """Weighted sum w . [bce, adv_e, fm_e, rec, tv, adv_h, fm_h]."""
    order = ("bce", "adv_e", "fm_e", "rec", "tv", "adv_h", "fm_h")
    w = weights.as_dict()
    total = None
    for name in order:
        if name not in terms:
            raise KeyError(f"missing loss term {name!r}")
        contribution = w[name] * terms[name]
        total = contribution if total is None else total + contribution
    return total


def discriminator_loss(d_real_prob: torch.Tensor, d_fake_prob: torch.Tensor) -> torch.Tensor:
    """Standard two-term cross-entropy for the discriminator side."""
    pr = d_real_prob.clamp(_EPS, 1.0 - _EPS)
    pf = d_fake_prob.clamp(_EPS, 1.0 - _EPS)
    return -(torch.log(pr).mean() + torch.log(1.0 - pf).mean()) / 2.0
