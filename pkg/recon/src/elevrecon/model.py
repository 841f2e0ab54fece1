"""Generator and discriminators.

The generator is fully convolutional: a 7-channel feature image is encoded,
downsampled twice (factor 4 overall), refined by six residual blocks whose
first convolution is dilated, and decoded by two branches — a binary edge
head (sigmoid) and a height head emitting the height map together with a
log-scale variance map. Any input whose sides divide by 4 works, so one
trained model serves different map sizes.

Discriminators are 4-stage stride-2 spectral-norm stacks producing
patch-level real/fake probabilities; their intermediate activations feed
the feature-matching loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

LOG_SIGMA_CLAMP = 10.0


@dataclass
class GeneratorConfig:
    in_channels: int = 7
    base_width: int = 64
    res_blocks: int = 6
    dilation: int = 2
    upsample: str = "interp"  # "interp" (nearest + conv) or "transposed"

    def __post_init__(self):
        if self.upsample not in ("interp", "transposed"):
            raise ValueError(f"upsample must be 'interp' or 'transposed', got {self.upsample!r}")


@dataclass
class LossWeights:
    """Order matches the total-loss vector: (bce, adv_e, fm_e, rec, tv, adv_h, fm_h)."""

    bce: float = 1.0
    adv_e: float = 0.1
    fm_e: float = 10.0
    rec: float = 1.0
    tv: float = 0.1
    adv_h: float = 0.1
    fm_h: float = 10.0

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be >= 0, got {value}")

    def as_dict(self):
        return {
            "bce": self.bce, "adv_e": self.adv_e, "fm_e": self.fm_e,
            "rec": self.rec, "tv": self.tv, "adv_h": self.adv_h, "fm_h": self.fm_h,
        }

    def vector(self) -> torch.Tensor:
        return torch.tensor(
            [self.bce, self.adv_e, self.fm_e, self.rec, self.tv, self.adv_h, self.fm_h],
            dtype=torch.float32,
        )


class ResidualBlock(nn.Module):
    """Dilated conv for receptive field, then a normal conv, residual add."""

    def __init__(self, width: int, dilation: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(width, width, 3, padding=dilation, dilation=dilation),
            nn.InstanceNorm2d(width, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, width, 3, padding=1),
            nn.InstanceNorm2d(width, affine=True),
        )

    def forward(self, x):
        return x + self.body(x)


def _up(width_in: int, width_out: int, mode: str) -> nn.Module:
    if mode == "transposed":
        return nn.ConvTranspose2d(width_in, width_out, 4, stride=2, padding=1)
    return nn.Sequential(
        nn.Upsample(scale_factor=2, mode="nearest"),
        nn.Conv2d(width_in, width_out, 3, padding=1),
    )


class DecoderBranch(nn.Module):
    def __init__(self, width: int, out_channels: int, mode: str):
        super().__init__()
        self.up = nn.Sequential(
            _up(width, width // 2, mode),
            nn.InstanceNorm2d(width // 2, affine=True),
            nn.ReLU(inplace=True),
            _up(width // 2, width // 4, mode),
            nn.InstanceNorm2d(width // 4, affine=True),
            nn.ReLU(inplace=True),
        )
        self.head = nn.Conv2d(width // 4, out_channels, 7, padding=3)

    def forward(self, x):
        return self.head(self.up(x))


class Generator(nn.Module):
    def __init__(self, config: GeneratorConfig | None = None):
        super().__init__()
        cfg = config or GeneratorConfig()
        self.config = cfg
        w = cfg.base_width
        self.encoder = nn.Sequential(
            nn.Conv2d(cfg.in_channels, w, 7, padding=3),
            nn.InstanceNorm2d(w, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(w, 2 * w, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * w, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * w, 4 * w, 4, stride=2, padding=1),
            nn.InstanceNorm2d(4 * w, affine=True),
            nn.ReLU(inplace=True),
        )
        self.blocks = nn.Sequential(
            *[ResidualBlock(4 * w, cfg.dilation) for _ in range(cfg.res_blocks)]
        )
        self.edge_branch = DecoderBranch(4 * w, 1, cfg.upsample)
        self.height_branch = DecoderBranch(4 * w, 2, cfg.upsample)

    def _bottleneck(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise ValueError(f"input sides must divide by 4, got {tuple(x.shape[-2:])}")
        return self.blocks(self.encoder(x))

    def forward(self, x: torch.Tensor, with_edges: bool = True):
        """Returns (height, log_sigma, edge_prob); edge_prob is None in
        deployment mode (with_edges=False skips that branch entirely)."""
        feats = self._bottleneck(x)
        hh = self.height_branch(feats)
        height = hh[:, 0:1]
        log_sigma = torch.clamp(hh[:, 1:2], -LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)
        edge = torch.sigmoid(self.edge_branch(feats)) if with_edges else None
        return height, log_sigma, edge


class PatchDiscriminator(nn.Module):
    """4-stage stride-2 stack, spectral norm, patch-level probabilities."""

    def __init__(self, in_channels: int = 1, base_width: int = 64):
        super().__init__()
        sn = nn.utils.spectral_norm
        w = base_width
        self.stages = nn.ModuleList([
            nn.Sequential(sn(nn.Conv2d(in_channels, w, 4, stride=2, padding=1)),
                          nn.LeakyReLU(0.2, inplace=True)),
            nn.Sequential(sn(nn.Conv2d(w, 2 * w, 4, stride=2, padding=1)),
                          nn.LeakyReLU(0.2, inplace=True)),
            nn.Sequential(sn(nn.Conv2d(2 * w, 4 * w, 4, stride=2, padding=1)),
                          nn.LeakyReLU(0.2, inplace=True)),
            nn.Sequential(sn(nn.Conv2d(4 * w, 4 * w, 4, stride=2, padding=1)),
                          nn.LeakyReLU(0.2, inplace=True)),
        ])
        self.head = sn(nn.Conv2d(4 * w, 1, 4, padding=1))

    def forward(self, x: torch.Tensor):
        """Returns (patch probabilities, list of intermediate activations)."""
        feats = []
        out = x
        for stage in self.stages:
            out = stage(out)
            feats.append(out)
        return torch.sigmoid(self.head(out)), feats
