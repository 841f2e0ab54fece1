"""Training: alternating discriminator/generator steps over shard records.

Records are randomly cropped to a side divisible by 4, which doubles as
augmentation and keeps the fully convolutional sizing contract. Height
targets are normalized to the record's reference plane (the same frame the
input features use), optionally scaled; the scale travels inside the
checkpoint so serving can denormalize.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np
import torch

from . import losses
from .model import Generator, GeneratorConfig, LossWeights, PatchDiscriminator
from .shards import read_shard


@dataclass
class TrainConfig:
    steps: int = 200
    batch_size: int = 4
    crop: int = 64
    lr: float = 1e-4
    d2g_lr_ratio: float = 0.1
    holdout: int = 8
    seed: int = 0
    height_scale: float = 1.0
    non_saturating: bool = False
    log_every: int = 20
    weights: LossWeights = field(default_factory=LossWeights)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def __post_init__(self):
        if self.crop % 4:
            raise ValueError(f"crop side must divide by 4, got {self.crop}")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")


@dataclass
class Dataset:
    """Shard records as stacked tensors, heights relative to each record's
    reference plane and divided by height_scale."""

    x: torch.Tensor          # (N, 7, H, W)
    height: torch.Tensor     # (N, 1, H, W)
    edge: torch.Tensor       # (N, 1, H, W)
    observed: torch.Tensor   # (N, 1, H, W)
    resolution: float

    def __len__(self):
        return self.x.shape[0]


def load_dataset(shard_path, height_scale: float = 1.0) -> Dataset:
    records, resolution = read_shard(shard_path)
    if not records:
        raise ValueError(f"shard {shard_path} holds no records")
    x = torch.from_numpy(np.stack([r.x for r in records])).float()
    height = torch.from_numpy(
        np.stack([r.height_relative() for r in records])
    ).float().unsqueeze(1) / height_scale
    edge = torch.from_numpy(np.stack([r.edge for r in records])).float().unsqueeze(1)
    observed = torch.from_numpy(np.stack([r.observed for r in records])).float().unsqueeze(1)
    return Dataset(x, height, edge, observed, resolution)


def random_crops(ds: Dataset, indices, crop: int, rng: np.random.Generator):
    h, w = ds.x.shape[-2:]
    if crop > h or crop > w:
        raise ValueError(f"crop {crop} larger than records {h}x{w}")
    xs, hs, es, obs = [], [], [], []
    for idx in indices:
        r0 = int(rng.integers(0, h - crop + 1))
        c0 = int(rng.integers(0, w - crop + 1))
        sl = (slice(r0, r0 + crop), slice(c0, c0 + crop))
        xs.append(ds.x[idx][:, sl[0], sl[1]])
        hs.append(ds.height[idx][:, sl[0], sl[1]])
        es.append(ds.edge[idx][:, sl[0], sl[1]])
        obs.append(ds.observed[idx][:, sl[0], sl[1]])
    return (torch.stack(xs), torch.stack(hs), torch.stack(es), torch.stack(obs))


def center_crop(t: torch.Tensor, multiple: int = 4) -> torch.Tensor:
    h, w = t.shape[-2:]
    nh, nw = h - h % multiple, w - w % multiple
    return t[..., :nh, :nw]


def heldout_masked_l1(gen: Generator, ds: Dataset, indices) -> float:
    """Mean absolute height error over observed cells of held-out records
    (deployment mode: edge branch off)."""
    gen.eval()
    total, count = 0.0, 0.0
    with torch.no_grad():
        for idx in indices:
            x = center_crop(ds.x[idx : idx + 1])
            y = center_crop(ds.height[idx : idx + 1])
            m = center_crop(ds.observed[idx : idx + 1])
            pred, _, _ = gen(x, with_edges=False)
            total += float((torch.abs(pred - y) * m).sum())
            count += float(m.sum())
    gen.train()
    return total / max(count, 1.0)


def _d_step(disc, opt, real, fake):
    opt.zero_grad(set_to_none=True)
    p_real, _ = disc(real)
    p_fake, _ = disc(fake.detach())
    loss = losses.discriminator_loss(p_real, p_fake)
    loss.backward()
    opt.step()
    return float(loss)


def train(
    shard_path,
    config: TrainConfig | None = None,
    out_path=None,
    log_path=None,
    resume=None,
) -> dict:
    """Run the training loop; returns the history dict and optionally saves
    a checkpoint (weights + config + normalization metadata)."""
    cfg = config or TrainConfig()
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    ds = load_dataset(shard_path, cfg.height_scale)
    n_hold = min(cfg.holdout, max(1, len(ds) // 4))
    hold_idx = list(range(n_hold))
    train_idx = list(range(n_hold, len(ds))) or hold_idx

    gen = Generator(cfg.generator)
    d_edge = PatchDiscriminator(in_channels=1)
    d_height = PatchDiscriminator(in_channels=1)
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr, betas=(0.5, 0.999))
    opt_de = torch.optim.Adam(d_edge.parameters(), lr=cfg.lr * cfg.d2g_lr_ratio, betas=(0.5, 0.999))
    opt_dh = torch.optim.Adam(d_height.parameters(), lr=cfg.lr * cfg.d2g_lr_ratio, betas=(0.5, 0.999))
    start_step = 0
    if resume is not None:
        state = torch.load(resume, weights_only=False)
        gen.load_state_dict(state["generator"])
        d_edge.load_state_dict(state["d_edge"])
        d_height.load_state_dict(state["d_height"])
        opt_g.load_state_dict(state["opt_g"])
        opt_de.load_state_dict(state["opt_de"])
        opt_dh.load_state_dict(state["opt_dh"])
        start_step = int(state["step"])

    history = {"step": [], "g_total": [], "d_edge": [], "d_height": [], "heldout_l1": []}

    def log_row(step, g_total, de, dh):
        history["step"].append(step)
        history["g_total"].append(g_total)
        history["d_edge"].append(de)
        history["d_height"].append(dh)
        history["heldout_l1"].append(heldout_masked_l1(gen, ds, hold_idx))

    log_row(start_step, float("nan"), float("nan"), float("nan"))

    for step in range(start_step + 1, start_step + cfg.steps + 1):
        batch_idx = rng.choice(train_idx, size=cfg.batch_size, replace=True)
        x, y_h, y_e, _ = random_crops(ds, batch_idx, cfg.crop, rng)

        pred_h, log_sigma, pred_e = gen(x, with_edges=True)

        de = _d_step(d_edge, opt_de, y_e, pred_e)
        dh = _d_step(d_height, opt_dh, y_h, pred_h)

        opt_g.zero_grad(set_to_none=True)
        p_fake_e, f_fake_e = d_edge(pred_e)
        _, f_real_e = d_edge(y_e)
        p_fake_h, f_fake_h = d_height(pred_h)
        _, f_real_h = d_height(y_h)
        terms = {
            "bce": losses.loss_bce(pred_e, y_e),
            "adv_e": losses.loss_adv(p_fake_e, cfg.non_saturating),
            "fm_e": losses.loss_fm(f_real_e, f_fake_e),
            "rec": losses.loss_rec(pred_h, y_h, log_sigma),
            "tv": losses.loss_tv(pred_h),
            "adv_h": losses.loss_adv(p_fake_h, cfg.non_saturating),
            "fm_h": losses.loss_fm(f_real_h, f_fake_h),
        }
        g_total = losses.loss_total(terms, cfg.weights)
        g_total.backward()
        opt_g.step()

        if step % cfg.log_every == 0 or step == start_step + cfg.steps:
            log_row(step, float(g_total), de, dh)

    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(history))
            writer.writerows(zip(*history.values()))

    checkpoint = {
        "generator": gen.state_dict(),
        "d_edge": d_edge.state_dict(),
        "d_height": d_height.state_dict(),
        "opt_g": opt_g.state_dict(),
        "opt_de": opt_de.state_dict(),
        "opt_dh": opt_dh.state_dict(),
        "config": dataclasses.asdict(cfg),
        "height_scale": cfg.height_scale,
        "step": start_step + cfg.steps,
    }
    if out_path is not None:
        torch.save(checkpoint, out_path)
    return {"history": history, "checkpoint": checkpoint, "generator": gen}


def load_generator(checkpoint_path) -> tuple[Generator, float]:
    """Generator in eval mode plus the height scale for denormalization."""
    state = torch.load(checkpoint_path, weights_only=False)
    gen_cfg = GeneratorConfig(**state["config"]["generator"])
    gen = Generator(gen_cfg)
    gen.load_state_dict(state["generator"])
    gen.eval()
    return gen, float(state.get("height_scale", 1.0))
