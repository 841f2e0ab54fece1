"""Dense elevation reconstruction: multitask GAN with heteroscedastic
uncertainty, trained on elevation feature shards and served over a framed
socket protocol.
"""

from .losses import (
    discriminator_loss,
    loss_adv,
    loss_bce,
    loss_fm,
    loss_rec,
    loss_total,
    loss_tv,
)
from .model import Generator, GeneratorConfig, LossWeights, PatchDiscriminator
from .serve import ReconServer
from .shards import Record, ShardError, read_shard, write_shard
from .train import Dataset, TrainConfig, load_dataset, load_generator, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Generator",
    "GeneratorConfig",
    "LossWeights",
    "PatchDiscriminator",
    "ReconServer",
    "Record",
    "ShardError",
    "TrainConfig",
    "discriminator_loss",
    "load_dataset",
    "load_generator",
    "loss_adv",
    "loss_bce",
    "loss_fm",
    "loss_rec",
    "loss_total",
    "loss_tv",
    "read_shard",
    "train",
    "write_shard",
]
