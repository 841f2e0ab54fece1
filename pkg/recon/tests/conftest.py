import numpy as np
import pytest

from elevrecon import Record, write_shard

GRID = 96  # record side; divides by 4 and leaves room for crop augmentation


def stair_height(rng, n):
    """Crisp staircase with flat margins, heights relative to the sensor
    reference plane (so roughly -0.2 .. 1.2 m)."""
    rise = rng.uniform(0.10, 0.20)
    run = int(rng.integers(5, 10))
    start = int(rng.integers(10, 30))
    steps = int(rng.integers(4, 8))
    profile = np.zeros(n)
    for k in range(steps):
        profile[start + k * run : start + (k + 1) * run] = (k + 1) * rise
    profile[start + steps * run :] = steps * rise
    gt = np.tile(profile, (n, 1))
    for _ in range(int(rng.integers(4))):
        gt = np.rot90(gt)
    return np.ascontiguousarray(gt)


def slope_height(rng, n):
    grade = rng.uniform(0.1, 0.4)
    profile = np.arange(n) * 0.04 * grade
    gt = np.tile(profile, (n, 1))
    for _ in range(int(rng.integers(4))):
        gt = np.rot90(gt)
    return np.ascontiguousarray(gt)


def edge_from_height(gt, threshold=0.02):
    """Cells adjacent to a height discontinuity, on both sides."""
    edge = np.zeros(gt.shape, dtype=np.uint8)
    dx = np.abs(np.diff(gt, axis=1)) > threshold
    dy = np.abs(np.diff(gt, axis=0)) > threshold
    edge[:, :-1] |= dx
    edge[:, 1:] |= dx
    edge[:-1, :] |= dy
    edge[1:, :] |= dy
    return edge


def observed_mask(rng, n, coverage=0.6):
    """Speckle observation plus a few contiguous occlusion holes."""
    mask = rng.random((n, n)) < coverage + 0.15
    for _ in range(int(rng.integers(2, 5))):
        r = int(rng.integers(0, n - 12))
        c = int(rng.integers(0, n - 12))
        hh = int(rng.integers(8, 24))
        ww = int(rng.integers(8, 24))
        mask[r : r + hh, c : c + ww] = False
    return mask.astype(np.uint8)


def synth_record(rng, kind="stairs", n=GRID) -> Record:
    """Plausible engine output: noisy per-cell statistics of a terrain patch.

    Cells adjacent to edges get mixed means and inflated variance, the way
    real rasterized returns straddle a riser.
    """
    gt = stair_height(rng, n) if kind == "stairs" else slope_height(rng, n)
    edge = edge_from_height(gt)
    observed = observed_mask(rng, n)

    noise = rng.uniform(-0.02, 0.02, (n, n))
    step_local = np.zeros((n, n))
    step_local[:, :-1] = np.abs(np.diff(gt, axis=1))
    step_local[:-1, :] = np.maximum(step_local[:-1, :], np.abs(np.diff(gt, axis=0)))
    mix = edge * rng.uniform(-0.5, 0.5, (n, n)) * step_local
    mean = gt + noise + mix

    base_var = rng.uniform(0.5e-4, 2e-4, (n, n))
    var = base_var + edge * step_local**2 * rng.uniform(0.1, 0.3, (n, n))

    count = rng.uniform(0.05, 1.0, (n, n))
    x = np.zeros((7, n, n), dtype=np.float32)
    obs = observed.astype(bool)
    x[0] = np.where(obs, count, 0.0)
    x[1] = np.where(obs, mean, 0.0)
    x[2] = np.where(obs, var, 0.0)
    x[3] = np.where(obs, mean + np.sqrt(var), 0.0)
    x[4] = np.where(obs, var * rng.uniform(0.5, 1.5, (n, n)), 0.0)
    x[5] = np.where(obs, mean - np.sqrt(var), 0.0)
    x[6] = np.where(obs, var * rng.uniform(0.5, 1.5, (n, n)), 0.0)

    pose = np.array([0.0, 0.0, 0.50, 0.0, 0.0, 0.0])  # reference plane at 0
    return Record(
        x=x,
        height=gt.astype(np.float32),
        edge=edge,
        observed=observed,
        pose=pose,
        rate=float(obs.mean()),
    )


def make_shard(path, n_records, seed=0, kinds=("stairs", "slope")):
    rng = np.random.default_rng(seed)
    records = [
        synth_record(rng, kind=kinds[i % len(kinds)]) for i in range(n_records)
    ]
    write_shard(records, path, resolution=0.04)
    return path


@pytest.fixture(scope="session")
def toy_shard(tmp_path_factory):
    """64-record mixed shard for the training smoke test."""
    return make_shard(tmp_path_factory.mktemp("shards") / "toy.ndem", 64, seed=1)


@pytest.fixture(scope="session")
def stair_shard(tmp_path_factory):
    """Stair-only shard for the uncertainty-direction check."""
    return make_shard(
        tmp_path_factory.mktemp("shards") / "stairs.ndem", 48, seed=2, kinds=("stairs",)
    )
