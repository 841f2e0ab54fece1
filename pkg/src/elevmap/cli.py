"""Operator command surface: generate terrain, collect datasets, evaluate, run live.

Exit codes: 0 success, 2 input error, 3 endpoint error. Defaults can come
from a key/value config file (--config); explicit command-line flags win
over the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from .baseline import inpaint_iterative
from .exceptions import ElevmapError, EndpointError, ProtocolError
from .lidar import LidarModel, TrajectoryConfig
from .mapper import ElevationMapper
from .metrics import MetricReport, build_mask, mmae, mmgd, psnr, ssim
from .pipeline import SimulationSession
from .protocol import ReconClient, pack_response
from .render import height_to_gray, sigma_to_gray, write_pgm
from .terrain import RobotConfig, TerrainSpec, generate_terrain, load_terrain_spec

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ENDPOINT = 3

_MOUNT = RobotConfig().mount_height

_DEFAULTS = {
    "seed": 0,
    "frames": 500,
    "steps": 50,
    "min_obs_rate": 0.25,
    "patch_size": 5.0,
    "resolution": 0.04,
    "loop_radius": 4.0,
    "height_band": 2.0,
    "decay": 0.90,
    "count_cap": 100.0,
    "endpoint": None,
}


class InputError(ValueError):
    pass


def _load_config(path) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _merge(args: argparse.Namespace, keys) -> dict:
    """Resolve options: package defaults < config file < explicit flags."""
    merged = {k: _DEFAULTS[k] for k in keys if k in _DEFAULTS}
    file_cfg = _load_config(args.config) if getattr(args, "config", None) else {}
    for k, v in file_cfg.items():
        if k in merged:
            default = _DEFAULTS.get(k)
            caster = type(default) if default is not None else str
            merged[k] = caster(v)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    merged["_from_file"] = set(file_cfg)
    return merged


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = str(text).rpartition(":")
    if not host or not port.isdigit():
        raise InputError(f"endpoint must be host:port, got {text!r}")
    return host, int(port)


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} not found: {p}")
    return p


def cmd_generate(args) -> int:
    opts = _merge(args, ["seed"])
    if args.spec:
        spec = load_terrain_spec(_require_file(args.spec, "terrain spec"))
    else:
        spec = TerrainSpec()
    if args.seed is not None or "seed" in opts["_from_file"]:
        spec = dataclasses.replace(spec, seed=int(opts["seed"]))
    field = generate_terrain(spec)
    ds.write_heightfield(field, args.out)
    if args.pgm:
        write_pgm(args.pgm, height_to_gray(field.heights, reference=1.0, band=2.0))
    counts = (
        f"flat={spec.flat_regions} stairs={spec.staircases} slopes={spec.slopes} "
        f"corridors={spec.corridors} obstacles={spec.obstacles}"
    )
    print(
        f"terrain {field.extent[0]:.1f}m x {field.extent[1]:.1f}m @ {field.resolution}m "
        f"seed={spec.seed} {counts} -> {args.out}"
    )
    return EXIT_OK


def _make_session(field, opts) -> SimulationSession:
    cells = int(round(opts["patch_size"] / opts["resolution"]))
    mapper = ElevationMapper(
        cells=cells,
        resolution=opts["resolution"],
        decay=opts["decay"],
        count_cap=opts["count_cap"],
        outlier_band=opts["height_band"],
    )
    trajectory = TrajectoryConfig(
        center=(field.extent[0] / 2.0, field.extent[1] / 2.0),
        radius=opts["loop_radius"],
    )
    return SimulationSession(
        field, seed=int(opts["seed"]), mapper=mapper, lidar=LidarModel(), trajectory=trajectory
    )


def cmd_collect(args) -> int:
    opts = _merge(
        args,
        [
            "seed",
            "frames",
            "min_obs_rate",
            "patch_size",
            "resolution",
            "loop_radius",
            "height_band",
            "decay",
            "count_cap",
        ],
    )
    field = ds.read_heightfield(_require_file(args.terrain, "terrain"))
    session = _make_session(field, opts)
    cells = session.mapper.cells
    rates = []
    with ds.ShardWriter(
        args.out, opts["resolution"], cells, cells, min_rate=opts["min_obs_rate"]
    ) as writer:
        for _ in range(int(opts["frames"])):
            result = session.step()
            if ds.filter_frame(result.rate, opts["min_obs_rate"]):
                writer.add(session.record(result))
                rates.append(result.rate)
            else:
                writer.dropped += 1
        kept, dropped = writer.kept, writer.dropped
    mean_rate = float(np.mean(rates)) if rates else float("nan")
    print(f"kept={kept} dropped={dropped} mean_observation_rate={mean_rate:.3f} -> {args.out}")
    return EXIT_OK


def _predict_baseline(record: ds.DatasetRecord) -> np.ndarray:
    reference = float(record.pose[2]) - _MOUNT
    mean = record.x[1].astype(np.float64) + reference
    sparse = np.where(record.observed > 0, mean, np.nan)
    return inpaint_iterative(sparse)


def _eval_records(reader, predict, resolution, height_band) -> MetricReport:
    report = MetricReport()
    for record in reader:
        pred = np.asarray(predict(record), dtype=np.float64)
        truth = record.height.astype(np.float64)
        valid = build_mask(record.observed > 0, resolution)
        if not valid[:-1, :-1].any():
            report.skipped += 1
            continue
        if np.isnan(pred).any():
            pred = np.nan_to_num(pred, nan=float(np.nanmean(pred)))
        report.add(
            mmae(pred, truth, valid),
            mmgd(pred, truth, valid),
            psnr(pred, truth, peak=height_band),
            ssim(pred, truth, peak=height_band),
        )
    return report


def cmd_eval(args) -> int:
    opts = _merge(args, ["endpoint", "height_band"])
    shard = _require_file(args.shard, "shard")
    with ds.ShardReader(shard) as reader:
        if args.pred == "baseline":
            report = _eval_records(reader, _predict_baseline, reader.resolution, opts["height_band"])
        else:
            if not opts["endpoint"]:
                raise InputError("--endpoint is required for --pred endpoint")
            host, port = _parse_endpoint(opts["endpoint"])
            with ReconClient(host, port) as client:

                def predict(record):
                    height, _ = client.infer(record.x)
                    return height.astype(np.float64) + (float(record.pose[2]) - _MOUNT)

                report = _eval_records(reader, predict, reader.resolution, opts["height_band"])
    for line in report.format_lines():
        print(line)
    if args.report:
        report.write(args.report)
    return EXIT_OK


def cmd_run(args) -> int:
    opts = _merge(
        args,
        [
            "seed",
            "steps",
            "patch_size",
            "resolution",
            "loop_radius",
            "height_band",
            "decay",
            "count_cap",
            "endpoint",
        ],
    )
    if not opts["endpoint"]:
        raise InputError("--endpoint is required for run")
    field = ds.read_heightfield(_require_file(args.terrain, "terrain"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    session = _make_session(field, opts)
    host, port = _parse_endpoint(opts["endpoint"])

    preprocess_times = []
    completed = 0
    client = ReconClient(host, port)
    client.connect()
    try:
        for step_idx in range(int(opts["steps"])):
            result = session.step()
            preprocess_times.append(result.preprocess_seconds)
            height_rel, log_sigma = client.infer(result.tensor)
            height = height_rel.astype(np.float64) + result.reference
            sigma = np.exp(log_sigma.astype(np.float64))
            stem = out_dir / f"step_{step_idx:05d}"
            with open(f"{stem}.ndis", "wb") as fh:
                fh.write(pack_response(height_rel, log_sigma))
            write_pgm(
                f"{stem}_height.pgm",
                height_to_gray(height, reference=result.reference, band=opts["height_band"]),
            )
            write_pgm(f"{stem}_sigma.pgm", sigma_to_gray(sigma))
            completed += 1
    except (EndpointError, ProtocolError) as exc:
        print(f"endpoint failed after {completed} steps: {exc}", file=sys.stderr)
        _report_timing(preprocess_times)
        return EXIT_ENDPOINT
    finally:
        client.close()
    _report_timing(preprocess_times)
    print(f"wrote {completed} result frames to {out_dir}")
    return EXIT_OK


def _report_timing(times):
    if times:
        print(f"preprocess_ms_mean={1000.0 * float(np.mean(times)):.3f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elevmap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key/value config file; flags override it")
        p.add_argument("--seed", type=int, help="RNG seed (default 0)")

    g = sub.add_parser("generate", help="generate a terrain heightfield")
    common(g)
    g.add_argument("--spec", help="terrain spec file (key = value)")
    g.add_argument("--out", required=True, help="output heightfield (.ndhf)")
    g.add_argument("--pgm", help="optional grayscale render path")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("collect", help="simulate a run and write a dataset shard")
    common(c)
    c.add_argument("--terrain", required=True, help="heightfield file from generate")
    c.add_argument("--frames", type=int, help="number of simulation frames (default 500)")
    c.add_argument(
        "--min-obs-rate",
        dest="min_obs_rate",
        type=float,
        help="drop frames below this observation rate (default 0.25)",
    )
    c.add_argument("--patch-size", dest="patch_size", type=float, help="map window in meters (default 5.0)")
    c.add_argument("--resolution", type=float, help="cell size in meters (default 0.04)")
    c.add_argument("--loop-radius", dest="loop_radius", type=float, help="trajectory loop radius (default 4.0)")
    c.add_argument("--out", required=True, help="output shard (.ndem)")
    c.set_defaults(func=cmd_collect)

    e = sub.add_parser("eval", help="evaluate a prediction source over a shard")
    common(e)
    e.add_argument("--shard", required=True)
    e.add_argument("--pred", choices=["baseline", "endpoint"], required=True)
    e.add_argument("--endpoint", help="host:port of the reconstruction service")
    e.add_argument("--report", help="write key/value metrics to this path")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("run", help="live loop against a reconstruction endpoint")
    common(r)
    r.add_argument("--terrain", required=True)
    r.add_argument("--endpoint", help="host:port of the reconstruction service")
    r.add_argument("--steps", type=int, help="number of live steps (default 50)")
    r.add_argument("--patch-size", dest="patch_size", type=float)
    r.add_argument("--resolution", type=float)
    r.add_argument("--loop-radius", dest="loop_radius", type=float)
    r.add_argument("--out", required=True, help="output directory for result frames")
    r.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EndpointError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except (InputError, ElevmapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
