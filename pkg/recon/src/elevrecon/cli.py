"""Command surface: train a reconstruction model, serve it over a socket."""

from __future__ import annotations

import argparse
import sys

from .model import GeneratorConfig, LossWeights
from .serve import ReconServer
from .train import TrainConfig, train


def cmd_train(args) -> int:
    weights = LossWeights(*args.weights) if args.weights else LossWeights()
    cfg = TrainConfig(
        steps=args.steps,
        batch_size=args.batch_size,
        crop=args.crop,
        lr=args.lr,
        seed=args.seed,
        non_saturating=args.non_saturating,
        weights=weights,
        generator=GeneratorConfig(base_width=args.base_width, upsample=args.upsample),
    )
    result = train(args.shard, cfg, out_path=args.out, log_path=args.log, resume=args.resume)
    history = result["history"]
    print(f"steps={history['step'][-1]} heldout_l1={history['heldout_l1'][-1]:.4f} -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    host, _, port = args.endpoint.rpartition(":")
    if not host or not port.isdigit():
        print(f"error: endpoint must be host:port, got {args.endpoint!r}", file=sys.stderr)
        return 2
    server = ReconServer(checkpoint=args.checkpoint, host=host, port=int(port))
    print(f"serving {args.checkpoint} on {server.address[0]}:{server.address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elevrecon", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train on a dataset shard")
    t.add_argument("--shard", required=True)
    t.add_argument("--out", required=True, help="checkpoint output path")
    t.add_argument("--steps", type=int, default=200)
    t.add_argument("--batch-size", dest="batch_size", type=int, default=4)
    t.add_argument("--crop", type=int, default=64)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--base-width", dest="base_width", type=int, default=64)
    t.add_argument("--upsample", choices=["interp", "transposed"], default="interp")
    t.add_argument("--non-saturating", dest="non_saturating", action="store_true",
                   help="use -log D(fake) instead of log(1 - D(fake))")
    t.add_argument("--weights", type=float, nargs=7, metavar=("BCE", "ADV_E", "FM_E", "REC", "TV", "ADV_H", "FM_H"),
                   help="loss weights (default 1 0.1 10 1 0.1 0.1 10)")
    t.add_argument("--log", help="CSV training-curve path")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("serve", help="serve a checkpoint over a stream socket")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--endpoint", default="127.0.0.1:7060", help="host:port to bind")
    s.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
