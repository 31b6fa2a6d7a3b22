"""Command line: build datasets from map files, train, and serve."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from uncertnet.data import build_dataset, build_training_example
from uncertnet.mapfiles import read_map_file
from uncertnet.model import NetConfig, load_checkpoint, save_checkpoint
from uncertnet.serve import EstimateService
from uncertnet.train import TrainSchedule, train

__all__ = ["main"]


def _examples_from_dir(map_dir: str, seed: int, eta: float, max_measurements: int = 100):
    files = sorted(Path(map_dir).glob("*.txt"))
    if not files:
        raise FileNotFoundError(f"no map files in {map_dir!r}")
    rng = np.random.default_rng(seed)
    examples = []
    for d, path in enumerate(files):
        mapfile = read_map_file(path)
        n = int(rng.integers(1, max_measurements + 1))
        examples.append(build_training_example(mapfile, n, seed=seed + 7919 * d, eta=eta))
    return examples


def cmd_train(args) -> int:
    examples = _examples_from_dir(args.maps, args.seed, args.eta)
    dataset = build_dataset(examples)
    schedule = TrainSchedule(
        phase_epochs=tuple(args.epochs),
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        net=NetConfig(base_channels=args.base_channels),
    )
    model, history = train(dataset, schedule,
                           log=lambda p, e, l: print(f"phase {p} epoch {e}: loss {l:.5f}"))
    save_checkpoint(model, dataset.norm_mean, dataset.norm_std, args.out)
    print(f"saved checkpoint to {args.out}")
    for phase, losses in history.items():
        if losses:
            print(f"{phase}: first {losses[0]:.5f} last {losses[-1]:.5f}")
    return 0


def cmd_serve(args) -> int:
    model, mean, std = load_checkpoint(args.checkpoint)
    service = EstimateService(model, mean, std, host=args.host, port=args.port)
    print(f"serving on {service.endpoint}", flush=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uncertnet",
        description="Learned radio-map and uncertainty estimator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on a directory of map files")
    p_train.add_argument("--maps", required=True, help="directory of map .txt files")
    p_train.add_argument("--out", required=True, help="checkpoint output path (.pt)")
    p_train.add_argument("--epochs", type=int, nargs=3, default=[20, 10, 10],
                         metavar=("P1", "P2", "P3"))
    p_train.add_argument("--lr", type=float, default=1e-5)
    p_train.add_argument("--batch-size", type=int, default=64)
    p_train.add_argument("--base-channels", type=int, default=32)
    p_train.add_argument("--eta", type=float, default=0.9,
                         help="residual weight at measured cells, in [0.5, 1]")
    p_train.add_argument("--seed", type=int, default=0)

    p_serve = sub.add_parser("serve", help="answer estimate requests over TCP")
    p_serve.add_argument("--checkpoint", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=0)

    args = parser.parse_args(argv)
    if args.command == "train":
        return cmd_train(args)
    return cmd_serve(args)


if __name__ == "__main__":
    sys.exit(main())
