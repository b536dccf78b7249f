import argparse

from config import SynthConfig
from dependencies import add_model_flags, output_dir, resolve_config
from services.data import make_blobs, partialize, train_test_split, write_dataset

NAME = "synth"
TRAIN_FILE = "train.pld"
TEST_FILE = "test.pld"


def add_parser(subparsers, parent: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        NAME,
        parents=[parent],
        help="generate a synthetic partial-label dataset",
        description="Gaussian blobs partialized with flip probability q, split into train.pld and test.pld",
    )
    parser.add_argument("--out", default="data", help="output directory (default: data)")
    add_model_flags(parser, SynthConfig)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, SynthConfig)
    out = output_dir(args.out)

    clean = make_blobs(cfg.n, cfg.classes, cfg.dim, cfg.separation, cfg.seed)
    data = partialize(clean, cfg.q, cfg.seed + 1)
    train_idx, test_idx = train_test_split(data.n, cfg.test_fraction, cfg.seed)

    train_path = write_dataset(data.subset(train_idx), out / TRAIN_FILE)
    test_path = write_dataset(data.subset(test_idx), out / TEST_FILE)
    print(f"✅ {train_idx.size} training instances -> {train_path}")
    print(f"✅ {test_idx.size} test instances -> {test_path}")
    return 0
