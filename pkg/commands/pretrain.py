import argparse

from config import TrainConfig
from dependencies import add_model_flags, load_dataset, output_dir, resolve_config
from services.data import PartialDataset
from services.pipeline import ENCODER_FILE, prepare_features, pretrain_encoder, save_encoder

NAME = "pretrain"


def add_parser(subparsers, parent: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        NAME,
        parents=[parent],
        help="pre-train the prior encoder on candidate-set targets",
    )
    parser.add_argument("--data", required=True, help="training PLD file")
    parser.add_argument("--out", required=True, help="run directory; encoder.npz is written here")
    add_model_flags(parser, TrainConfig)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, TrainConfig)
    data = load_dataset(args.data)
    out = output_dir(args.out)

    X, scaler = prepare_features(data.X, cfg)
    encoder = pretrain_encoder(PartialDataset(X, data.candidates, data.truth, data.names), cfg)
    path = save_encoder(out / ENCODER_FILE, encoder, scaler)
    print(f"✅ prior encoder -> {path}")
    return 0
