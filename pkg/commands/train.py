import argparse
import logging

from config import TrainConfig
from dependencies import add_model_flags, load_dataset, output_dir, resolve_config
from services.pipeline import ENCODER_FILE, LOG_FILE, RUN_FILE, STATE_DIR, load_encoder, save_encoder, save_run, train

NAME = "train"

logger = logging.getLogger(__name__)


def add_parser(subparsers, parent: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        NAME,
        parents=[parent],
        help="train the label diffusion model with iterative disambiguation",
    )
    parser.add_argument("--data", required=True, help="training PLD file")
    parser.add_argument("--out", required=True, help="run directory for model.npz and train_log.jsonl")
    parser.add_argument("--encoder", default=None,
                        help="pre-trained encoder checkpoint (default: pre-train one now)")
    add_model_flags(parser, TrainConfig)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, TrainConfig)
    data = load_dataset(args.data)
    out = output_dir(args.out)

    encoder = scaler = None
    if args.encoder:
        encoder, scaler = load_encoder(args.encoder)
        logger.info("using prior encoder from %s", args.encoder)

    result = train(
        data,
        cfg,
        encoder=encoder,
        scaler=scaler,
        log_path=out / LOG_FILE,
        state_dir=out / STATE_DIR if cfg.dump_state else None,
    )
    if not args.encoder:
        save_encoder(out / ENCODER_FILE, result.encoder, result.scaler)
    path = save_run(out / RUN_FILE, result, cfg)

    print(f"✅ model -> {path}")
    if result.disambiguation_accuracy is not None:
        print(f"   disambiguation accuracy on training data: {result.disambiguation_accuracy:.4f}")
    return 0
