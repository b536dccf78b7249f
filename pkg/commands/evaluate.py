import argparse
from pathlib import Path

from config import TrainConfig
from dependencies import add_model_flags, load_dataset, resolve_config
from services.pipeline import RUN_FILE, evaluate, load_run
from services.report import emit_report

NAME = "eval"


def add_parser(subparsers, parent: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        NAME,
        parents=[parent],
        help="infer labels for a labelled PLD file and write the calibration report",
        description="Parameters default to those stored with the trained model; flags override them.",
    )
    parser.add_argument("--data", required=True, help="PLD file with true labels")
    parser.add_argument("--run", required=True, help="run directory written by `train`")
    parser.add_argument("--out", default=None, help="report directory (default: the run directory)")
    add_model_flags(parser, TrainConfig)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    result, meta = load_run(run_dir / RUN_FILE)
    cfg = resolve_config(args, TrainConfig, base=meta.get("config"))
    data = load_dataset(args.data)

    report = evaluate(result, data, cfg)
    paths = emit_report(report, args.out or run_dir)

    print(f"✅ accuracy={report.accuracy:.4f} ece={report.ece:.4f} mce={report.mce:.4f}")
    for path in paths.values():
        print(f"   {path}")
    return 0
