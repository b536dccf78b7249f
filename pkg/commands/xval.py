import argparse

from config import TrainConfig
from dependencies import add_model_flags, load_dataset, output_dir, resolve_config
from services.pipeline import cross_validate
from services.report import emit_report

NAME = "xval"
XVAL_FILE = "xval.json"


def add_parser(subparsers, parent: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        NAME,
        parents=[parent],
        help="k-fold cross-validation (train + eval per fold)",
    )
    parser.add_argument("--data", required=True, help="PLD file with true labels")
    parser.add_argument("--out", required=True, help="directory for per-fold reports and xval.json")
    add_model_flags(parser, TrainConfig)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, TrainConfig)
    data = load_dataset(args.data)
    out = output_dir(args.out)

    summary, reports = cross_validate(data, cfg)
    for fold, report in enumerate(reports):
        emit_report(report, out / f"fold_{fold:02d}")
    (out / XVAL_FILE).write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")

    print(f"✅ {len(reports)}-fold accuracy {summary.accuracy_mean:.4f} ± {summary.accuracy_std:.4f}, "
          f"ece {summary.ece_mean:.4f} ± {summary.ece_std:.4f}")
    print(f"   {out / XVAL_FILE}")
    return 0
