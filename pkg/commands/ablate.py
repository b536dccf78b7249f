import argparse

from config import TrainConfig
from dependencies import add_model_flags, load_dataset, output_dir, resolve_config
from schemas import AblationReport
from services.pipeline import run_ablation

NAME = "ablate"
ABLATION_FILE = "ablation.json"


def add_parser(subparsers, parent: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        NAME,
        parents=[parent],
        help="compare DDMP with its complementarity / transition ablations",
    )
    parser.add_argument("--data", required=True, help="PLD file with true labels")
    parser.add_argument("--out", required=True, help="directory for ablation.json")
    parser.add_argument("--seeds", type=int, nargs="+", default=None,
                        help="split/training seeds (default: five seeds starting at --seed)")
    add_model_flags(parser, TrainConfig)
    parser.set_defaults(handler=run)
    return parser


def format_table(report: AblationReport) -> str:
    width = max(len(row.variant) for row in report.rows)
    lines = [f"{'variant':<{width}}  {'mean':>7}  {'std':>7}"]
    for row in report.rows:
        lines.append(f"{row.variant:<{width}}  {row.mean:7.4f}  {row.std:7.4f}")
    return "\n".join(lines)


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, TrainConfig)
    data = load_dataset(args.data)
    out = output_dir(args.out)
    seeds = args.seeds if args.seeds else [cfg.seed + i for i in range(5)]

    report = run_ablation(data, cfg, seeds)
    (out / ABLATION_FILE).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")

    print(format_table(report))
    print(f"✅ {out / ABLATION_FILE}")
    return 0
