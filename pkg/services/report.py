import csv
import logging
from pathlib import Path
from typing import Dict, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from schemas import EvalReport

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
BINS_FILE = "reliability.csv"
DIAGRAM_FILE = "reliability.svg"


def _ensure_dir(out_dir: Path) -> Path:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create report directory {out_dir}: {e}") from e
    return out_dir


def write_reliability_csv(report: EvalReport, path: Path) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lower", "upper", "confidence", "accuracy", "count"])
        for b in report.bins:
            writer.writerow([repr(b.lower), repr(b.upper), repr(b.confidence), repr(b.accuracy), b.count])
    return path


def write_reliability_svg(report: EvalReport, path: Path) -> Path:
    """Bar chart of per-bin accuracy against confidence with the diagonal reference"""
    plt.rcParams["svg.hashsalt"] = "ddmp-reliability"
    width = 1.0 / max(len(report.bins), 1)
    fig, ax = plt.subplots(figsize=(5, 5))
    try:
        ax.bar(
            [b.lower for b in report.bins],
            [b.accuracy for b in report.bins],
            width=width,
            align="edge",
            edgecolor="black",
            color="#4c72b0",
            label="Accuracy",
        )
        ax.plot([0, 1], [0, 1], linestyle="--", color="gray", label="Perfect calibration")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("Confidence")
        ax.set_ylabel("Accuracy")
        ax.set_title(f"Reliability diagram (ECE={report.ece:.3f})")
        ax.legend(loc="upper left")
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return path


def emit_report(report: EvalReport, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Write report.json, reliability.csv and reliability.svg into out_dir

    Returns the written paths keyed by kind.
    """
    out_dir = _ensure_dir(Path(out_dir))
    paths = {
        "report": out_dir / REPORT_FILE,
        "bins": out_dir / BINS_FILE,
        "diagram": out_dir / DIAGRAM_FILE,
    }
    try:
        paths["report"].write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        write_reliability_csv(report, paths["bins"])
        write_reliability_svg(report, paths["diagram"])
    except OSError as e:
        raise OSError(f"failed writing report to {out_dir}: {e}") from e

    logger.info("report written to %s (accuracy=%.4f, ece=%.4f)", out_dir, report.accuracy, report.ece)
    return paths


def load_report(path: Union[str, Path]) -> EvalReport:
    return EvalReport.model_validate_json(Path(path).read_text(encoding="utf-8"))
