from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from errors import ConfigError, ShapeError
from schemas import CalibrationBin, EvalReport


def accuracy(predictions, truth) -> float:
    """Fraction of exact matches"""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise ShapeError(f"{predictions.size} predictions for {truth.size} labels")
    if truth.size == 0:
        return 0.0
    return float(np.mean(predictions == truth))


def calibration_bins(probs: np.ndarray, truth, n_bins: int = 10) -> List[CalibrationBin]:
    """
    Equal-width confidence bins on [0, 1]

    Confidence is the row maximum; a prediction is correct when the argmax
    (lowest index on ties) equals the truth. Empty bins report zeros.
    """
    if n_bins < 1:
        raise ConfigError(f"--n-bins: must be at least 1, got {n_bins}")
    probs = np.asarray(probs, dtype=np.float64)
    truth = np.asarray(truth)
    if probs.ndim != 2 or probs.shape[0] != truth.shape[0]:
        raise ShapeError(f"probabilities {probs.shape} do not match {truth.shape[0]} labels")

    confidence = probs.max(axis=1) if probs.size else np.zeros(0)
    correct = (probs.argmax(axis=1) == truth) if probs.size else np.zeros(0, dtype=bool)
    index = np.minimum((confidence * n_bins).astype(int), n_bins - 1)

    bins = []
    for b in range(n_bins):
        in_bin = index == b
        count = int(in_bin.sum())
        bins.append(CalibrationBin(
            lower=b / n_bins,
            upper=(b + 1) / n_bins,
            confidence=float(np.clip(confidence[in_bin].mean(), 0.0, 1.0)) if count else 0.0,
            accuracy=float(correct[in_bin].mean()) if count else 0.0,
            count=count,
        ))
    return bins


def ece(probs: np.ndarray, truth, n_bins: int = 10) -> Tuple[float, List[CalibrationBin]]:
    """Expected calibration error: sum_b (count_b / N) |acc_b - conf_b|"""
    bins = calibration_bins(probs, truth, n_bins)
    total = sum(b.count for b in bins)
    if total == 0:
        return 0.0, bins
    value = sum(b.count / total * abs(b.accuracy - b.confidence) for b in bins)
    return float(min(value, 1.0)), bins


def mce(bins: List[CalibrationBin]) -> float:
    """Maximum calibration error over non-empty bins"""
    gaps = [abs(b.accuracy - b.confidence) for b in bins if b.count]
    return float(max(gaps)) if gaps else 0.0


def per_class_accuracy(predictions, truth, n_classes: int) -> List[Optional[float]]:
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    result: List[Optional[float]] = []
    for c in range(n_classes):
        members = truth == c
        result.append(float(np.mean(predictions[members] == c)) if members.any() else None)
    return result


def build_report(probs: np.ndarray, predictions, truth, n_bins: int, seed: int,
                 config: Optional[Dict[str, Any]] = None) -> EvalReport:
    ece_value, bins = ece(probs, truth, n_bins)
    return EvalReport(
        accuracy=accuracy(predictions, truth),
        ece=ece_value,
        mce=mce(bins),
        n_eval=int(np.asarray(truth).shape[0]),
        bins=bins,
        per_class_accuracy=per_class_accuracy(predictions, truth, probs.shape[1]),
        config=config or {},
        seed=seed,
    )
