"""
Partial-label datasets: PLD text format, synthetic generation, folds

PLD1 layout (UTF-8, LF, `#` lines ignored):

    PLD1 N d Q has_truth
    N lines of d space-separated floats
    N lines of ascending 0-based candidate indices
    N lines with one true index each (only when has_truth = 1)
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from sklearn.datasets import make_blobs as sk_make_blobs
from sklearn.preprocessing import StandardScaler

from errors import ConfigError, DataError, DataParseError

PLD_MAGIC = "PLD1"


@dataclass
class PartialDataset:
    X: np.ndarray                        # (N, d) features
    candidates: np.ndarray               # (N, Q) 0/1 candidate mask
    truth: Optional[np.ndarray] = None   # (N,) true labels, evaluation only
    names: Optional[List[str]] = None    # class names

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    @property
    def q(self) -> int:
        return int(self.candidates.shape[1])

    def validate(self) -> "PartialDataset":
        if self.X.ndim != 2 or self.candidates.ndim != 2:
            raise DataError("features and candidates must be 2-D")
        if self.candidates.shape[0] != self.n:
            raise DataError(f"{self.n} feature rows but {self.candidates.shape[0]} candidate rows")
        if not np.all(np.isfinite(self.X)):
            raise DataError("features contain non-finite values")

        sizes = self.candidates.sum(axis=1)
        if np.any(sizes == 0):
            raise DataError(f"instance {int(np.flatnonzero(sizes == 0)[0])} has an empty candidate set")

        if self.truth is not None:
            if self.truth.shape != (self.n,):
                raise DataError(f"expected {self.n} true labels, got {self.truth.shape}")
            if np.any(self.truth < 0) or np.any(self.truth >= self.q):
                raise DataError(f"true labels must lie in 0..{self.q - 1}")
            outside = self.candidates[np.arange(self.n), self.truth] == 0
            if np.any(outside):
                raise DataError(f"instance {int(np.flatnonzero(outside)[0])}: true label is not a candidate")
        if self.names is not None and len(self.names) != self.q:
            raise DataError(f"expected {self.q} class names, got {len(self.names)}")
        return self

    def subset(self, idx: np.ndarray) -> "PartialDataset":
        return PartialDataset(
            X=self.X[idx],
            candidates=self.candidates[idx],
            truth=None if self.truth is None else self.truth[idx],
            names=self.names,
        )


@dataclass
class CleanDataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int


@dataclass
class FoldSpec:
    folds: List[np.ndarray]
    seed: int

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def split(self, fold: int) -> Tuple[np.ndarray, np.ndarray]:
        """(train indices, test indices) for one fold"""
        test = self.folds[fold]
        train = np.concatenate([f for i, f in enumerate(self.folds) if i != fold])
        return np.sort(train), np.sort(test)


# =============================================================================
# PLD text format
# =============================================================================

def _parse_int(token: str, line: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise DataParseError(f"invalid {what} '{token}'", line=line)


def parse_dataset(path: Union[str, Path]) -> PartialDataset:
    """Read a PLD1 file; every dataset invariant is checked with the offending line"""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    rows = [(i + 1, raw) for i, raw in enumerate(lines) if not raw.startswith("#")]
    if not any(raw.strip() for _, raw in rows):
        raise DataParseError("empty file", line=1)

    header_line, header = rows[0]
    parts = header.split()
    if len(parts) != 5 or parts[0] != PLD_MAGIC:
        raise DataParseError(f"header must be '{PLD_MAGIC} N d Q has_truth'", line=header_line)
    n, d, q, has_truth = (_parse_int(p, header_line, "header field") for p in parts[1:])
    if n < 1 or d < 1 or q < 1 or has_truth not in (0, 1):
        raise DataParseError("header needs N, d, Q >= 1 and has_truth in {0, 1}", line=header_line)

    expected = 1 + n * (3 if has_truth else 2)
    if len(rows) < expected:
        raise DataParseError(f"expected {expected - 1} data lines, found {len(rows) - 1}",
                             line=rows[-1][0])
    for line, raw in rows[expected:]:
        if raw.strip():
            raise DataParseError(f"expected {expected - 1} data lines, found more", line=line)

    X = np.empty((n, d), dtype=np.float64)
    for i, (line, raw) in enumerate(rows[1:1 + n]):
        tokens = raw.split()
        if len(tokens) != d:
            raise DataParseError(f"row {i}: expected {d} features, got {len(tokens)}", line=line)
        try:
            X[i] = [float(tok) for tok in tokens]
        except ValueError:
            raise DataParseError(f"row {i}: invalid feature value", line=line)
        if not np.all(np.isfinite(X[i])):
            raise DataParseError(f"row {i}: non-finite feature value", line=line)

    Y = np.zeros((n, q), dtype=np.int8)
    for i, (line, raw) in enumerate(rows[1 + n:1 + 2 * n]):
        labels = [_parse_int(tok, line, "candidate index") for tok in raw.split()]
        if not labels:
            raise DataParseError(f"row {i}: empty candidate set", line=line)
        if labels != sorted(set(labels)):
            raise DataParseError(f"row {i}: candidate indices must be ascending and unique", line=line)
        if labels[0] < 0 or labels[-1] >= q:
            raise DataParseError(f"row {i}: candidate index outside 0..{q - 1}", line=line)
        Y[i, labels] = 1

    truth = None
    if has_truth:
        truth = np.empty(n, dtype=np.int64)
        for i, (line, raw) in enumerate(rows[1 + 2 * n:expected]):
            tokens = raw.split()
            if len(tokens) != 1:
                raise DataParseError(f"row {i}: expected one true label", line=line)
            truth[i] = _parse_int(tokens[0], line, "true label")
            if not 0 <= truth[i] < q:
                raise DataParseError(f"row {i}: true label outside 0..{q - 1}", line=line)
            if Y[i, truth[i]] == 0:
                raise DataParseError(f"row {i}: true label {truth[i]} is not a candidate", line=line)

    return PartialDataset(X=X, candidates=Y, truth=truth).validate()


def write_dataset(data: PartialDataset, path: Union[str, Path]) -> Path:
    data.validate()
    has_truth = int(data.truth is not None)
    lines = [f"{PLD_MAGIC} {data.n} {data.d} {data.q} {has_truth}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in data.X]
    lines += [" ".join(str(c) for c in np.flatnonzero(row)) for row in data.candidates]
    if has_truth:
        lines += [str(int(t)) for t in data.truth]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


# =============================================================================
# Synthetic data
# =============================================================================

def make_blobs(n: int, n_classes: int, dim: int, separation: float, seed: int) -> CleanDataset:
    """
    Class-balanced unit-variance Gaussian clusters

    With n_classes <= dim the centers are separation/sqrt(2) * e_c, so every pair
    is exactly `separation` apart; otherwise random directions are rescaled so
    the closest pair is `separation` apart.
    """
    if n_classes > n:
        raise ConfigError(f"--classes: cannot exceed the number of instances ({n})")

    rng = np.random.default_rng(seed)
    if n_classes <= dim:
        centers = np.zeros((n_classes, dim))
        centers[np.arange(n_classes), np.arange(n_classes)] = separation / np.sqrt(2.0)
    else:
        centers = rng.standard_normal((n_classes, dim))
        gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
        closest = gaps[np.triu_indices(n_classes, 1)].min()
        centers *= separation / closest

    counts = [n // n_classes + (1 if c < n % n_classes else 0) for c in range(n_classes)]
    X, y = sk_make_blobs(
        n_samples=counts,
        n_features=dim,
        centers=centers,
        cluster_std=1.0,
        shuffle=True,
        random_state=int(rng.integers(2**31 - 1)),
    )
    return CleanDataset(X=X.astype(np.float64), y=y.astype(np.int64), n_classes=n_classes)


def partialize(clean: CleanDataset, q: float, seed: int) -> PartialDataset:
    """Candidate set = {true label} plus every other label independently with probability q"""
    if not 0.0 <= q <= 1.0:
        raise ConfigError(f"--q: must lie in [0, 1], got {q}")
    if np.any(clean.y < 0) or np.any(clean.y >= clean.n_classes):
        raise DataError(f"true labels must lie in 0..{clean.n_classes - 1}")

    rng = np.random.default_rng(seed)
    n = clean.y.shape[0]
    Y = (rng.random((n, clean.n_classes)) < q).astype(np.int8)
    Y[np.arange(n), clean.y] = 1
    return PartialDataset(X=clean.X.copy(), candidates=Y, truth=clean.y.copy()).validate()


def observed_flip_rate(candidates: np.ndarray) -> Tuple[float, float]:
    """
    Estimate q from candidate sizes as mean(|S| - 1) / (Q - 1)

    Returns (estimate, standard error). A single-class problem has nothing to
    flip and gives (0.0, 0.0).
    """
    Y = np.asarray(candidates)
    n, n_classes = Y.shape
    if n_classes < 2 or n == 0:
        return 0.0, 0.0
    extra = (Y.sum(axis=1) - 1) / (n_classes - 1)
    se = float(extra.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(extra.mean()), se


# =============================================================================
# Splits and scaling
# =============================================================================

def kfold(n: int, folds: int, seed: int) -> FoldSpec:
    """Seeded shuffle cut into contiguous folds whose sizes differ by at most one"""
    if folds < 1 or folds > n:
        raise ConfigError(f"--folds: must lie in 1..{n}, got {folds}")
    perm = np.random.default_rng(seed).permutation(n)
    return FoldSpec(folds=[np.asarray(f) for f in np.array_split(perm, folds)], seed=seed)


def train_test_split(n: int, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"--test-fraction: must lie in (0, 1), got {test_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def fit_scaler(X: np.ndarray) -> StandardScaler:
    return StandardScaler().fit(X)


def scaler_from_arrays(mean: np.ndarray, scale: np.ndarray) -> StandardScaler:
    """Rebuild a fitted scaler from stored statistics"""
    scaler = StandardScaler()
    scaler.mean_ = np.asarray(mean, dtype=np.float64)
    scaler.scale_ = np.asarray(scale, dtype=np.float64)
    scaler.var_ = scaler.scale_ ** 2
    scaler.n_features_in_ = scaler.mean_.shape[0]
    return scaler
