"""
Pseudo-clean label construction and transition-aware refinement

Candidate sets are carried as an (N, Q) 0/1 mask Y. The pseudo-clean matrix S
is row-stochastic and supported on each row's candidate set.
"""
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
from sklearn.neighbors import kneighbors_graph

from errors import ConfigError, DataError, ShapeError

logger = logging.getLogger(__name__)

# Condition number above which the regularized transition matrix is treated as singular
SINGULAR_COND = 1e12


@dataclass
class LabelState:
    S: np.ndarray           # (N, Q) pseudo-clean labels
    S0_tilde: np.ndarray    # (N, Q) last denoised estimate
    T_mat: np.ndarray       # (Q, Q) transition-aware matrix
    candidates: np.ndarray  # (N, Q) candidate mask
    epoch: int = 0


def candidate_mask(candidates: Union[np.ndarray, Sequence[Iterable[int]]], n_classes: int = None) -> np.ndarray:
    """Accept either an (N, Q) 0/1 mask or a list of label sets; return a float mask"""
    if isinstance(candidates, np.ndarray) and candidates.ndim == 2:
        return (candidates != 0).astype(np.float64)

    sets = [set(int(c) for c in labels) for labels in candidates]
    if n_classes is None:
        n_classes = 1 + max((max(s) for s in sets if s), default=-1)
    mask = np.zeros((len(sets), n_classes), dtype=np.float64)
    for i, labels in enumerate(sets):
        for c in labels:
            if not 0 <= c < n_classes:
                raise DataError(f"instance {i}: label {c} outside 0..{n_classes - 1}")
            mask[i, c] = 1.0
    return mask


def normalize_rows(M: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Mask to the candidate sets and row-normalize; empty rows become uniform over candidates"""
    masked = np.where(Y > 0, np.maximum(M, 0.0), 0.0)
    sums = masked.sum(axis=1, keepdims=True)
    empty = sums[:, 0] <= 0
    if np.any(empty):
        logger.debug("%d rows fall back to uniform over their candidates", int(empty.sum()))
    uniform = Y / Y.sum(axis=1, keepdims=True)
    safe = np.where(sums > 0, sums, 1.0)
    return np.where(empty[:, None], uniform, masked / safe)


def uniform_labels(Y: np.ndarray) -> np.ndarray:
    Y = candidate_mask(Y)
    return Y / Y.sum(axis=1, keepdims=True)


def as_distribution(M: np.ndarray) -> np.ndarray:
    """Positive part of each row, renormalized; rows without positive mass become uniform"""
    positive = np.maximum(np.asarray(M, dtype=np.float64), 0.0)
    sums = positive.sum(axis=1, keepdims=True)
    uniform = np.full_like(positive, 1.0 / positive.shape[1])
    return np.where(sums > 0, positive / np.where(sums > 0, sums, 1.0), uniform)


def knn_adjacency(features: np.ndarray, k: int, self_loops: bool = False) -> np.ndarray:
    """
    Symmetric kNN adjacency: P_ij = 1 iff i is among j's k nearest neighbours
    or j among i's (Euclidean distance)
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if k >= n:
        raise ConfigError(f"--k: must be smaller than the number of instances ({n}), got {k}")
    if k < 1:
        raise ConfigError(f"--k: must be at least 1, got {k}")

    graph = kneighbors_graph(features, n_neighbors=k, mode="connectivity", include_self=False)
    P = graph.maximum(graph.T).toarray()
    P = (P > 0).astype(np.float64)
    np.fill_diagonal(P, 1.0 if self_loops else 0.0)
    return P


def jaccard_matrix(candidates) -> np.ndarray:
    """J_ij = |S_i & S_j| / |S_i | S_j| over candidate sets"""
    Y = candidate_mask(candidates)
    sizes = Y.sum(axis=1)
    if np.any(sizes == 0):
        empty = int(np.flatnonzero(sizes == 0)[0])
        raise DataError(f"instance {empty} has an empty candidate set")

    inter = Y @ Y.T
    union = sizes[:, None] + sizes[None, :] - inter
    return inter / union


def init_pseudo_clean(P: np.ndarray, J: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """S = normalize(((P * J) Y) masked to the candidate sets)"""
    Y = candidate_mask(Y)
    n = Y.shape[0]
    if P.shape != (n, n) or J.shape != (n, n):
        raise ShapeError(f"P {P.shape} and J {J.shape} must both be ({n}, {n})")

    raw = (P * J) @ Y
    isolated = int(np.sum((raw * Y).sum(axis=1) <= 0))
    if isolated:
        logger.info("%d instances have no linked neighbours; using uniform candidate rows", isolated)
    return normalize_rows(raw, Y)


def estimate_transition(S: np.ndarray, candidates) -> np.ndarray:
    """
    T_ij = sum_n 1[i in S_n] S_nj / sum_n S_nj

    Columns without mass become the unit vector e_j. When S is confined to the
    candidate sets the diagonal is exactly 1.
    """
    Y = candidate_mask(candidates)
    S = np.ascontiguousarray(S, dtype=np.float64)
    if S.shape != Y.shape:
        raise ShapeError(f"S {S.shape} and candidate mask {Y.shape} differ")

    n_classes = S.shape[1]
    num = np.empty((n_classes, n_classes))
    # same reduction order for numerator rows and the denominator
    for i in range(n_classes):
        num[i] = (S * Y[:, i:i + 1]).sum(axis=0)
    den = S.sum(axis=0)

    T = np.eye(n_classes)
    has_mass = den > 0
    T[:, has_mass] = num[:, has_mass] / den[has_mass]
    return T


def apply_inverse_transition(T_mat: np.ndarray, S0_tilde: np.ndarray, lam: float = 0.05) -> np.ndarray:
    """
    Map ambiguous posteriors to clean ones: S0_tilde (T_reg^{-1})^T, negatives clipped

    T_reg = (1 - lam) T + lam I. A numerically singular T_reg falls back to I.
    """
    T_mat = np.asarray(T_mat, dtype=np.float64)
    if T_mat.ndim != 2 or T_mat.shape[0] != T_mat.shape[1]:
        raise ShapeError(f"transition matrix must be square, got {T_mat.shape}")
    if S0_tilde.shape[1] != T_mat.shape[0]:
        raise ShapeError(f"S0 width {S0_tilde.shape[1]} does not match transition size {T_mat.shape[0]}")

    eye = np.eye(T_mat.shape[0])
    T_reg = (1.0 - lam) * T_mat + lam * eye
    cond = np.linalg.cond(T_reg)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        logger.warning("transition matrix is numerically singular (cond=%.3g); using identity", cond)
        inv = eye
    else:
        inv = np.linalg.inv(T_reg)
    return np.maximum(S0_tilde @ inv.T, 0.0)


def update_pseudo_clean(state: LabelState, S0_tilde: np.ndarray, lam: float = 0.05) -> LabelState:
    """
    S^{e+1} = normalize((S^e + corrected) * S^e), masked to the candidate sets

    S0_tilde rows are taken as probability vectors (positive part, renormalized)
    before the inverse transition, so corrected stays on the scale of S.
    """
    if S0_tilde.shape != state.S.shape:
        raise ShapeError(f"S0_tilde {S0_tilde.shape} does not match S {state.S.shape}")

    corrected = apply_inverse_transition(state.T_mat, as_distribution(S0_tilde), lam)
    S_next = normalize_rows((state.S + corrected) * state.S, state.candidates)
    return replace(state, S=S_next, S0_tilde=S0_tilde, epoch=state.epoch + 1)


def transition_drift(T_old: np.ndarray, T_new: np.ndarray) -> float:
    return float(np.linalg.norm(T_new - T_old))


def dump_state(state: LabelState, out_dir: Union[str, Path]) -> None:
    """Write S^e and T^e of the current epoch as CSV"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_dir / f"S_epoch_{state.epoch:03d}.csv", state.S, delimiter=",", fmt="%.10g")
    np.savetxt(out_dir / f"T_epoch_{state.epoch:03d}.csv", state.T_mat, delimiter=",", fmt="%.10g")
