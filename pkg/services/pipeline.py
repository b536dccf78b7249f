"""
End-to-end training and inference

train():  pre-train f_phi -> initial S from P and J -> per epoch: minibatch noise
          matching, one reverse-sampling pass for S0_tilde, T re-estimation and
          the moving-average S update.
infer_labels(): average reverse draws per instance and take the argmax.
"""
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.preprocessing import StandardScaler

from config import TrainConfig
from errors import CheckpointError, ConfigError, DataError, NumericError, ShapeError
from models import EncoderPrior, NoiseModel
from schemas import AblationReport, AblationRow, EpochRecord, EvalReport, FoldResult, XvalReport
from services.data import (
    PartialDataset,
    fit_scaler,
    kfold,
    observed_flip_rate,
    scaler_from_arrays,
    train_test_split,
)
from services.diffusion import DiffusionSchedule, diffusion_loss, make_schedule, make_trajectory, sample_reverse
from services.disambig import (
    LabelState,
    as_distribution,
    candidate_mask,
    dump_state,
    estimate_transition,
    init_pseudo_clean,
    jaccard_matrix,
    knn_adjacency,
    transition_drift,
    uniform_labels,
    update_pseudo_clean,
)
from services.metrics import accuracy, build_report
from services.numkit import Adam, forward_backward, load_checkpoint, save_checkpoint, softmax_cross_entropy

logger = logging.getLogger(__name__)

# Table-style ablation variants: name -> (use_complementarity, use_transition)
ABLATION_VARIANTS: Dict[str, Tuple[bool, bool]] = {
    "DDMP": (True, True),
    "DDMP-w/o-I": (False, True),
    "DDMP-w/o-T": (True, False),
    "DDMP-w/o-IT": (False, False),
}

ENCODER_FILE = "encoder.npz"
RUN_FILE = "model.npz"
LOG_FILE = "train_log.jsonl"
STATE_DIR = "state"

_STREAMS = ("encoder_init", "encoder_batches", "noise_init", "batches", "noise", "sampling")


@dataclass
class TrainResult:
    model: NoiseModel
    encoder: EncoderPrior
    state: LabelState
    log: List[EpochRecord] = field(default_factory=list)
    scaler: Optional[StandardScaler] = None

    @property
    def disambiguation_accuracy(self) -> Optional[float]:
        return self.log[-1].train_acc if self.log else None


def rng_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent generators per purpose, all derived from one seed"""
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(_STREAMS, children)}


def _seed_from(rng: np.random.Generator) -> int:
    return int(rng.integers(2**31 - 1))


def prepare_features(X: np.ndarray, cfg: TrainConfig,
                     scaler: Optional[StandardScaler] = None) -> Tuple[np.ndarray, Optional[StandardScaler]]:
    """Standardize with a given scaler, or fit one when standardization is on"""
    if scaler is None and cfg.standardize:
        scaler = fit_scaler(X)
    X = np.asarray(X, dtype=np.float64)
    if scaler is None:
        return X, None
    check_width(X, scaler.n_features_in_, "feature scaler")
    return scaler.transform(X), scaler


def check_width(X: np.ndarray, expected: Optional[int], what: str) -> None:
    if expected is not None and (X.ndim != 2 or X.shape[1] != expected):
        width = X.shape[1] if X.ndim == 2 else X.shape
        raise ShapeError(f"data has {width} features but the {what} was fitted on {expected}")


def schedule_for(cfg: TrainConfig) -> Tuple[DiffusionSchedule, List[int]]:
    return make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end), \
        make_trajectory(cfg.timesteps, cfg.trajectory_length)


# =============================================================================
# Prior encoder
# =============================================================================

def pretrain_encoder(data: PartialDataset, cfg: TrainConfig) -> EncoderPrior:
    """
    Fit the prior classifier by cross-entropy against uniform-over-candidate targets

    `data.X` is used as given (already standardized by the caller). Returns a
    frozen encoder.
    """
    data.validate()
    streams = rng_streams(cfg.seed)
    encoder = EncoderPrior(data.d, data.q, cfg.encoder_hidden, seed=_seed_from(streams["encoder_init"]))
    opt = Adam(cfg.encoder_lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    targets = uniform_labels(data.candidates)
    batches = streams["encoder_batches"]

    for epoch in range(1, cfg.encoder_epochs + 1):
        order = batches.permutation(data.n)
        total = 0.0
        for start in range(0, data.n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                loss, grads = forward_backward(encoder, data.X[idx], targets[idx], softmax_cross_entropy)
            except NumericError as e:
                raise NumericError(f"encoder pretraining diverged at epoch {epoch}: {e}", stage="encoder")
            opt.step(encoder.parameters(), grads)
            total += loss * idx.shape[0]
        logger.debug("encoder epoch %d: loss=%.6f", epoch, total / data.n)

    logger.info("prior encoder trained for %d epochs", cfg.encoder_epochs)
    return encoder.freeze()


# =============================================================================
# Training
# =============================================================================

def initial_labels(X: np.ndarray, prior: np.ndarray, Y: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """Complementarity initialization (P * J) Y, or uniform rows when it is ablated"""
    if not cfg.use_complementarity:
        return uniform_labels(Y)

    n = Y.shape[0]
    k = cfg.k
    if k >= n:
        k = n - 1
        logger.warning("k=%d is not below N=%d; using k=%d", cfg.k, n, k)
    space = X if cfg.knn_space == "features" else prior
    P = knn_adjacency(space, k, self_loops=cfg.self_loops)
    J = jaccard_matrix(Y)
    return init_pseudo_clean(P, J, Y)


def check_flip_rate(candidates: np.ndarray, q: float, tolerance: float = 3.0) -> float:
    """Log the flip rate implied by candidate sizes; warn when it sits more than `tolerance` SE from q"""
    observed, se = observed_flip_rate(candidates)
    logger.info("observed flip rate %.4f (se %.4f), expected q=%.4f", observed, se, q)
    if abs(observed - q) > tolerance * max(se, 1e-12):
        logger.warning("candidate sets look inconsistent with q=%.4f: observed flip rate %.4f", q, observed)
    return observed


def draw_labels(model, X: np.ndarray, prior: np.ndarray, sched: DiffusionSchedule, trajectory: Sequence[int],
                rng, n_draws: int, clip: Tuple[float, float]) -> np.ndarray:
    """Mean of n_draws reverse-sampled S_0 estimates, accumulated in draw order"""
    total = np.zeros_like(prior)
    for _ in range(n_draws):
        total += sample_reverse(model, X, prior, sched, trajectory, rng, clip=clip)
    return total / n_draws


def train(data: PartialDataset, cfg: TrainConfig, encoder: Optional[EncoderPrior] = None,
          scaler: Optional[StandardScaler] = None, log_path: Optional[Union[str, Path]] = None,
          state_dir: Optional[Union[str, Path]] = None) -> TrainResult:
    """Run the alternating denoise / disambiguate loop for cfg.epochs epochs"""
    data.validate()
    if data.n < 2:
        raise ConfigError("training needs at least two instances")

    X, scaler = prepare_features(data.X, cfg, scaler)
    if encoder is None:
        encoder = pretrain_encoder(PartialDataset(X, data.candidates, data.truth, data.names), cfg)
    if encoder.n_features != data.d or encoder.n_classes != data.q:
        raise ConfigError(
            f"encoder was built for d={encoder.n_features}, Q={encoder.n_classes}; data has d={data.d}, Q={data.q}"
        )

    if cfg.q is not None:
        check_flip_rate(data.candidates, cfg.q)

    streams = rng_streams(cfg.seed)
    Y = candidate_mask(data.candidates)
    prior = encoder.predict_proba(X)
    S = initial_labels(X, prior, Y, cfg)
    state = LabelState(S=S, S0_tilde=S.copy(), T_mat=np.eye(data.q), candidates=Y, epoch=0)

    model = NoiseModel(data.d, data.q, cfg.hidden_dim, cfg.time_dim, cfg.n_tokens, cfg.ff_blocks,
                       seed=_seed_from(streams["noise_init"]))
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    sched, trajectory = schedule_for(cfg)
    clip = (cfg.clip_min, cfg.clip_max)
    eye = np.eye(data.q)

    log: List[EpochRecord] = []
    log_file = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        log_file = open(log_path, "w", encoding="utf-8")

    started = time.perf_counter()
    try:
        for epoch in range(1, cfg.epochs + 1):
            targets = eye[state.S.argmax(axis=1)] if cfg.one_hot_targets else state.S
            order = streams["batches"].permutation(data.n)
            total = 0.0
            for start in range(0, data.n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss, grads = diffusion_loss(model, (X[idx], targets[idx], prior[idx]), sched, streams["noise"])
                opt.step(model.parameters(), grads)
                total += loss * idx.shape[0]
            epoch_loss = total / data.n
            if not math.isfinite(epoch_loss):
                raise NumericError(f"non-finite loss at epoch {epoch}", stage="train")

            drift = 0.0
            since_warmup = epoch - cfg.warmup_epochs
            if since_warmup > 0 and since_warmup % cfg.update_every == 0:
                S0_tilde = draw_labels(model, X, prior, sched, trajectory, streams["sampling"],
                                       cfg.update_draws, clip)
                T_new = estimate_transition(state.S, Y) if cfg.use_transition else eye.copy()
                drift = transition_drift(state.T_mat, T_new)
                state = update_pseudo_clean(replace(state, T_mat=T_new), S0_tilde, cfg.lam)
                if cfg.dump_state and state_dir is not None:
                    dump_state(state, state_dir)

            train_acc = None
            if data.truth is not None:
                train_acc = accuracy(state.S.argmax(axis=1), data.truth)

            record = EpochRecord(
                epoch=epoch,
                loss=epoch_loss,
                train_acc=train_acc,
                T_drift=drift,
                wall_time=time.perf_counter() - started,
            )
            log.append(record)
            if log_file is not None:
                log_file.write(record.model_dump_json() + "\n")
                log_file.flush()
            logger.info(
                "epoch %d/%d loss=%.5f train_acc=%s T_drift=%.5f",
                epoch, cfg.epochs, epoch_loss,
                "n/a" if train_acc is None else f"{train_acc:.4f}", drift,
            )
    finally:
        if log_file is not None:
            log_file.close()

    return TrainResult(model=model, encoder=encoder, state=state, log=log, scaler=scaler)


# =============================================================================
# Inference and evaluation
# =============================================================================

def infer_labels(model, encoder, X: np.ndarray, cfg: TrainConfig, n_draws: Optional[int] = None,
                 rng=None, scaler: Optional[StandardScaler] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Average reverse-sampled label vectors into probabilities

    Negative mass is dropped and rows renormalized (uniform when nothing is
    left); predictions are the argmax with ties going to the lowest index.
    """
    if n_draws is None:
        n_draws = cfg.n_draws
    if n_draws < 1:
        raise ConfigError(f"--n-draws: must be at least 1, got {n_draws}")
    X = np.asarray(X, dtype=np.float64)
    if scaler is not None:
        check_width(X, scaler.n_features_in_, "feature scaler")
        X = scaler.transform(X)
    check_width(X, getattr(encoder, "n_features", None), "prior encoder")
    if rng is None:
        rng = rng_streams(cfg.seed)["sampling"]

    prior = encoder.predict_proba(X)
    sched, trajectory = schedule_for(cfg)
    mean = draw_labels(model, X, prior, sched, trajectory, rng, n_draws, (cfg.clip_min, cfg.clip_max))

    probs = as_distribution(mean)
    return probs, probs.argmax(axis=1)


def evaluate(result: TrainResult, data: PartialDataset, cfg: TrainConfig, rng=None) -> EvalReport:
    if data.truth is None:
        raise DataError("evaluation data has no true labels")
    probs, preds = infer_labels(result.model, result.encoder, data.X, cfg, rng=rng, scaler=result.scaler)
    return build_report(probs, preds, data.truth, cfg.n_bins, cfg.seed, config=cfg.model_dump())


def cross_validate(data: PartialDataset, cfg: TrainConfig) -> Tuple[XvalReport, List[EvalReport]]:
    """Train and evaluate on each fold in order; mean and population std over folds"""
    if data.truth is None:
        raise DataError("cross-validation needs true labels")
    spec = kfold(data.n, cfg.folds, cfg.seed)
    results: List[FoldResult] = []
    reports: List[EvalReport] = []
    for fold in range(spec.n_folds):
        train_idx, test_idx = spec.split(fold)
        logger.info("fold %d/%d: %d train, %d test", fold + 1, spec.n_folds, train_idx.size, test_idx.size)
        result = train(data.subset(train_idx), cfg)
        report = evaluate(result, data.subset(test_idx), cfg)
        reports.append(report)
        results.append(FoldResult(fold=fold, n_train=int(train_idx.size), n_test=int(test_idx.size),
                                  accuracy=report.accuracy, ece=report.ece))

    accs = np.array([r.accuracy for r in results])
    eces = np.array([r.ece for r in results])
    xval = XvalReport(
        folds=results,
        accuracy_mean=float(accs.mean()),
        accuracy_std=float(accs.std()),
        ece_mean=float(eces.mean()),
        ece_std=float(eces.std()),
        seed=cfg.seed,
    )
    return xval, reports


def run_ablation(data: PartialDataset, cfg: TrainConfig, seeds: Sequence[int]) -> AblationReport:
    """
    Train the four variants on the same seeded train/test splits

    The prior encoder is shared across variants of one seed; it does not depend
    on either ablation flag.
    """
    if data.truth is None:
        raise DataError("ablation needs true labels")
    if not seeds:
        raise ConfigError("--seeds: at least one seed is required")

    accs: Dict[str, List[float]] = {name: [] for name in ABLATION_VARIANTS}
    for seed in seeds:
        train_idx, test_idx = train_test_split(data.n, cfg.test_fraction, seed)
        train_data, test_data = data.subset(train_idx), data.subset(test_idx)
        base = cfg.model_copy(update={"seed": int(seed)})
        X, scaler = prepare_features(train_data.X, base)
        encoder = pretrain_encoder(PartialDataset(X, train_data.candidates, train_data.truth), base)

        for name, (use_i, use_t) in ABLATION_VARIANTS.items():
            variant = base.model_copy(update={"use_complementarity": use_i, "use_transition": use_t})
            result = train(train_data, variant, encoder=encoder, scaler=scaler)
            _, preds = infer_labels(result.model, encoder, test_data.X, variant, scaler=scaler)
            accs[name].append(accuracy(preds, test_data.truth))
            logger.info("seed %d %s: accuracy=%.4f", seed, name, accs[name][-1])

    rows = [
        AblationRow(
            variant=name,
            use_complementarity=flags[0],
            use_transition=flags[1],
            accuracies=accs[name],
            mean=float(np.mean(accs[name])),
            std=float(np.std(accs[name])),
        )
        for name, flags in ABLATION_VARIANTS.items()
    ]
    return AblationReport(seeds=[int(s) for s in seeds], rows=rows)


# =============================================================================
# Checkpoints
# =============================================================================

def _scaler_tensors(scaler: Optional[StandardScaler]) -> Dict[str, np.ndarray]:
    if scaler is None:
        return {}
    return {"scaler.mean": scaler.mean_, "scaler.scale": scaler.scale_}


def _scaler_from(tensors: Dict[str, np.ndarray]) -> Optional[StandardScaler]:
    if "scaler.mean" not in tensors:
        return None
    return scaler_from_arrays(tensors["scaler.mean"], tensors["scaler.scale"])


def _prefixed(prefix: str, tensors: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {f"{prefix}.{name}": arr for name, arr in tensors.items()}


def _unprefixed(prefix: str, tensors: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    cut = len(prefix) + 1
    return {name[cut:]: arr for name, arr in tensors.items() if name.startswith(prefix + ".")}


def save_encoder(path: Union[str, Path], encoder: EncoderPrior, scaler: Optional[StandardScaler] = None) -> Path:
    tensors = {**_prefixed("encoder", encoder.state_dict()), **_scaler_tensors(scaler)}
    return save_checkpoint(path, tensors, {"kind": "encoder", "encoder": encoder.config()})


def load_encoder(path: Union[str, Path]) -> Tuple[EncoderPrior, Optional[StandardScaler]]:
    tensors, meta = load_checkpoint(path)
    if "encoder" not in meta:
        raise CheckpointError(f"{path} holds no encoder")
    encoder = EncoderPrior(**meta["encoder"])
    encoder.load_state_dict(_unprefixed("encoder", tensors))
    return encoder.freeze(), _scaler_from(tensors)


def save_run(path: Union[str, Path], result: TrainResult, cfg: TrainConfig) -> Path:
    """Noise model, encoder, scaler and label state in one checkpoint"""
    state = result.state
    tensors = {
        **_prefixed("noise", result.model.state_dict()),
        **_prefixed("encoder", result.encoder.state_dict()),
        **_scaler_tensors(result.scaler),
        "state.S": state.S,
        "state.S0_tilde": state.S0_tilde,
        "state.T": state.T_mat,
        "state.candidates": state.candidates,
    }
    meta = {
        "kind": "run",
        "noise": result.model.config(),
        "encoder": result.encoder.config(),
        "epoch": state.epoch,
        "config": cfg.model_dump(),
    }
    return save_checkpoint(path, tensors, meta)


def load_run(path: Union[str, Path]) -> Tuple[TrainResult, Dict]:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "run":
        raise CheckpointError(f"{path} is not a training run checkpoint")

    model = NoiseModel(**meta["noise"])
    model.load_state_dict(_unprefixed("noise", tensors))
    encoder = EncoderPrior(**meta["encoder"])
    encoder.load_state_dict(_unprefixed("encoder", tensors))
    state = LabelState(
        S=tensors["state.S"],
        S0_tilde=tensors["state.S0_tilde"],
        T_mat=tensors["state.T"],
        candidates=tensors["state.candidates"],
        epoch=int(meta.get("epoch", 0)),
    )
    result = TrainResult(model=model, encoder=encoder.freeze(), state=state, scaler=_scaler_from(tensors))
    return result, meta
