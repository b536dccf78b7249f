"""
Conditional label diffusion with a non-zero prior mean

The forward process drifts a label vector S_0 towards the prior mean f_phi(x):

    S_t = sqrt(abar_t) S_0 + (1 - sqrt(abar_t)) f_phi + sqrt(1 - abar_t) eps

Timesteps run 1..T; abar_0 is 1. Every function accepts a single vector with
a scalar t or a (B, Q) batch with a (B,) array of timesteps.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ConfigError, NumericError, ShapeError
from models import NoiseInputs
from services.numkit import forward_backward

Timestep = Union[int, np.ndarray]


@dataclass(frozen=True)
class DiffusionSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_tilde: np.ndarray

    @property
    def T(self) -> int:
        return int(self.beta.shape[0])

    def abar(self, t: Timestep) -> np.ndarray:
        """abar_t with abar_0 = 1"""
        t_arr = np.asarray(t)
        padded = np.concatenate([[1.0], self.alpha_bar])
        return padded[t_arr]

    def check_t(self, t: Timestep, lowest: int = 1) -> None:
        t_arr = np.asarray(t)
        if np.any(t_arr < lowest) or np.any(t_arr > self.T):
            raise ValueError(f"timestep out of range {lowest}..{self.T}: {t}")


@dataclass
class NoisedLabel:
    t: Timestep
    value: np.ndarray


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    """Linear beta schedule with derived alpha, abar and posterior variance arrays"""
    if T < 1:
        raise ConfigError(f"--timesteps: must be at least 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(
            f"--beta-start/--beta-end: need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )

    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    beta_tilde = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta

    for arr in (beta, alpha, alpha_bar, beta_tilde):
        arr.setflags(write=False)
    return DiffusionSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar, beta_tilde=beta_tilde)


def make_trajectory(T: int, length: int) -> List[int]:
    """Evenly spaced descending timesteps in 1..T, always ending at 1"""
    if length < 1:
        raise ConfigError(f"--trajectory-length: must be at least 1, got {length}")
    length = min(length, T)
    if length == 1:
        return [T]
    steps = np.round(np.linspace(T, 1, length)).astype(int)
    return [int(s) for s in dict.fromkeys(steps.tolist())]


def _col(coef: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Broadcast per-item coefficients against (B, Q) values"""
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim == 1 and like.ndim == 2:
        return coef[:, None]
    return coef


def forward_sample(s0: np.ndarray, prior: np.ndarray, t: Timestep, noise: np.ndarray,
                   sched: DiffusionSchedule) -> NoisedLabel:
    """Closed-form draw of S_t given S_0 (noise is supplied by the caller)"""
    if s0.shape != prior.shape or s0.shape != noise.shape:
        raise ShapeError(f"s0 {s0.shape}, prior {prior.shape} and noise {noise.shape} must match")
    sched.check_t(t)

    ab = _col(sched.abar(t), s0)
    sqrt_ab = np.sqrt(ab)
    value = sqrt_ab * s0 + (1.0 - sqrt_ab) * prior + np.sqrt(1.0 - ab) * noise
    return NoisedLabel(t=t, value=value)


def forward_step(s_prev: np.ndarray, prior: np.ndarray, t: Timestep, noise: np.ndarray,
                 sched: DiffusionSchedule) -> NoisedLabel:
    """One Markov step q(S_t | S_{t-1}) of the forward chain"""
    sched.check_t(t)
    a = _col(sched.alpha[np.asarray(t) - 1], s_prev)
    b = _col(sched.beta[np.asarray(t) - 1], s_prev)
    value = np.sqrt(a) * s_prev + (1.0 - np.sqrt(a)) * prior + np.sqrt(b) * noise
    return NoisedLabel(t=t, value=value)


def predict_s0(st: NoisedLabel, prior: np.ndarray, eps_hat: np.ndarray,
               sched: DiffusionSchedule) -> np.ndarray:
    """Invert the closed form for S_0 given a noise estimate"""
    sched.check_t(st.t)
    ab = _col(sched.abar(st.t), st.value)
    if np.any(ab <= 0):
        raise NumericError("cumulative alpha is not positive", stage="predict_s0")

    sqrt_ab = np.sqrt(ab)
    return (st.value - (1.0 - sqrt_ab) * prior - np.sqrt(1.0 - ab) * eps_hat) / sqrt_ab


def posterior_coefficients(sched: DiffusionSchedule, t: Timestep,
                           t_prev: Optional[Timestep] = None) -> Tuple[np.ndarray, ...]:
    """
    Coefficients of q(S_{t'} | S_t, S_0) for t' < t (default t' = t - 1)

    Returns (gamma0, gamma1, gamma2, variance): mean = gamma0 S_0 + gamma1 S_t
    + gamma2 f_phi. Skipping uses alpha_{t|t'} = abar_t / abar_t' in place of alpha_t.
    """
    t_arr = np.asarray(t)
    tp = t_arr - 1 if t_prev is None else np.asarray(t_prev)
    if np.any(tp < 0) or np.any(tp >= t_arr):
        raise ValueError(f"previous timestep must lie in 0..t-1, got {t_prev} for t={t}")

    ab_t = sched.abar(t_arr)
    ab_p = sched.abar(tp)
    a = ab_t / ab_p
    b = 1.0 - a
    denom = 1.0 - ab_t

    gamma0 = b * np.sqrt(ab_p) / denom
    gamma1 = (1.0 - ab_p) * np.sqrt(a) / denom
    gamma2 = 1.0 + (np.sqrt(ab_t) - 1.0) * (np.sqrt(a) + np.sqrt(ab_p)) / denom
    variance = (1.0 - ab_p) / denom * b
    return gamma0, gamma1, gamma2, variance


def posterior_step(st: NoisedLabel, s0_hat: np.ndarray, prior: np.ndarray, sched: DiffusionSchedule,
                   noise: np.ndarray, t_prev: Optional[Timestep] = None) -> NoisedLabel:
    """Draw S_{t'} from the forward posterior, with S_0 replaced by its estimate"""
    if np.any(np.asarray(st.t) < 1):
        raise ValueError("cannot step back from t=0")
    sched.check_t(st.t)

    tp = np.asarray(st.t) - 1 if t_prev is None else np.asarray(t_prev)
    g0, g1, g2, var = posterior_coefficients(sched, st.t, tp)
    like = st.value
    value = (_col(g0, like) * s0_hat + _col(g1, like) * st.value + _col(g2, like) * prior
             + np.sqrt(_col(var, like)) * noise)
    t_out = int(tp) if np.ndim(tp) == 0 else tp
    return NoisedLabel(t=t_out, value=value)


def sample_reverse(model, x_features: np.ndarray, prior: np.ndarray, sched: DiffusionSchedule,
                   trajectory: Sequence[int], rng, clip: Tuple[float, float] = (-1.0, 2.0)) -> np.ndarray:
    """
    Skip-step reverse sampling along a descending trajectory ending at 1

    A single-step trajectory [t] is a lone S_0 prediction from prior noise at t.

    Starts from S ~ N(prior, I) and makes exactly one `model.predict_noise` call
    per trajectory step. Each S_0 estimate is clipped to `clip` before jumping
    to the next step; the estimate at the last step is returned.
    One Q-vector of noise per step is shared by every row, so identical rows
    get identical samples.
    """
    trajectory = [int(t) for t in trajectory]
    if not trajectory:
        raise ValueError("trajectory must not be empty")
    if (len(trajectory) > 1 and trajectory[-1] != 1) or any(a <= b for a, b in zip(trajectory, trajectory[1:])):
        raise ValueError(f"trajectory must be strictly decreasing and end at 1: {trajectory}")
    sched.check_t(trajectory[0])
    sched.check_t(trajectory[-1])

    prior = np.asarray(prior, dtype=np.float64)
    single = prior.ndim == 1
    if single:
        prior = prior[None, :]
        x_features = np.asarray(x_features, dtype=np.float64)[None, :]

    s = prior + rng.standard_normal(size=prior.shape[1])
    s0_hat = s
    for i, t in enumerate(trajectory):
        t_batch = np.full(prior.shape[0], t)
        eps_hat = model.predict_noise(s, x_features, prior, t_batch)
        s0_hat = predict_s0(NoisedLabel(t=t_batch, value=s), prior, eps_hat, sched)
        s0_hat = np.clip(s0_hat, clip[0], clip[1])
        if i + 1 < len(trajectory):
            t_next = trajectory[i + 1]
            noise = np.broadcast_to(rng.standard_normal(size=prior.shape[1]), prior.shape)
            s = posterior_step(NoisedLabel(t=t_batch, value=s), s0_hat, prior, sched, noise,
                               t_prev=np.full(prior.shape[0], t_next)).value

    return s0_hat[0] if single else s0_hat


def diffusion_loss(model, batch: Tuple[np.ndarray, np.ndarray, np.ndarray], sched: DiffusionSchedule,
                   rng, t: Optional[np.ndarray] = None, noise: Optional[np.ndarray] = None):
    """
    Noise-matching loss ||eps - eps_theta(S_t, x, f_phi, t)||^2 averaged over the batch

    t is drawn uniformly from 1..T and eps from N(0, I) per item unless given.
    Returns (loss, gradients).
    """
    x, s0, prior = batch
    n = s0.shape[0]
    if n == 0:
        raise ValueError("batch must not be empty")

    if t is None:
        t = rng.integers(1, sched.T + 1, size=n)
    if noise is None:
        noise = rng.standard_normal(size=s0.shape)

    st = forward_sample(s0, prior, t, noise, sched)
    return forward_backward(model, NoiseInputs(st.value, x, prior, np.asarray(t)), noise)
