"""
Oracles and stubs shared by the test suite
"""
from typing import Callable, Optional

import numpy as np

from config import TrainConfig
from services.data import make_blobs, partialize


def small_config(**overrides) -> TrainConfig:
    values = dict(
        epochs=3,
        batch_size=16,
        timesteps=50,
        trajectory_length=5,
        k=5,
        hidden_dim=16,
        time_dim=8,
        n_tokens=2,
        ff_blocks=1,
        encoder_hidden=16,
        encoder_epochs=5,
        n_draws=2,
        folds=3,
        warmup_epochs=0,
    )
    values.update(overrides)
    return TrainConfig(**values)


def blob_dataset(n: int = 60, n_classes: int = 3, dim: int = 4, separation: float = 8.0,
                 q: float = 0.3, seed: int = 0):
    return partialize(make_blobs(n, n_classes, dim, separation, seed), q, seed + 1)


def numeric_grad(f: Callable[[], float], arr: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of f with respect to every entry of arr (perturbed in place)"""
    grad = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        original = arr[idx]
        arr[idx] = original + step
        plus = f()
        arr[idx] = original - step
        minus = f()
        arr[idx] = original
        grad[idx] = (plus - minus) / (2 * step)
    return grad


def assert_grad_close(analytic: np.ndarray, numeric: np.ndarray, name: str = "",
                      rtol: float = 1e-4, atol: float = 1e-6) -> None:
    """Entrywise check, so one wrong small entry is not hidden by large correct ones"""
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol, err_msg=name)


def randomize(net, rng: np.random.Generator, std: float = 0.5) -> None:
    """Overwrite every parameter with N(0, std^2) draws"""
    for arr in net.parameters().values():
        arr[...] = rng.normal(0.0, std, size=arr.shape)


class ZeroRng:
    """Generator stand-in whose normal draws are all zero"""

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)

    def standard_normal(self, size=None):
        return np.zeros(size)

    def integers(self, low, high=None, size=None):
        return self._rng.integers(low, high, size=size)

    def permutation(self, n):
        return self._rng.permutation(n)


class PerfectNoiseModel:
    """
    Returns the noise that maps the current S_t exactly back onto `target`

    `target` is a single label vector or one row per instance. Counts calls.
    """

    def __init__(self, target: np.ndarray, sched):
        self.target = np.asarray(target, dtype=np.float64)
        self.sched = sched
        self.calls = 0

    def predict_noise(self, s_t, x, prior, t):
        self.calls += 1
        ab = self.sched.abar(np.broadcast_to(np.asarray(t), (s_t.shape[0],)))[:, None]
        sqrt_ab = np.sqrt(ab)
        return (s_t - sqrt_ab * self.target - (1.0 - sqrt_ab) * prior) / np.sqrt(1.0 - ab)


class ConstantNoiseModel:
    """Predicts a fixed value for every item; records the inputs it saw"""

    def __init__(self, value: float = 0.0):
        self.value = value
        self.calls = 0
        self.seen_t: Optional[np.ndarray] = None

    def predict_noise(self, s_t, x, prior, t):
        self.calls += 1
        self.seen_t = np.asarray(t)
        return np.full_like(s_t, self.value)


class UniformEncoder:
    """Prior that is uniform over Q classes for every instance"""

    def __init__(self, n_classes: int):
        self.n_classes = n_classes

    def predict_proba(self, X):
        X = np.asarray(X)
        return np.full((X.shape[0], self.n_classes), 1.0 / self.n_classes)
