"""
Dense numerics for the diffusion and prior networks

Everything is 64-bit numpy. Layers cache what they need in `forward` and
accumulate parameter gradients in `backward`, which returns the gradient with
respect to the layer input. Networks compose layers by hand and expose their
parameters as a flat `name -> array` mapping that the optimizer updates in place.
"""
import json
import math
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import expit, softmax

from errors import CheckpointError, NumericError, ShapeError

# Row-major float64 array of shape (rows, cols); vectors are 1-D arrays
Matrix = np.ndarray

CHECKPOINT_FORMAT = "DDMP-CKPT-1"


def check_finite(arr: np.ndarray, stage: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError("non-finite activations", stage=stage)
    return arr


def sinusoidal_embed(t, dim: int) -> np.ndarray:
    """
    Sinusoidal timestep embedding

    Entry 2i is sin(t / 10000^(2i/dim)) and entry 2i+1 the matching cosine.
    A scalar t gives a (dim,) vector, an array of B timesteps gives (B, dim).
    """
    if dim <= 0 or dim % 2:
        raise ShapeError(f"embedding dimension must be a positive even number, got {dim}")

    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ValueError("timestep must be non-negative")

    freqs = np.power(10000.0, np.arange(0, dim, 2, dtype=np.float64) / dim)
    angles = t_arr[..., None] / freqs
    out = np.empty(t_arr.shape + (dim,), dtype=np.float64)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def attention_weights(queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Row-stochastic softmax(QK^T / sqrt(h)) for 2-D or batched 3-D inputs"""
    if queries.shape[-1] != keys.shape[-1]:
        raise ShapeError(
            f"query width {queries.shape[-1]} does not match key width {keys.shape[-1]}"
        )
    scale = 1.0 / math.sqrt(queries.shape[-1])
    scores = queries @ np.swapaxes(keys, -1, -2) * scale
    return softmax(scores, axis=-1)


def cross_attention(queries: Matrix, keys: Matrix, values: Matrix) -> Matrix:
    """
    Scaled dot-product attention softmax(QK^T / sqrt(h)) V

    Each output row is a convex combination of the value rows.
    """
    queries = np.asarray(queries, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if keys.shape[:-1] != values.shape[:-1]:
        raise ShapeError(f"keys {keys.shape} and values {values.shape} disagree on length")
    return attention_weights(queries, keys) @ values


# =============================================================================
# Layers
# =============================================================================

class Layer:
    """Base layer: parameters, their gradients and non-trainable buffers"""

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}

    def zero_grad(self) -> None:
        for key, value in self.params.items():
            self.grads[key] = np.zeros_like(value)

    def _accumulate(self, key: str, grad: np.ndarray) -> None:
        if key not in self.grads:
            self.grads[key] = np.zeros_like(self.params[key])
        self.grads[key] += grad


class Linear(Layer):
    """y = x W + b over the last axis; any number of leading axes"""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, scale: Optional[float] = None):
        super().__init__()
        scale = scale if scale is not None else 1.0 / math.sqrt(n_in)
        self.params["W"] = rng.normal(0.0, scale, size=(n_in, n_out))
        self.params["b"] = np.zeros(n_out)
        self._x: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        W = self.params["W"]
        if x.shape[-1] != W.shape[0]:
            raise ShapeError(f"linear layer expects width {W.shape[0]}, got {x.shape[-1]}")
        self._x = x
        return x @ W + self.params["b"]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        W = self.params["W"]
        x2 = self._x.reshape(-1, W.shape[0])
        g2 = grad_out.reshape(-1, W.shape[1])
        self._accumulate("W", x2.T @ g2)
        self._accumulate("b", g2.sum(axis=0))
        return grad_out @ W.T


class Softplus(Layer):
    """log(1 + e^x)"""

    def __init__(self):
        super().__init__()
        self._x: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._x = x
        return np.logaddexp(0.0, x)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out * expit(self._x)


class BatchNorm(Layer):
    """
    Batch normalization over the batch axis of (B, dim) inputs

    Training mode normalizes with batch statistics and updates the running
    statistics; inference mode is a fixed affine map of the running statistics.
    """

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(dim)
        self.params["beta"] = np.zeros(dim)
        self.buffers["running_mean"] = np.zeros(dim)
        self.buffers["running_var"] = np.ones(dim)
        self._cache: Optional[Tuple[np.ndarray, np.ndarray, bool]] = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.params["gamma"].shape[0]:
            raise ShapeError(f"batch norm expects (B, {self.params['gamma'].shape[0]}), got {x.shape}")

        if training:
            n = x.shape[0]
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            unbiased = var * n / (n - 1) if n > 1 else var
            m = self.momentum
            self.buffers["running_mean"] *= 1.0 - m
            self.buffers["running_mean"] += m * mean
            self.buffers["running_var"] *= 1.0 - m
            self.buffers["running_var"] += m * unbiased
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]

        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        self._cache = (x_hat, inv_std, training)
        return self.params["gamma"] * x_hat + self.params["beta"]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x_hat, inv_std, training = self._cache
        gamma = self.params["gamma"]
        self._accumulate("gamma", (grad_out * x_hat).sum(axis=0))
        self._accumulate("beta", grad_out.sum(axis=0))

        d_xhat = grad_out * gamma
        if not training:
            return d_xhat * inv_std

        n = grad_out.shape[0]
        return (inv_std / n) * (
            n * d_xhat - d_xhat.sum(axis=0) - x_hat * (d_xhat * x_hat).sum(axis=0)
        )


class CrossAttention(Layer):
    """
    Single-head cross attention with query/key/value/output projections

    Inputs are token tensors: queries (B, n, dim) attend over context (B, m, dim).
    """

    def __init__(self, dim: int, rng: np.random.Generator):
        super().__init__()
        scale = 1.0 / math.sqrt(dim)
        for name in ("Wq", "Wk", "Wv", "Wo"):
            self.params[name] = rng.normal(0.0, scale, size=(dim, dim))
        self._cache = None

    def forward(self, x_q: np.ndarray, x_kv: np.ndarray, training: bool = False) -> np.ndarray:
        p = self.params
        q = x_q @ p["Wq"]
        k = x_kv @ p["Wk"]
        v = x_kv @ p["Wv"]
        weights = attention_weights(q, k)
        o = weights @ v
        self._cache = (x_q, x_kv, q, k, v, weights, o)
        return o @ p["Wo"]

    def backward(self, grad_out: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x_q, x_kv, q, k, v, weights, o = self._cache
        p = self.params
        dim = p["Wq"].shape[0]

        self._accumulate("Wo", o.reshape(-1, dim).T @ grad_out.reshape(-1, dim))
        d_o = grad_out @ p["Wo"].T

        d_weights = d_o @ np.swapaxes(v, -1, -2)
        d_v = np.swapaxes(weights, -1, -2) @ d_o
        # softmax backward, then the 1/sqrt(dim) score scale
        d_scores = weights * (d_weights - (weights * d_weights).sum(axis=-1, keepdims=True))
        d_scores /= math.sqrt(dim)
        d_q = d_scores @ k
        d_k = np.swapaxes(d_scores, -1, -2) @ q

        self._accumulate("Wq", x_q.reshape(-1, dim).T @ d_q.reshape(-1, dim))
        self._accumulate("Wk", x_kv.reshape(-1, dim).T @ d_k.reshape(-1, dim))
        self._accumulate("Wv", x_kv.reshape(-1, dim).T @ d_v.reshape(-1, dim))

        d_xq = d_q @ p["Wq"].T
        d_xkv = d_k @ p["Wk"].T + d_v @ p["Wv"].T
        return d_xq, d_xkv


# =============================================================================
# Networks
# =============================================================================

class Network:
    """
    A named collection of layers

    Subclasses register layers in `self.layers` and implement `forward` and
    `backward`. Parameter names are `<layer>.<param>`.
    """

    def __init__(self):
        self.layers: Dict[str, Layer] = {}

    def add(self, name: str, layer: Layer) -> Layer:
        self.layers[name] = layer
        return layer

    def parameters(self) -> Dict[str, np.ndarray]:
        return {
            f"{lname}.{pname}": arr
            for lname, layer in self.layers.items()
            for pname, arr in layer.params.items()
        }

    def gradients(self) -> Dict[str, np.ndarray]:
        grads = {}
        for lname, layer in self.layers.items():
            for pname, arr in layer.params.items():
                grads[f"{lname}.{pname}"] = layer.grads.get(pname, np.zeros_like(arr))
        return grads

    def buffers(self) -> Dict[str, np.ndarray]:
        return {
            f"{lname}.{bname}": arr
            for lname, layer in self.layers.items()
            for bname, arr in layer.buffers.items()
        }

    def zero_grad(self) -> None:
        for layer in self.layers.values():
            layer.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: arr.copy() for name, arr in self.parameters().items()}
        state.update({name: arr.copy() for name, arr in self.buffers().items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        targets = {**self.parameters(), **self.buffers()}
        missing = sorted(set(targets) - set(state))
        if missing:
            raise CheckpointError(f"checkpoint is missing tensors: {', '.join(missing)}")
        for name, arr in targets.items():
            src = np.asarray(state[name], dtype=np.float64)
            if src.shape != arr.shape:
                raise CheckpointError(f"tensor '{name}' has shape {src.shape}, expected {arr.shape}")
            arr[...] = src

    def forward(self, inputs, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> None:
        raise NotImplementedError


# =============================================================================
# Losses
# =============================================================================

LossFn = Callable[[np.ndarray, np.ndarray], Tuple[float, np.ndarray]]


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Squared L2 error per row, averaged over rows; returns (loss, dloss/dpred)"""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    n = pred.shape[0]
    diff = pred - target
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Cross-entropy against soft target rows, averaged over rows"""
    if logits.shape != targets.shape:
        raise ShapeError(f"logits {logits.shape} and targets {targets.shape} differ")
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -float(np.sum(targets * log_probs) / n)
    return loss, (np.exp(log_probs) - targets) / n


def forward_backward(net: Network, inputs, target: np.ndarray,
                     loss_fn: LossFn = mse_loss) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    One training-mode pass: loss value and gradients for every parameter

    Raises NumericError naming the stage when activations or the loss go non-finite.
    """
    net.zero_grad()
    pred = net.forward(inputs, training=True)
    loss, grad = loss_fn(pred, target)
    if not math.isfinite(loss):
        raise NumericError("non-finite loss", stage="loss")
    net.backward(grad)
    return loss, net.gradients()


# =============================================================================
# Optimizer
# =============================================================================

class OptimState:
    """Adam moments and step counter"""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}


class Adam:
    """Adaptive-moment optimizer with bias correction; updates parameters in place"""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.state = OptimState(lr, beta1, beta2, eps)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        s = self.state
        for name, p in params.items():
            g = grads.get(name)
            if g is None or g.shape != p.shape:
                got = None if g is None else g.shape
                raise ShapeError(f"gradient for '{name}' has shape {got}, expected {p.shape}")

        s.step += 1
        bc1 = 1.0 - s.beta1 ** s.step
        bc2 = 1.0 - s.beta2 ** s.step
        for name, p in params.items():
            g = grads[name]
            m = s.m.setdefault(name, np.zeros_like(p))
            v = s.v.setdefault(name, np.zeros_like(p))
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * g * g
            p -= s.lr * (m / bc1) / (np.sqrt(v / bc2) + s.eps)
        return params


def optimizer_step(opt: Adam, params: Dict[str, np.ndarray],
                   gradients: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return opt.step(params, gradients)


# =============================================================================
# Checkpoints
# =============================================================================

def save_checkpoint(path: Union[str, Path], tensors: Dict[str, np.ndarray],
                    meta: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write tensors to a version-tagged .npz container

    Each entry is stored under its name with its own shape; `__format__` holds
    the format tag and `__meta__` a JSON document.
    """
    path = Path(path)
    reserved = {"__format__", "__meta__"} & set(tensors)
    if reserved:
        raise CheckpointError(f"reserved tensor names: {', '.join(sorted(reserved))}")

    payload = {name: np.asarray(arr, dtype=np.float64) for name, arr in tensors.items()}
    payload["__format__"] = np.array(CHECKPOINT_FORMAT)
    payload["__meta__"] = np.array(json.dumps(meta or {}, sort_keys=True))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")

    with np.load(path, allow_pickle=False) as data:
        if "__format__" not in data.files or str(data["__format__"]) != CHECKPOINT_FORMAT:
            raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
        meta = json.loads(str(data["__meta__"]))
        tensors = {name: data[name] for name in data.files if not name.startswith("__")}
    return tensors, meta
