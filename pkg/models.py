from typing import Any, Dict, NamedTuple

import numpy as np
from scipy.special import softmax

from errors import ConfigError, ShapeError
from services.numkit import (
    BatchNorm,
    CrossAttention,
    Linear,
    Network,
    Softplus,
    check_finite,
    sinusoidal_embed,
)


class NoiseInputs(NamedTuple):
    """Inputs of the noise network for a batch of B instances"""
    s_t: np.ndarray     # (B, Q) noised label vectors
    x: np.ndarray       # (B, d) instance features
    prior: np.ndarray   # (B, Q) prior means f_phi(x)
    t: np.ndarray       # (B,) integer timesteps in 1..T


class EncoderPrior(Network):
    """
    Prior classifier f_phi: features -> probability vector over Q classes

    One Softplus hidden layer; `forward` returns logits, `predict_proba` the
    softmax output used as the diffusion prior mean.
    """

    def __init__(self, n_features: int, n_classes: int, hidden: int = 128, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.n_features = n_features
        self.n_classes = n_classes
        self.hidden = hidden
        self.frozen = False

        self.add("fc1", Linear(n_features, hidden, rng))
        self.add("act", Softplus())
        self.add("fc2", Linear(hidden, n_classes, rng))

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ShapeError(f"encoder expects (N, {self.n_features}) features, got {x.shape}")
        h = check_finite(self.layers["fc1"].forward(x, training), "encoder.fc1")
        h = self.layers["act"].forward(h, training)
        return check_finite(self.layers["fc2"].forward(h, training), "encoder.fc2")

    def backward(self, grad_out: np.ndarray) -> None:
        if self.frozen:
            raise ConfigError("the prior encoder is frozen and takes no gradient updates")
        g = self.layers["fc2"].backward(grad_out)
        g = self.layers["act"].backward(g)
        self.layers["fc1"].backward(g)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x, training=False), axis=1)

    def freeze(self) -> "EncoderPrior":
        self.frozen = True
        return self

    def config(self) -> Dict[str, Any]:
        return {"n_features": self.n_features, "n_classes": self.n_classes, "hidden": self.hidden}


class NoiseModel(Network):
    """
    Noise predictor eps_theta(S_t, x, f_phi, t)

    Layout:
      instance encoder  x -> Softplus(Linear) -> n_tokens tokens
      label encoder     [S_t, f_phi] -> Softplus(Linear) -> n_tokens tokens
      instance-guided attention: instance tokens query label tokens (residual)
      label-guided attention:    label tokens query instance tokens (residual)
      fusion: Hadamard product of the two flattened streams plus a projected
              sinusoidal time embedding
      ff_blocks x (Linear -> BatchNorm -> Softplus), then Linear -> Q
    """

    def __init__(self, n_features: int, n_classes: int, hidden: int = 128, time_dim: int = 64,
                 n_tokens: int = 4, ff_blocks: int = 2, seed: int = 0):
        super().__init__()
        if hidden % n_tokens:
            raise ShapeError(f"hidden width {hidden} is not divisible by {n_tokens} tokens")
        if time_dim % 2:
            raise ShapeError(f"time embedding dimension must be even, got {time_dim}")

        rng = np.random.default_rng(seed)
        self.n_features = n_features
        self.n_classes = n_classes
        self.hidden = hidden
        self.time_dim = time_dim
        self.n_tokens = n_tokens
        self.ff_blocks = ff_blocks
        self.token_dim = hidden // n_tokens

        self.add("inst_enc", Linear(n_features, hidden, rng))
        self.add("inst_act", Softplus())
        self.add("label_enc", Linear(2 * n_classes, hidden, rng))
        self.add("label_act", Softplus())
        self.add("inst_attn", CrossAttention(self.token_dim, rng))
        self.add("label_attn", CrossAttention(self.token_dim, rng))
        self.add("time_proj", Linear(time_dim, hidden, rng))
        for i in range(ff_blocks):
            self.add(f"ff{i}", Linear(hidden, hidden, rng))
            self.add(f"bn{i}", BatchNorm(hidden))
            self.add(f"act{i}", Softplus())
        self.add("out", Linear(hidden, n_classes, rng))

        self._fused_parts = None

    def _tokens(self, h: np.ndarray) -> np.ndarray:
        return h.reshape(h.shape[0], self.n_tokens, self.token_dim)

    def forward(self, inputs: NoiseInputs, training: bool = False) -> np.ndarray:
        s_t, x, prior, t = inputs
        n = s_t.shape[0]
        if x.shape != (n, self.n_features) or prior.shape != (n, self.n_classes) \
                or s_t.shape != (n, self.n_classes):
            raise ShapeError(
                f"noise model expects s_t/prior (B, {self.n_classes}) and x (B, {self.n_features}); "
                f"got {s_t.shape}, {prior.shape}, {x.shape}"
            )
        L = self.layers

        inst = L["inst_act"].forward(L["inst_enc"].forward(x, training), training)
        inst = self._tokens(check_finite(inst, "inst_enc"))
        label_in = np.concatenate([s_t, prior], axis=1)
        label = L["label_act"].forward(L["label_enc"].forward(label_in, training), training)
        label = self._tokens(check_finite(label, "label_enc"))

        a = inst + L["inst_attn"].forward(inst, label, training)
        b = label + L["label_attn"].forward(label, inst, training)
        a = check_finite(a, "inst_attn").reshape(n, self.hidden)
        b = check_finite(b, "label_attn").reshape(n, self.hidden)

        temb = sinusoidal_embed(np.asarray(t).reshape(n), self.time_dim)
        h = a * b + L["time_proj"].forward(temb, training)
        self._fused_parts = (a, b)

        for i in range(self.ff_blocks):
            h = L[f"ff{i}"].forward(h, training)
            h = L[f"bn{i}"].forward(h, training)
            h = check_finite(L[f"act{i}"].forward(h, training), f"ff{i}")
        return check_finite(L["out"].forward(h, training), "out")

    def backward(self, grad_out: np.ndarray) -> None:
        L = self.layers
        n = grad_out.shape[0]

        g = L["out"].backward(grad_out)
        for i in reversed(range(self.ff_blocks)):
            g = L[f"act{i}"].backward(g)
            g = L[f"bn{i}"].backward(g)
            g = L[f"ff{i}"].backward(g)

        L["time_proj"].backward(g)
        a, b = self._fused_parts
        g_a = self._tokens(g * b)
        g_b = self._tokens(g * a)

        # residual branches: a = inst + attn(inst, label), b = label + attn(label, inst)
        g_inst_q, g_label_kv = L["inst_attn"].backward(g_a)
        g_label_q, g_inst_kv = L["label_attn"].backward(g_b)
        g_inst = (g_a + g_inst_q + g_inst_kv).reshape(n, self.hidden)
        g_label = (g_b + g_label_q + g_label_kv).reshape(n, self.hidden)

        L["inst_enc"].backward(L["inst_act"].backward(g_inst))
        L["label_enc"].backward(L["label_act"].backward(g_label))

    def predict_noise(self, s_t: np.ndarray, x: np.ndarray, prior: np.ndarray, t) -> np.ndarray:
        """Inference-mode eps_theta for a batch; t is a scalar or a (B,) array"""
        t_arr = np.broadcast_to(np.asarray(t), (s_t.shape[0],))
        return self.forward(NoiseInputs(s_t, x, prior, t_arr), training=False)

    def config(self) -> Dict[str, Any]:
        return {
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "hidden": self.hidden,
            "time_dim": self.time_dim,
            "n_tokens": self.n_tokens,
            "ff_blocks": self.ff_blocks,
        }
