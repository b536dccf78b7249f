"""
Unit tests for the prior encoder and the noise network
"""
import numpy as np
import pytest

from errors import ConfigError, ShapeError
from models import EncoderPrior, NoiseInputs, NoiseModel
from services.numkit import forward_backward, mse_loss, softmax_cross_entropy
from tests.helpers import assert_grad_close, numeric_grad, randomize


def _noise_batch(rng, n=5, d=3, q=3):
    prior = rng.dirichlet(np.ones(q), size=n)
    return NoiseInputs(
        s_t=rng.normal(size=(n, q)),
        x=rng.normal(size=(n, d)),
        prior=prior,
        t=np.array([1, 4, 9, 20, 33][:n]),
    )


class TestEncoderPrior:
    """Test the prior classifier"""

    def test_outputs_are_probabilities(self, rng):
        """Rows are non-negative and sum to 1"""
        encoder = EncoderPrior(4, 3, hidden=8)
        probs = encoder.predict_proba(rng.normal(size=(6, 4)))
        assert probs.shape == (6, 3)
        assert np.all(probs >= 0)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_frozen_encoder_is_deterministic(self, rng):
        """Two calls on the same input return identical vectors"""
        encoder = EncoderPrior(4, 3, hidden=8).freeze()
        x = rng.normal(size=(2, 4))
        assert encoder.frozen
        assert np.array_equal(encoder.predict_proba(x), encoder.predict_proba(x))

    def test_frozen_encoder_rejects_training(self, rng):
        """No gradients flow into a frozen encoder"""
        encoder = EncoderPrior(4, 3, hidden=8).freeze()
        before = {k: v.copy() for k, v in encoder.parameters().items()}
        with pytest.raises(ConfigError):
            forward_backward(encoder, rng.normal(size=(2, 4)), np.full((2, 3), 1 / 3), softmax_cross_entropy)
        assert all(np.array_equal(before[k], v) for k, v in encoder.parameters().items())

    def test_wrong_feature_width(self, rng):
        """Feature width is checked"""
        with pytest.raises(ShapeError):
            EncoderPrior(4, 3).forward(rng.normal(size=(2, 5)))

    def test_gradients(self, rng):
        """Every encoder parameter passes the finite-difference check"""
        encoder = EncoderPrior(3, 4, hidden=6, seed=2)
        randomize(encoder, rng)
        x = rng.normal(size=(5, 3))
        targets = rng.dirichlet(np.ones(4), size=5)

        _, grads = forward_backward(encoder, x, targets, softmax_cross_entropy)
        loss = lambda: softmax_cross_entropy(encoder.forward(x, training=True), targets)[0]
        for name, param in encoder.parameters().items():
            assert_grad_close(grads[name], numeric_grad(loss, param), name)


class TestNoiseModel:
    """Test the conditional noise network"""

    def test_output_shape(self, rng):
        """One noise vector per instance"""
        model = NoiseModel(3, 3, hidden=8, time_dim=4, n_tokens=2, ff_blocks=1)
        batch = _noise_batch(rng)
        assert model.predict_noise(batch.s_t, batch.x, batch.prior, batch.t).shape == (5, 3)

    def test_scalar_timestep(self, rng):
        """A scalar t is broadcast over the batch"""
        model = NoiseModel(3, 3, hidden=8, time_dim=4, n_tokens=2, ff_blocks=1)
        batch = _noise_batch(rng)
        scalar = model.predict_noise(batch.s_t, batch.x, batch.prior, 7)
        array = model.predict_noise(batch.s_t, batch.x, batch.prior, np.full(5, 7))
        assert np.array_equal(scalar, array)

    def test_hidden_must_split_into_tokens(self):
        """hidden width not divisible by the token count is a shape error"""
        with pytest.raises(ShapeError):
            NoiseModel(3, 3, hidden=10, n_tokens=4)

    def test_input_shapes_checked(self, rng):
        """Mismatched label and feature widths are rejected"""
        model = NoiseModel(3, 3, hidden=8, time_dim=4, n_tokens=2, ff_blocks=1)
        batch = _noise_batch(rng)
        with pytest.raises(ShapeError):
            model.predict_noise(batch.s_t[:, :2], batch.x, batch.prior, batch.t)

    @pytest.mark.parametrize("ff_blocks", [1, 2])
    def test_gradients(self, rng, ff_blocks):
        """Every noise-network parameter passes the finite-difference check"""
        model = NoiseModel(3, 3, hidden=8, time_dim=4, n_tokens=2, ff_blocks=ff_blocks, seed=4)
        randomize(model, rng)
        for i in range(ff_blocks):
            model.layers[f"bn{i}"].params["gamma"][...] = rng.normal(1.0, 0.2, size=8)
        batch = _noise_batch(rng)
        target = rng.normal(size=(5, 3))

        _, grads = forward_backward(model, batch, target)
        loss = lambda: mse_loss(model.forward(batch, training=True), target)[0]
        for name, param in model.parameters().items():
            assert_grad_close(grads[name], numeric_grad(loss, param), name)

    def test_state_dict_includes_running_stats(self, rng):
        """Checkpoint state carries batch-norm buffers"""
        model = NoiseModel(3, 3, hidden=8, time_dim=4, n_tokens=2, ff_blocks=1)
        state = model.state_dict()
        assert "bn0.running_mean" in state
        assert "inst_attn.Wq" in state

    def test_config_rebuilds_same_architecture(self, rng):
        """A model built from config() loads the original weights"""
        model = NoiseModel(3, 3, hidden=8, time_dim=4, n_tokens=2, ff_blocks=1, seed=9)
        copy = NoiseModel(**model.config())
        copy.load_state_dict(model.state_dict())
        batch = _noise_batch(rng)
        assert np.array_equal(
            model.predict_noise(batch.s_t, batch.x, batch.prior, batch.t),
            copy.predict_noise(batch.s_t, batch.x, batch.prior, batch.t),
        )
