"""Tests for the numpy network core."""

import numpy as np
import pytest

from otdr_guard.errors import NonFiniteError, ShapeError
from otdr_guard.nn.functional import (
    Activation,
    relu,
    sigmoid,
    softmax,
    softmax_backward,
)
from otdr_guard.nn.gradcheck import numerical_gradient, relative_error
from otdr_guard.nn.layers import (
    AttentionParams,
    BiGruParams,
    DenseParams,
    GruLayerParams,
    attention_backward,
    attention_forward,
    bigru_backward,
    bigru_forward,
    bigru_forward_cached,
    dense_backward,
    dense_forward,
    dense_forward_cached,
    gru_cell_backward,
    gru_cell_forward,
    gru_sequence_backward,
    gru_sequence_forward,
    gru_sequence_forward_cached,
)
from otdr_guard.nn.losses import (
    batch_cross_entropy_loss,
    batch_mse_loss,
    combined_loss,
    combined_loss_backward,
    cross_entropy_backward,
    cross_entropy_loss,
    mse_backward,
    mse_loss,
)
from otdr_guard.nn.optim import Adam, AdamState, adam_step
from otdr_guard.nn.tensor import as_tensor

TOLERANCE = 1e-4


def assert_grad_close(analytic, f, x):
    numeric = numerical_gradient(f, x)
    assert relative_error(analytic, numeric) < TOLERANCE


def scalar_gru():
    """One-unit GRU whose only non-zero weight is W_h = 1."""
    zero = np.zeros((1, 1))
    return GruLayerParams(zero, zero, np.ones((1, 1)), zero, zero, zero,
                          np.zeros(1), np.zeros(1), np.zeros(1))


class TestActivations:
    """Activation functions."""

    def test_sigmoid_values(self):
        """sigmoid(0) is one half and saturates without overflow."""
        assert sigmoid(0.0) == pytest.approx(0.5)
        out = sigmoid(np.array([-1000.0, 1000.0]))
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(0.0)
        assert out[1] == pytest.approx(1.0)

    def test_sigmoid_of_log_three(self):
        """sigmoid(ln 3) is 1 / (1 + 1/3)."""
        assert sigmoid(np.log(3.0)) == pytest.approx(0.75, abs=1e-12)
        assert sigmoid(50.0) == pytest.approx(1.0, abs=1e-12)

    def test_softmax_known_values(self):
        """Analytic exponentials and large equal scores."""
        assert np.allclose(softmax(np.array([0.0, np.log(2.0)])), [1.0 / 3.0, 2.0 / 3.0])
        out = softmax(np.array([1000.0, 1000.0]))
        assert np.all(np.isfinite(out))
        assert np.allclose(out, [0.5, 0.5])

    def test_relu(self):
        """Negative entries are zeroed."""
        assert relu(np.array([-2.0, 0.0, 3.0])).tolist() == [0.0, 0.0, 3.0]

    def test_softmax_is_distribution(self):
        """Softmax sums to one and is shift invariant."""
        x = np.array([1.0, 2.0, 3.0])
        p = softmax(x)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(p, softmax(x + 1000.0))

    def test_softmax_uniform_on_equal_inputs(self):
        """Equal scores give equal weights."""
        assert np.allclose(softmax(np.zeros(4)), 0.25)

    def test_softmax_empty_rejected(self):
        """Softmax of an empty vector is an error."""
        with pytest.raises(ValueError):
            softmax(np.zeros(0))

    def test_non_finite_rejected(self):
        """NaN never enters an op silently."""
        with pytest.raises(NonFiniteError):
            as_tensor([1.0, np.nan])

    def test_softmax_backward(self):
        """Softmax vector-Jacobian product matches finite differences."""
        rng = np.random.default_rng(0)
        x = rng.normal(size=5)
        r = rng.normal(size=5)
        analytic = softmax_backward(r, softmax(x))
        assert_grad_close(analytic, lambda: float(np.sum(r * softmax(x))), x)


class TestDense:
    """Dense layer."""

    def test_forward_known_values(self):
        """Identity weights pass the input through."""
        params = DenseParams(np.eye(2), np.zeros(2))
        assert dense_forward(params, [1.0, 2.0]).tolist() == [1.0, 2.0]

    def test_shape_mismatch(self):
        """Wrong input width raises ShapeError."""
        params = DenseParams(np.eye(2), np.zeros(2))
        with pytest.raises(ShapeError):
            dense_forward(params, [1.0, 2.0, 3.0])

    @pytest.mark.parametrize("activation", [
        Activation.IDENTITY, Activation.TANH, Activation.SIGMOID, Activation.SOFTMAX,
    ])
    @pytest.mark.parametrize("seed", [0, 1])
    def test_gradients(self, activation, seed):
        """Weight, bias and input gradients match central differences."""
        rng = np.random.default_rng(seed)
        params = DenseParams.init(4, 3, rng)
        params.bias[:] = rng.normal(size=3)
        x = rng.normal(size=(2, 4))
        r = rng.normal(size=(2, 3))

        def f():
            return float(np.sum(r * dense_forward(params, x, activation)))

        _, cache = dense_forward_cached(params, x, activation)
        grads, dx = dense_backward(cache, r)
        assert_grad_close(grads.weight, f, params.weight)
        assert_grad_close(grads.bias, f, params.bias)
        assert_grad_close(dx, f, x)


class TestGru:
    """GRU cell, GRU sequence and BiGRU."""

    def test_zero_params_keep_zero_state(self):
        """All-zero parameters give h = 0.5 * h_prev."""
        params = GruLayerParams.zeros(2, 3)
        h, _ = gru_cell_forward(params, np.ones(2), np.full(3, 0.4))
        assert np.allclose(h, 0.2)

    def test_cell_known_value(self):
        """Only W_h = 1: z = r = 0.5, so h = 0.5 * tanh(1)."""
        h, _ = gru_cell_forward(scalar_gru(), [1.0], [0.0])
        assert h[0] == pytest.approx(0.380797, abs=1e-6)
        assert h[0] == pytest.approx(0.5 * np.tanh(1.0))

    def test_sequence_known_values(self):
        """Two steps of the same cell unroll by hand."""
        hs = gru_sequence_forward(scalar_gru(), np.array([[1.0], [1.0]]))
        h1 = 0.5 * np.tanh(1.0)
        assert hs[:, 0] == pytest.approx(np.array([h1, 0.5 * h1 + 0.5 * np.tanh(1.0)]))
        assert hs[1, 0] == pytest.approx(0.571196, abs=1e-6)

    def test_saturated_update_keeps_memory(self):
        """With b_z = 50 the update gate is 1 and the state is carried over."""
        rng = np.random.default_rng(8)
        params = GruLayerParams.init(2, 3, rng)
        params.b_z = np.full(3, 50.0)
        h_prev = rng.normal(size=3)
        h, _ = gru_cell_forward(params, rng.normal(size=2), h_prev)
        assert np.max(np.abs(h - h_prev)) < 1e-10

    def test_bigru_zero_backward_branch(self):
        """A zero backward GRU adds nothing to the forward outputs."""
        rng = np.random.default_rng(6)
        fwd = GruLayerParams.init(1, 3, rng)
        xs = rng.normal(size=(5, 1))
        out = bigru_forward(fwd, GruLayerParams.zeros(1, 3), xs)
        assert np.array_equal(out, gru_sequence_forward(fwd, xs))

    def test_bigru_palindrome(self):
        """Shared weights on a palindromic input give outputs symmetric in time."""
        rng = np.random.default_rng(7)
        params = GruLayerParams.init(1, 3, rng)
        xs = np.array([[0.2], [-1.0], [0.7], [-1.0], [0.2]])
        out = bigru_forward(params, params, xs)
        assert np.allclose(out, out[::-1])

    def test_sequence_shape_and_h0(self):
        """Outputs are [T, hidden]; h0 seeds the first step."""
        rng = np.random.default_rng(3)
        params = GruLayerParams.init(1, 4, rng)
        xs = rng.normal(size=(6, 1))
        hs = gru_sequence_forward(params, xs)
        assert hs.shape == (6, 4)
        h1, _ = gru_cell_forward(params, xs[0], np.zeros(4))
        assert np.allclose(hs[0], h1)
        assert not np.allclose(gru_sequence_forward(params, xs, h0=np.ones(4))[0], hs[0])

    def test_batched_matches_single(self):
        """A batch of sequences equals the sequences run one by one."""
        rng = np.random.default_rng(4)
        params = GruLayerParams.init(2, 3, rng)
        xs = rng.normal(size=(3, 5, 2))
        batched = gru_sequence_forward(params, xs)
        for b in range(3):
            assert np.allclose(batched[b], gru_sequence_forward(params, xs[b]))

    def test_bad_weight_shape(self):
        """Inconsistent gate matrices are rejected."""
        w = [np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 3))]
        u = [np.zeros((3, 3)) for _ in range(3)]
        b = [np.zeros(3) for _ in range(3)]
        with pytest.raises(ShapeError):
            GruLayerParams(*w, *u, *b)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_cell_gradients(self, seed):
        """Every cell gradient matches central differences."""
        rng = np.random.default_rng(seed)
        params = GruLayerParams.init(3, 4, rng)
        for name in ("b_z", "b_r", "b_h"):
            getattr(params, name)[:] = rng.normal(scale=0.3, size=4)
        x = rng.normal(size=3)
        h_prev = rng.normal(scale=0.5, size=4)
        r = rng.normal(size=4)

        def f():
            return float(np.sum(r * gru_cell_forward(params, x, h_prev)[0]))

        _, cache = gru_cell_forward(params, x, h_prev)
        grads, dx, dh = gru_cell_backward(cache, r)
        for name, analytic in grads.tensors().items():
            assert_grad_close(analytic, f, getattr(params, name))
        assert_grad_close(dx, f, x)
        assert_grad_close(dh, f, h_prev)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_sequence_gradients(self, seed):
        """BPTT gradients (parameters, inputs and h0) match central differences."""
        rng = np.random.default_rng(seed + 10)
        params = GruLayerParams.init(2, 3, rng)
        xs = rng.normal(size=(2, 5, 2))
        h0 = rng.normal(scale=0.5, size=(2, 3))
        r = rng.normal(size=(2, 5, 3))

        def f():
            return float(np.sum(r * gru_sequence_forward(params, xs, h0)))

        _, cache = gru_sequence_forward_cached(params, xs, h0)
        grads, d_xs, d_h0 = gru_sequence_backward(cache, r)
        for name, analytic in grads.tensors().items():
            assert_grad_close(analytic, f, getattr(params, name))
        assert_grad_close(d_xs, f, xs)
        assert_grad_close(d_h0, f, h0)

    def test_bigru_sums_directions(self):
        """BiGRU output is the forward pass plus the time-realigned reversed pass."""
        rng = np.random.default_rng(5)
        params = BiGruParams.init(1, 3, rng)
        xs = rng.normal(size=(4, 1))
        expected = gru_sequence_forward(params.fwd, xs) + gru_sequence_forward(params.bwd, xs[::-1])[::-1]
        assert np.allclose(bigru_forward(params.fwd, params.bwd, xs), expected)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_bigru_gradients(self, seed):
        """BiGRU gradients match central differences."""
        rng = np.random.default_rng(seed + 20)
        params = BiGruParams.init(2, 3, rng)
        xs = rng.normal(size=(4, 2))
        r = rng.normal(size=(4, 3))

        def f():
            return float(np.sum(r * bigru_forward_cached(params, xs)[0]))

        _, cache = bigru_forward_cached(params, xs)
        grads, d_xs = bigru_backward(cache, r)
        flat = params.tensors()
        for name, analytic in grads.tensors().items():
            assert_grad_close(analytic, f, flat[name])
        assert_grad_close(d_xs, f, xs)


class TestAttention:
    """Additive attention."""

    def test_zero_params_average_states(self):
        """Zero parameters give uniform weights and the mean hidden state."""
        params = AttentionParams.zeros(2, 3)
        hs = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
        c, alphas, _ = attention_forward(params, hs)
        assert np.allclose(alphas, 1.0 / 3.0)
        assert np.allclose(c, hs.mean(axis=0))

    def test_known_values(self):
        """Scalar states 1 and 2 score tanh(1) and tanh(2)."""
        params = AttentionParams(np.array([[1.0]]), np.array([1.0]))
        c, alphas, _ = attention_forward(params, np.array([[1.0], [2.0]]))
        assert alphas == pytest.approx(np.array([0.449561, 0.550439]), abs=1e-6)
        assert c[0] == pytest.approx(1.550439, abs=1e-6)

    def test_single_step(self):
        """With one step the context vector is that step."""
        rng = np.random.default_rng(1)
        params = AttentionParams.init(3, 2, rng)
        hs = rng.normal(size=(1, 3))
        c, alphas, _ = attention_forward(params, hs)
        assert alphas.tolist() == [1.0]
        assert np.allclose(c, hs[0])

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradients(self, seed):
        """Gradients through context and weights match central differences."""
        rng = np.random.default_rng(seed + 30)
        params = AttentionParams.init(3, 2, rng)
        hs = rng.normal(size=(2, 5, 3))
        r_c = rng.normal(size=(2, 3))
        r_a = rng.normal(size=(2, 5))

        def f():
            c, alphas, _ = attention_forward(params, hs)
            return float(np.sum(r_c * c) + np.sum(r_a * alphas))

        _, _, cache = attention_forward(params, hs)
        grads, d_hs = attention_backward(cache, r_c, r_a)
        assert_grad_close(grads.W_h, f, params.W_h)
        assert_grad_close(grads.w, f, params.w)
        assert_grad_close(d_hs, f, hs)


class TestLosses:
    """Losses and their gradients."""

    def test_mse_known_values(self):
        """Sum of squared differences."""
        assert mse_loss([1.0, 2.0], [1.0, 4.0]) == pytest.approx(4.0)
        assert mse_loss([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_mse_gradient(self):
        """MSE gradient matches central differences."""
        rng = np.random.default_rng(0)
        x = rng.normal(size=(31, 1))
        x_hat = rng.normal(size=(31, 1))
        assert_grad_close(mse_backward(x, x_hat), lambda: mse_loss(x, x_hat), x_hat)

    def test_batch_mse_gradient(self):
        """Batch MSE averages per-sequence sums."""
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 4, 1))
        x_hat = rng.normal(size=(3, 4, 1))
        loss, grad = batch_mse_loss(x, x_hat)
        assert loss == pytest.approx(np.mean([mse_loss(x[i], x_hat[i]) for i in range(3)]))
        assert_grad_close(grad, lambda: batch_mse_loss(x, x_hat)[0], x_hat)

    def test_cross_entropy_known_values(self):
        """-log of the true-class probability."""
        assert cross_entropy_loss([0.25, 0.25, 0.5, 0.0], 2) == pytest.approx(np.log(2.0))

    def test_cross_entropy_floor(self):
        """A zero probability is floored at 1e-12."""
        assert cross_entropy_loss([1.0, 0.0], 1) == pytest.approx(-np.log(1e-12))

    def test_cross_entropy_errors(self):
        """Out-of-range class and non-distributions are rejected."""
        with pytest.raises(IndexError):
            cross_entropy_loss([0.5, 0.5], 2)
        with pytest.raises(ValueError):
            cross_entropy_loss([0.5, 0.6], 0)

    def test_cross_entropy_through_softmax(self):
        """Cross-entropy composed with softmax matches central differences."""
        rng = np.random.default_rng(2)
        z = rng.normal(size=4)
        p = softmax(z)
        analytic = softmax_backward(cross_entropy_backward(p, 1), p)
        assert_grad_close(analytic, lambda: cross_entropy_loss(softmax(z), 1), z)
        assert np.allclose(analytic, p - np.eye(4)[1])

    def test_batch_cross_entropy_gradient(self):
        """Batch cross-entropy gradient w.r.t. probabilities."""
        rng = np.random.default_rng(3)
        probs = rng.uniform(0.1, 1.0, size=(3, 4))
        labels = np.array([0, 3, 1])
        _, grad = batch_cross_entropy_loss(probs, labels)
        assert_grad_close(grad, lambda: batch_cross_entropy_loss(probs, labels)[0], probs)

    def test_combined_loss(self):
        """Weighted sum with its partial derivatives."""
        assert combined_loss(0.7, 0.2, 1.0, 0.5) == pytest.approx(0.8)
        assert combined_loss(0.7, 0.2, 1.0, 0.0) == pytest.approx(0.7)
        assert combined_loss_backward(2.0, 3.0) == (2.0, 3.0)
        with pytest.raises(ValueError):
            combined_loss(0.1, 0.1, -1.0, 1.0)


class TestAdam:
    """Adam optimizer."""

    def test_first_step_moves_by_learning_rate(self):
        """Bias correction makes the first step lr * sign(grad)."""
        state = AdamState.for_shape((3,), learning_rate=0.01)
        params = np.array([1.0, -1.0, 0.5])
        grads = np.array([2.0, -3.0, 0.1])
        updated, state = adam_step(state, params, grads)
        assert np.allclose(updated, params - 0.01 * np.sign(grads), atol=1e-6)
        assert state.t == 1

    def test_zero_gradient(self):
        """A zero gradient leaves the parameters alone but still counts the step."""
        state = AdamState.for_shape((2,), learning_rate=0.1)
        params = np.array([0.3, -0.7])
        updated, state = adam_step(state, params, np.zeros(2))
        assert np.array_equal(updated, params)
        assert state.t == 1

    def test_two_steps_are_not_one_big_step(self):
        """Moments carry over between calls, unlike one call at double the rate."""
        params = np.array([1.0, -1.0])
        grads = np.array([0.5, -2.0])
        once, once_state = adam_step(AdamState.for_shape((2,), learning_rate=0.02), params, grads)
        state = AdamState.for_shape((2,), learning_rate=0.01)
        twice, state = adam_step(state, params, grads)
        twice, state = adam_step(state, twice, grads)
        assert state.t == 2 and once_state.t == 1
        assert not np.allclose(state.m, once_state.m)
        assert not np.allclose(state.v, once_state.v)
        assert np.allclose(twice, once, atol=1e-6)

    def test_inputs_untouched(self):
        """adam_step returns new arrays."""
        state = AdamState.for_shape((2,))
        params = np.array([1.0, 2.0])
        grads = np.array([0.5, 0.5])
        adam_step(state, params, grads)
        assert params.tolist() == [1.0, 2.0]
        assert state.t == 0

    def test_shape_mismatch(self):
        """Mismatched shapes raise ShapeError."""
        with pytest.raises(ShapeError):
            adam_step(AdamState.for_shape((2,)), np.zeros(3), np.zeros(3))

    def test_bad_betas(self):
        """Betas outside (0, 1) are rejected."""
        with pytest.raises(ValueError):
            AdamState.for_shape((2,), beta1=1.0)

    def test_minimizes_quadratic(self):
        """Adam drives a quadratic towards its minimum."""
        optimizer = Adam(learning_rate=0.1)
        params = {"x": np.array([3.0, -2.0])}
        for _ in range(300):
            params = optimizer.step(params, {"x": 2.0 * params["x"]})
        assert np.all(np.abs(params["x"]) < 0.05)
