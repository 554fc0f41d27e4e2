import numpy as np
import pytest

from dcss.errors import ConfigError, NumericError, ShapeError
from dcss.nn import AdamState, MlpParams, adam_step, init_params, mlp_backward, mlp_forward, softmax

from conftest import grad_entry, param_coords, perturb_entry


def identity_net(dim):
    return MlpParams([np.eye(dim)], [np.zeros(dim)], ["linear"])


class TestForward:
    def test_identity_linear(self):
        out, _ = mlp_forward(identity_net(2), np.array([[3.0, 4.0]]))
        assert np.array_equal(out, [[3.0, 4.0]])

    def test_softmax_symmetry(self):
        net = MlpParams([np.eye(2)], [np.zeros(2)], ["softmax"])
        out, _ = mlp_forward(net, np.array([[0.0, 0.0]]))
        assert np.allclose(out, [[0.5, 0.5]], atol=1e-15)

    def test_softmax_log2_logits(self):
        # softmax([ln 2, 0]) = [2/3, 1/3]
        net = MlpParams([np.eye(2)], [np.zeros(2)], ["softmax"])
        out, _ = mlp_forward(net, np.array([[np.log(2.0), 0.0]]))
        assert np.allclose(out, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-15)

    def test_dim_mismatch_raises(self):
        with pytest.raises(ShapeError):
            mlp_forward(identity_net(2), np.zeros((1, 3)))

    def test_softmax_rows_on_simplex(self, rng):
        z = rng.normal(scale=5.0, size=(200, 7))
        s = softmax(z)
        assert np.all(np.abs(s.sum(axis=1) - 1.0) < 1e-12)
        assert s.min() > 0.0 and s.max() < 1.0

    def test_softmax_shift_invariance(self, rng):
        z = rng.normal(size=(50, 4))
        shifted = z + rng.normal(size=(50, 1))
        assert np.allclose(softmax(z), softmax(shifted), atol=1e-12)

    def test_forward_deterministic(self, rng):
        net = init_params([5, 8, 3], ["relu", "linear"], seed=3)
        x = rng.normal(size=(10, 5))
        a, _ = mlp_forward(net, x)
        b, _ = mlp_forward(net, x)
        assert np.array_equal(a, b)


class TestBackward:
    def test_zero_output_grad(self, rng):
        net = init_params([4, 6, 2], ["relu", "linear"], seed=0)
        x = rng.normal(size=(5, 4))
        _, cache = mlp_forward(net, x)
        grads, gx = mlp_backward(net, cache, np.zeros((5, 2)))
        assert all(np.all(w == 0) for w in grads.weights)
        assert all(np.all(b == 0) for b in grads.biases)
        assert np.all(gx == 0)

    def test_single_linear_layer_weight_grad(self):
        # y = W x, loss = sum(y) -> dL/dW = sum of x rows broadcast per output
        w = np.array([[1.0, 2.0], [3.0, 4.0]])
        net = MlpParams([w], [np.zeros(2)], ["linear"])
        x = np.array([[5.0, 6.0], [7.0, 8.0]])
        _, cache = mlp_forward(net, x)
        grads, gx = mlp_backward(net, cache, np.ones((2, 2)))
        expected = np.tile(x.sum(axis=0), (2, 1))
        assert np.allclose(grads.weights[0], expected, atol=1e-15)
        assert np.allclose(gx, np.ones((2, 2)) @ w, atol=1e-15)

    def test_backward_matches_finite_differences(self, rng):
        net = init_params([4, 6, 5, 3], ["relu", "relu", "linear"], seed=11)
        x = rng.normal(size=(4, 4))
        target = rng.normal(size=(4, 3))

        def loss_of(params):
            out, _ = mlp_forward(params, x)
            return float(((out - target) ** 2).sum())

        out, cache = mlp_forward(net, x)
        grads, _ = mlp_backward(net, cache, 2.0 * (out - target))
        h = 1e-5
        for layer, kind, idx in param_coords(net):
            up = loss_of(perturb_entry(net, layer, kind, idx, h))
            down = loss_of(perturb_entry(net, layer, kind, idx, -h))
            numeric = (up - down) / (2 * h)
            analytic = grad_entry(grads, layer, kind, idx)
            denom = max(abs(numeric), abs(analytic), 1e-6)
            assert abs(numeric - analytic) / denom <= 1e-4

    def test_shape_mismatch_raises(self, rng):
        net = init_params([3, 2], ["linear"], seed=0)
        _, cache = mlp_forward(net, rng.normal(size=(4, 3)))
        with pytest.raises(ShapeError):
            mlp_backward(net, cache, np.zeros((4, 3)))


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        net = init_params([3, 2], ["linear"], seed=1)
        zeros = MlpParams(
            [np.zeros_like(w) for w in net.weights],
            [np.zeros_like(b) for b in net.biases],
            list(net.activations),
        )
        new, state = adam_step(net, zeros, AdamState.zeros_like(net), lr=0.1)
        assert all(np.array_equal(a, b) for a, b in zip(new.weights, net.weights))
        assert state.t == 1

    def test_first_step_is_signed_lr(self, rng):
        net = init_params([3, 2], ["linear"], seed=1)
        grads = MlpParams(
            [rng.normal(size=w.shape) for w in net.weights],
            [rng.normal(size=b.shape) for b in net.biases],
            list(net.activations),
        )
        lr = 0.05
        new, _ = adam_step(net, grads, AdamState.zeros_like(net), lr=lr)
        # first bias-corrected step is -lr * g/(|g| + eps) ~ -lr * sign(g)
        step = new.weights[0] - net.weights[0]
        assert np.allclose(step, -lr * np.sign(grads.weights[0]), atol=1e-6)

    def test_two_steps_bitwise_reproducible(self, rng):
        net = init_params([4, 3], ["linear"], seed=5)
        grads = MlpParams(
            [rng.normal(size=w.shape) for w in net.weights],
            [rng.normal(size=b.shape) for b in net.biases],
            list(net.activations),
        )

        def run_twice():
            p, s = net.copy(), AdamState.zeros_like(net)
            p, s = adam_step(p, grads, s, lr=1e-3)
            p, s = adam_step(p, grads, s, lr=1e-3)
            return p

        a, b = run_twice(), run_twice()
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
        assert all(np.array_equal(x, y) for x, y in zip(a.biases, b.biases))

    def test_nonfinite_gradient_raises_with_layer(self):
        net = init_params([3, 4, 2], ["relu", "linear"], seed=0)
        grads = MlpParams(
            [np.zeros_like(w) for w in net.weights],
            [np.zeros_like(b) for b in net.biases],
            list(net.activations),
        )
        grads.weights[1][0, 0] = np.nan
        with pytest.raises(NumericError, match="layer 1"):
            adam_step(net, grads, AdamState.zeros_like(net), lr=1e-3)


class TestInit:
    def test_same_seed_bitwise_identical(self):
        a = init_params([4, 3, 2], ["relu", "linear"], seed=9)
        b = init_params([4, 3, 2], ["relu", "linear"], seed=9)
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))

    def test_shapes(self):
        p = init_params([4, 3, 2], ["relu", "linear"], seed=0)
        assert p.weights[0].shape == (3, 4)
        assert p.weights[1].shape == (2, 3)
        assert p.layer_dims == [4, 3, 2]

    def test_he_variance(self):
        # one layer with 10^4 weights; sample variance within 3 sigma of 2/fan_in
        fan_in = 100
        p = init_params([fan_in, 100], ["linear"], seed=42)
        w = p.weights[0].ravel()
        target = 2.0 / fan_in
        sample_var = w.var(ddof=1)
        # var of the sample variance of n normals: 2 sigma^4 / (n - 1)
        sigma_var = np.sqrt(2.0 * target**2 / (w.size - 1))
        assert abs(sample_var - target) <= 3.0 * sigma_var

    def test_biases_zero(self):
        p = init_params([5, 4, 3], ["relu", "softmax"], seed=1)
        assert all(np.all(b == 0) for b in p.biases)

    def test_empty_dims_rejected(self):
        with pytest.raises(ConfigError):
            init_params([4], [], seed=0)

    def test_softmax_mid_net_rejected(self):
        with pytest.raises(ConfigError):
            init_params([4, 3, 2], ["softmax", "linear"], seed=0)
