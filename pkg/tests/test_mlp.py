import numpy as np
import pytest

from fuzzymarket.forecast.mlp import Adam, MlpModel, Sgd, mlp_init
from fuzzymarket.rng import DeterministicRng


def numeric_gradient(model, x, y, h=1e-6):
    theta = model.get_params()
    grad = np.zeros_like(theta)
    for i in range(len(theta)):
        plus = theta.copy()
        plus[i] += h
        minus = theta.copy()
        minus[i] -= h
        model.set_params(plus)
        lp, _ = model.loss_and_gradients(x, y)
        model.set_params(minus)
        lm, _ = model.loss_and_gradients(x, y)
        grad[i] = (lp - lm) / (2 * h)
    model.set_params(theta)
    return grad


class TestInit:
    def test_shapes(self):
        model = mlp_init([20, 64, 10], "relu", seed=0)
        assert [w.shape for w in model.weights] == [(20, 64), (64, 10)]
        assert [b.shape for b in model.biases] == [(64,), (10,)]
        assert np.all(model.biases[0] == 0.0)

    def test_seeded_identical(self):
        a = mlp_init([5, 8, 3], "tanh", seed=4)
        b = mlp_init([5, 8, 3], "tanh", seed=4)
        assert np.array_equal(a.get_params(), b.get_params())

    def test_seeds_differ(self):
        a = mlp_init([5, 8, 3], "tanh", seed=4)
        b = mlp_init([5, 8, 3], "tanh", seed=5)
        assert not np.array_equal(a.get_params(), b.get_params())

    def test_scale_respects_fan_in(self):
        model = mlp_init([100, 50, 1], "relu", seed=1)
        assert np.max(np.abs(model.weights[0])) <= 1.0 / np.sqrt(100)

    def test_invalid_dimensions(self):
        with pytest.raises(ValueError):
            mlp_init([5], "relu", seed=0)
        with pytest.raises(ValueError):
            mlp_init([5, 0, 2], "relu", seed=0)
        with pytest.raises(ValueError):
            mlp_init([5, 4, 2], "sigmoid", seed=0)


class TestForward:
    def test_zero_parameters_zero_output(self):
        model = mlp_init([4, 6, 3], "relu", seed=0)
        model.set_params(np.zeros(model.n_params))
        out = model.forward(DeterministicRng(1).normals(8).reshape(2, 4))
        assert np.all(out == 0.0)

    def test_batch_row_independence(self):
        # equality up to BLAS reduction-order round-off
        model = mlp_init([5, 7, 2], "tanh", seed=2)
        batch = DeterministicRng(3).normals(15).reshape(3, 5)
        single = model.forward(batch[1:2])
        assert np.allclose(model.forward(batch)[1], single[0], rtol=0, atol=1e-12)

    def test_pure(self):
        model = mlp_init([5, 7, 2], "relu", seed=2)
        x = DeterministicRng(4).normals(5).reshape(1, 5)
        assert np.array_equal(model.forward(x), model.forward(x))

    def test_shape_mismatch(self):
        model = mlp_init([5, 7, 2], "relu", seed=2)
        with pytest.raises(ValueError):
            model.forward(np.ones((2, 4)))


class TestGradients:
    def test_zero_loss_zero_gradients(self):
        model = mlp_init([3, 4, 2], "tanh", seed=0)
        x = DeterministicRng(1).normals(6).reshape(2, 3)
        y = model.forward(x)
        loss, grads = model.loss_and_gradients(x, y)
        assert loss == 0.0
        assert np.all(grads == 0.0)

    def test_single_linear_layer_closed_form(self):
        # one affine layer, one sample: dL/dW = 2 (out - y) x^T / H
        model = mlp_init([3, 2], "relu", seed=5)
        x = np.array([[1.0, -2.0, 0.5]])
        y = np.array([[0.3, -0.1]])
        out = model.forward(x)
        _, grads = model.loss_and_gradients(x, y)
        expected_w = (x.T @ (2.0 * (out - y) / 2.0)).ravel()
        expected_b = (2.0 * (out - y) / 2.0).ravel()
        assert np.allclose(grads[:6], expected_w, rtol=1e-12)
        assert np.allclose(grads[6:], expected_b, rtol=1e-12)

    def test_finite_difference_agreement(self):
        # 20 random small configurations, both activations
        worst = 0.0
        for trial in range(20):
            rng = DeterministicRng(5000 + trial)
            sizes = [int(2 + rng.randint(7)), int(1 + rng.randint(8))]
            if rng.uniform() > 0.5:
                sizes.append(int(1 + rng.randint(8)))
            sizes.append(int(1 + rng.randint(4)))
            act = "tanh" if rng.uniform() > 0.5 else "relu"
            batch = int(1 + rng.randint(4))
            model = mlp_init(sizes, act, seed=int(rng.randint(10**6)))
            x = rng.normals(batch * sizes[0]).reshape(batch, sizes[0])
            y = rng.normals(batch * sizes[-1]).reshape(batch, sizes[-1])
            _, analytic = model.loss_and_gradients(x, y)
            numeric = numeric_gradient(model, x, y)
            rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
            worst = max(worst, float(rel.max()))
        assert worst <= 1e-4

    def test_target_shape_checked(self):
        model = mlp_init([3, 4, 2], "relu", seed=0)
        with pytest.raises(ValueError):
            model.loss_and_gradients(np.ones((2, 3)), np.ones((2, 3)))


class TestParamsVector:
    def test_round_trip(self):
        model = mlp_init([4, 5, 3], "relu", seed=7)
        theta = model.get_params()
        model.set_params(theta * 2.0)
        assert np.array_equal(model.get_params(), theta * 2.0)

    def test_length_checked(self):
        model = mlp_init([4, 5, 3], "relu", seed=7)
        with pytest.raises(ValueError):
            model.set_params(np.zeros(3))

    def test_clone_is_independent(self):
        model = mlp_init([4, 5, 3], "relu", seed=7)
        clone = model.clone()
        clone.set_params(np.zeros(clone.n_params))
        assert not np.array_equal(model.get_params(), clone.get_params())


class TestPredict:
    def test_horizon_contract(self):
        model = mlp_init([5, 6, 10], "relu", seed=0)
        out = model.predict(np.ones(5), 10)
        assert out.shape == (10,)

    def test_wrong_horizon_rejected(self):
        model = mlp_init([5, 6, 10], "relu", seed=0)
        with pytest.raises(ValueError):
            model.predict(np.ones(5), 7)

    def test_wrong_lookback_rejected(self):
        model = mlp_init([5, 6, 10], "relu", seed=0)
        with pytest.raises(ValueError):
            model.predict(np.ones(4), 10)


class TestOptimizers:
    def test_sgd_zero_gradient_fixed_point(self):
        params = DeterministicRng(1).normals(10)
        assert np.array_equal(Sgd(0.1).step(params, np.zeros(10)), params)

    def test_sgd_step_definition(self):
        params = np.ones(4)
        grads = np.array([1.0, -2.0, 0.5, 0.0])
        out = Sgd(0.1).step(params, grads)
        assert np.allclose(out, params - 0.1 * grads, rtol=1e-15)

    def test_adam_converges_on_quadratic(self):
        opt = Adam(lr=0.05)
        x = np.array([0.0])
        for _ in range(500):
            x = opt.step(x, 2.0 * (x - 3.0))
        assert abs(x[0] - 3.0) < 1e-3

    def test_adam_shape_check(self):
        opt = Adam(lr=0.1)
        with pytest.raises(ValueError):
            opt.step(np.zeros(3), np.zeros(4))
