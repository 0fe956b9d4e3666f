#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Dense network engine: gradients, SGD, taps and checkpoints
"""

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from app.errors import ConfigurationError, InputError, ProtocolError, ShapeError
from app.models import Activation
from app.nn import (
    DenseLayer, GradientSet, GradientTap, Mlp, apply_sgd, backward, forward, forward_batch, init_mlp,
    load_checkpoint, loss_softmax_ce, save_checkpoint, softmax,
)

RELU_SOFTMAX = [Activation.relu, Activation.relu, Activation.softmax]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(1e-5, np.abs(a) + np.abs(b))))


def numeric_gradient(f, array: np.ndarray, positions, eps: float = 1e-6) -> np.ndarray:
    grads = []
    for pos in positions:
        original = array[pos]
        array[pos] = original + eps
        up = f()
        array[pos] = original - eps
        down = f()
        array[pos] = original
        grads.append((up - down) / (2 * eps))
    return np.array(grads)


def sample_positions(shape, rng, count=12):
    return [tuple(int(rng.integers(0, s)) for s in shape) for _ in range(count)]


def random_small_net(seed: int):
    """At most 100 parameters: in 2..5, one hidden layer 2..5, 10 outputs"""
    rng = np.random.default_rng(seed)
    n_in, n_hidden = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    last = Activation.softmax if seed % 2 == 0 else Activation.identity
    mlp = init_mlp([n_in, n_hidden, 10], [Activation.relu, last], rng_seed=seed)
    for layer in mlp.layers:
        layer.biases[:] = rng.normal(0.0, 0.1, size=layer.biases.shape)
    return mlp, rng.uniform(size=n_in), rng


class TestForward:
    def test_output_is_a_distribution(self):
        mlp = init_mlp([20, 8, 6, 10], RELU_SOFTMAX, rng_seed=1)
        out, cache = forward(mlp, np.random.default_rng(0).uniform(size=20))
        assert out.shape == (10,)
        assert np.isclose(out.sum(), 1.0)
        assert len(cache.layers) == 3

    def test_wrong_input_width(self):
        mlp = init_mlp([20, 10], [Activation.softmax], rng_seed=1)
        with pytest.raises(ShapeError):
            forward(mlp, np.zeros(19))

    def test_batch_matches_single_samples(self):
        mlp = init_mlp([12, 7, 10], [Activation.relu, Activation.softmax], rng_seed=3)
        batch = np.random.default_rng(1).uniform(size=(5, 12))
        out = forward_batch(mlp, batch)
        for row, x in zip(out, batch):
            np.testing.assert_allclose(row, forward(mlp, x)[0], rtol=1e-12, atol=1e-15)


class TestInit:
    def test_same_seed_same_weights(self):
        a = init_mlp([30, 10, 10], [Activation.relu, Activation.softmax], rng_seed=7)
        b = init_mlp([30, 10, 10], [Activation.relu, Activation.softmax], rng_seed=7)
        assert a.same_parameters(b)

    def test_scaled_uniform_bounds_and_zero_biases(self):
        mlp = init_mlp([784, 448, 10], [Activation.relu, Activation.softmax], rng_seed=0)
        limit = np.sqrt(6.0 / (784 + 448))
        assert np.all(np.abs(mlp.layers[0].weights) <= limit)
        assert all(not layer.biases.any() for layer in mlp.layers)

    def test_softmax_only_last(self):
        with pytest.raises(ConfigurationError):
            init_mlp([5, 5, 5], [Activation.softmax, Activation.relu], rng_seed=0)

    def test_activation_count_mismatch(self):
        with pytest.raises(ConfigurationError):
            init_mlp([5, 5, 5], [Activation.relu], rng_seed=0)


class TestSoftmax:
    @given(arrays(np.float64, st.integers(2, 30), elements=st.floats(-50, 50)))
    @hyp_settings(max_examples=100, deadline=None)
    def test_normalized(self, z):
        p = softmax(z)
        assert np.all(p >= 0)
        assert abs(p.sum() - 1.0) < 1e-9

    def test_shift_invariant(self):
        z = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(softmax(z), softmax(z + 100.0))


class TestLoss:
    def test_uniform_distribution(self):
        assert loss_softmax_ce(np.full(10, 0.1), 3) == pytest.approx(np.log(10.0))

    def test_zero_probability_is_clamped(self):
        p = np.zeros(10)
        p[0] = 1.0
        assert loss_softmax_ce(p, 5) == pytest.approx(-np.log(1e-12))

    def test_label_out_of_range(self):
        with pytest.raises(InputError):
            loss_softmax_ce(np.full(10, 0.1), 10)


class TestBackward:
    def test_label_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        mlp = init_mlp([16, 9, 7, 10], RELU_SOFTMAX, rng_seed=2)
        x = rng.uniform(size=16)
        label = 4

        def loss():
            return loss_softmax_ce(forward(mlp, x)[0], label)

        _, cache = forward(mlp, x)
        grads, input_grad = backward(mlp, cache, label=label)
        for k, layer in enumerate(mlp.layers):
            positions = sample_positions(layer.weights.shape, rng)
            numeric = numeric_gradient(loss, layer.weights, positions)
            analytic = np.array([grads.weights[k][pos] for pos in positions])
            assert relative_error(numeric, analytic) < 1e-4
            bias_positions = sample_positions(layer.biases.shape, rng, count=4)
            numeric = numeric_gradient(loss, layer.biases, bias_positions)
            analytic = np.array([grads.biases[k][pos] for pos in bias_positions])
            assert relative_error(numeric, analytic) < 1e-4

        x_positions = sample_positions(x.shape, rng)
        numeric = numeric_gradient(loss, x, x_positions)
        assert relative_error(numeric, np.array([input_grad[p] for p in x_positions])) < 1e-4

    def test_upstream_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        mlp = init_mlp([14, 6, 10], [Activation.relu, Activation.identity], rng_seed=5)
        x = rng.uniform(size=14)
        upstream = rng.normal(size=10)

        def objective():
            return float(np.dot(upstream, forward(mlp, x)[0]))

        _, cache = forward(mlp, x)
        grads, input_grad = backward(mlp, cache, upstream_grad=upstream)
        positions = sample_positions(mlp.layers[0].weights.shape, rng)
        numeric = numeric_gradient(objective, mlp.layers[0].weights, positions)
        assert relative_error(numeric, np.array([grads.weights[0][p] for p in positions])) < 1e-4
        x_positions = sample_positions(x.shape, rng)
        numeric = numeric_gradient(objective, x, x_positions)
        assert relative_error(numeric, np.array([input_grad[p] for p in x_positions])) < 1e-4

    @pytest.mark.parametrize("seed", range(100))
    def test_every_parameter_on_random_small_nets(self, seed):
        mlp, x, rng = random_small_net(seed)
        assert mlp.n_parameters <= 100
        if mlp.ends_in_softmax:
            label = int(rng.integers(0, 10))

            def objective():
                return loss_softmax_ce(forward(mlp, x)[0], label)

            source = {"label": label}
        else:
            upstream = rng.normal(size=10)

            def objective():
                return float(np.dot(upstream, forward(mlp, x)[0]))

            source = {"upstream_grad": upstream}

        _, cache = forward(mlp, x)
        grads, input_grad = backward(mlp, cache, **source)
        for k, layer in enumerate(mlp.layers):
            positions = list(np.ndindex(*layer.weights.shape))
            numeric = numeric_gradient(objective, layer.weights, positions)
            assert relative_error(numeric, np.array([grads.weights[k][p] for p in positions])) < 1e-4
            positions = list(np.ndindex(*layer.biases.shape))
            numeric = numeric_gradient(objective, layer.biases, positions)
            assert relative_error(numeric, np.array([grads.biases[k][p] for p in positions])) < 1e-4
        positions = list(np.ndindex(*x.shape))
        numeric = numeric_gradient(objective, x, positions)
        assert relative_error(numeric, np.array([input_grad[p] for p in positions])) < 1e-4

    def test_zero_upstream_gives_zero_gradients(self):
        mlp = init_mlp([6, 4, 10], [Activation.relu, Activation.identity], rng_seed=3)
        _, cache = forward(mlp, np.linspace(0.1, 0.9, 6))
        grads, input_grad = backward(mlp, cache, upstream_grad=np.zeros(10))
        assert all(not g.any() for g in grads.weights + grads.biases)
        assert not input_grad.any()

    def test_linear_layer_by_hand(self):
        weights = np.array([[1.0, -2.0], [0.5, 3.0]])
        mlp = Mlp([DenseLayer(weights.copy(), np.array([0.1, -0.1]), Activation.identity)])
        x, g = np.array([2.0, -1.0]), np.array([0.5, -1.0])
        _, cache = forward(mlp, x)
        grads, input_grad = backward(mlp, cache, upstream_grad=g)
        np.testing.assert_array_equal(grads.weights[0], [[1.0, -0.5], [-2.0, 1.0]])
        np.testing.assert_array_equal(grads.biases[0], g)
        np.testing.assert_array_equal(input_grad, weights.T @ g)

    def test_needs_exactly_one_source(self):
        mlp = init_mlp([4, 10], [Activation.softmax], rng_seed=0)
        _, cache = forward(mlp, np.ones(4))
        with pytest.raises(ProtocolError):
            backward(mlp, cache)
        with pytest.raises(ProtocolError):
            backward(mlp, cache, label=1, upstream_grad=np.zeros(10))

    def test_label_needs_softmax_component(self):
        mlp = init_mlp([4, 10], [Activation.identity], rng_seed=0)
        _, cache = forward(mlp, np.ones(4))
        with pytest.raises(ProtocolError):
            backward(mlp, cache, label=1)

    def test_cache_from_another_component(self):
        a = init_mlp([4, 10], [Activation.softmax], rng_seed=0)
        b = init_mlp([5, 10], [Activation.softmax], rng_seed=0)
        _, cache = forward(a, np.ones(4))
        with pytest.raises(ShapeError):
            backward(b, cache, label=0)


class TestSgd:
    def _step(self, tap=None, lr=0.01):
        mlp = init_mlp([8, 5, 10], [Activation.relu, Activation.softmax], rng_seed=9)
        _, cache = forward(mlp, np.linspace(0, 1, 8))
        grads, _ = backward(mlp, cache, label=2)
        before = mlp.copy()
        apply_sgd(mlp, grads, lr, tap)
        return before, mlp, grads

    def test_zero_learning_rate_leaves_parameters(self):
        before, after, _ = self._step(lr=0.0)
        assert before.same_parameters(after)

    def test_negative_learning_rate(self):
        mlp = init_mlp([3, 10], [Activation.softmax], rng_seed=0)
        with pytest.raises(ConfigurationError):
            apply_sgd(mlp, GradientSet.zeros_like(mlp), -0.1)

    def test_honest_tap_is_bit_identical(self):
        _, plain, _ = self._step()
        _, tapped, _ = self._step(GradientTap(multiplier=1.0))
        assert plain.same_parameters(tapped)

    def test_zero_multiplier_freezes(self):
        before, after, _ = self._step(GradientTap(multiplier=0.0))
        assert before.same_parameters(after)

    def test_negative_multiplier_reverses_the_step(self):
        before, honest, _ = self._step()
        _, reversed_, _ = self._step(GradientTap(multiplier=-1.0))
        for b, h, r in zip(before.layers, honest.layers, reversed_.layers):
            np.testing.assert_allclose(h.weights - b.weights, b.weights - r.weights, atol=1e-15)

    def test_amplifying_multiplier_scales_the_reversed_step(self):
        before, honest, _ = self._step()
        _, amplified, _ = self._step(GradientTap(multiplier=-10.0))
        for b, h, a in zip(before.layers, honest.layers, amplified.layers):
            np.testing.assert_allclose(a.weights - b.weights, -10.0 * (h.weights - b.weights), rtol=1e-9, atol=1e-14)
            np.testing.assert_allclose(a.biases - b.biases, -10.0 * (h.biases - b.biases), rtol=1e-9, atol=1e-14)

    def test_incongruent_gradients(self):
        mlp = init_mlp([3, 10], [Activation.softmax], rng_seed=0)
        other = init_mlp([4, 10], [Activation.softmax], rng_seed=0)
        with pytest.raises(ShapeError):
            apply_sgd(mlp, GradientSet.zeros_like(other), 0.1)

    def test_non_finite_multiplier(self):
        with pytest.raises(ConfigurationError):
            GradientTap(multiplier=float("inf"))


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        mlp = init_mlp([112, 28, 10], [Activation.relu, Activation.identity], rng_seed=4)
        path = save_checkpoint(mlp, tmp_path / "component.npz")
        loaded = load_checkpoint(path)
        assert loaded.same_parameters(mlp)
        assert [layer.activation for layer in loaded.layers] == [Activation.relu, Activation.identity]
