"""Tests for the MLP: initialisation, forward/backward and momentum SGD."""

import math

import numpy as np
import pytest

from gradcheck import numeric_gradient, relative_error
from vmfml.directional import normalize
from vmfml.errors import DimensionMismatch, InvalidConfig, StaleCache, ZeroNorm
from vmfml.network import (
    NetworkConfig,
    OptimizerState,
    backward,
    embed,
    forward,
    init_network,
    sgd_step,
)
from vmfml.objective import PrototypeSet, vmf_loss, vmf_loss_grad_embedding


def composite_case(widths, c, kappa, n, activation, seed):
    rng = np.random.default_rng(seed)
    net = init_network(NetworkConfig(widths, activation, seed))
    for b in net.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    x = rng.standard_normal((n, widths[0]))
    y = rng.integers(0, c, n)
    protos = PrototypeSet(normalize(rng.standard_normal((c, widths[-1]))), kappa)
    return net, x, y, protos


class TestConfig:

    @pytest.mark.parametrize("widths", [(4,), (4, 1), (0, 3), (4, -2, 3)])
    def test_bad_widths(self, widths):
        with pytest.raises(InvalidConfig):
            NetworkConfig(widths)

    def test_bad_activation(self):
        with pytest.raises(InvalidConfig):
            NetworkConfig((4, 3), activation="sigmoid")


class TestInit:

    def test_xavier_bound(self):
        net = init_network(NetworkConfig((4, 3), seed=7))
        w = net.weights[0]
        assert w.size == 12
        assert np.all(np.abs(w) <= math.sqrt(6 / 7))
        assert np.array_equal(net.biases[0], np.zeros(3))

    def test_xavier_spread(self):
        net = init_network(NetworkConfig((300, 200), seed=0))
        bound = math.sqrt(6 / 500)
        w = net.weights[0]
        assert w.max() > 0.99 * bound and w.min() < -0.99 * bound
        assert w.var() == pytest.approx(bound**2 / 3, rel=0.02)

    def test_deterministic(self):
        a = init_network(NetworkConfig((10, 8, 3), seed=1))
        b = init_network(NetworkConfig((10, 8, 3), seed=1))
        c = init_network(NetworkConfig((10, 8, 3), seed=2))
        assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_parameter_count(self):
        net = init_network(NetworkConfig((784, 256, 2)))
        assert net.n_parameters() == 784 * 256 + 256 + 256 * 2 + 2 == 201_474


class TestForward:

    def test_unit_rows(self):
        rng = np.random.default_rng(0)
        net = init_network(NetworkConfig((12, 9, 5), seed=3))
        for scale in (1e-3, 1.0, 1e3):
            out, _ = forward(net, rng.standard_normal((20, 12)) * scale)
            assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-9)

    def test_large_parameters_stay_unit(self):
        net = init_network(NetworkConfig((6, 4, 3), seed=0))
        for w in net.weights:
            w *= 1e100
        out, _ = forward(net, np.ones((2, 6)))
        assert np.all(np.isfinite(out))
        assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-9)

    def test_identity_linear_net(self):
        net = init_network(NetworkConfig((3, 3)))
        net.weights[0][:] = np.eye(3)
        x = normalize([1.0, 2.0, -2.0])
        out, _ = forward(net, x)
        assert np.allclose(out[0], x, atol=1e-15)

    def test_duplicated_rows(self):
        rng = np.random.default_rng(1)
        net = init_network(NetworkConfig((5, 7, 3), "tanh", seed=4))
        x = rng.standard_normal((4, 5))
        out, _ = forward(net, np.concatenate([x, x]))
        assert np.array_equal(out[:4], out[4:])

    def test_bitwise_deterministic(self):
        rng = np.random.default_rng(2)
        net = init_network(NetworkConfig((5, 7, 3), seed=4))
        x = rng.standard_normal((9, 5))
        assert np.array_equal(forward(net, x)[0], forward(net, x)[0])

    def test_embed_matches_forward(self):
        rng = np.random.default_rng(3)
        net = init_network(NetworkConfig((5, 7, 3), seed=4))
        x = rng.standard_normal((33, 5))
        assert np.allclose(embed(net, x, chunk=8), forward(net, x)[0], atol=1e-15)

    def test_dimension_mismatch(self):
        net = init_network(NetworkConfig((5, 3)))
        with pytest.raises(DimensionMismatch):
            forward(net, np.ones((2, 4)))

    def test_zero_norm(self):
        net = init_network(NetworkConfig((5, 3)))
        with pytest.raises(ZeroNorm):
            forward(net, np.zeros((1, 5)))


class TestBackward:

    def test_zero_upstream(self):
        net, x, _, _ = composite_case((6, 5, 3), 4, 15.0, 4, "relu", 0)
        emb, cache = forward(net, x)
        grads = backward(net, cache, np.zeros_like(emb))
        assert all(not g.any() for g in grads)

    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    @pytest.mark.parametrize("seed", range(3))
    def test_finite_differences(self, activation, seed):
        net, x, y, protos = composite_case((6, 5, 3), 4, 15.0, 4, activation, seed)
        emb, cache = forward(net, x)
        grads = backward(net, cache, vmf_loss_grad_embedding(emb, y, protos))
        for analytic, param in zip(grads, net.parameters()):
            numeric = numeric_gradient(lambda: vmf_loss(forward(net, x)[0], y, protos).total_loss, param)
            assert relative_error(analytic, numeric) < 1e-5

    def test_deeper_finite_differences(self):
        net, x, y, protos = composite_case((5, 6, 4, 3), 3, 5.0, 7, "tanh", 9)
        emb, cache = forward(net, x)
        grads = backward(net, cache, vmf_loss_grad_embedding(emb, y, protos))
        for analytic, param in zip(grads, net.parameters()):
            numeric = numeric_gradient(lambda: vmf_loss(forward(net, x)[0], y, protos).total_loss, param)
            assert relative_error(analytic, numeric) < 1e-5

    def test_duplicated_batch_same_mean_gradient(self):
        net, x, y, protos = composite_case((6, 5, 3), 4, 15.0, 4, "relu", 1)
        emb, cache = forward(net, x)
        g1 = backward(net, cache, vmf_loss_grad_embedding(emb, y, protos))
        xx, yy = np.concatenate([x, x]), np.concatenate([y, y])
        emb2, cache2 = forward(net, xx)
        g2 = backward(net, cache2, vmf_loss_grad_embedding(emb2, yy, protos))
        for a, b in zip(g1, g2):
            assert np.allclose(a, b, atol=1e-12, rtol=0)

    def test_stale_cache(self):
        net, x, _, _ = composite_case((6, 5, 3), 4, 15.0, 4, "relu", 0)
        other = init_network(NetworkConfig((6, 4, 3)))
        emb, cache = forward(net, x)
        with pytest.raises(StaleCache):
            backward(other, cache, np.zeros_like(emb))
        with pytest.raises(StaleCache):
            backward(net, cache, np.zeros((3, 3)))


class TestSgd:

    def make(self, momentum):
        net = init_network(NetworkConfig((3, 2), seed=0))
        opt = OptimizerState.zeros_like(net, 0.1, momentum)
        grads = [np.full((3, 2), 0.5), np.full(2, -1.0)]
        return net, opt, grads

    def test_plain_step(self):
        net, opt, grads = self.make(0.0)
        before = [p.copy() for p in net.parameters()]
        sgd_step(net, grads, opt)
        for p, b, g in zip(net.parameters(), before, grads):
            assert np.allclose(p - b, -0.1 * g, atol=1e-15)

    def test_velocity_decay(self):
        net, opt, grads = self.make(0.9)
        opt.velocity = [np.ones_like(p) for p in net.parameters()]
        before = [p.copy() for p in net.parameters()]
        sgd_step(net, [np.zeros_like(p) for p in net.parameters()], opt)
        for p, b in zip(net.parameters(), before):
            assert np.allclose(p - b, -0.1 * 0.9, atol=1e-15)

    def test_two_constant_steps(self):
        net, opt, grads = self.make(0.9)
        before = [p.copy() for p in net.parameters()]
        sgd_step(net, grads, opt)
        sgd_step(net, grads, opt)
        for p, b, g in zip(net.parameters(), before, grads):
            assert np.allclose(p - b, -0.1 * g * (1 + 1.9), atol=1e-15)

    def test_shape_mismatch(self):
        net, opt, grads = self.make(0.9)
        with pytest.raises(DimensionMismatch):
            sgd_step(net, grads[:1], opt)
        with pytest.raises(DimensionMismatch):
            sgd_step(net, [np.zeros((2, 3)), grads[1]], opt)

    def test_bad_optimizer(self):
        net, _, _ = self.make(0.0)
        with pytest.raises(InvalidConfig):
            OptimizerState.zeros_like(net, 0.0, 0.9)
        with pytest.raises(InvalidConfig):
            OptimizerState.zeros_like(net, 0.1, 1.0)
