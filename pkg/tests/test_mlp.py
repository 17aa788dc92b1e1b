import math

import numpy as np
import pytest

from carbonrl import mlp
from carbonrl import numerics as num


def finite_difference_grads(net, x, grad_out, h=1e-5):
    """Central differences of sum(grad_out * net(x)) for every parameter."""
    fd = {}
    for name, tensor in net.tensors().items():
        g = np.zeros_like(tensor)
        flat = tensor.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _ = mlp.net_forward(net, x)
            flat[i] = orig - h
            dn, _ = mlp.net_forward(net, x)
            flat[i] = orig
            gflat[i] = float(np.sum(grad_out * (up - dn)) / (2 * h))
        fd[name] = g
    return fd


class TestMish:
    def test_zero(self):
        assert mlp.mish(0.0) == 0.0

    def test_large_positive(self):
        assert mlp.mish(30.0) == pytest.approx(30.0, rel=1e-12)

    def test_large_negative(self):
        assert abs(mlp.mish(-20.0)) < 1e-7

    def test_monotone_nonnegative(self):
        xs = np.linspace(0.0, 20.0, 4001)
        ys = mlp.mish(xs)
        assert (np.diff(ys) > 0).all()

    def test_lower_bound(self):
        xs = np.linspace(-60.0, 60.0, 200001)
        ys = mlp.mish(xs)
        assert ys.min() >= -0.30885
        assert ys.min() == pytest.approx(-0.30884, abs=1e-4)
        assert xs[int(np.argmin(ys))] == pytest.approx(-1.1924, abs=1e-2)

    def test_grad_matches_fd(self):
        xs = np.linspace(-4.0, 4.0, 101)
        h = 1e-6
        fd = (mlp.mish(xs + h) - mlp.mish(xs - h)) / (2 * h)
        an = mlp._mish_grad(xs)
        np.testing.assert_allclose(an, fd, rtol=1e-6, atol=1e-8)


class TestNetForward:
    def test_zero_weights_bias_passthrough(self):
        rng = num.make_rng(0)
        net = mlp.init_dense([3, 4], rng)
        net.weights[0][:] = 0.0
        net.biases[0][:] = np.arange(4.0)
        out, _ = mlp.net_forward(net, np.zeros(3))
        np.testing.assert_allclose(out, np.arange(4.0))

    def test_single_linear_layer(self):
        rng = num.make_rng(1)
        net = mlp.init_dense([5, 2], rng)
        x = rng.standard_normal(5)
        out, _ = mlp.net_forward(net, x)
        np.testing.assert_allclose(out, net.weights[0] @ x + net.biases[0], rtol=1e-12)

    def test_against_naive_reimplementation(self):
        rng = num.make_rng(2)
        net = mlp.init_dense([4, 8, 8, 1], rng)
        x = rng.standard_normal((6, 4))
        out, _ = mlp.net_forward(net, x)
        h = x
        for w, b, act in zip(net.weights, net.biases, net.acts):
            z = np.einsum("oi,bi->bo", w, h) + b
            h = z * np.tanh(np.log1p(np.exp(z))) if act == "mish" else z
        np.testing.assert_allclose(out, h, rtol=1e-12)

    def test_dimension_mismatch(self):
        rng = num.make_rng(3)
        net = mlp.init_dense([4, 2], rng)
        with pytest.raises(ValueError):
            mlp.net_forward(net, np.zeros(5))


class TestNetBackward:
    def test_fd_agreement_three_layer(self):
        rng = num.make_rng(4)
        net = mlp.init_dense([4, 8, 6, 2], rng)
        x = rng.standard_normal((3, 4))
        gout = rng.standard_normal((3, 2))
        out, trace = mlp.net_forward(net, x, training=True)
        grads, _ = mlp.net_backward(net, trace, gout)
        fd = finite_difference_grads(net, x, gout)
        for name in grads:
            np.testing.assert_allclose(grads[name], fd[name], rtol=1e-4, atol=1e-7)

    def test_zero_upstream(self):
        rng = num.make_rng(5)
        net = mlp.init_dense([3, 5, 1], rng)
        x = rng.standard_normal((2, 3))
        _, trace = mlp.net_forward(net, x, training=True)
        grads, gin = mlp.net_backward(net, trace, np.zeros((2, 1)))
        assert all(np.all(g == 0.0) for g in grads.values())
        assert np.all(gin == 0.0)

    def test_linear_weight_grad_is_input(self):
        rng = num.make_rng(6)
        net = mlp.init_dense([3, 1], rng)
        x = rng.standard_normal(3)
        _, trace = mlp.net_forward(net, x, training=True)
        grads, gin = mlp.net_backward(net, trace, np.ones(1))
        np.testing.assert_allclose(grads["w0"][0], x, rtol=1e-12)
        np.testing.assert_allclose(gin[0], net.weights[0][0], rtol=1e-12)

    def test_grad_wrt_input_fd(self):
        rng = num.make_rng(7)
        net = mlp.init_dense([4, 6, 1], rng)
        x = rng.standard_normal(4)
        _, trace = mlp.net_forward(net, x, training=True)
        _, gin = mlp.net_backward(net, trace, np.ones(1))
        h = 1e-6
        for i in range(4):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd = (mlp.net_forward(net, xp)[0] - mlp.net_forward(net, xm)[0]) / (2 * h)
            assert gin[0, i] == pytest.approx(float(fd[0]), rel=1e-5, abs=1e-9)

    def test_missing_trace(self):
        rng = num.make_rng(8)
        net = mlp.init_dense([3, 1], rng)
        with pytest.raises(ValueError):
            mlp.net_backward(net, None, np.ones(1))


class TestDoubleCritic:
    def test_identical_critics(self):
        rng = num.make_rng(9)
        critic = mlp.init_critic(5, 2, [16, 16], rng)
        for k, t in critic.q1.tensors().items():
            critic.q2.tensors()[k][:] = t
        s, a = rng.standard_normal(5), rng.standard_normal(2)
        v1, _ = mlp.net_forward(critic.q1, np.concatenate([s, a]))
        assert mlp.q_min(critic, s, a) == pytest.approx(float(v1[0]), rel=1e-12)

    def test_constant_critics(self):
        rng = num.make_rng(10)
        critic = mlp.init_critic(2, 1, [4], rng)
        for net, c in ((critic.q1, -5.0), (critic.q2, -3.0)):
            for w in net.weights:
                w[:] = 0.0
            for b in net.biases:
                b[:] = 0.0
            net.biases[-1][:] = c
        assert mlp.q_min(critic, np.zeros(2), np.zeros(1)) == -5.0

    def test_swap_symmetric(self):
        rng = num.make_rng(11)
        critic = mlp.init_critic(3, 2, [8], rng)
        swapped = mlp.DoubleCritic(critic.q2, critic.q1)
        s, a = rng.standard_normal(3), rng.standard_normal(2)
        assert mlp.q_min(critic, s, a) == mlp.q_min(swapped, s, a)

    def test_min_is_lipschitz_in_each_critic(self):
        # |min(a, x) - min(b, x)| <= |a - b| for every critic perturbation
        rng = num.make_rng(18)
        for _ in range(200):
            a, b, x = rng.standard_normal(3) * 10
            assert abs(min(a, x) - min(b, x)) <= abs(a - b) + 1e-15

    def test_min_never_exceeds_either(self):
        rng = num.make_rng(12)
        critic = mlp.init_critic(4, 2, [16, 16], rng)
        s = rng.standard_normal((32, 4))
        a = rng.standard_normal((32, 2))
        x = np.concatenate([s, a], axis=1)
        v1, _ = mlp.net_forward(critic.q1, x)
        v2, _ = mlp.net_forward(critic.q2, x)
        qm = mlp.q_min(critic, s, a)
        assert (qm <= v1[:, 0] + 1e-15).all()
        assert (qm <= v2[:, 0] + 1e-15).all()


class TestAdam:
    def test_zero_gradient_no_motion(self):
        rng = num.make_rng(13)
        net = mlp.init_dense([3, 4], rng)
        before = {k: t.copy() for k, t in net.tensors().items()}
        adam = mlp.AdamState.init_like(net.tensors(), lr=1e-3)
        mlp.adam_step(adam, net.tensors(), {k: np.zeros_like(t) for k, t in before.items()})
        for k, t in net.tensors().items():
            np.testing.assert_array_equal(t, before[k])

    def test_first_step_magnitude(self):
        params = {"p": np.array([1.0, -2.0])}
        grads = {"p": np.array([0.3, -0.7])}
        adam = mlp.AdamState.init_like(params, lr=1e-3)
        mlp.adam_step(adam, params, grads)
        # first-step update is lr * g / (|g| + eps) per component
        expected = np.array([1.0, -2.0]) - 1e-3 * grads["p"] / (np.abs(grads["p"]) + 1e-8)
        np.testing.assert_allclose(params["p"], expected, rtol=1e-6)

    def test_deterministic(self):
        def run():
            rng = num.make_rng(14)
            net = mlp.init_dense([3, 4, 1], rng)
            adam = mlp.AdamState.init_like(net.tensors(), lr=1e-3)
            for _ in range(10):
                x = rng.standard_normal((8, 3))
                out, trace = mlp.net_forward(net, x, training=True)
                grads, _ = mlp.net_backward(net, trace, np.ones_like(out))
                mlp.adam_step(adam, net.tensors(), grads)
            return {k: t.copy() for k, t in net.tensors().items()}

        a, b = run(), run()
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])

    def test_shape_mismatch(self):
        params = {"p": np.zeros(3)}
        adam = mlp.AdamState.init_like(params, lr=1e-3)
        with pytest.raises(ValueError):
            mlp.adam_step(adam, params, {"p": np.zeros(4)})


class TestInit:
    def test_critic_final_layer_small(self):
        rng = num.make_rng(15)
        critic = mlp.init_critic(5, 2, [256, 256], rng)
        assert np.abs(critic.q1.weights[-1]).max() <= 3e-3
        assert np.abs(critic.q2.weights[-1]).max() <= 3e-3
        assert critic.q1.acts == ("mish", "mish", "identity")

    def test_independent_initialization(self):
        rng = num.make_rng(16)
        critic = mlp.init_critic(5, 2, [16], rng)
        assert not np.allclose(critic.q1.weights[0], critic.q2.weights[0])

    def test_dtype(self):
        rng = num.make_rng(17)
        net = mlp.init_dense([3, 4], rng, dtype=np.float32)
        assert net.dtype == np.float32
        out, _ = mlp.net_forward(net, np.zeros(3, dtype=np.float32))
        assert out.dtype == np.float32
