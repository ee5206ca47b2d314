import numpy as np
import pytest
from helpers import random_batch, random_params
from oracles import central_diff, forward_scalar, log_q

from sparse_sgmcmc.hyper import HyperState, PriorConfig
from sparse_sgmcmc.model import (
    Batch,
    LayerSpec,
    Network,
    ParamState,
    forward,
    grad_loglik,
    grad_Q,
    init_params,
    loglik_grad_and_sse,
    prior_grad,
)


def hyper_for(net, rng, sigma=0.8):
    k = net.n_sparse
    return HyperState(
        rho=rng.uniform(size=k),
        kappa0=rng.uniform(0, 0.1, size=k),
        kappa1=rng.uniform(0, 10, size=k),
        sigma=sigma,
        delta=np.full(len(net.sparse_groups), 0.5),
    )


class TestNetwork:
    def test_layout(self, small_mlp):
        net = small_mlp
        assert net.offsets == [0, 16]
        assert net.size == 16 + 10
        np.testing.assert_array_equal(net.sparse_index, np.arange(16, 24))
        # biases of the sparse layer stay dense
        np.testing.assert_array_equal(net.dense_index, np.r_[np.arange(16), 24, 25])
        assert net.sparse_layer_sizes == [8]

    def test_linear(self):
        net = Network.linear(5)
        assert net.size == 5 and net.n_sparse == 5 and net.dense_index.size == 0

    def test_mlp_sparse_from(self):
        net = Network.mlp([4, 3, 3, 2], sparse_from=1)
        assert [l.sparse for l in net.layers] == [False, True, True]
        assert [l.activation for l in net.layers] == ["tanh", "tanh", "identity"]
        assert len(net.sparse_groups) == 2

    def test_width_mismatch(self):
        with pytest.raises(ValueError, match="chain"):
            Network([LayerSpec(2, 3), LayerSpec(4, 1, "identity")])

    def test_output_must_be_identity(self):
        with pytest.raises(ValueError, match="identity"):
            Network([LayerSpec(2, 1, "tanh")])

    def test_bad_layer(self):
        with pytest.raises(ValueError):
            LayerSpec(0, 1)
        with pytest.raises(ValueError):
            LayerSpec(1, 1, "sigmoid")

    def test_dict_round_trip(self, small_mlp):
        again = Network.from_dict(small_mlp.to_dict())
        assert again.to_dict() == small_mlp.to_dict()

    def test_init_scale(self):
        net = Network.mlp([200, 100, 1])
        p = init_params(net, np.random.default_rng(0))
        w, b = net.unpack(p.beta)[0]
        assert abs(w.std() - np.sqrt(2 / 300)) < 0.005
        assert not np.any(b)


class TestForward:
    def test_zero_params(self, small_mlp, rng):
        out = forward(ParamState(np.zeros(small_mlp.size)), small_mlp, rng.standard_normal((4, 3)))
        assert out.shape == (4, 2) and not np.any(out)

    def test_linear_layer(self, rng):
        net = Network([LayerSpec(3, 2, "identity")])
        beta = rng.standard_normal(net.size)
        x = rng.standard_normal(3)
        W, b = net.unpack(beta)[0]
        np.testing.assert_allclose(forward(ParamState(beta), net, x)[0], W @ x + b, rtol=1e-14)

    @pytest.mark.parametrize("act", ["tanh", "relu"])
    def test_matches_scalar_oracle(self, rng, act):
        net = Network([LayerSpec(4, 5, act), LayerSpec(5, 3, "identity", sparse=True)])
        beta = rng.standard_normal(net.size)
        x = rng.standard_normal((6, 4))
        np.testing.assert_allclose(forward(ParamState(beta), net, x), forward_scalar(net, beta, x), rtol=0, atol=1e-12)

    def test_dimension_mismatch(self, small_mlp):
        with pytest.raises(ValueError):
            forward(ParamState(np.zeros(small_mlp.size)), small_mlp, np.ones((2, 4)))
        with pytest.raises(ValueError):
            forward(ParamState(np.zeros(3)), small_mlp, np.ones((2, 3)))


class TestGradients:
    def test_perfect_fit(self, small_mlp, rng):
        p = random_params(rng, small_mlp)
        x = rng.standard_normal((4, 3))
        y = forward(p, small_mlp, x)
        assert not np.any(grad_loglik(p, small_mlp, Batch(x, y, 10), 1.3))

    def test_linear_closed_form(self, rng):
        net = Network.linear(4)
        beta, x, y = rng.standard_normal(4), rng.standard_normal(4), 0.7
        sigma, N = 1.5, 9
        g = grad_loglik(ParamState(beta), net, Batch(x[None], [y], N), sigma)
        np.testing.assert_allclose(g, -N * (x @ beta - y) * x / sigma**2, rtol=1e-13)

    def test_sse(self, small_mlp, rng):
        p = random_params(rng, small_mlp)
        batch = random_batch(rng, small_mlp)
        _, sse = loglik_grad_and_sse(p, small_mlp, batch, 1.0)
        assert sse == pytest.approx(np.sum((forward(p, small_mlp, batch.inputs) - batch.targets) ** 2))

    def test_sigma_must_be_positive(self, small_mlp, rng):
        with pytest.raises(ValueError):
            grad_loglik(random_params(rng, small_mlp), small_mlp, random_batch(rng, small_mlp), 0.0)

    def test_grad_q_finite_differences(self, small_mlp, rng):
        prior = PriorConfig(sigma0=1.3)
        hyper = hyper_for(small_mlp, rng)
        batch = random_batch(rng, small_mlp)
        p = random_params(rng, small_mlp)
        p.beta[np.abs(p.beta) < 1e-3] = 0.5

        def f(b):
            return log_q(small_mlp, b, batch.inputs, batch.targets, batch.n_total, hyper.sigma, hyper.kappa0, hyper.kappa1, prior.sigma0)

        fd = central_diff(f, p.beta)
        g = grad_Q(p, small_mlp, batch, hyper, prior)
        assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-6

    def test_single_sparse_coordinate(self):
        net = Network.linear(1)
        hyper = HyperState(np.array([0.5]), np.array([0.05]), np.array([5.0]), 1.0, np.array([0.5]))
        # zero data term: the only datum is fitted exactly
        batch = Batch([[0.0]], [0.0], 1)
        g = grad_Q(ParamState([2.0]), net, batch, hyper, PriorConfig())
        assert g[0] == pytest.approx(-10.05, abs=1e-15)

    def test_origin_is_stationary(self, small_mlp, rng):
        hyper = hyper_for(small_mlp, rng)
        p = ParamState(np.zeros(small_mlp.size))
        x = rng.standard_normal((3, 3))
        g = grad_Q(p, small_mlp, Batch(x, np.zeros((3, 2)), 3), hyper, PriorConfig())
        assert not np.any(g)

    def test_prior_decomposition(self, small_mlp, rng):
        hyper, prior = hyper_for(small_mlp, rng), PriorConfig()
        p = random_params(rng, small_mlp)
        b1, b2 = random_batch(rng, small_mlp), random_batch(rng, small_mlp)
        d1 = grad_Q(p, small_mlp, b1, hyper, prior) - grad_loglik(p, small_mlp, b1, hyper.sigma)
        d2 = grad_Q(p, small_mlp, b2, hyper, prior) - grad_loglik(p, small_mlp, b2, hyper.sigma)
        np.testing.assert_allclose(d1, d2, atol=1e-12)
        np.testing.assert_allclose(d1, prior_grad(p, small_mlp, hyper, prior), atol=1e-12)

    def test_batch_linearity(self, small_mlp, rng):
        p = random_params(rng, small_mlp)
        N = 40
        x, y = rng.standard_normal((10, 3)), rng.standard_normal((10, 2))
        full = grad_loglik(p, small_mlp, Batch(x, y, N), 1.1)
        g1 = grad_loglik(p, small_mlp, Batch(x[:4], y[:4], N), 1.1)
        g2 = grad_loglik(p, small_mlp, Batch(x[4:], y[4:], N), 1.1)
        # per-batch weights N/4 and N/6 rescaled to N/10
        np.testing.assert_allclose(full, 0.4 * g1 + 0.6 * g2, rtol=0, atol=1e-12)

    def test_pruned_coordinates_vanish(self, small_mlp, rng):
        p = random_params(rng, small_mlp)
        p.pruned[small_mlp.sparse_index[::2]] = True
        p.apply_mask()
        g = grad_Q(p, small_mlp, random_batch(rng, small_mlp), hyper_for(small_mlp, rng), PriorConfig())
        assert not np.any(g[p.pruned])

    def test_mask_idempotent(self, small_mlp, rng):
        p = random_params(rng, small_mlp)
        p.pruned[:5] = True
        once = p.copy().apply_mask().beta
        twice = p.copy().apply_mask().apply_mask().beta
        assert once.tobytes() == twice.tobytes()

    def test_non_finite_names_layer(self, small_mlp, rng):
        p = random_params(rng, small_mlp)
        p.beta[small_mlp.sparse_index[0]] = np.inf
        with np.errstate(all="ignore"), pytest.raises(FloatingPointError, match="layer"):
            grad_loglik(p, small_mlp, random_batch(rng, small_mlp), 1.0)


class TestBatch:
    def test_scale(self):
        assert Batch(np.ones((5, 2)), np.ones(5), 20).scale == 4.0

    def test_too_large(self):
        with pytest.raises(ValueError):
            Batch(np.ones((5, 2)), np.ones(5), 4)

    def test_mismatched_rows(self):
        with pytest.raises(ValueError):
            Batch(np.ones((5, 2)), np.ones(4), 10)
