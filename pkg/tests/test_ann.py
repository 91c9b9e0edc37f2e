"""Tests for the LM-trained networks and the bootstrapped ensemble."""

import numpy as np
import pytest

from ann import (
    BannSurrogate, LmConfig, MlpSurrogate, bann_predict, bann_predict_batch, bann_train, bootstrap_indices,
    init_mlp, jacobian, lm_train, mlp_forward, mlp_forward_batch, parameter_count, zero_mlp,
)
from core import ArgumentError, make_rng
from utils import array_digest


class TestNetwork:
    def test_parameter_layout(self, rng):
        net = init_mlp(3, 5, rng)
        p = net.parameters()
        assert p.size == parameter_count(3, 5) == 26
        clone = net.with_parameters(p)
        np.testing.assert_array_equal(clone.W1, net.W1)
        assert clone.b2 == net.b2

    def test_forward_matches_batch(self, rng):
        net = init_mlp(2, 4, rng)
        X = rng.normal(size=(6, 2))
        np.testing.assert_allclose([mlp_forward(net, x) for x in X], mlp_forward_batch(net, X), rtol=1e-14)

    def test_zero_network_outputs_zero(self):
        assert mlp_forward(zero_mlp(3, 4), [1.0, -2.0, 5.0]) == 0.0

    def test_output_bias_passes_through(self, rng):
        net = init_mlp(2, 3, rng)
        net = net.with_parameters(np.r_[net.parameters()[:-4], 0.0, 0.0, 0.0, 1.75])
        assert mlp_forward(net, [0.3, 0.9]) == 1.75

    def test_matches_naive_loops(self, rng):
        for _ in range(20):
            net = init_mlp(3, 4, rng)
            x = rng.normal(size=3)
            out = net.b2
            for i in range(net.h):
                act = net.b1[i]
                for j in range(net.d):
                    act += net.W1[i, j] * x[j]
                out += net.w2[i] * np.tanh(act)
            assert mlp_forward(net, x) == pytest.approx(out, abs=1e-12)

    def test_wrong_input_dimension(self, rng):
        with pytest.raises(ArgumentError):
            mlp_forward(init_mlp(2, 3, rng), [1.0, 2.0, 3.0])

    def test_jacobian_matches_central_differences(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            d, h = int(rng.integers(1, 4)), int(rng.integers(1, 6))
            net = init_mlp(d, h, rng)
            X = rng.uniform(-1, 1, size=(7, d))
            J = jacobian(net, X)
            p = net.parameters()
            eps = 1e-6
            for k in range(p.size):
                up, down = p.copy(), p.copy()
                up[k] += eps
                down[k] -= eps
                numeric = (mlp_forward_batch(net.with_parameters(up), X)
                           - mlp_forward_batch(net.with_parameters(down), X)) / (2 * eps)
                scale = np.maximum(np.abs(numeric), 1e-3)
                assert np.all(np.abs(J[:, k] - numeric) / scale < 1e-4)


class TestLevenbergMarquardt:
    def test_trace_is_monotone(self, rng):
        X = rng.uniform(-1, 1, size=(40, 2))
        y = np.sin(2 * X[:, 0]) * X[:, 1]
        trace = []
        lm_train(X, y, 6, LmConfig(), rng, trace=trace)
        assert len(trace) > 1
        assert np.all(np.diff(trace) < 0)

    def test_recovers_generating_network(self):
        rng = np.random.default_rng(4)
        target = init_mlp(2, 3, rng)
        X = rng.uniform(-1, 1, size=(100, 2))
        y = mlp_forward_batch(target, X)
        start = target.with_parameters(target.parameters() + rng.normal(scale=0.05, size=target.parameter_count))
        fitted = lm_train(X, y, 3, LmConfig(max_iters=500, tol=1e-16), rng, init=start)
        rmse = np.sqrt(np.mean((mlp_forward_batch(fitted, X) - y) ** 2))
        assert rmse < 1e-3

    def test_underdetermined_fit_warns(self, rng):
        messages = []
        lm_train(rng.normal(size=(3, 2)), rng.normal(size=3), 5, LmConfig(max_iters=5), rng,
                 log_func=lambda m, kind: messages.append(kind))
        assert "warning" in messages

    def test_zero_iterations_returns_init(self, rng):
        start = init_mlp(1, 2, rng)
        net = lm_train(np.zeros((4, 1)), np.ones(4), 2, LmConfig(max_iters=0), rng, init=start)
        np.testing.assert_array_equal(net.parameters(), start.parameters())

    @pytest.mark.parametrize("kwargs", [{"lambda0": 0.0}, {"up": 1.0}, {"down": 1.0}, {"max_iters": -1}])
    def test_bad_config(self, kwargs):
        with pytest.raises(ArgumentError):
            LmConfig(**kwargs)


class TestEnsemble:
    def test_bootstrap_indices_in_range(self, rng):
        idx = bootstrap_indices(50, rng)
        assert idx.shape == (50,)
        assert idx.min() >= 0 and idx.max() < 50

    def test_needs_two_members(self, rng):
        with pytest.raises(ArgumentError):
            bann_train(np.zeros((5, 1)), np.zeros(5), members=1, rng=rng)

    def test_variance_is_unbiased_member_spread(self, rng):
        X = rng.uniform(-1, 1, size=(30, 1))
        y = X[:, 0] ** 2
        ensemble = bann_train(X, y, members=4, hidden=3, cfg=LmConfig(max_iters=20), rng=rng)
        Xs = rng.uniform(-1, 1, size=(5, 1))
        outputs = ensemble.member_predictions(Xs)
        mean, var = bann_predict_batch(ensemble, Xs)
        np.testing.assert_allclose(mean, outputs.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(var, outputs.var(axis=0, ddof=1), rtol=1e-12)
        single_mean, single_var = bann_predict(ensemble, Xs[0])
        assert single_mean == pytest.approx(mean[0], rel=1e-12)
        assert single_var == pytest.approx(var[0], rel=1e-12)

    def test_identical_members_have_no_spread(self, rng):
        X = rng.uniform(-1, 1, size=(20, 1))
        y = np.cos(X[:, 0])
        full = np.arange(20)
        ensemble = bann_train(X, y, members=3, hidden=2, cfg=LmConfig(max_iters=10),
                              resamples=[full] * 3, member_rngs=[make_rng(0) for _ in range(3)])
        _, var = bann_predict_batch(ensemble, X)
        np.testing.assert_allclose(var, 0.0, atol=1e-20)

    def test_seeded_ensembles_match(self):
        X = np.linspace(-1, 1, 15)[:, None]
        y = np.abs(X[:, 0])
        a = bann_train(X, y, members=3, hidden=2, cfg=LmConfig(max_iters=10), rng=make_rng(1), workers=3)
        b = bann_train(X, y, members=3, hidden=2, cfg=LmConfig(max_iters=10), rng=make_rng(1))
        np.testing.assert_array_equal(a.member_predictions(X), b.member_predictions(X))


class TestSurrogateWrappers:
    def test_bann_surrogate_fits_smooth_curve(self, rng):
        X = rng.uniform(0, 1, size=(60, 1))
        y = 5.0 + 2.0 * np.sin(3 * X[:, 0])
        model = BannSurrogate.fit(X, y, [0.0], [1.0], members=4, hidden=4, rng=rng)
        mean, var = model.predict(X)
        assert np.sqrt(np.mean((mean - y) ** 2)) < 0.1
        assert np.all(var >= 0)

    def test_mlp_surrogate_reports_zero_variance(self, rng):
        X = rng.uniform(0, 1, size=(30, 2))
        model = MlpSurrogate.fit(X, X.sum(axis=1), [0.0, 0.0], [1.0, 1.0], hidden=3, rng=rng)
        _, var = model.predict(X)
        np.testing.assert_array_equal(var, 0.0)

    def test_surrogates_record_training_digest(self, rng):
        X = rng.uniform(0, 1, size=(20, 2))
        y = X.sum(axis=1)
        bann = BannSurrogate.fit(X, y, [0.0, 0.0], [1.0, 1.0], members=2, hidden=2, cfg=LmConfig(max_iters=5), rng=rng)
        mlp = MlpSurrogate.fit(X, y, [0.0, 0.0], [1.0, 1.0], hidden=2, cfg=LmConfig(max_iters=5), rng=rng)
        assert bann.training_digest == mlp.training_digest == array_digest(X, y)
