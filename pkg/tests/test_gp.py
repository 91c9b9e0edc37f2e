"""Tests for Gaussian-process training, prediction and hyperparameter search."""

import math

import numpy as np
import pytest

from core import ArgumentError, TrainingError
from gp import (
    GpHyperparams, GpSearchConfig, GpSurrogate, fit_hyperparams, gp_predict, gp_predict_batch, gp_train,
    kernel, kernel_matrix, log_marginal_likelihood,
)
from utils import array_digest


def _random_problem(rng):
    n = int(rng.integers(1, 9))
    d = int(rng.integers(1, 4))
    X = rng.uniform(-1, 1, size=(n, d))
    y = rng.normal(size=n)
    hyper = GpHyperparams(length_scales=tuple(rng.uniform(0.3, 2.0, size=d)),
                          signal_variance=float(rng.uniform(0.5, 2.0)),
                          noise_variance=float(rng.uniform(1e-3, 1e-1)))
    return X, y, hyper


def _dense_oracle(X, y, hyper, Xs):
    K = kernel_matrix(X, X, hyper) + (hyper.noise_variance + hyper.jitter) * np.eye(len(X))
    Kinv = np.linalg.inv(K)
    Ks = kernel_matrix(Xs, X, hyper)
    mean = Ks @ Kinv @ y
    var = hyper.signal_variance - np.einsum("ij,jk,ik->i", Ks, Kinv, Ks)
    _, logdet = np.linalg.slogdet(K)
    lml = -0.5 * y @ Kinv @ y - 0.5 * logdet - 0.5 * len(X) * math.log(2 * math.pi)
    return mean, var, lml


class TestKernel:
    def test_self_similarity(self):
        hyper = GpHyperparams(length_scales=(0.5, 2.0), signal_variance=3.0)
        assert kernel([1.0, 2.0], [1.0, 2.0], hyper) == pytest.approx(3.0)

    def test_matches_matrix(self, rng):
        hyper = GpHyperparams(length_scales=(0.5, 2.0))
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert kernel(a, b, hyper) == pytest.approx(kernel_matrix(a, b, hyper)[0, 0], rel=1e-12)

    def test_rejects_bad_hyperparameters(self):
        with pytest.raises(ArgumentError):
            GpHyperparams(length_scales=(0.0,))
        with pytest.raises(ArgumentError):
            GpHyperparams(length_scales=(1.0,), noise_variance=-1.0)


class TestOracleEquivalence:
    def test_fifty_random_datasets(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            X, y, hyper = _random_problem(rng)
            Xs = rng.uniform(-1.5, 1.5, size=(5, X.shape[1]))
            model = gp_train(X, y, hyper)
            mean, var = gp_predict_batch(model, Xs)
            o_mean, o_var, o_lml = _dense_oracle(X, y, hyper, Xs)
            np.testing.assert_allclose(mean, o_mean, atol=1e-8)
            np.testing.assert_allclose(var, np.maximum(o_var, 0.0), atol=1e-8)
            assert log_marginal_likelihood(X, y, hyper) == pytest.approx(o_lml, abs=1e-8)


class TestInterpolation:
    def test_noise_free_reproduces_targets(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            d = int(rng.integers(1, 4))
            X = np.column_stack([rng.permutation(np.linspace(-1, 1, 8)) for _ in range(d)])
            y = np.sin(3 * X).sum(axis=1)
            hyper = GpHyperparams(length_scales=(0.15,) * d, noise_variance=0.0, jitter=1e-10)
            mean, var = gp_predict_batch(gp_train(X, y, hyper), X)
            np.testing.assert_allclose(mean, y, atol=1e-6)
            assert np.all(var <= 1e-6)

    def test_single_point(self):
        hyper = GpHyperparams(length_scales=(1.0,), noise_variance=0.0)
        model = gp_train(np.array([[0.0]]), np.array([2.0]), hyper)
        mean, var = gp_predict(model, [0.0])
        assert mean == pytest.approx(2.0, abs=1e-6)
        assert var == pytest.approx(0.0, abs=1e-6)

    def test_far_point_reverts_to_prior(self):
        hyper = GpHyperparams(length_scales=(0.1,), signal_variance=2.0)
        model = gp_train(np.array([[0.0], [0.1]]), np.array([1.0, -1.0]), hyper)
        mean, var = gp_predict(model, [100.0])
        assert mean == pytest.approx(0.0, abs=1e-12)
        assert var == pytest.approx(2.0, abs=1e-12)

    def test_duplicate_inputs_without_noise(self):
        hyper = GpHyperparams(length_scales=(1.0,), noise_variance=0.0)
        with pytest.raises(TrainingError):
            gp_train(np.array([[0.5], [0.5]]), np.array([1.0, 2.0]), hyper)

    def test_dimension_mismatch(self):
        with pytest.raises(TrainingError):
            gp_train(np.zeros((3, 2)), np.zeros(3), GpHyperparams(length_scales=(1.0,)))

    def test_training_order_does_not_matter(self, rng):
        X = rng.uniform(0, 1, size=(20, 2))
        y = np.sin(4 * X[:, 0]) + X[:, 1]
        hyper = GpHyperparams(length_scales=(0.5, 0.5), noise_variance=1e-3)
        perm = rng.permutation(20)
        Xs = rng.uniform(0, 1, size=(50, 2))
        mean, var = gp_predict_batch(gp_train(X, y, hyper), Xs)
        p_mean, p_var = gp_predict_batch(gp_train(X[perm], y[perm], hyper), Xs)
        np.testing.assert_allclose(p_mean, mean, rtol=0, atol=1e-10)
        np.testing.assert_allclose(p_var, var, rtol=0, atol=1e-10)


class TestHyperparameterSearch:
    def test_improves_on_default(self, rng):
        X = rng.uniform(0, 1, size=(30, 1))
        y = np.sin(12 * X[:, 0])
        default = GpHyperparams.default(1)
        fitted = fit_hyperparams(X, y, GpSearchConfig(), rng=rng, default=default)
        assert log_marginal_likelihood(X, y, fitted) >= log_marginal_likelihood(X, y, default) - 1e-9
        assert fitted.noise_variance >= GpSearchConfig().min_noise * (1 - 1e-12)

    def test_needs_two_samples(self):
        with pytest.raises(ArgumentError):
            fit_hyperparams(np.zeros((1, 1)), np.zeros(1))

    def test_search_is_seeded(self):
        X = np.linspace(0, 1, 12)[:, None]
        y = X[:, 0] ** 2
        a = fit_hyperparams(X, y, rng=np.random.default_rng(5))
        b = fit_hyperparams(X, y, rng=np.random.default_rng(5))
        assert a == b


    def test_zero_noise_default_is_scored_unclipped(self):
        X = np.linspace(0, 1, 8)[:, None]
        y = np.sin(6 * X[:, 0])
        default = GpHyperparams(length_scales=(0.3,), signal_variance=1.0, noise_variance=0.0)
        fitted = fit_hyperparams(X, y, GpSearchConfig(starts=2, max_evals=60), rng=np.random.default_rng(0),
                                 default=default)
        assert log_marginal_likelihood(X, y, fitted) >= log_marginal_likelihood(X, y, default) - 1e-12

    def test_zero_targets_prefer_small_signal_variance(self):
        X = np.linspace(0, 1, 10)[:, None]
        y = np.zeros(10)
        small = GpHyperparams(length_scales=(0.3,), signal_variance=1e-3)
        large = GpHyperparams(length_scales=(0.3,), signal_variance=10.0)
        assert log_marginal_likelihood(X, y, small) > log_marginal_likelihood(X, y, large)
        fitted = fit_hyperparams(X, y, rng=np.random.default_rng(0))
        assert fitted.signal_variance < 1.0

    def test_recovers_length_scale(self):
        rng = np.random.default_rng(11)
        truth = GpHyperparams(length_scales=(0.2,), signal_variance=1.0, noise_variance=1e-4)
        found = []
        for _ in range(20):
            X = np.sort(rng.uniform(0, 1, size=(40, 1)), axis=0)
            K = kernel_matrix(X, X, truth) + 1e-4 * np.eye(40)
            y = rng.multivariate_normal(np.zeros(40), K)
            found.append(fit_hyperparams(X, y, rng=rng).length_scales[0])
        assert 0.1 <= float(np.median(found)) <= 0.4


class TestGpSurrogate:
    def test_predicts_in_target_units(self, rng):
        X = rng.uniform(-5, 5, size=(25, 2))
        y = 100.0 + 3.0 * X[:, 0] - X[:, 1]
        model = GpSurrogate.fit(X, y, [-5, -5], [5, 5], rng=rng)
        mean, var = model.predict(X)
        np.testing.assert_allclose(mean, y, atol=0.5)
        assert np.all(var >= 0)

    def test_records_training_digest(self, rng):
        X = rng.uniform(0, 1, size=(12, 2))
        y = X.sum(axis=1)
        model = GpSurrogate.fit(X, y, [0, 0], [1, 1], GpSearchConfig(starts=1, max_evals=20), rng=rng)
        assert model.training_digest == array_digest(X, y)
