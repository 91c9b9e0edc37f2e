"""Tests for UCB scoring, elite selection and the SAIL loop."""

from dataclasses import replace

import numpy as np
import pytest

import acquisition
from acquisition import (
    AcquisitionConfig, SailError, SurrogateConfig, acquisition_source, mean_source, sail, select_from_archive,
    train_surrogate, ucb, write_rounds_csv, write_samples_csv,
)
from archive import Archive, Elite
from core import ArgumentError, TrainingError, make_rng
from gp import GpSearchConfig
from hierarchy import HierarchyConfig
from illumination import IlluminationConfig, map_elites
from surrogates import BaseModelConfig
from utils import read_csv

FAST_SURROGATE = SurrogateConfig(kind="gp", base=BaseModelConfig(kind="gp", gp=GpSearchConfig(starts=1, max_evals=20)))


def _tiny(rounds=2, batch=4, init=12, acq_evals=60, pred_evals=80):
    acq = AcquisitionConfig(kappa=1.0, batch_size=batch, rounds=rounds, surrogate_kind="gp",
                            acq_evaluations=acq_evals, prediction_evaluations=pred_evals, acq_batch=16)
    illum = IlluminationConfig(init_count=init, total_evaluations=max(init, 100), resolution=(6, 6))
    return acq, illum


class TestUcb:
    def test_examples(self):
        assert ucb(1.0, 4.0, 2.0) == pytest.approx(5.0)
        assert ucb(-3.0, 0.0, 10.0) == pytest.approx(-3.0)
        np.testing.assert_allclose(ucb(np.array([0.0, 1.0]), np.array([1.0, 9.0]), 0.5), [0.5, 2.5])

    def test_scalar_in_scalar_out(self):
        assert isinstance(ucb(0.0, 1.0, 1.0), float)

    def test_monotone_in_kappa_and_variance(self):
        rng = np.random.default_rng(12)
        n = 100_000
        mean = rng.normal(size=n)
        v1, v2 = np.sort(rng.uniform(0, 5, size=(2, n)), axis=0)
        k1, k2 = np.sort(rng.uniform(0, 5, size=(2, n)), axis=0)
        base = np.array([ucb(m, v, k) for m, v, k in zip(mean[:100], v1[:100], k1[:100])])
        np.testing.assert_allclose(ucb(mean[:100], v1[:100], k1[:100]), base, atol=1e-12)
        assert np.all(ucb(mean, v1, k1) <= ucb(mean, v2, k1) + 1e-12)
        assert np.all(ucb(mean, v1, k1) <= ucb(mean, v1, k2) + 1e-12)

    def test_shifting_the_mean_shifts_the_score(self, rng):
        mean, var = rng.normal(size=20), rng.uniform(size=20)
        np.testing.assert_allclose(ucb(mean + 3.5, var, 2.0), ucb(mean, var, 2.0) + 3.5, atol=1e-12)

    def test_negative_variance(self):
        with pytest.raises(ArgumentError):
            ucb(0.0, -1e-3, 1.0)


class TestSources:
    def test_zero_kappa_matches_mean_map(self, rastrigin2d, rng):
        X = rng.uniform(-5.12, 5.12, size=(30, 2))
        model = train_surrogate(FAST_SURROGATE, X, rastrigin2d.evaluate_batch(X), rng)
        cfg = IlluminationConfig(init_count=20, total_evaluations=300, resolution=(6, 6))
        a = map_elites(rastrigin2d, cfg, fitness_source=acquisition_source(model, 0.0), rng=make_rng(5)).archive
        b = map_elites(rastrigin2d, cfg, fitness_source=mean_source(model), rng=make_rng(5)).archive
        assert a.occupied_indices() == b.occupied_indices()
        for ea, eb in zip(a.elites(), b.elites()):
            np.testing.assert_array_equal(ea.x, eb.x)
            assert ea.fitness == eb.fitness

    def test_hierarchical_needs_features(self, rng):
        cfg = SurrogateConfig(kind="hierarchical", hierarchy=HierarchyConfig(depth=0))
        with pytest.raises(ArgumentError):
            train_surrogate(cfg, np.zeros((4, 2)), np.arange(4.0), rng)

    def test_unknown_kind(self):
        with pytest.raises(ArgumentError):
            SurrogateConfig(kind="forest")


class TestSelection:
    def _archive(self, bins):
        archive = Archive((4, 4))
        for i, f in enumerate(bins):
            archive.offer(Elite(x=np.array([float(i), 0.0]), features=np.asarray(f), fitness=1.0))
        return archive

    def test_distinct_bins(self, rastrigin2d, rng):
        archive = self._archive([[0.1, 0.1], [0.4, 0.1], [0.6, 0.6], [0.9, 0.9], [0.1, 0.9]])
        X = select_from_archive(archive, 3, rng, rastrigin2d, 0.1)
        assert X.shape == (3, 2)
        assert len({row[0] for row in X}) == 3

    def test_shortfall_filled_with_mutants(self, rastrigin2d, rng):
        archive = self._archive([[0.1, 0.1], [0.9, 0.9]])
        X = select_from_archive(archive, 5, rng, rastrigin2d, 0.1)
        assert X.shape == (5, 2)
        assert sorted(X[:2, 0]) == [0.0, 1.0]
        assert np.all(np.abs(X) <= 5.12)


class TestSail:
    def test_exact_true_budget(self, rastrigin2d):
        rng = np.random.default_rng(21)
        for _ in range(100):
            rounds, batch, init = int(rng.integers(0, 3)), int(rng.integers(1, 6)), int(rng.integers(5, 15))
            acq, illum = _tiny(rounds, batch, init, acq_evals=20, pred_evals=20)
            result = sail(rastrigin2d, acq, illum, FAST_SURROGATE, rng=make_rng(int(rng.integers(1000))))
            assert len(result.true_samples) == init + rounds * batch
            assert [row[1] for row in result.history] == [init + r * batch for r in range(1, rounds + 1)]

    def test_zero_rounds(self, rastrigin2d):
        acq, illum = _tiny(rounds=0)
        result = sail(rastrigin2d, acq, illum, FAST_SURROGATE, rng=make_rng(0))
        assert result.history == []
        assert len(result.true_samples) == 12
        assert result.prediction_archive.occupied > 0
        assert result.acquisition_archive is None

    def test_samples_are_truly_evaluated(self, rastrigin2d):
        acq, illum = _tiny(rounds=1)
        result = sail(rastrigin2d, acq, illum, FAST_SURROGATE, rng=make_rng(1))
        for s in result.true_samples:
            assert s.fitness == rastrigin2d.evaluate(s.x)
        assert {s.meta["round"] for s in result.true_samples} == {0, 1}

    def test_seeded_runs_repeat(self, rastrigin2d):
        acq, illum = _tiny(rounds=1)
        a = sail(rastrigin2d, acq, illum, FAST_SURROGATE, rng=make_rng(4))
        b = sail(rastrigin2d, acq, illum, FAST_SURROGATE, rng=make_rng(4), workers=3)
        np.testing.assert_array_equal([s.x for s in a.true_samples], [s.x for s in b.true_samples])
        assert a.prediction_archive.metrics() == b.prediction_archive.metrics()

    def test_hierarchical_surrogate(self, rastrigin2d):
        acq, illum = _tiny(rounds=1, init=30)
        acq = replace(acq, surrogate_kind="hierarchical")
        surrogate = SurrogateConfig(kind="hierarchical", base=FAST_SURROGATE.base,
                                    hierarchy=HierarchyConfig(depth=1, min_leaf_samples=5))
        result = sail(rastrigin2d, acq, illum, surrogate, rng=make_rng(2))
        assert result.surrogate.kind == "hierarchical"
        assert len(result.true_samples) == 34

    def test_kind_mismatch_is_rejected(self, rastrigin2d):
        acq, illum = _tiny(rounds=1)
        surrogate = SurrogateConfig(kind="hierarchical", base=FAST_SURROGATE.base)
        with pytest.raises(ArgumentError, match="hierarchical"):
            sail(rastrigin2d, acq, illum, surrogate, rng=make_rng(0))

    def test_default_surrogate_follows_acquisition_kind(self, rastrigin2d):
        acq, illum = _tiny(rounds=0, init=30)
        acq = replace(acq, surrogate_kind="mlp")
        assert sail(rastrigin2d, acq, illum, rng=make_rng(0)).surrogate.kind == "mlp"

    def test_training_failure_names_the_round(self, rastrigin2d, monkeypatch):
        def broken(*args, **kwargs):
            raise TrainingError("singular")
        monkeypatch.setattr(acquisition, "train_surrogate", broken)
        acq, illum = _tiny(rounds=2)
        with pytest.raises(SailError, match="round 1"):
            sail(rastrigin2d, acq, illum, FAST_SURROGATE, rng=make_rng(0))

    def test_output_files(self, rastrigin2d, tmp_path):
        acq, illum = _tiny(rounds=2)
        result = sail(rastrigin2d, acq, illum, FAST_SURROGATE, rng=make_rng(3))
        rounds = read_csv(write_rounds_csv(result.history, tmp_path / "rounds.csv"))
        assert [r["round"] for r in rounds] == ["1", "2"]
        samples = read_csv(write_samples_csv(result.true_samples, tmp_path / "samples.csv"))
        assert list(samples[0]) == ["round", "fitness", "feat_0", "feat_1", "x_0", "x_1"]
        assert len(samples) == 20


class TestAcquisitionConfig:
    @pytest.mark.parametrize("kwargs", [{"kappa": -1.0}, {"batch_size": 0}, {"rounds": -1},
                                        {"surrogate_kind": "svm"}, {"acq_batch": 0}])
    def test_rejects(self, kwargs):
        with pytest.raises(ArgumentError):
            AcquisitionConfig(**kwargs)
