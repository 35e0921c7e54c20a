import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tensorfield.baselines import (
    GREEN_FUNCTIONS,
    SplineModel,
    TuckerAlsConfig,
    spline_fit,
    spline_predict,
    spline_predict_grid,
    tucker_als,
    tucker_als_complete,
)
from tensorfield.recon import NoiseSpec, ObservationSet, SamplingSpec, observe, rmse, sample_mask
from tensorfield.synth import synthetic_field
from tensorfield.tensor import ShapeError, tucker_compose


def obs_at(shape, points, values):
    y, o = np.zeros(shape), np.zeros(shape)
    for p, v in zip(points, values):
        y[p], o[p] = v, 1.0
    return ObservationSet(y, o)


def low_rank(shape, rank, seed):
    rng = np.random.default_rng(seed)
    us = [np.linalg.qr(rng.normal(size=(n, r)))[0] for n, r in zip(shape, rank)]
    return tucker_compose(rng.normal(size=rank) * 5, *us)


class TestSpline:
    def test_single_sample(self):
        model = spline_fit(obs_at((4, 4, 4), [(1, 2, 3)], [7.0]), ridge=1e-8)
        assert np.all(np.isfinite(model.weights))
        assert spline_predict(model, (1, 2, 3)) == pytest.approx(7.0)

    def test_two_equal_samples(self):
        obs = obs_at((5, 5, 5), [(0, 0, 0), (4, 3, 2)], [2.5, 2.5])
        model = spline_fit(obs, ridge=1e-8, center=False)
        for p in [(0, 0, 0), (4, 3, 2)]:
            assert spline_predict(model, p) == pytest.approx(2.5, abs=1e-4)

    def test_deterministic(self):
        x = synthetic_field(0, (8, 8, 8))
        s = SamplingSpec(0.2, 1)
        obs = observe(x, sample_mask(x.shape, s), NoiseSpec(0.1, 1), s)
        np.testing.assert_array_equal(spline_fit(obs).weights, spline_fit(obs).weights)

    def test_zero_weights(self):
        model = SplineModel(np.array([[0.0, 0, 0], [2.0, 1, 0]]), np.zeros(2))
        np.testing.assert_array_equal(spline_predict_grid(model, (3, 3, 3)), 0.0)

    def test_distance_green(self):
        model = SplineModel(np.zeros((1, 3)), np.ones(1))
        assert spline_predict(model, (3, 4, 0)) == 5.0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from(sorted(GREEN_FUNCTIONS)))
    def test_interpolates_samples(self, seed, green):
        x = synthetic_field(seed % 5, (8, 8, 8))
        s = SamplingSpec(0.1, seed)
        obs = observe(x, sample_mask(x.shape, s), NoiseSpec(0.0), s)
        model = spline_fit(obs, green)
        grid = spline_predict_grid(model, x.shape)
        hit = obs.o == 1
        np.testing.assert_allclose(grid[hit], x[hit], atol=1e-3)

    def test_grid_matches_pointwise(self):
        x = synthetic_field(0, (6, 5, 4))
        s = SamplingSpec(0.3, 0)
        model = spline_fit(observe(x, sample_mask(x.shape, s), NoiseSpec(0.0), s))
        grid = spline_predict_grid(model, x.shape)
        for idx in [(0, 0, 0), (5, 4, 3), (2, 1, 3)]:
            assert grid[idx] == pytest.approx(spline_predict(model, idx), rel=1e-12)

    def test_three_samples_smoke(self):
        obs = obs_at((20, 20, 20), [(0, 0, 0), (10, 5, 2), (19, 19, 19)], [1500.0, 1501.0, 1498.0])
        grid = spline_predict_grid(spline_fit(obs), (20, 20, 20))
        assert np.all(np.isfinite(grid))

    def test_unknown_green(self):
        with pytest.raises(ValueError):
            spline_fit(obs_at((2, 2, 2), [(0, 0, 0)], [1.0]), "gaussian")

    def test_no_samples(self):
        with pytest.raises(ValueError):
            spline_fit(ObservationSet(np.zeros((2, 2, 2)), np.zeros((2, 2, 2))))


class TestTuckerAls:
    def test_recovers_rank2_from_80_percent(self):
        x = low_rank((12, 10, 11), (2, 2, 2), 0)
        s = SamplingSpec(0.8, 0)
        res = tucker_als(observe(x, sample_mask(x.shape, s), NoiseSpec(0.0), s), TuckerAlsConfig((2, 2, 2)))
        assert res.n_sweeps <= 100
        assert rmse(res.x, x) < 1e-2 * x.std()

    def test_exact_when_fully_observed(self):
        x = low_rank((9, 8, 7), (3, 2, 2), 1)
        x_hat = tucker_als_complete(observe(x, np.ones(x.shape)), TuckerAlsConfig((3, 2, 2)))
        assert rmse(x_hat, x) < 1e-6 * x.std()

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.2, 0.9))
    def test_residual_non_increasing(self, seed, rho):
        x = synthetic_field(seed % 3, (8, 8, 8))
        s = SamplingSpec(rho, seed)
        obs = observe(x, sample_mask(x.shape, s), NoiseSpec(0.1, seed), s)
        # sparse masks can leave a slice unobserved; that warning is expected here
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = tucker_als(obs, TuckerAlsConfig((3, 3, 3), max_sweeps=20, seed=seed))
        r = np.array(res.residuals)
        assert np.all(r[1:] <= r[:-1] * (1 + 1e-9) + 1e-12)

    def test_frozen_rows_warn(self):
        x = low_rank((6, 6, 6), (2, 2, 2), 2)
        o = np.ones(x.shape)
        o[3, :, :] = 0.0
        with pytest.warns(RuntimeWarning, match="no observations"):
            res = tucker_als(ObservationSet(x * o, o), TuckerAlsConfig((2, 2, 2), max_sweeps=5))
        assert (1, 3) in res.frozen_rows

    def test_deterministic(self):
        x = synthetic_field(0, (8, 8, 8))
        s = SamplingSpec(0.4, 0)
        obs = observe(x, sample_mask(x.shape, s), NoiseSpec(0.1, 0), s)
        a = tucker_als(obs, TuckerAlsConfig((3, 3, 3), seed=4))
        b = tucker_als(obs, TuckerAlsConfig((3, 3, 3), seed=4))
        np.testing.assert_array_equal(a.x, b.x)

    def test_core_too_large(self):
        with pytest.raises(ShapeError):
            tucker_als(observe(np.ones((3, 3, 3)), np.ones((3, 3, 3))), TuckerAlsConfig((4, 2, 2)))

    @pytest.mark.parametrize("kwargs", [{"core_dims": (0, 2, 2)}, {"max_sweeps": 0}, {"tol": -1.0}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            TuckerAlsConfig(**kwargs)

