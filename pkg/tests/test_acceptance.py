"""Acceptance criteria 1-10, at their stated tolerances and budgets.

Each criterion is one test named ``test_criterion_NN_*``; the conftest hook
prints one PASS/FAIL line per criterion at the end of the run.
"""

from functools import lru_cache

import numpy as np
import pytest

from conftest import fd_check, random_config
from tensorfield.baselines import TuckerAlsConfig, tucker_als
from tensorfield.config import load_config
from tensorfield.grad import LossSpec
from tensorfield.model import (
    Activation,
    LayerSpec,
    ModelConfig,
    TnnParams,
    collapse_linear_tnn,
    default_config,
    init_params,
    param_count,
    tnn_forward,
    tucker_config,
)
from tensorfield.optim import OptimizerConfig
from tensorfield.recon import (
    NoiseSpec,
    SamplingSpec,
    decompose,
    error_decomposition,
    noise_fit_experiment,
    noise_residual,
    observe,
    prop1_bound,
    reconstruct,
    rmse,
    sample_mask,
)
from tensorfield.synth import synthetic_field
from tensorfield.tensor import (
    kronecker,
    mode_n_fold,
    mode_n_product,
    mode_n_unfold,
    tucker_compose,
    unvectorize,
    vectorize,
)

SEEDS = (0, 1, 2)
SHAPE = (20, 20, 20)


@lru_cache(maxsize=None)
def _field():
    return synthetic_field(0, SHAPE)


@lru_cache(maxsize=None)
def _trial(method: str, rho: float, sigma: float, seed: int) -> float:
    """RMSE of one Monte-Carlo trial on the default synthetic field."""
    cfg = load_config(None)
    x = _field()
    sampling = SamplingSpec(rho, seed)
    obs = observe(x, sample_mask(x.shape, sampling), NoiseSpec(sigma, seed), sampling)
    if method == "tucker_als":
        return rmse(tucker_als(obs, cfg.tucker_als(seed)).x, x)
    rep = reconstruct(obs, cfg.model(x.shape), cfg.loss_for(method), cfg.optimizer, truth=x, init_seed=seed)
    return rep.rmse


def _mean(method, rho, sigma):
    return float(np.mean([_trial(method, rho, sigma, s) for s in SEEDS]))


def test_criterion_01_parameter_counts():
    assert param_count(default_config()) == 875
    assert param_count(tucker_config((7, 8, 8), SHAPE)) == 908
    tnn2 = ModelConfig((10, 10, 10), (LayerSpec(SHAPE, Activation("tanh")),))
    assert param_count(tnn2) == 1600


def test_criterion_02_linear_collapse():
    rng = np.random.default_rng(2)
    for trial in range(100):
        cfg = random_config(rng, int(rng.integers(2, 4)), kinds=("linear",))
        # vary the linear gain too
        layers = tuple(LayerSpec(l.out_dims, Activation("linear", float(rng.uniform(0.5, 2.0)))) for l in cfg.layers)
        cfg = ModelConfig(cfg.core_dims, layers)
        params = init_params(cfg, seed=trial, scheme="normal")
        core, w1, w2, w3 = collapse_linear_tnn(params, cfg)
        np.testing.assert_allclose(tucker_compose(core, w1, w2, w3), tnn_forward(params, cfg), rtol=0, atol=1e-10)


def test_criterion_03_gradient_correctness():
    rng = np.random.default_rng(3)
    n_instances = 0
    for trial in range(25):
        for spec in (LossSpec(0.0, "none"), LossSpec(0.1, "tv")):
            cfg = random_config(rng, int(rng.integers(1, 4)), max_dim=3)
            # O(1) weights keep gradients well above finite-difference round-off
            params = init_params(cfg, seed=trial, scheme="normal")
            params = TnnParams.from_arrays([rng.normal(scale=0.8, size=a.shape) for a in params.arrays()])
            shape = cfg.output_shape
            y = rng.normal(size=shape)
            o = (rng.random(shape) < 0.6).astype(float)
            worst, checked, skipped = fd_check(params, cfg, y, o, spec)
            assert checked > 0.5 * (checked + skipped)
            assert worst < 1e-5, f"instance {trial} ({spec}): rel err {worst:.2e}"
            n_instances += 1
    assert n_instances >= 50


@pytest.mark.slow
def test_criterion_04_noise_rejection_bound():
    model = ModelConfig((5, 5, 5), (LayerSpec(SHAPE, Activation("relu")),))
    bound = prop1_bound(125, 8000)
    assert bound == 0.84375
    for seed in range(5):
        resid, energy, trace = noise_residual(model, OptimizerConfig(), 0.5, seed)
        assert trace.n_iters == 15000
        assert resid >= bound * energy, f"seed {seed}: {resid / energy:.4f} < {bound}"


@pytest.mark.slow
def test_criterion_05_noise_fit_ordering():
    res = noise_fit_experiment(default_config(), OptimizerConfig(), 0.5, _field(), seed=0)
    noise, field, both = res.noise.final_loss, res.field.final_loss, res.field_plus_noise.final_loss
    assert noise > both > field, (noise, both, field)


def test_criterion_06_error_decomposition():
    rng = np.random.default_rng(6)
    for _ in range(200):
        shape = tuple(int(d) for d in rng.integers(1, 6, size=3))
        x, a, b = (rng.normal(scale=rng.uniform(0.1, 10), size=shape) for _ in range(3))
        assert decompose(x, a, b).relative_residual <= 1e-8
    # zero branches hold exactly
    x, d = rng.normal(size=(4, 5, 6)), rng.normal(size=(4, 5, 6))
    same_hat = decompose(x, d, d)
    assert same_hat.E2 == 0.0 and same_hat.eps == 0.0
    exact = decompose(x, x, d)
    assert exact.E1 == 0.0 and exact.eps == 0.0
    # diagnostic runs on the real pipeline
    small = OptimizerConfig(max_iters=1500)
    field = _field()
    for seed in (0, 1):
        sampling = SamplingSpec(0.2, seed)
        obs = observe(field, sample_mask(SHAPE, sampling), NoiseSpec(0.1, seed), sampling)
        dec = error_decomposition(field, default_config(), LossSpec(), small, obs, init_seed=seed)
        assert dec.relative_residual <= 1e-8
        pinned = error_decomposition(field, default_config(), LossSpec(), small, obs,
                                     init_seed=seed, warm_start=True, hat_iters=0)
        assert pinned.E2 == 0.0 and pinned.eps == 0.0
        assert pinned.relative_residual <= 1e-8


@pytest.mark.slow
def test_criterion_07_monotone_trend():
    means = [_mean("tnn", rho, 0.1) for rho in (0.1, 0.2, 0.4)]
    assert means[0] > means[1] > means[2], means
    tnn, als = _mean("tnn", 0.3, 0.1), _mean("tucker_als", 0.3, 0.1)
    assert tnn <= als, (tnn, als)


@pytest.mark.slow
def test_criterion_08_tv_benefit_sparse():
    tv, plain = _mean("tnn_tv", 0.1, 0.1), _mean("tnn", 0.1, 0.1)
    assert tv <= plain, (tv, plain)


def test_criterion_09_tucker_als_recovery():
    rng = np.random.default_rng(9)
    shape = (12, 10, 11)
    factors = [np.linalg.qr(rng.normal(size=(n, 2)))[0] for n in shape]
    x = tucker_compose(rng.normal(size=(2, 2, 2)) * 5, *factors)
    sampling = SamplingSpec(0.8, 0)
    obs = observe(x, sample_mask(shape, sampling), NoiseSpec(0.0, 0), sampling)
    res = tucker_als(obs, TuckerAlsConfig((2, 2, 2), max_sweeps=100, seed=0))
    assert rmse(res.x, x) < 1e-2 * x.std()
    assert all(b <= a * (1 + 1e-12) + 1e-24 for a, b in zip(res.residuals, res.residuals[1:]))


def test_criterion_10_tensor_algebra():
    rng = np.random.default_rng(10)
    for _ in range(100):
        shape = tuple(int(d) for d in rng.integers(1, 7, size=3))
        t = rng.normal(size=shape)
        for n in (1, 2, 3):
            np.testing.assert_array_equal(mode_n_fold(mode_n_unfold(t, n), n, shape), t)
            a = rng.normal(size=(int(rng.integers(1, 6)), shape[n - 1]))
            b = rng.normal(size=(int(rng.integers(1, 6)), a.shape[0]))
            np.testing.assert_allclose(
                mode_n_product(mode_n_product(t, a, n), b, n), mode_n_product(t, b @ a, n), rtol=1e-10, atol=1e-12
            )
        m1 = rng.normal(size=(3, shape[0]))
        m3 = rng.normal(size=(2, shape[2]))
        np.testing.assert_allclose(
            mode_n_product(mode_n_product(t, m1, 1), m3, 3),
            mode_n_product(mode_n_product(t, m3, 3), m1, 1),
            rtol=1e-10, atol=1e-12,
        )
        u1, u2, u3 = (rng.normal(size=(int(rng.integers(1, 5)), s)) for s in shape)
        lhs = vectorize(tucker_compose(t, u1, u2, u3))
        rhs = kronecker(u3, kronecker(u2, u1)) @ vectorize(t)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)
        np.testing.assert_array_equal(unvectorize(vectorize(t), shape), t)
