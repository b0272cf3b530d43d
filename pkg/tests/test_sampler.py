import math

import numpy as np
import pytest

from ggmc import (
    ContractViolation,
    MassMatrix,
    SamplerConfig,
    TargetModel,
    make_gaussian,
    make_logistic_regression,
    make_synthetic_logistic_data,
    run_chain,
    run_chains,
    run_mala,
)
from ggmc.diagnostics import effective_sample_size
from ggmc.sampler import check_pairing


def _within(samples, mean, variance, k=4.0):
    x = np.asarray(samples)
    for j in range(x.shape[1]):
        col = x[:, j]
        se = col.std(ddof=1) / math.sqrt(effective_sample_size(col))
        assert abs(col.mean() - mean[j]) < k * se, (j, col.mean(), se)
        dev = (col - col.mean()) ** 2
        vse = dev.std(ddof=1) / math.sqrt(effective_sample_size(dev))
        assert abs(col.var(ddof=1) - variance[j]) < k * vse, (j, col.var(), vse)


class TestDeterminism:
    def test_same_seed_same_chain(self, gauss2d):
        cfg = SamplerConfig(0.3, 1.0)
        a = run_chain(gauss2d, cfg, 500, seed=5)
        b = run_chain(gauss2d, cfg, 500, seed=5)
        np.testing.assert_array_equal(a.theta, b.theta)
        np.testing.assert_array_equal(a.all_log_alpha, b.all_log_alpha)

    def test_seeds_differ(self, gauss2d):
        cfg = SamplerConfig(0.3, 1.0)
        a = run_chain(gauss2d, cfg, 50, seed=5)
        b = run_chain(gauss2d, cfg, 50, seed=6)
        assert not np.array_equal(a.theta, b.theta)

    def test_parallel_chains_reproducible(self, gauss2d):
        cfg = SamplerConfig(0.3, 1.0)
        a = run_chains(gauss2d, cfg, 300, n_chains=3, seed=1)
        b = run_chains(gauss2d, cfg, 300, n_chains=3, seed=1, max_workers=1)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.theta, y.theta)
        assert not np.array_equal(a[0].theta, a[1].theta)

    def test_pre_draw_matches_lazy_draws(self, gauss2d):
        cfg = SamplerConfig(0.2, 1.0)
        kw = dict(correction="multi_step", multi_step_n=5, seed=9)
        a = run_chain(gauss2d, cfg, 500, pre_draw=True, **kw)
        b = run_chain(gauss2d, cfg, 500, pre_draw=False, **kw)
        np.testing.assert_array_equal(a.theta, b.theta)


class TestPairing:
    def test_corrected_em_rejected(self, std_normal):
        with pytest.raises(ContractViolation, match="theorem1-demo"):
            run_chain(std_normal, SamplerConfig(0.1, 1.0), 10, integrator="euler_maruyama")
        with pytest.raises(ContractViolation):
            check_pairing("euler_maruyama", "multi_step")

    def test_corrected_sgld_rejected(self):
        with pytest.raises(ContractViolation):
            check_pairing("sgld", "per_step")

    def test_uncorrected_em_always_zero_acceptance(self, std_normal):
        res = run_chain(std_normal, SamplerConfig(0.1, 1.0), 2000,
                        integrator="euler_maruyama", correction="none")
        assert np.all(res.all_log_alpha == -math.inf)
        assert res.all_accepted.all()
        assert res.mean_accept_prob == 0.0

    def test_bad_arguments(self, std_normal):
        cfg = SamplerConfig(0.1, 1.0)
        with pytest.raises(ContractViolation):
            run_chain(std_normal, cfg, 10, refresh="sometimes")
        with pytest.raises(ContractViolation):
            run_chain(std_normal, cfg, 10, theta0=[0.0, 1.0])
        with pytest.raises(ContractViolation):
            run_chain(std_normal, cfg, 10, correction="maybe")
        with pytest.raises(ContractViolation):
            run_chain(std_normal, cfg, 10, correction="multi_step", multi_step_n=0)


def _counting(target):
    calls = {"n": 0}

    def grad(theta):
        calls["n"] += 1
        return target.grad(theta)

    return TargetModel(target.dim, target.potential, grad), calls


def test_gradient_reused_between_steps(gauss2d):
    target, calls = _counting(gauss2d)
    run_chain(target, SamplerConfig(0.5, 1.0), 300, seed=2)
    assert calls["n"] == 301


def _cliff():
    # quadratic bowl whose gradient turns NaN past |theta| = 2
    def grad(theta):
        return np.where(np.abs(theta) > 2.0, np.nan, theta)

    return TargetModel(1, lambda t: 0.5 * float(t @ t), grad)


def test_forced_rejection_keeps_chain_alive():
    res = run_chain(_cliff(), SamplerConfig(0.8, 0.5), 5000, seed=4)
    assert res.error is None
    assert res.forced_rejections > 0
    assert np.all(np.isfinite(res.theta))
    assert np.all(np.abs(res.theta) <= 2.0)


def test_uncorrected_divergence_reports_partial_output():
    res = run_chain(_cliff(), SamplerConfig(0.8, 0.5), 5000, seed=4, correction="none")
    assert res.error is not None and "step" in res.error
    assert 0 < len(res.theta) < 5000
    assert np.all(np.isfinite(res.theta))


def test_thinning(std_normal):
    res = run_chain(std_normal, SamplerConfig(0.3, 1.0), 1000, thin=10)
    assert res.theta.shape == (100, 1)
    assert res.all_accepted.shape == (1000,)
    np.testing.assert_array_equal(res.step, np.arange(10, 1001, 10))


def test_mh_removes_discretisation_bias(std_normal):
    cfg = SamplerConfig(1.0, 1.0)
    exact = run_chain(std_normal, cfg, 40_000, seed=8)
    raw = run_chain(std_normal, cfg, 40_000, seed=8, correction="none")
    assert abs(exact.theta.var() - 1.0) < 0.08
    # leapfrog-based OBABO inflates the configurational variance to 1 / (1 - h^2 / 4)
    assert abs(raw.theta.var() - 4.0 / 3.0) < 0.1
    assert np.isfinite(raw.all_log_alpha).all()


@pytest.mark.slow
def test_hmc_via_leapfrog(gauss2d):
    res = run_chain(gauss2d, SamplerConfig(0.3, 5.0), 30_000, integrator="leapfrog",
                    correction="multi_step", multi_step_n=10, seed=12)
    assert 0.5 < res.acceptance_rate < 1.0
    _within(res.theta, [0, 0], [1, 4])


@pytest.mark.slow
def test_mass_matrix_chain(gauss2d):
    cfg = SamplerConfig(0.4, 1.0, mass=MassMatrix([1.0, 0.25]))
    res = run_chain(gauss2d, cfg, 40_000, seed=13)
    _within(res.theta, [0, 0], [1, 4])


@pytest.mark.slow
def test_full_refresh_multi_step(gauss2d):
    res = run_chain(gauss2d, SamplerConfig(0.3, 1.0), 40_000, correction="multi_step",
                    multi_step_n=4, refresh="full", seed=14)
    _within(res.theta, [0, 0], [1, 4])


def test_minibatch_chain_runs():
    x, y, _ = make_synthetic_logistic_data(200, 2, seed=1)
    target = make_logistic_regression(x, y, 1.0)
    res = run_chain(target, SamplerConfig(0.02, 1.0), 400, batch_size=20,
                    correction="multi_step", multi_step_n=4)
    assert res.theta.shape == (100, 2)
    assert 0.0 < res.acceptance_rate <= 1.0
    assert np.all(np.isfinite(res.potential))


def test_sgld_chain(std_normal):
    res = run_chain(std_normal, SamplerConfig(0.5, 0.0), 20_000, integrator="sgld",
                    correction="none", seed=3)
    assert np.isnan(res.momentum).all()
    assert abs(res.theta.mean()) < 0.1
    assert abs(res.theta.var() - 1.0 / (1 - 0.0625)) < 0.1


def test_mala_targets_gaussian(gauss2d):
    res = run_mala(gauss2d, 0.8, 40_000, seed=2)
    assert 0.3 < res.acceptance_rate < 1.0
    _within(res.theta, [0, 0], [1, 4])


def test_temperature_scales_variance():
    target = make_gaussian([0.0], [1.0])
    res = run_chain(target, SamplerConfig(0.3, 1.0, temperature=2.0), 40_000, seed=21)
    _within(res.theta, [0.0], [2.0])
