"""Reference inference: HMC, MAP/Laplace, and ADVI against exact targets."""

import numpy as np
import pytest

from icbayes.errors import ConfigurationError, OptimizationError, SamplerError
from icbayes.probmodels import (
    analytic_posterior_nig,
    get_scenario,
    make_gaussian_linreg_logjoint,
    sample_dataset,
)
from icbayes.refinfer import (
    AdviConfig,
    HmcConfig,
    advi_fit,
    advi_posterior,
    find_map,
    hessian_fd,
    hmc_posterior,
    hmc_sample,
    laplace_cov,
    laplace_fit,
    laplace_posterior,
    split_r_hat,
)
from icbayes.rngs import derive_rng


def _gaussian_target(mean, cov):
    prec = np.linalg.inv(cov)

    def f(z):
        d = z - mean
        return -0.5 * float(d @ prec @ d), -prec @ d

    return f


@pytest.fixture(scope="module")
def corr_gaussian():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3))
    cov = a @ a.T + 3 * np.eye(3)
    mean = np.array([1.0, -2.0, 0.5])
    return mean, cov, _gaussian_target(mean, cov)


# ---------------------------------------------------------------------------
# HMC


def test_hmc_recovers_gaussian_moments(corr_gaussian):
    mean, cov, f = corr_gaussian
    res = hmc_sample(f, 3, HmcConfig(n_samples=1500, n_burn=500, n_chains=4, seed=1))
    draws = res.stacked()
    se = np.sqrt(np.diag(cov) / draws.shape[0])
    # autocorrelation inflates the standard error; 8x is a loose cap
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 8 * se)
    assert np.abs(np.cov(draws.T) - cov).max() < 0.5
    assert 0.6 < res.accept_rate <= 1.0
    assert np.max(split_r_hat(res.draws)) < 1.05


def test_hmc_is_reproducible(corr_gaussian):
    _, _, f = corr_gaussian
    cfg = HmcConfig(n_samples=50, n_burn=100, n_chains=2, seed=3)
    a = hmc_sample(f, 3, cfg)
    b = hmc_sample(f, 3, cfg)
    np.testing.assert_array_equal(a.draws, b.draws)


def test_hmc_respects_explicit_inits(corr_gaussian):
    _, _, f = corr_gaussian
    cfg = HmcConfig(n_samples=10, n_burn=50, n_chains=2, seed=0)
    inits = np.array([[5.0, 5.0, 5.0], [-5.0, -5.0, -5.0]])
    res = hmc_sample(f, 3, cfg, inits=inits)
    assert res.draws.shape == (2, 10, 3)
    with pytest.raises(ConfigurationError):
        hmc_sample(f, 3, cfg, inits=np.zeros((3, 3)))


def test_hmc_rejects_zero_density_start():
    def f(z):
        return -np.inf, np.zeros_like(z)

    with pytest.raises(SamplerError):
        hmc_sample(f, 2, HmcConfig(n_samples=5, n_burn=10, n_chains=1, seed=0))


def test_hmc_config_validation():
    with pytest.raises(ConfigurationError):
        HmcConfig(n_samples=0).validate()
    with pytest.raises(ConfigurationError):
        HmcConfig(target_accept=1.5).validate()
    with pytest.raises(ConfigurationError):
        HmcConfig(n_burn=2).validate()


def test_split_r_hat_flags_disagreeing_chains():
    rng = np.random.default_rng(0)
    good = rng.standard_normal((4, 400, 2))
    assert np.max(split_r_hat(good)) < 1.05
    bad = good.copy()
    bad[0] += 10.0  # one chain stuck elsewhere
    assert np.max(split_r_hat(bad)) > 1.5
    drift = good.copy()
    drift[:, 200:, 0] += 8.0  # within-chain drift caught by splitting
    assert split_r_hat(drift)[0] > 1.5


def test_split_r_hat_shape_guards():
    with pytest.raises(ConfigurationError):
        split_r_hat(np.zeros((4, 400)))
    with pytest.raises(ConfigurationError):
        split_r_hat(np.zeros((4, 3, 2)))


def test_hmc_matches_conjugate_posterior():
    sc = get_scenario("glm-1-mini")
    ds, _ = sample_dataset(sc, derive_rng(4, "ds"))
    ss, res = hmc_posterior(sc, ds, HmcConfig(n_samples=1000, n_burn=500,
                                              n_chains=4, seed=2))
    exact = analytic_posterior_nig(sc, ds)
    ref = exact.sample(derive_rng(0, "ref"), 200_000)
    ref_mean = ref.mean(axis=0)
    ref_sd = ref.std(axis=0)
    hmc_mean = ss.constrained.mean(axis=0)
    # 4000 correlated draws: allow a generous multiple of the MC error
    assert np.all(np.abs(hmc_mean - ref_mean) < 8 * ref_sd / np.sqrt(4000))
    assert ss.info["max_r_hat"] < 1.05
    assert ss.method == "hmc"
    assert ss.constrained_names[-1] == "sigma2"


def test_gmm_chain_count_must_divide():
    sc = get_scenario("gmm-mini")
    ds, _ = sample_dataset(sc, derive_rng(1, "ds"))
    with pytest.raises(ConfigurationError):
        hmc_posterior(sc, ds, HmcConfig(n_samples=5, n_burn=10, n_chains=3, seed=0))


# ---------------------------------------------------------------------------
# MAP / Laplace


def test_map_on_quadratic_is_fast_and_exact(corr_gaussian):
    mean, cov, f = corr_gaussian
    res = find_map(f, np.zeros(3))
    assert res.converged
    assert res.n_iters < 100
    np.testing.assert_allclose(res.z, mean, atol=1e-7)


def test_map_rejects_zero_density_start(corr_gaussian):
    _, _, f = corr_gaussian

    def g(z):
        return -np.inf, np.zeros_like(z)

    with pytest.raises(OptimizationError):
        find_map(g, np.zeros(3))


def test_hessian_fd_on_quadratic(corr_gaussian):
    mean, cov, f = corr_gaussian
    h = hessian_fd(f, mean + 0.3)
    np.testing.assert_allclose(h, -np.linalg.inv(cov), atol=1e-7)
    np.testing.assert_array_equal(h, h.T)


def test_laplace_exact_on_known_noise_glm():
    rng = np.random.default_rng(3)
    u = rng.standard_normal((40, 3))
    y = u @ np.array([1.0, -0.5, 2.0]) + 0.3 * rng.standard_normal(40)
    f, mean, cov = make_gaussian_linreg_logjoint(u, y, 0.09, prior_var=1.0)
    fit = laplace_fit(f, np.zeros(3))
    assert fit.map_result.converged
    np.testing.assert_allclose(fit.mean, mean, atol=1e-6)
    np.testing.assert_allclose(fit.cov, cov, atol=1e-6)


def test_laplace_floors_degenerate_curvature():
    # flat direction: density ignores the second coordinate
    def f(z):
        return -0.5 * z[0] ** 2, np.array([-z[0], 0.0])

    with pytest.warns(UserWarning, match="floored"):
        cov = laplace_cov(f, np.zeros(2))
    assert cov[1, 1] >= 1e9  # inverse of the floor


def test_laplace_posterior_on_scenario():
    sc = get_scenario("glm-1-mini")
    ds, _ = sample_dataset(sc, derive_rng(4, "ds"))
    ss, fit = laplace_posterior(sc, ds, 2000, seed=0)
    exact = analytic_posterior_nig(sc, ds)
    ref = exact.sample(derive_rng(0, "ref"), 100_000)
    # Laplace is approximate here (log sigma2 mode vs mean); match loosely
    assert np.all(np.abs(ss.constrained[:, :2].mean(0) - ref[:, :2].mean(0)) < 0.15)
    assert ss.info["converged"]
    assert ss.method == "laplace"


# ---------------------------------------------------------------------------
# ADVI


def test_full_rank_advi_recovers_correlated_gaussian():
    a = np.array([[1.0, 0.0, 0.0], [0.6, 0.8, 0.0], [-0.3, 0.5, 0.7]])
    cov = a @ a.T
    mean = np.array([0.5, -1.0, 2.0])
    f = _gaussian_target(mean, cov)
    fit = advi_fit(f, 3, AdviConfig(family="full-rank", seed=1))
    assert np.abs(fit.mean - mean).max() <= 0.05
    assert np.linalg.norm(fit.cov - cov) <= 0.15
    assert fit.chol.shape == (3, 3)
    assert np.allclose(fit.chol, np.tril(fit.chol))


def test_diag_advi_underdisperses_correlated_target():
    rho = 0.9
    cov = np.array([[1.0, rho], [rho, 1.0]])
    f = _gaussian_target(np.zeros(2), cov)
    fit = advi_fit(f, 2, AdviConfig(family="diag", seed=2))
    # mean-field optimum has sd = 1/sqrt(prec_ii) = sqrt(1 - rho^2), well
    # below the true marginal sd of 1
    target_sd = np.sqrt(1.0 - rho**2)
    np.testing.assert_allclose(fit.marginal_sd, target_sd, atol=0.05)
    assert np.all(fit.marginal_sd < 0.6)
    assert np.count_nonzero(fit.chol - np.diag(np.diag(fit.chol))) == 0


def test_diag_advi_exact_on_independent_gaussian():
    cov = np.diag([0.5, 2.0])
    mean = np.array([1.0, -1.0])
    fit = advi_fit(_gaussian_target(mean, cov), 2,
                   AdviConfig(family="diag", seed=0))
    np.testing.assert_allclose(fit.mean, mean, atol=0.05)
    np.testing.assert_allclose(fit.marginal_sd, np.sqrt(np.diag(cov)), atol=0.07)


def test_advi_sampling_matches_fitted_moments():
    fit = advi_fit(_gaussian_target(np.zeros(2), np.eye(2)), 2,
                   AdviConfig(family="full-rank", n_steps=300, seed=0))
    draws = fit.sample(np.random.default_rng(0), 200_000)
    np.testing.assert_allclose(draws.mean(0), fit.mean, atol=0.02)
    np.testing.assert_allclose(np.cov(draws.T), fit.cov, atol=0.02)


def test_advi_config_validation():
    with pytest.raises(ConfigurationError):
        AdviConfig(family="cauchy").validate()
    with pytest.raises(ConfigurationError):
        AdviConfig(n_steps=0).validate()
    with pytest.raises(ConfigurationError):
        AdviConfig(average_last_frac=1.5).validate()


def test_advi_aborts_on_unusable_target():
    def f(z):
        return np.nan, np.full_like(z, np.nan)

    with pytest.raises(OptimizationError):
        advi_fit(f, 2, AdviConfig(n_steps=200, seed=0))


def test_advi_posterior_on_scenario():
    sc = get_scenario("glm-1-mini")
    ds, _ = sample_dataset(sc, derive_rng(4, "ds"))
    ss, fit = advi_posterior(sc, ds, 1500,
                             AdviConfig(family="full-rank", n_steps=1200, seed=0))
    exact = analytic_posterior_nig(sc, ds)
    ref = exact.sample(derive_rng(0, "ref"), 100_000)
    assert np.all(np.abs(ss.constrained[:, :2].mean(0) - ref[:, :2].mean(0)) < 0.15)
    assert ss.method == "advi-full-rank"
    assert np.isfinite(fit.elbo_trace[-50:]).all()
