"""Synthetic dataset generators for the three model families.

Each generator draws one (dataset, latent) pair from the scenario's joint
distribution.  Draw order is fixed so that a given Generator state always
yields the same pair:

* GLM:  noise variance, coefficients, intercept, covariate rows, responses.
* FA:   mean, Psi diagonal, loading matrix, factor vector, data rows.
* GMM:  weights, variances, means, assignments, data rows.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, DomainError, GenerationError
from .scenarios import (
    FA,
    GLM,
    GMM,
    ContextDataset,
    CovariateSource,
    LatentVector,
    ScenarioConfig,
    _tril_index_pairs,
)

# Linear predictors are clamped to this magnitude before exponentiation in
# the gamma-response sampler; the prior probability of exceeding it is
# negligible but a single overflow would poison a whole training batch.
ETA_CLAMP = 30.0
_RETRY_CAP = 100


def sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    expe = np.exp(eta[~pos])
    out[~pos] = expe / (1.0 + expe)
    return out


def sample_covariates(
    source: CovariateSource, K: int, p: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw a K x p covariate block from the given source."""
    if K < 1 or p < 1:
        raise DomainError("K and p must be >= 1")
    if source.kind == "std-normal":
        return rng.standard_normal((K, p))
    if source.kind == "correlated-normal":
        corr = _random_correlation(source.df, p, rng)
        factor = _psd_factor(corr)
        return rng.standard_normal((K, p)) @ factor.T
    if source.kind == "random-feature-map":
        h = rng.standard_normal((K, p))
        d_in = p
        for _ in range(int(source.depth)):
            w = rng.standard_normal((d_in, source.width)) / np.sqrt(d_in)
            b = rng.standard_normal(source.width) * 0.1
            h = np.tanh(h @ w + b)
            d_in = source.width
        w_out = rng.standard_normal((d_in, p)) / np.sqrt(d_in)
        h = h @ w_out
        mean = h.mean(axis=0)
        std = h.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        out = (h - mean) / std
        return out
    raise ConfigurationError(f"unknown covariate source {source.kind!r}")


def _random_correlation(df: float, p: int, rng: np.random.Generator) -> np.ndarray:
    """Correlation matrix of a normalized Wishart; df -> inf gives identity."""
    if np.isinf(df):
        return np.eye(p)
    n = max(int(np.ceil(df)), 2)
    g = rng.standard_normal((n, p))
    s = g.T @ g / n
    d = np.sqrt(np.diag(s))
    d = np.where(d < 1e-12, 1.0, d)
    return s / np.outer(d, d)


def _psd_factor(corr: np.ndarray) -> np.ndarray:
    """A factor F with F F^T = corr, tolerant of semi-definite inputs."""
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(corr)
        vals = np.clip(vals, 0.0, None)
        return vecs * np.sqrt(vals)


# ---------------------------------------------------------------------------
# GLM


def sample_glm_dataset(cfg: ScenarioConfig, rng: np.random.Generator):
    """Draw one GLM (dataset, latent) pair.

    Rows are (u_1..u_p, y); the latent packs the coefficients (log scale for
    a gamma prior), intercept, and log noise variance per the layout.  If the
    response sampler cannot produce representable values (gamma draws with a
    minuscule shape underflow to zero no matter how often they are redrawn),
    the whole dataset is redrawn; the retry cap of 100 applies per dataset.
    """
    if cfg.family != GLM:
        raise ConfigurationError("sample_glm_dataset expects a GLM scenario")
    for _ in range(_RETRY_CAP):
        result = _try_sample_glm(cfg, rng)
        if result is not None:
            return result
    raise GenerationError(
        f"could not draw a representable dataset for {cfg.scenario_id or 'glm'} "
        f"after {_RETRY_CAP} attempts"
    )


def _try_sample_glm(cfg: ScenarioConfig, rng: np.random.Generator):
    sigma2 = None
    if cfg.noise_prior is not None:
        sigma2 = float(cfg.noise_prior.sample(rng))

    prior = cfg.coeff_prior
    if prior.kind == "normal-scaled":
        beta = rng.normal(0.0, np.sqrt(prior.var * sigma2), size=cfg.p)
    else:
        beta = prior.distribution().sample(rng, size=cfg.p)

    intercept = None
    if cfg.has_intercept:
        intercept = float(rng.normal(0.0, np.sqrt(cfg.intercept_prior_var)))

    u = sample_covariates(cfg.covariate_source, cfg.K, cfg.p, rng)
    eta = u @ beta + (intercept if intercept is not None else 0.0)
    y = _sample_response(cfg.response, eta, sigma2, rng)
    if y is None:
        return None

    rows = np.concatenate([u, y[:, None]], axis=1)
    layout = cfg.latent_layout()
    parts = [np.log(beta) if prior.kind == "gamma" else beta]
    if intercept is not None:
        parts.append([intercept])
    if sigma2 is not None:
        parts.append([np.log(sigma2)])
    values = np.concatenate([np.atleast_1d(np.asarray(part, dtype=float)) for part in parts])
    dataset = ContextDataset(rows=rows, family=GLM, scenario_id=cfg.scenario_id)
    return dataset, LatentVector(values=values, layout=layout)


def _sample_response(response: str, eta: np.ndarray, sigma2, rng: np.random.Generator):
    if response == "gaussian":
        return eta + rng.normal(0.0, np.sqrt(sigma2), size=eta.shape)
    if response == "bernoulli":
        return (rng.random(eta.shape) < sigmoid(eta)).astype(float)
    if response == "gamma":
        eta_c = np.clip(eta, -ETA_CLAMP, ETA_CLAMP)
        shape = np.exp(2.0 * eta_c) / sigma2
        scale = sigma2 * np.exp(-eta_c)
        y = rng.gamma(shape, scale)
        for _ in range(3):
            # underflow to zero is as fatal as overflow: the density needs y > 0
            bad = ~np.isfinite(y) | (y <= 0.0)
            if not bad.any():
                return y
            y[bad] = rng.gamma(shape[bad], scale[bad])
        return None  # shape too extreme for a representable draw; redraw dataset
    raise ConfigurationError(f"unknown response {response!r}")


# ---------------------------------------------------------------------------
# factor analysis


def sample_fa_latents(cfg: ScenarioConfig, rng: np.random.Generator, overrides=None):
    """Draw (mu, psi, W, z) for one FA dataset.

    ``overrides`` may fix any of the four by name (debug hook for exactness
    tests); drawn values are consumed from the stream in the usual order
    regardless so fixing a value does not shift the others.
    """
    pri = cfg.fa_priors
    overrides = overrides or {}
    mu = rng.normal(0.0, np.sqrt(pri.mu_var), size=cfg.P)
    psi = 1.0 / rng.gamma(pri.psi_shape, 1.0 / pri.psi_scale, size=cfg.P)
    w = np.zeros((cfg.P, cfg.z_dim))
    w_dist = pri.w_prior.distribution()
    for j, k in _tril_index_pairs(cfg.P, cfg.z_dim):
        draw = float(w_dist.sample(rng))
        w[j, k] = abs(draw) if j == k else draw
    z = pri.z_prior.distribution().sample(rng, size=cfg.z_dim)
    mu = np.asarray(overrides.get("mu", mu), dtype=float)
    psi = np.asarray(overrides.get("psi", psi), dtype=float)
    w = np.asarray(overrides.get("w", w), dtype=float)
    z = np.asarray(overrides.get("z", z), dtype=float)
    return mu, psi, w, z


def sample_fa_dataset(cfg: ScenarioConfig, rng: np.random.Generator, overrides=None):
    """Draw one FA (dataset, latent) pair; the latent is the factor vector."""
    if cfg.family != FA:
        raise ConfigurationError("sample_fa_dataset expects an FA scenario")
    mu, psi, w, z = sample_fa_latents(cfg, rng, overrides)
    mean = w @ z + mu
    rows = mean[None, :] + rng.standard_normal((cfg.K, cfg.P)) * np.sqrt(psi)[None, :]
    dataset = ContextDataset(rows=rows, family=FA, scenario_id=cfg.scenario_id)
    return dataset, LatentVector(values=z, layout=cfg.latent_layout())


# ---------------------------------------------------------------------------
# Gaussian mixture


def sample_gmm_params(cfg: ScenarioConfig, rng: np.random.Generator):
    """Draw (phi, sigma2, mu) for one GMM dataset.

    dirichlet_alpha = inf is the debug hook for exactly uniform weights.
    """
    if np.isinf(cfg.dirichlet_alpha):
        phi = np.full(cfg.M, 1.0 / cfg.M)
    elif cfg.M == 1:
        phi = np.ones(1)
    else:
        phi = rng.dirichlet(np.full(cfg.M, cfg.dirichlet_alpha))
    sigma2 = 1.0 / rng.gamma(5.0, 1.0 / 2.0, size=(cfg.M, cfg.L))
    mu = rng.normal(0.0, np.sqrt(cfg.lambda_mean_scale * sigma2))
    return phi, sigma2, mu


def sample_gmm_dataset(cfg: ScenarioConfig, rng: np.random.Generator):
    """Draw one GMM (dataset, latent) pair.

    The latent packs all component means then all log variances, components
    in row-major (m, l) order; mixture weights are marginal to the latent.
    """
    if cfg.family != GMM:
        raise ConfigurationError("sample_gmm_dataset expects a GMM scenario")
    phi, sigma2, mu = sample_gmm_params(cfg, rng)
    assign = rng.choice(cfg.M, size=cfg.K, p=phi)
    rows = mu[assign] + rng.standard_normal((cfg.K, cfg.L)) * np.sqrt(sigma2[assign])
    values = np.concatenate([mu.reshape(-1), np.log(sigma2.reshape(-1))])
    dataset = ContextDataset(rows=rows, family=GMM, scenario_id=cfg.scenario_id)
    return dataset, LatentVector(values=values, layout=cfg.latent_layout())


# ---------------------------------------------------------------------------
# dispatch


def sample_dataset(cfg: ScenarioConfig, rng: np.random.Generator):
    """Family dispatch for (dataset, latent) generation."""
    if cfg.family == GLM:
        return sample_glm_dataset(cfg, rng)
    if cfg.family == FA:
        return sample_fa_dataset(cfg, rng)
    if cfg.family == GMM:
        return sample_gmm_dataset(cfg, rng)
    raise ConfigurationError(f"unknown family {cfg.family!r}")
