"""Closed-form Normal-Inverse-Gamma posterior for conjugate linear regression.

Applies to the scenario with coefficient prior beta | sigma^2 ~ N(0, v
sigma^2 I), noise prior sigma^2 ~ IG(a, b), Gaussian response, and no
intercept.  The posterior is NIG(m_n, V_n, a_n, b_n); the coefficient
marginal is a multivariate t with 2 a_n degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ..errors import ConfigurationError, DomainError
from .scenarios import GLM, ContextDataset, ScenarioConfig

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class AnalyticPosterior:
    """NIG posterior: beta | sigma^2 ~ N(m, sigma^2 V), sigma^2 ~ IG(a, b)."""

    m: np.ndarray
    V: np.ndarray
    a: float
    b: float

    @property
    def p(self) -> int:
        return self.m.shape[0]

    # -- moments -------------------------------------------------------------

    @property
    def beta_mean(self) -> np.ndarray:
        if self.a <= 0.5:
            raise DomainError("beta mean undefined for a <= 1/2")
        return self.m.copy()

    @property
    def beta_cov(self) -> np.ndarray:
        if self.a <= 1.0:
            raise DomainError("beta covariance undefined for a <= 1")
        return (self.b / (self.a - 1.0)) * self.V

    @property
    def sigma2_mean(self) -> float:
        if self.a <= 1.0:
            raise DomainError("sigma^2 mean undefined for a <= 1")
        return self.b / (self.a - 1.0)

    @property
    def sigma2_var(self) -> float:
        if self.a <= 2.0:
            raise DomainError("sigma^2 variance undefined for a <= 2")
        return self.b**2 / ((self.a - 1.0) ** 2 * (self.a - 2.0))

    # -- densities ------------------------------------------------------------

    def log_pdf(self, beta: np.ndarray, sigma2: float) -> float:
        """Joint NIG density at (beta, sigma^2)."""
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if sigma2 <= 0.0:
            return -np.inf
        diff = beta - self.m
        quad = float(diff @ np.linalg.solve(self.V, diff))
        _, logdet = np.linalg.slogdet(self.V)
        log_normal = (
            -0.5 * self.p * (_LOG_2PI + np.log(sigma2)) - 0.5 * logdet - quad / (2.0 * sigma2)
        )
        log_ig = (
            self.a * np.log(self.b)
            - gammaln(self.a)
            - (self.a + 1.0) * np.log(sigma2)
            - self.b / sigma2
        )
        return float(log_normal + log_ig)

    def beta_marginal_log_pdf(self, beta: np.ndarray) -> float:
        """Multivariate t: df = 2a, location m, shape (b/a) V."""
        beta = np.asarray(beta, dtype=float).reshape(-1)
        nu = 2.0 * self.a
        shape = (self.b / self.a) * self.V
        diff = beta - self.m
        quad = float(diff @ np.linalg.solve(shape, diff))
        _, logdet = np.linalg.slogdet(shape)
        return float(
            gammaln((nu + self.p) / 2.0)
            - gammaln(nu / 2.0)
            - 0.5 * self.p * np.log(nu * np.pi)
            - 0.5 * logdet
            - 0.5 * (nu + self.p) * np.log1p(quad / nu)
        )

    # -- sampling --------------------------------------------------------------

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n joint samples; columns are (beta_1..beta_p, sigma^2)."""
        sigma2 = 1.0 / rng.gamma(self.a, 1.0 / self.b, size=n)
        chol = np.linalg.cholesky(self.V)
        eps = rng.standard_normal((n, self.p))
        beta = self.m[None, :] + np.sqrt(sigma2)[:, None] * (eps @ chol.T)
        return np.concatenate([beta, sigma2[:, None]], axis=1)


def analytic_posterior_nig(cfg: ScenarioConfig, dataset: ContextDataset) -> AnalyticPosterior:
    """Exact posterior for the conjugate Gaussian regression scenario."""
    if (
        cfg.family != GLM
        or cfg.response != "gaussian"
        or cfg.has_intercept
        or cfg.noise_prior is None
        or cfg.coeff_prior is None
        or cfg.coeff_prior.kind != "normal-scaled"
    ):
        raise ConfigurationError(
            "analytic posterior requires the conjugate scenario: scaled normal "
            "coefficient prior, inverse-gamma noise, gaussian response, no intercept"
        )
    p = cfg.p
    rows = dataset.rows
    if rows.shape[1] != p + 1:
        raise DomainError(f"dataset rows must have {p + 1} columns")
    u = rows[:, :p]
    y = rows[:, p]
    v0 = cfg.coeff_prior.var
    a0 = cfg.noise_prior.shape
    b0 = cfg.noise_prior.scale

    prec0 = np.eye(p) / v0
    prec_n = prec0 + u.T @ u
    V = np.linalg.inv(prec_n)
    V = 0.5 * (V + V.T)
    m = V @ (u.T @ y)
    a = a0 + 0.5 * len(y)
    b = b0 + 0.5 * (float(y @ y) - float(m @ prec_n @ m))
    return AnalyticPosterior(m=m, V=V, a=float(a), b=float(b))
