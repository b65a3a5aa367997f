"""Automatic differentiation variational inference with a reparameterized
Gaussian family, in mean-field (diagonal) and full-rank (Cholesky) variants.

Gradients of the ELBO come from the pathwise estimator: z = mu + L xi with
xi standard normal, so dELBO/dmu averages the target gradient and dELBO/dL
averages g xi^T over the lower triangle. The entropy term is closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import ConfigurationError, OptimizationError
from ..odesolve.sampling import SampleSet
from ..probmodels import ContextDataset, ScenarioConfig, make_log_joint
from ..rngs import derive_rng

FAMILIES = ("diag", "full-rank")


@dataclass(frozen=True)
class AdviConfig:
    family: str = "full-rank"
    n_steps: int = 2000
    learning_rate: float = 1e-2
    mc_draws: int = 8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    average_last_frac: float = 0.25
    seed: int = 0

    def validate(self) -> None:
        problems = []
        if self.family not in FAMILIES:
            problems.append(f"family must be one of {FAMILIES}")
        if self.n_steps < 1:
            problems.append("n_steps must be >= 1")
        if self.learning_rate <= 0:
            problems.append("learning_rate must be > 0")
        if self.mc_draws < 1:
            problems.append("mc_draws must be >= 1")
        if not (0.0 <= self.average_last_frac <= 1.0):
            problems.append("average_last_frac must lie in [0, 1]")
        if problems:
            raise ConfigurationError("; ".join(problems))


@dataclass
class AdviResult:
    family: str
    mean: np.ndarray
    chol: np.ndarray  # (d, d) lower triangular; diagonal for the diag family
    elbo_trace: np.ndarray

    @property
    def cov(self) -> np.ndarray:
        return self.chol @ self.chol.T

    @property
    def marginal_sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        xi = rng.standard_normal((n, self.mean.shape[0]))
        return self.mean + xi @ self.chol.T


class _Adam:
    def __init__(self, shapes, lr, b1, b2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def ascend(self, params, grads):
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1**self.t)
            vhat = v / (1 - self.b2**self.t)
            p += self.lr * mhat / (np.sqrt(vhat) + self.eps)


def advi_fit(f: Callable, dim: int, cfg: Optional[AdviConfig] = None,
             init_mean: Optional[np.ndarray] = None) -> AdviResult:
    """Fit a Gaussian to an unnormalized log density given as (value, grad)."""
    cfg = cfg or AdviConfig()
    cfg.validate()
    rng = derive_rng(cfg.seed, "advi")
    mu = (np.zeros(dim) if init_mean is None
          else np.asarray(init_mean, dtype=float).copy())
    full = cfg.family == "full-rank"
    # unconstrained scale parameters: log sds on the diagonal, raw lower part
    theta_diag = np.zeros(dim)
    theta_low = np.zeros((dim, dim))
    low_mask = np.tril(np.ones((dim, dim), dtype=bool), k=-1)

    opt = _Adam(
        [mu.shape, theta_diag.shape] + ([theta_low.shape] if full else []),
        cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps,
    )
    entropy_const = 0.5 * dim * math.log(2.0 * math.pi * math.e)
    trace = np.empty(cfg.n_steps)
    n_bad = 0
    # tail averaging of the variational parameters knocks the stochastic
    # optimization noise off the reported solution
    avg_start = int(math.floor(cfg.n_steps * (1.0 - cfg.average_last_frac)))
    avg = {"n": 0, "mu": np.zeros(dim), "diag": np.zeros(dim),
           "low": np.zeros((dim, dim))}

    for step in range(cfg.n_steps):
        diag = np.exp(theta_diag)
        chol = np.diag(diag)
        if full:
            chol = chol + np.where(low_mask, theta_low, 0.0)
        xi = rng.standard_normal((cfg.mc_draws, dim))
        zs = mu + xi @ chol.T

        g_mu = np.zeros(dim)
        g_outer = np.zeros((dim, dim))
        mean_logp = 0.0
        n_ok = 0
        for i in range(cfg.mc_draws):
            logp, grad = f(zs[i])
            if not (np.isfinite(logp) and np.all(np.isfinite(grad))):
                continue
            n_ok += 1
            mean_logp += logp
            g_mu += grad
            g_outer += np.outer(grad, xi[i])
        if n_ok == 0:
            n_bad += 1
            if n_bad > 50:
                raise OptimizationError(
                    "ELBO estimator returned no finite draws for 50 steps"
                )
            trace[step] = -np.inf
            continue
        g_mu /= n_ok
        g_outer /= n_ok
        mean_logp /= n_ok

        # entropy = sum(theta_diag) + const, so its theta_diag gradient is 1
        g_diag = np.diag(g_outer) * diag + 1.0
        grads = [g_mu, g_diag]
        params = [mu, theta_diag]
        if full:
            grads.append(np.where(low_mask, g_outer, 0.0))
            params.append(theta_low)
        opt.ascend(params, grads)
        trace[step] = mean_logp + float(np.sum(theta_diag)) + entropy_const
        if step >= avg_start:
            avg["n"] += 1
            avg["mu"] += mu
            avg["diag"] += theta_diag
            if full:
                avg["low"] += theta_low

    if avg["n"] > 0:
        mu = avg["mu"] / avg["n"]
        theta_diag = avg["diag"] / avg["n"]
        theta_low = avg["low"] / avg["n"]
    chol = np.diag(np.exp(theta_diag))
    if full:
        chol = chol + np.where(low_mask, theta_low, 0.0)
    return AdviResult(family=cfg.family, mean=mu, chol=chol, elbo_trace=trace)


def advi_posterior(scenario: ScenarioConfig, dataset: ContextDataset,
                   n_draws: int = 1000, cfg: Optional[AdviConfig] = None) -> tuple:
    """Variational draws for one dataset; returns (SampleSet, AdviResult)."""
    cfg = cfg or AdviConfig()
    layout = scenario.inference_layout()
    f = make_log_joint(scenario, dataset)
    fit = advi_fit(f, layout.dim, cfg)
    draws = fit.sample(derive_rng(cfg.seed, "advi-draws"), n_draws)
    samples = SampleSet(
        scenario_id=scenario.scenario_id,
        method=f"advi-{cfg.family}",
        constrained=layout.constrain(draws),
        constrained_names=layout.constrained_names(),
        unconstrained=draws,
        info={
            "seed": cfg.seed,
            "n_steps": cfg.n_steps,
            "family": cfg.family,
            "final_elbo": float(fit.elbo_trace[-1]),
        },
    )
    return samples, fit
