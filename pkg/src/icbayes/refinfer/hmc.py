"""Hamiltonian Monte Carlo with dual-averaging step-size adaptation and a
diagonal mass matrix estimated midway through burn-in.

The integrator runs a fixed trajectory length, so the number of leapfrog
steps adapts inversely with the step size. Divergent trajectories (energy
error beyond the cap) are rejected and counted. Chain quality is summarized
by split R-hat over all unconstrained coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import ConfigurationError, SamplerError
from ..odesolve.sampling import SampleSet
from ..probmodels import ContextDataset, ScenarioConfig, make_log_joint
from ..probmodels.generators import sample_gmm_params
from ..rngs import derive_rng

_GAMMA = 0.05
_T0 = 10.0
_KAPPA = 0.75


@dataclass(frozen=True)
class HmcConfig:
    n_samples: int = 1000
    n_burn: int = 500
    n_chains: int = 4
    target_accept: float = 0.8
    init_step_size: float = 0.1
    trajectory_length: float = 1.0
    max_leapfrog: int = 1024
    max_energy_error: float = 1000.0
    seed: int = 0

    def validate(self) -> None:
        problems = []
        if self.n_samples < 1:
            problems.append("n_samples must be >= 1")
        if self.n_burn < 4:
            problems.append("n_burn must be >= 4 (two adaptation phases)")
        if self.n_chains < 1:
            problems.append("n_chains must be >= 1")
        if not (0.0 < self.target_accept < 1.0):
            problems.append("target_accept must lie in (0, 1)")
        if self.init_step_size <= 0:
            problems.append("init_step_size must be > 0")
        if self.trajectory_length <= 0:
            problems.append("trajectory_length must be > 0")
        if problems:
            raise ConfigurationError("; ".join(problems))


@dataclass
class HmcResult:
    draws: np.ndarray  # (n_chains, n_samples, dim)
    accept_rate: float
    step_sizes: np.ndarray
    mass_diag: np.ndarray  # (n_chains, dim)
    n_divergent: int  # post-warmup only
    n_divergent_burn: int

    def stacked(self) -> np.ndarray:
        c, n, d = self.draws.shape
        return self.draws.reshape(c * n, d)


class _DualAveraging:
    """Nesterov-style averaging on log step size (Hoffman & Gelman schedule)."""

    def __init__(self, eps0: float, target: float):
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.log_eps = math.log(eps0)
        self.log_eps_bar = math.log(eps0)
        self.h_bar = 0.0
        self.m = 0

    def update(self, accept_prob: float) -> float:
        self.m += 1
        frac = 1.0 / (self.m + _T0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_prob)
        self.log_eps = self.mu - math.sqrt(self.m) / _GAMMA * self.h_bar
        w = self.m ** (-_KAPPA)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def averaged(self) -> float:
        return math.exp(self.log_eps_bar)


def _transition(f, z, logp, grad, eps, mass, n_steps, rng, max_energy_error):
    """One HMC proposal; returns (z, logp, grad, accept_prob, divergent)."""
    p = rng.standard_normal(z.shape[0]) * np.sqrt(mass)
    h0 = -logp + 0.5 * float(np.sum(p * p / mass))

    zn = z.copy()
    pn = p + 0.5 * eps * grad
    gn = grad
    logpn = logp
    for step in range(n_steps):
        zn += eps * pn / mass
        logpn, gn = f(zn)
        if not np.all(np.isfinite(gn)) or not np.isfinite(logpn):
            return z, logp, grad, 0.0, True
        if step < n_steps - 1:
            pn += eps * gn
    pn += 0.5 * eps * gn

    h1 = -logpn + 0.5 * float(np.sum(pn * pn / mass))
    delta = h1 - h0
    if not np.isfinite(delta) or delta > max_energy_error:
        return z, logp, grad, 0.0, True
    accept_prob = min(1.0, math.exp(-delta)) if delta > 0 else 1.0
    if rng.random() < accept_prob:
        return zn, logpn, gn, accept_prob, False
    return z, logp, grad, accept_prob, False


def _n_leapfrog(cfg: HmcConfig, eps: float) -> int:
    return int(min(max(1, round(cfg.trajectory_length / eps)), cfg.max_leapfrog))


def _run_chain(f, z0, cfg: HmcConfig, rng):
    z = np.asarray(z0, dtype=float).copy()
    logp, grad = f(z)
    if not np.isfinite(logp):
        raise SamplerError("chain initialized at a point of zero density")

    eps = cfg.init_step_size
    mass = np.ones(z.shape[0])
    n_div_burn = 0

    half = cfg.n_burn // 2
    adapt = _DualAveraging(eps, cfg.target_accept)
    first_half = np.empty((half, z.shape[0]))
    for i in range(half):
        z, logp, grad, aprob, div = _transition(
            f, z, logp, grad, eps, mass, _n_leapfrog(cfg, eps), rng,
            cfg.max_energy_error)
        n_div_burn += div
        eps = adapt.update(aprob)
        first_half[i] = z

    # re-estimate the metric from the positions seen so far (skip the earliest
    # quarter, which still remembers the init), then re-tune the step size
    settled = first_half[half // 2 :]
    var = np.var(settled, axis=0)
    mass = 1.0 / np.maximum(var, 1e-8)
    eps = adapt.averaged
    adapt = _DualAveraging(eps, cfg.target_accept)
    for _ in range(cfg.n_burn - half):
        z, logp, grad, aprob, div = _transition(
            f, z, logp, grad, eps, mass, _n_leapfrog(cfg, eps), rng,
            cfg.max_energy_error)
        n_div_burn += div
        eps = adapt.update(aprob)

    eps = adapt.averaged
    n_steps = _n_leapfrog(cfg, eps)
    draws = np.empty((cfg.n_samples, z.shape[0]))
    accepted = 0.0
    n_divergent = 0
    for i in range(cfg.n_samples):
        z, logp, grad, aprob, div = _transition(
            f, z, logp, grad, eps, mass, n_steps, rng, cfg.max_energy_error)
        n_divergent += div
        accepted += aprob
        draws[i] = z
    return draws, accepted / cfg.n_samples, eps, mass, n_divergent, n_div_burn


def hmc_sample(f: Callable, dim: int, cfg: HmcConfig,
               inits: Optional[np.ndarray] = None) -> HmcResult:
    """Sample with HMC from an unnormalized density.

    ``f`` maps a packed coordinate vector to (log density, gradient). Chains
    run independently; ``inits`` overrides the default uniform(-2, 2) starts.
    """
    cfg.validate()
    if inits is not None:
        inits = np.atleast_2d(np.asarray(inits, dtype=float))
        if inits.shape != (cfg.n_chains, dim):
            raise ConfigurationError(
                f"inits must be ({cfg.n_chains}, {dim}), got {inits.shape}"
            )
    draws = np.empty((cfg.n_chains, cfg.n_samples, dim))
    rates = np.empty(cfg.n_chains)
    step_sizes = np.empty(cfg.n_chains)
    masses = np.empty((cfg.n_chains, dim))
    n_divergent = 0
    n_div_burn = 0
    for c in range(cfg.n_chains):
        rng = derive_rng(cfg.seed, "hmc-chain", c)
        z0 = inits[c] if inits is not None else rng.uniform(-2.0, 2.0, dim)
        draws[c], rates[c], step_sizes[c], masses[c], div, div_burn = _run_chain(
            f, z0, cfg, rng)
        n_divergent += div
        n_div_burn += div_burn
    return HmcResult(
        draws=draws,
        accept_rate=float(np.mean(rates)),
        step_sizes=step_sizes,
        mass_diag=masses,
        n_divergent=n_divergent,
        n_divergent_burn=n_div_burn,
    )


def split_r_hat(draws: np.ndarray) -> np.ndarray:
    """Split-chain potential scale reduction factor, per coordinate.

    ``draws`` is (n_chains, n_samples, dim); each chain is halved, so the
    statistic also flags within-chain drift.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 3:
        raise ConfigurationError("split_r_hat expects (n_chains, n_samples, dim)")
    c, n, d = draws.shape
    if n < 4:
        raise ConfigurationError("need at least 4 draws per chain")
    half = n // 2
    seqs = np.concatenate([draws[:, :half], draws[:, half : 2 * half]], axis=0)
    w = np.mean(np.var(seqs, axis=1, ddof=1), axis=0)
    means = np.mean(seqs, axis=1)
    b = half * np.var(means, axis=0, ddof=1)
    var_plus = (half - 1) / half * w + b / half
    return np.sqrt(var_plus / np.maximum(w, 1e-300))


# ---------------------------------------------------------------------------
# scenario front end


def _gmm_prior_inits(scenario: ScenarioConfig, n_base: int, rng) -> np.ndarray:
    """3M-style antithetic starts: prior draws replicated under label rotation.

    Every rotation of each base draw appears, so all relabelings of a mode
    are reachable even when single chains cannot hop between them.
    """
    m, ell = scenario.M, scenario.L
    layout = scenario.inference_layout()
    inits = []
    for _ in range(n_base):
        phi, sigma2, mu = sample_gmm_params(scenario, rng)
        for r in range(m):
            perm = (np.arange(m) + r) % m
            blocks = [mu[perm].reshape(-1), np.log(sigma2[perm]).reshape(-1)]
            if m > 1:
                logphi = np.log(phi[perm])
                blocks.append(logphi[:-1] - logphi[-1])
            inits.append(np.concatenate(blocks))
    out = np.asarray(inits)
    if out.shape[1] != layout.dim:
        raise SamplerError("packed GMM init does not match the inference layout")
    return out


def hmc_posterior(scenario: ScenarioConfig, dataset: ContextDataset,
                  cfg: Optional[HmcConfig] = None) -> tuple:
    """Reference posterior draws for one dataset; returns (SampleSet, HmcResult).

    GMM chains start from label-rotated prior draws (n_chains must be a
    multiple of M); other families start uniform(-2, 2) in the packed space.
    """
    cfg = cfg or HmcConfig()
    cfg.validate()
    layout = scenario.inference_layout()
    f = make_log_joint(scenario, dataset)
    inits = None
    if scenario.family == "gmm":
        if cfg.n_chains % scenario.M != 0:
            raise ConfigurationError(
                f"gmm chains must be a multiple of M={scenario.M}, "
                f"got {cfg.n_chains}"
            )
        rng = derive_rng(cfg.seed, "hmc-inits")
        inits = _gmm_prior_inits(scenario, cfg.n_chains // scenario.M, rng)
    result = hmc_sample(f, layout.dim, cfg, inits=inits)
    stacked = result.stacked()
    rhat = split_r_hat(result.draws)
    samples = SampleSet(
        scenario_id=scenario.scenario_id,
        method="hmc",
        constrained=layout.constrain(stacked),
        constrained_names=layout.constrained_names(),
        unconstrained=stacked,
        info={
            "n_chains": cfg.n_chains,
            "n_samples": cfg.n_samples,
            "n_burn": cfg.n_burn,
            "seed": cfg.seed,
            "accept_rate": result.accept_rate,
            "n_divergent": result.n_divergent,
            "max_r_hat": float(np.max(rhat)),
        },
    )
    return samples, result
