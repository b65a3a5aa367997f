"""MAP estimation by safeguarded gradient ascent and a Laplace approximation
built from a finite-difference Hessian of the exact gradient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import OptimizationError
from ..odesolve.sampling import SampleSet
from ..probmodels import ContextDataset, ScenarioConfig, make_log_joint
from ..rngs import derive_rng

_ARMIJO = 1e-4
_SHRINK = 0.5
_MIN_STEP = 1e-18
_NM_WINDOW = 10


@dataclass
class MapResult:
    z: np.ndarray
    logp: float
    grad_norm: float
    n_iters: int
    converged: bool


def find_map(f: Callable, z0: np.ndarray, *, max_iters: int = 5000,
             grad_tol: float = 1e-8) -> MapResult:
    """Maximize log density ``f`` (value, gradient) from ``z0``.

    Steepest ascent with a Barzilai-Borwein step length under a non-monotone
    Armijo safeguard (compare against the worst of the last few values, not
    the current one; forcing monotonicity is known to stall BB steps on
    ill-conditioned quadratics).
    """
    z = np.asarray(z0, dtype=float).copy()
    logp, grad = f(z)
    if not np.isfinite(logp):
        raise OptimizationError("starting point has zero density")
    step = 1.0
    prev_z: Optional[np.ndarray] = None
    prev_grad: Optional[np.ndarray] = None
    recent = [logp]
    for it in range(1, max_iters + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= grad_tol:
            return MapResult(z=z, logp=logp, grad_norm=gnorm, n_iters=it - 1,
                             converged=True)
        if prev_z is not None:
            dz = z - prev_z
            dg = grad - prev_grad
            denom = -float(dz @ dg)  # positive where the density is concave
            if denom > 0:
                step = float(dz @ dz) / denom
            step = float(np.clip(step, 1e-12, 1e6))
        s = step
        floor = min(recent)
        while True:
            z_new = z + s * grad
            logp_new, grad_new = f(z_new)
            if np.isfinite(logp_new) and logp_new >= floor + _ARMIJO * s * gnorm**2:
                break
            s *= _SHRINK
            if s < _MIN_STEP:
                # the gradient no longer yields ascent at any usable scale
                return MapResult(z=z, logp=logp, grad_norm=gnorm, n_iters=it,
                                 converged=False)
        prev_z, prev_grad = z, grad
        z, logp, grad = z_new, logp_new, grad_new
        recent.append(logp)
        if len(recent) > _NM_WINDOW:
            recent.pop(0)
    return MapResult(z=z, logp=logp, grad_norm=float(np.linalg.norm(grad)),
                     n_iters=max_iters, converged=False)


def hessian_fd(f: Callable, z: np.ndarray, *, step: float = 1e-5) -> np.ndarray:
    """Central differences of the exact gradient, then symmetrized."""
    z = np.asarray(z, dtype=float)
    d = z.shape[0]
    h = np.empty((d, d))
    for j in range(d):
        hj = step * max(1.0, abs(float(z[j])))
        zp = z.copy()
        zp[j] += hj
        zm = z.copy()
        zm[j] -= hj
        _, gp = f(zp)
        _, gm = f(zm)
        h[:, j] = (gp - gm) / (2.0 * hj)
    return 0.5 * (h + h.T)


def laplace_cov(f: Callable, z_map: np.ndarray, *, fd_step: float = 1e-5,
                eig_floor: float = 1e-10) -> np.ndarray:
    """Covariance of the Laplace approximation at the mode.

    The negative Hessian is eigenvalue-floored before inversion; a warning
    marks posteriors that were not locally concave at the claimed mode.
    """
    neg_h = -hessian_fd(f, z_map, step=fd_step)
    vals, vecs = np.linalg.eigh(neg_h)
    if np.any(vals <= eig_floor):
        warnings.warn(
            f"negative-Hessian eigenvalues floored at {eig_floor:g} "
            f"(min was {vals.min():.3g}); the mode may be degenerate",
            stacklevel=2,
        )
        vals = np.maximum(vals, eig_floor)
    return (vecs / vals) @ vecs.T


@dataclass
class LaplaceResult:
    mean: np.ndarray
    cov: np.ndarray
    map_result: MapResult

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        chol = np.linalg.cholesky(self.cov)
        return self.mean + rng.standard_normal((n, self.mean.shape[0])) @ chol.T


def laplace_fit(f: Callable, z0: np.ndarray, *, max_iters: int = 5000,
                grad_tol: float = 1e-8, fd_step: float = 1e-5) -> LaplaceResult:
    mres = find_map(f, z0, max_iters=max_iters, grad_tol=grad_tol)
    if not mres.converged:
        warnings.warn(
            f"MAP search stopped at gradient norm {mres.grad_norm:.3g}; "
            "Laplace approximation may be off-mode",
            stacklevel=2,
        )
    cov = laplace_cov(f, mres.z, fd_step=fd_step)
    return LaplaceResult(mean=mres.z, cov=cov, map_result=mres)


def laplace_posterior(scenario: ScenarioConfig, dataset: ContextDataset,
                      n_draws: int = 1000, *, seed: int = 0,
                      n_restarts: int = 1) -> tuple:
    """Laplace draws for one dataset; returns (SampleSet, LaplaceResult).

    Restarts keep the best mode found from different uniform(-2, 2) starts.
    """
    layout = scenario.inference_layout()
    f = make_log_joint(scenario, dataset)
    rng = derive_rng(seed, "laplace-init")
    best: Optional[LaplaceResult] = None
    for _ in range(max(1, n_restarts)):
        z0 = rng.uniform(-2.0, 2.0, layout.dim)
        fit = laplace_fit(f, z0)
        if best is None or fit.map_result.logp > best.map_result.logp:
            best = fit
    draws = best.sample(derive_rng(seed, "laplace-draws"), n_draws)
    samples = SampleSet(
        scenario_id=scenario.scenario_id,
        method="laplace",
        constrained=layout.constrain(draws),
        constrained_names=layout.constrained_names(),
        unconstrained=draws,
        info={
            "seed": seed,
            "map_logp": best.map_result.logp,
            "map_grad_norm": best.map_result.grad_norm,
            "map_iters": best.map_result.n_iters,
            "converged": bool(best.map_result.converged),
        },
    )
    return samples, best
