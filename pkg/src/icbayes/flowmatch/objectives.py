"""Training objectives for the conditional velocity field.

The primary objective pairs each latent draw z1 with fresh standard normal
noise z0 along the straight conditional path

    z_t = (1 - omega t) z0 + t z1,          omega = 1 - sigma_min,

and regresses the network on the constant conditional velocity z1 - omega z0.
Two variance-preserving ablations and an amortized Gaussian baseline share the
same backbone: VP-FM regresses the diffusion-time conditional velocity, VP-SM
regresses the injected noise (score = -output / sigma_t), and the Gaussian
head reads out a full-covariance normal in one forward pass at (z = 0, t = 0).

Diffusion time runs opposite to flow time here: t = 0 is clean data and t = 1
is (almost) pure noise.  Both VP objectives avoid the t -> 0 singularities by
sampling t uniformly on [VP_T_MIN, 1], matching the sampler's cutoff.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from ..nncore import autodiff as ad
from ..nncore.model import ModelConfig, gaussian_head_out_dim, velocity_tape

SIGMA_MIN = 1e-4
OMEGA = 1.0 - SIGMA_MIN

BETA_MIN = 0.1
BETA_MAX = 20.0
VP_T_MIN = 1e-3

OBJECTIVES = ("ot-fm", "vp-fm", "vp-sm", "gaussian-head")


# ---------------------------------------------------------------------------
# path definitions (numpy level; shared by training and tests)


def conditional_path(z0: np.ndarray, z1: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Interpolant z_t for the straight path; t broadcasts against the draws."""
    return (1.0 - OMEGA * t) * z0 + t * z1


def cfm_target(z0: np.ndarray, z1: np.ndarray) -> np.ndarray:
    """Conditional velocity along the straight path (constant in t)."""
    return z1 - OMEGA * z0


def vp_beta(t):
    return BETA_MIN + (BETA_MAX - BETA_MIN) * np.asarray(t, dtype=float)


def vp_log_mean_coeff(t):
    t = np.asarray(t, dtype=float)
    return -0.5 * (BETA_MIN * t + 0.5 * (BETA_MAX - BETA_MIN) * t * t)


def vp_alpha(t):
    return np.exp(vp_log_mean_coeff(t))


def vp_sigma(t):
    return np.sqrt(1.0 - np.exp(2.0 * vp_log_mean_coeff(t)))


def vp_alpha_prime(t):
    return -0.5 * vp_beta(t) * vp_alpha(t)


def vp_sigma_prime(t):
    # sigma^2 = 1 - alpha^2  =>  sigma' = -alpha alpha' / sigma
    return -vp_alpha(t) * vp_alpha_prime(t) / vp_sigma(t)


def vp_fm_target(z1: np.ndarray, eps: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Conditional velocity of the VP path z_t = alpha z1 + sigma eps.

    (sigma'/sigma)(z_t - alpha z1) collapses to sigma' eps exactly.
    """
    return vp_sigma_prime(t) * eps + vp_alpha_prime(t) * z1


# ---------------------------------------------------------------------------
# tape losses


def _mse_loss(v: ad.Var, target: np.ndarray) -> ad.Var:
    diff = v - ad.constant(target)
    return ad.vmean(ad.vsum(diff * diff, axis=1))


def ot_fm_loss(pvars: dict, cfg: ModelConfig, rows: np.ndarray, z1: np.ndarray,
               rng: np.random.Generator, dropout_rng=None) -> ad.Var:
    b, d = z1.shape
    z0 = rng.standard_normal((b, d))
    t = rng.random((b, 1))
    zt = conditional_path(z0, z1, t)
    v = velocity_tape(pvars, cfg, rows, zt, t[:, 0], dropout_rng)
    return _mse_loss(v, cfm_target(z0, z1))


def vp_fm_loss(pvars: dict, cfg: ModelConfig, rows: np.ndarray, z1: np.ndarray,
               rng: np.random.Generator, dropout_rng=None) -> ad.Var:
    b, d = z1.shape
    eps = rng.standard_normal((b, d))
    t = VP_T_MIN + (1.0 - VP_T_MIN) * rng.random((b, 1))
    zt = vp_alpha(t) * z1 + vp_sigma(t) * eps
    v = velocity_tape(pvars, cfg, rows, zt, t[:, 0], dropout_rng)
    return _mse_loss(v, vp_fm_target(z1, eps, t))


def vp_sm_loss(pvars: dict, cfg: ModelConfig, rows: np.ndarray, z1: np.ndarray,
               rng: np.random.Generator, dropout_rng=None) -> ad.Var:
    b, d = z1.shape
    eps = rng.standard_normal((b, d))
    t = VP_T_MIN + (1.0 - VP_T_MIN) * rng.random((b, 1))
    zt = vp_alpha(t) * z1 + vp_sigma(t) * eps
    v = velocity_tape(pvars, cfg, rows, zt, t[:, 0], dropout_rng)
    return _mse_loss(v, eps)


def _tril_pairs(d: int) -> list:
    return [(j, k) for j in range(d) for k in range(j)]


def gaussian_head_nll(pvars: dict, cfg: ModelConfig, rows: np.ndarray, z1: np.ndarray,
                      rng=None, dropout_rng=None) -> ad.Var:
    """Mean negative log-likelihood of z1 under the predicted Gaussian.

    The network is evaluated once at (z = 0, t = 0); its output packs the
    mean, the log-diagonal, and the strict lower triangle of the Cholesky
    factor of the covariance.
    """
    b, d = z1.shape
    if cfg.out_dim != gaussian_head_out_dim(d):
        raise ConfigurationError(
            f"gaussian head needs out_dim {gaussian_head_out_dim(d)} for latent_dim {d}, "
            f"model has {cfg.out_dim}"
        )
    out = velocity_tape(pvars, cfg, rows, np.zeros((b, d)), np.zeros(b), dropout_rng)
    mean = out[:, :d]
    log_diag = out[:, d : 2 * d]
    lower = out[:, 2 * d :]
    L = ad.assemble_tril(log_diag, lower, d, _tril_pairs(d))
    r = ad.constant(z1) - mean
    x = ad.solve_tri(L, r)
    half_maha = 0.5 * ad.vsum(x * x, axis=1)
    log_det = ad.vsum(log_diag, axis=1)
    const = 0.5 * d * np.log(2.0 * np.pi)
    return ad.vmean(half_maha + log_det) + const


_LOSS_FNS = {
    "ot-fm": ot_fm_loss,
    "vp-fm": vp_fm_loss,
    "vp-sm": vp_sm_loss,
    "gaussian-head": gaussian_head_nll,
}


def loss_fn(objective: str):
    try:
        return _LOSS_FNS[objective]
    except KeyError:
        raise ConfigurationError(
            f"unknown objective {objective!r}; choose from {OBJECTIVES}"
        ) from None
