"""Reference posterior inference: HMC, MAP/Laplace, and Gaussian ADVI."""

from .advi import AdviConfig, AdviResult, advi_fit, advi_posterior
from .hmc import (
    HmcConfig,
    HmcResult,
    hmc_posterior,
    hmc_sample,
    split_r_hat,
)
from .maplaplace import (
    LaplaceResult,
    MapResult,
    find_map,
    hessian_fd,
    laplace_cov,
    laplace_fit,
    laplace_posterior,
)

__all__ = [
    "AdviConfig",
    "AdviResult",
    "HmcConfig",
    "HmcResult",
    "LaplaceResult",
    "MapResult",
    "advi_fit",
    "advi_posterior",
    "find_map",
    "hessian_fd",
    "hmc_posterior",
    "hmc_sample",
    "laplace_cov",
    "laplace_fit",
    "laplace_posterior",
    "split_r_hat",
]
