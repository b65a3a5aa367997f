"""Prior distribution suite: samplers plus exact log-densities.

Sampling draws from ``numpy.random.Generator``; log-pdfs are written out
explicitly (gammaln from scipy.special) so they can serve as oracle pieces
for the joint-density code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ..errors import DomainError

_LOG_2PI = float(np.log(2.0 * np.pi))


def _check_positive(name: str, value: float) -> None:
    if not np.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class Normal:
    """Gaussian with mean ``loc`` and variance ``var``."""

    loc: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        _check_positive("var", self.var)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return rng.normal(self.loc, np.sqrt(self.var), size=size)

    def log_pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -0.5 * (_LOG_2PI + np.log(self.var)) - 0.5 * (x - self.loc) ** 2 / self.var

    @property
    def mean(self) -> float:
        return self.loc

    @property
    def variance(self) -> float:
        return self.var


@dataclass(frozen=True)
class Laplace:
    """Double exponential with location ``loc`` and scale ``b``."""

    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        _check_positive("scale", self.scale)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return rng.laplace(self.loc, self.scale, size=size)

    def log_pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -np.log(2.0 * self.scale) - np.abs(x - self.loc) / self.scale

    @property
    def mean(self) -> float:
        return self.loc

    @property
    def variance(self) -> float:
        return 2.0 * self.scale**2


@dataclass(frozen=True)
class Gamma:
    """Gamma in shape/rate form: density x^(a-1) e^(-rate x) rate^a / G(a)."""

    shape: float
    rate: float

    def __post_init__(self):
        _check_positive("shape", self.shape)
        _check_positive("rate", self.rate)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return rng.gamma(self.shape, 1.0 / self.rate, size=size)

    def log_pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (
                self.shape * np.log(self.rate)
                - gammaln(self.shape)
                + (self.shape - 1.0) * np.log(x)
                - self.rate * x
            )
        return np.where(x > 0.0, out, -np.inf)

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate**2


@dataclass(frozen=True)
class InverseGamma:
    """Inverse gamma with shape ``a`` and scale ``b``: mean b/(a-1) for a>1."""

    shape: float
    scale: float

    def __post_init__(self):
        _check_positive("shape", self.shape)
        _check_positive("scale", self.scale)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return 1.0 / rng.gamma(self.shape, 1.0 / self.scale, size=size)

    def log_pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (
                self.shape * np.log(self.scale)
                - gammaln(self.shape)
                - (self.shape + 1.0) * np.log(x)
                - self.scale / x
            )
        return np.where(x > 0.0, out, -np.inf)

    @property
    def mean(self) -> float:
        if self.shape <= 1.0:
            raise DomainError("mean undefined for shape <= 1")
        return self.scale / (self.shape - 1.0)

    @property
    def variance(self) -> float:
        if self.shape <= 2.0:
            raise DomainError("variance undefined for shape <= 2")
        return self.scale**2 / ((self.shape - 1.0) ** 2 * (self.shape - 2.0))


@dataclass(frozen=True)
class Dirichlet:
    """Symmetric or general Dirichlet over a probability vector."""

    alpha: tuple

    def __post_init__(self):
        alpha = tuple(float(a) for a in np.atleast_1d(self.alpha))
        if len(alpha) < 2:
            raise DomainError("Dirichlet needs at least two components")
        for a in alpha:
            _check_positive("alpha", a)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def symmetric(cls, alpha: float, m: int) -> "Dirichlet":
        return cls(alpha=(float(alpha),) * m)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return rng.dirichlet(np.asarray(self.alpha), size=size)

    def log_pdf(self, x) -> float:
        x = np.asarray(x, dtype=float)
        alpha = np.asarray(self.alpha)
        if x.shape[-1] != alpha.shape[0]:
            raise DomainError("dimension mismatch in Dirichlet log_pdf")
        if np.any(x <= 0.0) or abs(float(np.sum(x)) - 1.0) > 1e-8:
            return -np.inf
        norm = gammaln(np.sum(alpha)) - np.sum(gammaln(alpha))
        return float(norm + np.sum((alpha - 1.0) * np.log(x)))

    @property
    def mean(self) -> np.ndarray:
        alpha = np.asarray(self.alpha)
        return alpha / alpha.sum()

    @property
    def variance(self) -> np.ndarray:
        alpha = np.asarray(self.alpha)
        a0 = alpha.sum()
        m = alpha / a0
        return m * (1.0 - m) / (a0 + 1.0)


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise DomainError(f"p must lie in [0, 1], got {self.p!r}")

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return (rng.random(size=size) < self.p).astype(float)

    def log_pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = x * np.log(self.p) + (1.0 - x) * np.log1p(-self.p)
        bad = (x != 0.0) & (x != 1.0)
        return np.where(bad, -np.inf, out)

    @property
    def mean(self) -> float:
        return self.p

    @property
    def variance(self) -> float:
        return self.p * (1.0 - self.p)


@dataclass(frozen=True)
class Categorical:
    """Categorical over {0, ..., m-1} with probability vector ``probs``."""

    probs: tuple

    def __post_init__(self):
        probs = tuple(float(p) for p in np.atleast_1d(self.probs))
        arr = np.asarray(probs)
        if arr.ndim != 1 or arr.size < 1:
            raise DomainError("probs must be a nonempty vector")
        if np.any(arr < 0.0) or abs(float(arr.sum()) - 1.0) > 1e-8:
            raise DomainError("probs must be nonnegative and sum to one")
        object.__setattr__(self, "probs", probs)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        cdf = np.cumsum(np.asarray(self.probs))
        u = rng.random(size=size)
        return np.searchsorted(cdf, u, side="right").astype(np.int64)

    def log_pdf(self, x) -> np.ndarray:
        x = np.asarray(x)
        arr = np.asarray(self.probs)
        if np.any((x < 0) | (x >= arr.size)):
            raise DomainError("category index out of range")
        with np.errstate(divide="ignore"):
            return np.log(arr[x.astype(np.int64)])

    @property
    def mean(self) -> float:
        arr = np.asarray(self.probs)
        return float(np.sum(arr * np.arange(arr.size)))

    @property
    def variance(self) -> float:
        arr = np.asarray(self.probs)
        k = np.arange(arr.size)
        return float(np.sum(arr * k**2) - self.mean**2)
