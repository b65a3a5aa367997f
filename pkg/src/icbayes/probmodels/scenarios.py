"""Scenario configuration, latent layouts, and the built-in registry.

A scenario pins one probabilistic program (GLM / factor analysis / Gaussian
mixture) together with its dataset size and priors.  Layouts describe how the
latent vector is packed into unconstrained coordinates and how to map back to
the natural parameter space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigurationError, DomainError
from .distributions import Dirichlet, Gamma, InverseGamma, Laplace, Normal

GLM = "glm"
FA = "fa"
GMM = "gmm"

_FAMILIES = (GLM, FA, GMM)
_RESPONSES = ("gaussian", "bernoulli", "gamma")

# ---------------------------------------------------------------------------
# prior / covariate-source descriptors


@dataclass(frozen=True)
class PriorSpec:
    """One scalar prior in a config: kind plus parameters.

    Kinds: "normal" (var), "normal-scaled" (var; variance multiplied by the
    drawn noise variance, the conjugate coupling), "laplace" (scale),
    "gamma" (shape, rate).
    """

    kind: str
    var: Optional[float] = None
    scale: Optional[float] = None
    shape: Optional[float] = None
    rate: Optional[float] = None

    def validate(self, problems: list, where: str) -> None:
        if self.kind in ("normal", "normal-scaled"):
            if self.var is None or self.var <= 0:
                problems.append(f"{where}: normal prior needs var > 0")
        elif self.kind == "laplace":
            if self.scale is None or self.scale <= 0:
                problems.append(f"{where}: laplace prior needs scale > 0")
        elif self.kind == "gamma":
            if self.shape is None or self.shape <= 0 or self.rate is None or self.rate <= 0:
                problems.append(f"{where}: gamma prior needs shape > 0 and rate > 0")
        else:
            problems.append(f"{where}: unknown prior kind {self.kind!r}")

    def distribution(self):
        """Marginal distribution object (normal-scaled at unit noise)."""
        if self.kind in ("normal", "normal-scaled"):
            return Normal(0.0, self.var)
        if self.kind == "laplace":
            return Laplace(0.0, self.scale)
        if self.kind == "gamma":
            return Gamma(self.shape, self.rate)
        raise ConfigurationError(f"unknown prior kind {self.kind!r}")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        for key in ("var", "scale", "shape", "rate"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PriorSpec":
        return cls(
            kind=obj["kind"],
            var=obj.get("var"),
            scale=obj.get("scale"),
            shape=obj.get("shape"),
            rate=obj.get("rate"),
        )


@dataclass(frozen=True)
class FaPriors:
    mu_var: float
    psi_shape: float
    psi_scale: float
    w_prior: PriorSpec
    z_prior: PriorSpec

    def to_json(self) -> dict:
        return {
            "mu_var": self.mu_var,
            "psi_shape": self.psi_shape,
            "psi_scale": self.psi_scale,
            "w_prior": self.w_prior.to_json(),
            "z_prior": self.z_prior.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FaPriors":
        return cls(
            mu_var=float(obj["mu_var"]),
            psi_shape=float(obj["psi_shape"]),
            psi_scale=float(obj["psi_scale"]),
            w_prior=PriorSpec.from_json(obj["w_prior"]),
            z_prior=PriorSpec.from_json(obj["z_prior"]),
        )


@dataclass(frozen=True)
class CovariateSource:
    """How GLM covariate rows are drawn.

    Kinds: "std-normal"; "correlated-normal" with Wishart degrees of freedom
    ``df`` (df = inf gives the identity correlation); "random-feature-map"
    with ``depth`` tanh layers of ``width`` units.
    """

    kind: str = "std-normal"
    df: Optional[float] = None
    depth: Optional[int] = None
    width: Optional[int] = None

    def validate(self, problems: list) -> None:
        if self.kind == "std-normal":
            return
        if self.kind == "correlated-normal":
            if self.df is None or self.df <= 0:
                problems.append("covariate_source: correlated-normal needs df > 0")
        elif self.kind == "random-feature-map":
            if self.depth is None or self.depth < 1:
                problems.append("covariate_source: random-feature-map needs depth >= 1")
            if self.width is None or self.width < 1:
                problems.append("covariate_source: random-feature-map needs width >= 1")
        else:
            problems.append(f"covariate_source: unknown kind {self.kind!r}")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        for key in ("df", "depth", "width"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "CovariateSource":
        return cls(
            kind=obj.get("kind", "std-normal"),
            df=obj.get("df"),
            depth=obj.get("depth"),
            width=obj.get("width"),
        )


# ---------------------------------------------------------------------------
# latent layouts


@dataclass(frozen=True)
class LayoutEntry:
    """One named block of the packed latent vector.

    ``span`` counts unconstrained coordinates.  ``transform`` is one of
    "identity", "log", "tril-log-diag" (lower-triangular loading matrix with
    log on the diagonal slots; meta = (n_rows, n_cols)), or "softmax-anchor"
    (span m-1 coordinates mapping to an m-simplex; meta = (m,)).
    """

    name: str
    span: int
    transform: str = "identity"
    meta: Optional[tuple] = None


def _tril_index_pairs(n_rows: int, n_cols: int) -> list:
    return [(j, k) for j in range(n_rows) for k in range(min(j + 1, n_cols))]


@dataclass(frozen=True)
class LatentLayout:
    entries: tuple

    @property
    def dim(self) -> int:
        return sum(entry.span for entry in self.entries)

    def spans(self) -> dict:
        """Map entry name -> (start, stop) slice bounds in the packed vector."""
        out = {}
        offset = 0
        for entry in self.entries:
            out[entry.name] = (offset, offset + entry.span)
            offset += entry.span
        return out

    def constrained_names(self) -> list:
        names = []
        for entry in self.entries:
            if entry.transform == "tril-log-diag":
                n_rows, n_cols = entry.meta
                names.extend(f"{entry.name}_{j}_{k}" for j, k in _tril_index_pairs(n_rows, n_cols))
            elif entry.transform == "softmax-anchor":
                (m,) = entry.meta
                names.extend(f"{entry.name}_{j}" for j in range(m))
            elif entry.span == 1:
                names.append(entry.name)
            else:
                names.extend(f"{entry.name}_{j}" for j in range(entry.span))
        return names

    @property
    def constrained_dim(self) -> int:
        return len(self.constrained_names())

    def constrain(self, values: np.ndarray) -> np.ndarray:
        """Map unconstrained rows (n, dim) to natural-space rows."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[1] != self.dim:
            raise DomainError(
                f"layout expects {self.dim} unconstrained coordinates, got {values.shape[1]}"
            )
        parts = []
        offset = 0
        for entry in self.entries:
            block = values[:, offset : offset + entry.span]
            offset += entry.span
            if entry.transform == "identity":
                parts.append(block)
            elif entry.transform == "log":
                parts.append(np.exp(block))
            elif entry.transform == "tril-log-diag":
                n_rows, n_cols = entry.meta
                out = block.copy()
                for idx, (j, k) in enumerate(_tril_index_pairs(n_rows, n_cols)):
                    if j == k:
                        out[:, idx] = np.exp(block[:, idx])
                parts.append(out)
            elif entry.transform == "softmax-anchor":
                (m,) = entry.meta
                padded = np.concatenate([block, np.zeros((block.shape[0], 1))], axis=1)
                padded -= padded.max(axis=1, keepdims=True)
                expd = np.exp(padded)
                parts.append(expd / expd.sum(axis=1, keepdims=True))
            else:
                raise DomainError(f"unknown transform {entry.transform!r}")
        return np.concatenate(parts, axis=1)

    def unconstrain(self, values: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`constrain` (natural rows to packed rows)."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[1] != self.constrained_dim:
            raise DomainError(
                f"layout expects {self.constrained_dim} constrained coordinates, "
                f"got {values.shape[1]}"
            )
        parts = []
        offset = 0
        for entry in self.entries:
            if entry.transform == "softmax-anchor":
                (m,) = entry.meta
                block = values[:, offset : offset + m]
                offset += m
                if np.any(block <= 0.0):
                    raise DomainError("simplex coordinates must be positive")
                logp = np.log(block)
                parts.append(logp[:, :-1] - logp[:, -1:])
                continue
            block = values[:, offset : offset + entry.span]
            offset += entry.span
            if entry.transform == "identity":
                parts.append(block)
            elif entry.transform == "log":
                if np.any(block <= 0.0):
                    raise DomainError(f"{entry.name}: log transform needs positive values")
                parts.append(np.log(block))
            elif entry.transform == "tril-log-diag":
                n_rows, n_cols = entry.meta
                out = block.copy()
                for idx, (j, k) in enumerate(_tril_index_pairs(n_rows, n_cols)):
                    if j == k:
                        if np.any(block[:, idx] <= 0.0):
                            raise DomainError(f"{entry.name}: diagonal entries must be positive")
                        out[:, idx] = np.log(block[:, idx])
                parts.append(out)
            else:
                raise DomainError(f"unknown transform {entry.transform!r}")
        return np.concatenate(parts, axis=1)


# ---------------------------------------------------------------------------
# scenario config


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one synthetic-data scenario."""

    family: str
    K: int
    # GLM group
    p: Optional[int] = None
    has_intercept: bool = False
    coeff_prior: Optional[PriorSpec] = None
    intercept_prior_var: Optional[float] = None
    noise_prior: Optional[InverseGamma] = None
    response: Optional[str] = None
    covariate_source: CovariateSource = field(default_factory=CovariateSource)
    # FA group
    P: Optional[int] = None
    z_dim: Optional[int] = None
    fa_priors: Optional[FaPriors] = None
    # GMM group
    M: Optional[int] = None
    L: Optional[int] = None
    dirichlet_alpha: Optional[float] = None
    lambda_mean_scale: Optional[float] = None
    scenario_id: str = ""

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        problems: list = []
        if self.family not in _FAMILIES:
            problems.append(f"family must be one of {_FAMILIES}, got {self.family!r}")
        if self.K < 1:
            problems.append("K must be >= 1")
        if self.family == GLM:
            if self.p is None or self.p < 1:
                problems.append("glm: p must be >= 1")
            if self.coeff_prior is None:
                problems.append("glm: coeff_prior is required")
            else:
                self.coeff_prior.validate(problems, "coeff_prior")
                if self.coeff_prior.kind == "normal-scaled" and self.noise_prior is None:
                    problems.append("glm: normal-scaled coefficient prior needs a noise prior")
            if self.has_intercept and (
                self.intercept_prior_var is None or self.intercept_prior_var <= 0
            ):
                problems.append("glm: has_intercept needs intercept_prior_var > 0")
            if self.response not in _RESPONSES:
                problems.append(f"glm: response must be one of {_RESPONSES}")
            if self.response in ("gaussian", "gamma") and self.noise_prior is None:
                problems.append(f"glm: {self.response} response needs a noise prior")
            if self.response == "bernoulli" and self.noise_prior is not None:
                problems.append("glm: bernoulli response takes no noise prior")
            self.covariate_source.validate(problems)
        elif self.family == FA:
            if self.P is None or self.P < 1:
                problems.append("fa: P must be >= 1")
            if self.z_dim is None or self.z_dim < 1:
                problems.append("fa: z_dim must be >= 1")
            if self.P is not None and self.z_dim is not None and self.z_dim > self.P:
                problems.append("fa: z_dim must not exceed P")
            if self.fa_priors is None:
                problems.append("fa: fa_priors is required")
            else:
                if self.fa_priors.mu_var <= 0:
                    problems.append("fa: mu_var must be > 0")
                if self.fa_priors.psi_shape <= 0 or self.fa_priors.psi_scale <= 0:
                    problems.append("fa: psi prior parameters must be > 0")
                self.fa_priors.w_prior.validate(problems, "fa_priors.w_prior")
                self.fa_priors.z_prior.validate(problems, "fa_priors.z_prior")
        elif self.family == GMM:
            if self.M is None or self.M < 1:
                problems.append("gmm: M must be >= 1")
            if self.L is None or self.L < 1:
                problems.append("gmm: L must be >= 1")
            if self.dirichlet_alpha is None or not (
                self.dirichlet_alpha > 0 or np.isinf(self.dirichlet_alpha)
            ):
                problems.append("gmm: dirichlet_alpha must be > 0 (inf = uniform weights)")
            if self.lambda_mean_scale is None or self.lambda_mean_scale <= 0:
                problems.append("gmm: lambda_mean_scale must be > 0")
        if problems:
            raise ConfigurationError("; ".join(problems))

    # -- derived dimensions --------------------------------------------------

    @property
    def row_dim(self) -> int:
        """Number of columns in a context-dataset row."""
        if self.family == GLM:
            return self.p + 1
        if self.family == FA:
            return self.P
        return self.L

    def latent_layout(self) -> LatentLayout:
        """Layout of the latent the in-context model learns."""
        if self.family == GLM:
            entries = []
            beta_tf = "log" if self.coeff_prior.kind == "gamma" else "identity"
            entries.append(LayoutEntry("beta", self.p, beta_tf))
            if self.has_intercept:
                entries.append(LayoutEntry("intercept", 1, "identity"))
            if self.noise_prior is not None:
                entries.append(LayoutEntry("sigma2", 1, "log"))
            return LatentLayout(tuple(entries))
        if self.family == FA:
            return LatentLayout((LayoutEntry("z", self.z_dim, "identity"),))
        # GMM: means then variances, components in row-major (m, l) order.
        ml = self.M * self.L
        return LatentLayout(
            (
                LayoutEntry("mu", ml, "identity"),
                LayoutEntry("sigma2", ml, "log"),
            )
        )

    def inference_layout(self) -> LatentLayout:
        """Layout the reference samplers (HMC/VI/Laplace) operate on.

        For GLM it coincides with the latent layout.  FA extends it with the
        per-dataset parameters (mu, Psi diagonal, loading matrix) that the
        in-context model marginalises implicitly.  GMM appends the mixture
        weights through an anchored softmax.
        """
        if self.family == GLM:
            return self.latent_layout()
        if self.family == FA:
            n_tri = len(_tril_index_pairs(self.P, self.z_dim))
            return LatentLayout(
                (
                    LayoutEntry("z", self.z_dim, "identity"),
                    LayoutEntry("mu", self.P, "identity"),
                    LayoutEntry("psi", self.P, "log"),
                    LayoutEntry("w", n_tri, "tril-log-diag", (self.P, self.z_dim)),
                )
            )
        ml = self.M * self.L
        entries = [
            LayoutEntry("mu", ml, "identity"),
            LayoutEntry("sigma2", ml, "log"),
        ]
        if self.M > 1:
            entries.append(LayoutEntry("phi", self.M - 1, "softmax-anchor", (self.M,)))
        return LatentLayout(tuple(entries))

    def shared_entry_names(self) -> list:
        """Entries of the inference layout that the latent layout also has."""
        latent = {entry.name for entry in self.latent_layout().entries}
        return [entry.name for entry in self.inference_layout().entries if entry.name in latent]

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "K": self.K,
            "p": self.p,
            "has_intercept": self.has_intercept,
            "coeff_prior": self.coeff_prior.to_json() if self.coeff_prior else None,
            "intercept_prior_var": self.intercept_prior_var,
            "noise_prior": (
                {"shape": self.noise_prior.shape, "scale": self.noise_prior.scale}
                if self.noise_prior
                else None
            ),
            "response": self.response,
            "P": self.P,
            "z_dim": self.z_dim,
            "fa_priors": self.fa_priors.to_json() if self.fa_priors else None,
            "M": self.M,
            "L": self.L,
            "dirichlet_alpha": self.dirichlet_alpha,
            "lambda_mean_scale": self.lambda_mean_scale,
            "covariate_source": self.covariate_source.to_json(),
            "scenario_id": self.scenario_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioConfig":
        family = obj["family"]
        noise = obj.get("noise_prior")
        cfg = cls(
            family=family,
            K=int(obj["K"]),
            p=obj.get("p"),
            has_intercept=bool(obj.get("has_intercept", False)),
            coeff_prior=PriorSpec.from_json(obj["coeff_prior"]) if obj.get("coeff_prior") else None,
            intercept_prior_var=obj.get("intercept_prior_var"),
            noise_prior=InverseGamma(noise["shape"], noise["scale"]) if noise else None,
            response=obj.get("response"),
            P=obj.get("P"),
            z_dim=obj.get("z_dim"),
            fa_priors=FaPriors.from_json(obj["fa_priors"]) if obj.get("fa_priors") else None,
            M=obj.get("M"),
            L=obj.get("L"),
            dirichlet_alpha=obj.get("dirichlet_alpha"),
            lambda_mean_scale=obj.get("lambda_mean_scale"),
            covariate_source=CovariateSource.from_json(
                obj.get("covariate_source") or {"kind": "std-normal"}
            ),
            scenario_id=obj.get("scenario_id", ""),
        )
        cfg.validate()
        return cfg

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ScenarioConfig":
        return cls.from_json(json.loads(text))


# ---------------------------------------------------------------------------
# containers for generated data


@dataclass(frozen=True)
class ContextDataset:
    """One observed dataset: K rows of row_dim columns."""

    rows: np.ndarray
    family: str
    scenario_id: str
    seed: Optional[int] = None

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=float))
        if rows.ndim != 2:
            raise DomainError("dataset rows must form a 2-D matrix")
        object.__setattr__(self, "rows", rows)

    @property
    def K(self) -> int:
        return self.rows.shape[0]

    @property
    def row_dim(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class LatentVector:
    """Packed unconstrained latent with its layout."""

    values: np.ndarray
    layout: LatentLayout

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=float)).reshape(-1)
        if values.shape[0] != self.layout.dim:
            raise DomainError(
                f"latent has {values.shape[0]} coordinates, layout wants {self.layout.dim}"
            )
        object.__setattr__(self, "values", values)

    def constrained(self) -> np.ndarray:
        return self.layout.constrain(self.values[None, :])[0]

    def block(self, name: str) -> np.ndarray:
        start, stop = self.layout.spans()[name]
        return self.values[start:stop]


# ---------------------------------------------------------------------------
# registry


def _glm(scenario_id, K, p, coeff, *, intercept_var=None, noise=InverseGamma(5.0, 2.0),
         response="gaussian", covariates=CovariateSource()):
    return ScenarioConfig(
        family=GLM,
        K=K,
        p=p,
        has_intercept=intercept_var is not None,
        coeff_prior=coeff,
        intercept_prior_var=intercept_var,
        noise_prior=noise,
        response=response,
        covariate_source=covariates,
        scenario_id=scenario_id,
    )


def _fa(scenario_id, K, P, z_dim, *, mu_var, psi, w_prior, z_prior=PriorSpec("normal", var=1.0)):
    return ScenarioConfig(
        family=FA,
        K=K,
        P=P,
        z_dim=z_dim,
        fa_priors=FaPriors(
            mu_var=mu_var,
            psi_shape=psi[0],
            psi_scale=psi[1],
            w_prior=w_prior,
            z_prior=z_prior,
        ),
        scenario_id=scenario_id,
    )


def _gmm(scenario_id, K, M, L, *, alpha=1.0, lam=3.0):
    return ScenarioConfig(
        family=GMM,
        K=K,
        M=M,
        L=L,
        dirichlet_alpha=alpha,
        lambda_mean_scale=lam,
        scenario_id=scenario_id,
    )


_NORMAL1 = PriorSpec("normal", var=1.0)
_SCALED1 = PriorSpec("normal-scaled", var=1.0)
_LAPLACE1 = PriorSpec("laplace", scale=1.0)

SCENARIOS: dict = {}


def _register(cfg: ScenarioConfig) -> None:
    cfg.validate()
    SCENARIOS[cfg.scenario_id] = cfg


# GLM scenarios: 50 rows, 5 covariates unless stated otherwise.
_register(_glm("glm-1", 50, 5, _SCALED1))
_register(_glm("glm-2", 50, 5, _NORMAL1, intercept_var=9.0))
_register(_glm("glm-3", 50, 5, _LAPLACE1))
_register(_glm("glm-4", 50, 5, _LAPLACE1, intercept_var=9.0))
_register(_glm("glm-5", 50, 5, PriorSpec("gamma", shape=1.0, rate=1.0)))
_register(_glm("glm-6", 50, 5, _NORMAL1, noise=None, response="bernoulli"))
_register(_glm("glm-7", 50, 5, _NORMAL1, response="gamma"))
# Desk-scale variant used by the end-to-end checks.
_register(_glm("glm-1-mini", 20, 2, _SCALED1))

# Factor analysis scenarios.
_register(_fa("fa-1", 50, 3, 3, mu_var=1.0, psi=(5.0, 1.0), w_prior=_NORMAL1))
_register(_fa("fa-2", 50, 3, 3, mu_var=0.1, psi=(5.0, 1.0), w_prior=PriorSpec("laplace", scale=10.0)))
_register(_fa("fa-3", 25, 5, 3, mu_var=0.1, psi=(5.0, 2.0), w_prior=PriorSpec("normal", var=3.0)))
_register(_fa("fa-4", 25, 15, 5, mu_var=0.1, psi=(5.0, 2.0), w_prior=PriorSpec("normal", var=3.0)))
_register(_fa("fa-5", 25, 5, 3, mu_var=0.1, psi=(5.0, 2.0), w_prior=PriorSpec("laplace", scale=3.0)))
_register(
    _fa(
        "fa-6",
        25,
        5,
        3,
        mu_var=0.1,
        psi=(5.0, 2.0),
        w_prior=PriorSpec("normal", var=3.0),
        z_prior=PriorSpec("laplace", scale=1.0),
    )
)

# Gaussian mixture scenarios.
_register(_gmm("gmm-1", 50, 5, 1))
_register(_gmm("gmm-2", 25, 3, 3))
_register(_gmm("gmm-3", 50, 3, 5, alpha=0.5, lam=5.0))
_register(_gmm("gmm-4", 50, 3, 3))
# Desk-scale two-component problem for multimodality checks.
_register(_gmm("gmm-mini", 50, 2, 1))


def get_scenario(scenario_id: str) -> ScenarioConfig:
    try:
        return SCENARIOS[scenario_id]
    except KeyError:
        known = ", ".join(sorted(SCENARIOS))
        raise ConfigurationError(f"unknown scenario {scenario_id!r}; known: {known}") from None


def list_scenarios() -> list:
    return sorted(SCENARIOS)
