"""Conditional velocity-field network.

Context rows go through an embedding and a stack of bidirectional pre-norm
attention blocks.  The latent draw is a single query token that cross-attends
to the encoded rows; integration time conditions every decoder block through
zero-initialized adaptive layer-norm modulations, so the whole network is the
constant zero map at initialization (the final projection starts at zero too).

Two synchronized forward implementations live here on purpose: the tape
version builds the training graph, while the plain-numpy version serves the
ODE sampler and caches per-block key/value projections of the context so that
repeated velocity evaluations only pay for the query token.  A test pins the
two to each other.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import erf as _np_erf

from ..errors import ConfigurationError, DomainError
from . import autodiff as ad

_MOD_DEC = ("shift_attn", "scale_attn", "gate_attn", "shift_ff", "scale_ff", "gate_ff")
_MOD_HEAD = ("shift_ff", "scale_ff", "gate_ff")


@dataclass(frozen=True)
class ModelConfig:
    row_dim: int
    latent_dim: int
    out_dim: int
    d_model: int = 64
    d_ff: int = 128
    n_heads: int = 4
    n_encoder_blocks: int = 2
    n_decoder_blocks: int = 2
    n_head_layers: int = 2
    n_time_layers: int = 3
    dropout: float = 0.0
    layer_norm_eps: float = 1e-5

    def validate(self) -> None:
        problems = []
        for name in ("row_dim", "latent_dim", "out_dim", "d_model", "d_ff",
                     "n_heads", "n_encoder_blocks", "n_decoder_blocks",
                     "n_head_layers", "n_time_layers"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.d_model % self.n_heads != 0:
            problems.append("d_model must be divisible by n_heads")
        if not (0.0 <= self.dropout < 1.0):
            problems.append("dropout must lie in [0, 1)")
        if problems:
            raise ConfigurationError("; ".join(problems))

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_json(self) -> dict:
        return {
            "row_dim": self.row_dim,
            "latent_dim": self.latent_dim,
            "out_dim": self.out_dim,
            "d_model": self.d_model,
            "d_ff": self.d_ff,
            "n_heads": self.n_heads,
            "n_encoder_blocks": self.n_encoder_blocks,
            "n_decoder_blocks": self.n_decoder_blocks,
            "n_head_layers": self.n_head_layers,
            "n_time_layers": self.n_time_layers,
            "dropout": self.dropout,
            "layer_norm_eps": self.layer_norm_eps,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        cfg = cls(**{k: obj[k] for k in cls.__dataclass_fields__ if k in obj})
        cfg.validate()
        return cfg


def desk_config(row_dim: int, latent_dim: int, out_dim: Optional[int] = None) -> ModelConfig:
    """Small preset that trains in seconds on a CPU."""
    cfg = ModelConfig(row_dim=row_dim, latent_dim=latent_dim,
                      out_dim=out_dim if out_dim is not None else latent_dim)
    cfg.validate()
    return cfg


def full_config(row_dim: int, latent_dim: int, out_dim: Optional[int] = None) -> ModelConfig:
    """Publication-scale preset (~45M parameters)."""
    cfg = ModelConfig(
        row_dim=row_dim,
        latent_dim=latent_dim,
        out_dim=out_dim if out_dim is not None else latent_dim,
        d_model=512,
        d_ff=1024,
        n_heads=8,
        n_encoder_blocks=8,
        n_decoder_blocks=6,
        n_head_layers=3,
        n_time_layers=3,
    )
    cfg.validate()
    return cfg


def gaussian_head_out_dim(latent_dim: int) -> int:
    """Mean + log-diagonal + strict lower triangle of a Cholesky factor."""
    return latent_dim + latent_dim + latent_dim * (latent_dim - 1) // 2


def with_gaussian_head(cfg: ModelConfig) -> ModelConfig:
    return replace(cfg, out_dim=gaussian_head_out_dim(cfg.latent_dim))


# ---------------------------------------------------------------------------
# parameters


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def init_parameters(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float64) -> dict:
    """Fresh parameter dict; zero-init gates and output keep v identically 0."""
    cfg.validate()
    dm, dff = cfg.d_model, cfg.d_ff
    params: dict = {}

    def linear(name, fan_in, fan_out, zero=False):
        if zero:
            params[f"{name}.w"] = np.zeros((fan_in, fan_out), dtype=dtype)
        else:
            params[f"{name}.w"] = _glorot(rng, fan_in, fan_out, dtype)
        params[f"{name}.b"] = np.zeros(fan_out, dtype=dtype)

    def ln(name):
        params[f"{name}.g"] = np.ones(dm, dtype=dtype)
        params[f"{name}.b"] = np.zeros(dm, dtype=dtype)

    linear("embed.row", cfg.row_dim, dm)
    linear("embed.z", cfg.latent_dim, dm)
    linear("time.0", 1, dm)
    for i in range(1, cfg.n_time_layers):
        linear(f"time.{i}", dm, dm)

    for i in range(cfg.n_encoder_blocks):
        ln(f"enc{i}.ln1")
        for proj in ("q", "k", "v", "o"):
            linear(f"enc{i}.attn.{proj}", dm, dm)
        ln(f"enc{i}.ln2")
        linear(f"enc{i}.ff.0", dm, dff)
        linear(f"enc{i}.ff.1", dff, dm)
    ln("enc.final_ln")

    for i in range(cfg.n_decoder_blocks):
        linear(f"dec{i}.mod", dm, 6 * dm, zero=True)
        for proj in ("q", "k", "v", "o"):
            linear(f"dec{i}.attn.{proj}", dm, dm)
        linear(f"dec{i}.ff.0", dm, dff)
        linear(f"dec{i}.ff.1", dff, dm)

    for i in range(cfg.n_head_layers):
        linear(f"head{i}.mod", dm, 3 * dm, zero=True)
        linear(f"head{i}.ff.0", dm, dff)
        linear(f"head{i}.ff.1", dff, dm)

    linear("out", dm, cfg.out_dim, zero=True)
    return params


def count_parameters(params: dict) -> int:
    return int(sum(arr.size for arr in params.values()))


def parameter_names(cfg: ModelConfig) -> list:
    """Canonical ordering used by the checkpoint container and the optimizer."""
    return sorted(init_parameters(cfg, np.random.default_rng(0)).keys())


def _check_time(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-9) or np.any(t > 1.0 + 1e-9):
        raise DomainError(f"integration time must lie in [0, 1], got range "
                          f"[{t.min()}, {t.max()}]")
    return np.clip(t, 0.0, 1.0)


# ---------------------------------------------------------------------------
# tape forward (training)


def _lin_t(p: dict, name: str, x: ad.Var) -> ad.Var:
    return x @ p[f"{name}.w"] + p[f"{name}.b"]


def _ln_affine_t(p: dict, name: str, x: ad.Var, eps: float) -> ad.Var:
    return ad.layer_norm(x, eps=eps) * p[f"{name}.g"] + p[f"{name}.b"]


def _attention_t(p: dict, name: str, q_in: ad.Var, kv_in: ad.Var, cfg: ModelConfig) -> ad.Var:
    b = q_in.shape[0]
    tq, tk = q_in.shape[1], kv_in.shape[1]
    h, dk = cfg.n_heads, cfg.head_dim

    def split(x, t):
        return ad.swapaxes(ad.reshape(x, (b, t, h, dk)), 1, 2)

    q = split(_lin_t(p, f"{name}.q", q_in), tq)
    k = split(_lin_t(p, f"{name}.k", kv_in), tk)
    v = split(_lin_t(p, f"{name}.v", kv_in), tk)
    scores = (q @ ad.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dk))
    att = ad.softmax(scores, axis=-1)
    mixed = att @ v
    merged = ad.reshape(ad.swapaxes(mixed, 1, 2), (b, tq, cfg.d_model))
    return _lin_t(p, f"{name}.o", merged)


def _ff_t(p: dict, name: str, x: ad.Var) -> ad.Var:
    return _lin_t(p, f"{name}.1", ad.gelu(_lin_t(p, f"{name}.0", x)))


def _dropout_t(x: ad.Var, p: float, rng) -> ad.Var:
    if p <= 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.value.dtype) / (1.0 - p)
    return x * ad.constant(mask)


def encode_tape(p: dict, cfg: ModelConfig, rows: np.ndarray, dropout_rng=None) -> ad.Var:
    """Context rows (B, K, row_dim) -> encoded tokens (B, K, d_model)."""
    drop = cfg.dropout if dropout_rng is not None else 0.0
    if cfg.dropout > 0.0 and dropout_rng is None:
        raise ConfigurationError("dropout > 0 needs a dropout_rng at training time")
    x = _lin_t(p, "embed.row", ad.constant(rows))
    for i in range(cfg.n_encoder_blocks):
        h = _ln_affine_t(p, f"enc{i}.ln1", x, cfg.layer_norm_eps)
        x = x + _dropout_t(_attention_t(p, f"enc{i}.attn", h, h, cfg), drop, dropout_rng)
        h = _ln_affine_t(p, f"enc{i}.ln2", x, cfg.layer_norm_eps)
        x = x + _dropout_t(_ff_t(p, f"enc{i}.ff", h), drop, dropout_rng)
    return _ln_affine_t(p, "enc.final_ln", x, cfg.layer_norm_eps)


def _time_embed_t(p: dict, cfg: ModelConfig, t: np.ndarray) -> ad.Var:
    c = ad.gelu(_lin_t(p, "time.0", ad.constant(t.reshape(-1, 1))))
    for i in range(1, cfg.n_time_layers):
        c = ad.gelu(_lin_t(p, f"time.{i}", c))
    return c


def _mods_t(p: dict, name: str, c: ad.Var, keys: tuple, dm: int) -> dict:
    mod = _lin_t(p, name, c)
    b = mod.shape[0]
    out = {}
    for j, key in enumerate(keys):
        out[key] = ad.reshape(mod[:, j * dm : (j + 1) * dm], (b, 1, dm))
    return out


def velocity_tape(p: dict, cfg: ModelConfig, rows: np.ndarray, z: np.ndarray,
                  t: np.ndarray, dropout_rng=None) -> ad.Var:
    """Training-graph forward: returns the (B, out_dim) network output."""
    t = _check_time(t)
    enc = encode_tape(p, cfg, rows, dropout_rng)
    c = _time_embed_t(p, cfg, t)
    dm, eps = cfg.d_model, cfg.layer_norm_eps
    drop = cfg.dropout if dropout_rng is not None else 0.0
    b = rows.shape[0]

    x = ad.reshape(_lin_t(p, "embed.z", ad.constant(z)), (b, 1, dm))
    for i in range(cfg.n_decoder_blocks):
        mods = _mods_t(p, f"dec{i}.mod", c, _MOD_DEC, dm)
        h = ad.layer_norm(x, eps=eps) * (1.0 + mods["scale_attn"]) + mods["shift_attn"]
        attn = _dropout_t(_attention_t(p, f"dec{i}.attn", h, enc, cfg), drop, dropout_rng)
        x = x + mods["gate_attn"] * attn
        h = ad.layer_norm(x, eps=eps) * (1.0 + mods["scale_ff"]) + mods["shift_ff"]
        x = x + mods["gate_ff"] * _dropout_t(_ff_t(p, f"dec{i}.ff", h), drop, dropout_rng)
    for i in range(cfg.n_head_layers):
        mods = _mods_t(p, f"head{i}.mod", c, _MOD_HEAD, dm)
        h = ad.layer_norm(x, eps=eps) * (1.0 + mods["scale_ff"]) + mods["shift_ff"]
        x = x + mods["gate_ff"] * _dropout_t(_ff_t(p, f"head{i}.ff", h), drop, dropout_rng)
    out = _lin_t(p, "out", ad.reshape(x, (b, dm)))
    return out


# ---------------------------------------------------------------------------
# fast numpy forward (sampling)


def _np_gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + _np_erf(x / np.sqrt(2.0)))


def _np_ln(x: np.ndarray, eps: float) -> np.ndarray:
    m = x.mean(axis=-1, keepdims=True)
    c = x - m
    v = (c * c).mean(axis=-1, keepdims=True)
    return c / np.sqrt(v + eps)


def _np_lin(p: dict, name: str, x: np.ndarray) -> np.ndarray:
    return x @ p[f"{name}.w"] + p[f"{name}.b"]


def _np_ln_affine(p: dict, name: str, x: np.ndarray, eps: float) -> np.ndarray:
    return _np_ln(x, eps) * p[f"{name}.g"] + p[f"{name}.b"]


def _np_softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _np_heads(x: np.ndarray, h: int, dk: int) -> np.ndarray:
    # (..., T, dm) -> (..., h, T, dk)
    return np.swapaxes(x.reshape(x.shape[:-1] + (h, dk)), -2, -3)


class ContextEncoding:
    """Encoded context with per-decoder-block key/value projections cached."""

    __slots__ = ("enc", "keys", "values", "cfg")

    def __init__(self, enc: np.ndarray, keys: list, values: list, cfg: ModelConfig):
        self.enc = enc
        self.keys = keys
        self.values = values
        self.cfg = cfg


def encode_context(p: dict, cfg: ModelConfig, rows: np.ndarray) -> ContextEncoding:
    """Encode rows (K, row_dim) once; reuse across many velocity evaluations."""
    rows = np.asarray(rows, dtype=p["embed.row.w"].dtype)
    if rows.ndim != 2 or rows.shape[1] != cfg.row_dim:
        raise DomainError(f"expected rows of shape (K, {cfg.row_dim})")
    h, dk, eps = cfg.n_heads, cfg.head_dim, cfg.layer_norm_eps
    x = _np_lin(p, "embed.row", rows)[None, :, :]  # (1, K, dm)
    for i in range(cfg.n_encoder_blocks):
        hidden = _np_ln_affine(p, f"enc{i}.ln1", x, eps)
        q = _np_heads(_np_lin(p, f"enc{i}.attn.q", hidden), h, dk)
        k = _np_heads(_np_lin(p, f"enc{i}.attn.k", hidden), h, dk)
        v = _np_heads(_np_lin(p, f"enc{i}.attn.v", hidden), h, dk)
        att = _np_softmax((q @ np.swapaxes(k, -1, -2)) / np.sqrt(dk))
        mixed = np.swapaxes(att @ v, -2, -3).reshape(x.shape)
        x = x + _np_lin(p, f"enc{i}.attn.o", mixed)
        x = x + _np_lin(p, f"enc{i}.ff.1",
                        _np_gelu(_np_lin(p, f"enc{i}.ff.0",
                                         _np_ln_affine(p, f"enc{i}.ln2", x, eps))))
    enc = _np_ln_affine(p, "enc.final_ln", x, eps)[0]  # (K, dm)

    keys, values = [], []
    for i in range(cfg.n_decoder_blocks):
        keys.append(_np_heads(_np_lin(p, f"dec{i}.attn.k", enc), h, dk))   # (h, K, dk)
        values.append(_np_heads(_np_lin(p, f"dec{i}.attn.v", enc), h, dk))
    return ContextEncoding(enc, keys, values, cfg)


def _np_time_embed(p: dict, cfg: ModelConfig, t: float, n: int) -> np.ndarray:
    t_arr = np.full((n, 1), float(t), dtype=p["time.0.w"].dtype)
    c = _np_gelu(_np_lin(p, "time.0", t_arr))
    for i in range(1, cfg.n_time_layers):
        c = _np_gelu(_np_lin(p, f"time.{i}", c))
    return c


def velocity_at(p: dict, cache: ContextEncoding, z: np.ndarray, t: float) -> np.ndarray:
    """Evaluate the network for draws z (n, latent_dim) at shared time t."""
    cfg = cache.cfg
    t = float(_check_time(np.asarray(t)))
    z = np.atleast_2d(np.asarray(z, dtype=p["embed.z.w"].dtype))
    n = z.shape[0]
    h, dk, dm, eps = cfg.n_heads, cfg.head_dim, cfg.d_model, cfg.layer_norm_eps

    c = _np_time_embed(p, cfg, t, 1)  # same t for all draws: embed once
    x = _np_lin(p, "embed.z", z)[:, None, :]  # (n, 1, dm)

    def mods(name, labels):
        m = _np_lin(p, name, c)[0]
        return {lab: m[j * dm : (j + 1) * dm] for j, lab in enumerate(labels)}

    for i in range(cfg.n_decoder_blocks):
        md = mods(f"dec{i}.mod", _MOD_DEC)
        hid = _np_ln(x, eps) * (1.0 + md["scale_attn"]) + md["shift_attn"]
        q = _np_heads(_np_lin(p, f"dec{i}.attn.q", hid), h, dk)  # (n, h, 1, dk)
        att = _np_softmax((q @ np.swapaxes(cache.keys[i], -1, -2)) / np.sqrt(dk))
        mixed = np.swapaxes(att @ cache.values[i], -2, -3).reshape(n, 1, dm)
        x = x + md["gate_attn"] * _np_lin(p, f"dec{i}.attn.o", mixed)
        hid = _np_ln(x, eps) * (1.0 + md["scale_ff"]) + md["shift_ff"]
        x = x + md["gate_ff"] * _np_lin(p, f"dec{i}.ff.1",
                                        _np_gelu(_np_lin(p, f"dec{i}.ff.0", hid)))
    for i in range(cfg.n_head_layers):
        md = mods(f"head{i}.mod", _MOD_HEAD)
        hid = _np_ln(x, eps) * (1.0 + md["scale_ff"]) + md["shift_ff"]
        x = x + md["gate_ff"] * _np_lin(p, f"head{i}.ff.1",
                                        _np_gelu(_np_lin(p, f"head{i}.ff.0", hid)))
    return _np_lin(p, "out", x[:, 0, :])
