"""Streaming trainer: AdamW with decoupled weight decay, linear warmup into a
cosine decay, global-norm gradient clipping, CSV logging, and checkpoints that
carry the full optimizer state so a resumed run is bit-identical to one that
never stopped.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import ConfigurationError, TrainingError
from ..nncore.autodiff import backward, parameter
from ..nncore.checkpoint import load_checkpoint, save_checkpoint
from ..nncore.model import ModelConfig, init_parameters
from ..probmodels import ScenarioConfig, get_scenario
from ..rngs import derive_rng
from .objectives import OBJECTIVES, loss_fn
from .stream import make_batch


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    batch_size: int = 256
    max_lr: float = 5e-4
    warmup_frac: float = 0.1
    final_lr_factor: float = 1e-4
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    objective: str = "ot-fm"
    seed: int = 0
    log_every: int = 10
    val_every: int = 0
    val_batches: int = 4
    checkpoint_every: int = 0

    def validate(self) -> None:
        problems = []
        if self.steps < 1:
            problems.append("steps must be >= 1")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.max_lr <= 0:
            problems.append("max_lr must be > 0")
        if not (0.0 <= self.warmup_frac < 1.0):
            problems.append("warmup_frac must lie in [0, 1)")
        if not (0.0 < self.final_lr_factor <= 1.0):
            problems.append("final_lr_factor must lie in (0, 1]")
        if self.weight_decay < 0:
            problems.append("weight_decay must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            problems.append("adam betas must lie in [0, 1)")
        if self.clip_norm <= 0:
            problems.append("clip_norm must be > 0")
        if self.objective not in OBJECTIVES:
            problems.append(f"objective must be one of {OBJECTIVES}")
        if self.log_every < 1:
            problems.append("log_every must be >= 1")
        if problems:
            raise ConfigurationError("; ".join(problems))

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        cfg = cls(**{k: obj[k] for k in cls.__dataclass_fields__ if k in obj})
        cfg.validate()
        return cfg


def lr_at(tc: TrainConfig, step: int) -> float:
    """Schedule value for the update applied at ``step`` (0-based)."""
    warmup = int(round(tc.warmup_frac * tc.steps))
    if step < warmup:
        return tc.max_lr * (step + 1) / warmup
    final = tc.max_lr * tc.final_lr_factor
    remaining = max(tc.steps - 1 - warmup, 1)
    progress = min((step - warmup) / remaining, 1.0)
    return final + 0.5 * (tc.max_lr - final) * (1.0 + math.cos(math.pi * progress))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def fresh(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
        )


def global_grad_norm(grads: dict) -> float:
    # fsum keeps the reduction independent of dict iteration order, which
    # matters for bit-identical resumes (checkpoints reload in sorted order).
    return math.sqrt(math.fsum(float(np.sum(g * g)) for g in grads.values()))


def clip_gradients_(grads: dict, max_norm: float) -> float:
    """Scale gradients in place to the given global norm; returns the raw norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adamw_step_(params: dict, grads: dict, state: AdamState, lr: float,
                tc: TrainConfig) -> None:
    """One decoupled-weight-decay Adam update, in place."""
    state.step += 1
    b1, b2 = tc.beta1, tc.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if tc.weight_decay > 0.0:
            p -= lr * tc.weight_decay * p
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + tc.eps)


# ---------------------------------------------------------------------------
# logging


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    COLUMNS = ("step", "lr", "train_loss", "val_loss", "grad_norm", "wall_ms")

    def append(self, step, lr, train_loss, val_loss, grad_norm, wall_ms):
        self.rows.append(
            {
                "step": step,
                "lr": lr,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "grad_norm": grad_norm,
                "wall_ms": wall_ms,
            }
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            writer.writeheader()
            for row in self.rows:
                out = dict(row)
                if out["val_loss"] is None:
                    out["val_loss"] = ""
                writer.writerow(out)


# ---------------------------------------------------------------------------
# checkpoint plumbing


def save_training_checkpoint(path, params: dict, state: AdamState,
                             model_cfg: ModelConfig, scenario_id: str,
                             tc: TrainConfig, completed_steps: int) -> None:
    tensors = {f"param/{k}": v for k, v in params.items()}
    tensors.update({f"adam_m/{k}": v for k, v in state.m.items()})
    tensors.update({f"adam_v/{k}": v for k, v in state.v.items()})
    tensors["adam_step"] = np.asarray(state.step, dtype=np.int64)
    tensors["completed_steps"] = np.asarray(completed_steps, dtype=np.int64)
    save_checkpoint(
        path,
        tensors,
        model_config=model_cfg.to_json(),
        metadata={
            "kind": "training-checkpoint",
            "objective": tc.objective,
            "scenario_id": scenario_id,
            "train_config": tc.to_json(),
        },
    )


def load_training_checkpoint(path):
    """Returns (params, AdamState, model_cfg, metadata, completed_steps)."""
    ck = load_checkpoint(path)
    params, m, v = {}, {}, {}
    for name, arr in ck.tensors.items():
        if name.startswith("param/"):
            params[name[len("param/"):]] = arr.copy()
        elif name.startswith("adam_m/"):
            m[name[len("adam_m/"):]] = arr.copy()
        elif name.startswith("adam_v/"):
            v[name[len("adam_v/"):]] = arr.copy()
    if not params:
        raise TrainingError(f"{path} holds no parameters")
    state = AdamState(m=m, v=v, step=int(ck.tensors["adam_step"]))
    completed = int(ck.tensors["completed_steps"])
    model_cfg = ModelConfig.from_json(ck.model_config)
    return params, state, model_cfg, ck.metadata, completed


# ---------------------------------------------------------------------------
# the loop


@dataclass
class TrainResult:
    params: dict
    state: AdamState
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    scenario_id: str
    log: TrainLog
    final_train_loss: float
    final_val_loss: Optional[float]


def _eval_loss(objective_fn, params, model_cfg, scenario, tc) -> float:
    """Validation loss on fixed batches with fixed path noise."""
    total = 0.0
    for vb in range(tc.val_batches):
        rows, latents = make_batch(scenario, tc.seed, "val",
                                   vb * tc.batch_size, tc.batch_size)
        rng = derive_rng(tc.seed, "val-path", vb)
        total += float(objective_fn(params, model_cfg, rows, latents, rng).value)
    return total / tc.val_batches


def train(model_cfg: ModelConfig, scenario: ScenarioConfig | str, tc: TrainConfig,
          *, checkpoint_path=None, resume_from=None,
          progress: Optional[Callable] = None) -> TrainResult:
    """Run (or resume) a training job.

    ``checkpoint_path`` enables periodic checkpoints (and one final save);
    ``resume_from`` restarts from a saved training checkpoint and reproduces
    the uninterrupted run bit for bit.
    """
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    tc.validate()
    model_cfg.validate()
    if model_cfg.row_dim != scenario.row_dim:
        raise ConfigurationError(
            f"model row_dim {model_cfg.row_dim} != scenario row_dim {scenario.row_dim}"
        )
    if model_cfg.latent_dim != scenario.latent_layout().dim:
        raise ConfigurationError(
            f"model latent_dim {model_cfg.latent_dim} != scenario latent dim "
            f"{scenario.latent_layout().dim}"
        )

    objective_fn = loss_fn(tc.objective)
    if resume_from is not None:
        params, state, saved_cfg, meta, start_step = load_training_checkpoint(resume_from)
        if saved_cfg != model_cfg:
            raise TrainingError("checkpoint model config does not match the requested one")
        if meta.get("objective") != tc.objective:
            raise TrainingError(
                f"checkpoint was trained with objective {meta.get('objective')!r}, "
                f"requested {tc.objective!r}"
            )
    else:
        params = init_parameters(model_cfg, derive_rng(tc.seed, "init"))
        state = AdamState.fresh(params)
        start_step = 0

    log = TrainLog()
    val_loss: Optional[float] = None
    train_loss = math.nan
    dropout_rng = None

    for step in range(start_step, tc.steps):
        t0 = time.perf_counter()
        rows, latents = make_batch(scenario, tc.seed, "train",
                                   step * tc.batch_size, tc.batch_size)
        path_rng = derive_rng(tc.seed, "path", step)
        if model_cfg.dropout > 0.0:
            dropout_rng = derive_rng(tc.seed, "dropout", step)
        pvars = {k: parameter(v) for k, v in params.items()}
        loss = objective_fn(pvars, model_cfg, rows, latents, path_rng,
                            dropout_rng=dropout_rng)
        train_loss = float(loss.value)
        if not np.isfinite(train_loss):
            raise TrainingError(f"non-finite training loss at step {step}")
        backward(loss)
        grads = {k: v.grad for k, v in pvars.items()}
        for name, g in grads.items():
            if g is None:
                grads[name] = np.zeros_like(params[name])
        grad_norm = clip_gradients_(grads, tc.clip_norm)
        adamw_step_(params, grads, state, lr_at(tc, step), tc)

        wall_ms = (time.perf_counter() - t0) * 1000.0
        ran_val = tc.val_every > 0 and (step + 1) % tc.val_every == 0
        if ran_val:
            val_loss = _eval_loss(objective_fn, params, model_cfg, scenario, tc)
        if (step + 1) % tc.log_every == 0 or step == tc.steps - 1 or ran_val:
            log.append(step, lr_at(tc, step), train_loss,
                       val_loss if ran_val else None, grad_norm, wall_ms)
        if progress is not None:
            progress(step, train_loss)
        if (
            checkpoint_path is not None
            and tc.checkpoint_every > 0
            and (step + 1) % tc.checkpoint_every == 0
            and step + 1 < tc.steps
        ):
            save_training_checkpoint(checkpoint_path, params, state, model_cfg,
                                     scenario.scenario_id, tc, step + 1)

    if checkpoint_path is not None:
        save_training_checkpoint(checkpoint_path, params, state, model_cfg,
                                 scenario.scenario_id, tc, tc.steps)
    if val_loss is None and tc.val_every > 0:
        val_loss = _eval_loss(objective_fn, params, model_cfg, scenario, tc)
    return TrainResult(
        params=params,
        state=state,
        model_cfg=model_cfg,
        train_cfg=tc,
        scenario_id=scenario.scenario_id,
        log=log,
        final_train_loss=train_loss,
        final_val_loss=val_loss,
    )
