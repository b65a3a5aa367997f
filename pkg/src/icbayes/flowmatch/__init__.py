"""Flow-matching objectives, the streaming example source, and the trainer."""

from .objectives import (
    BETA_MAX,
    BETA_MIN,
    OBJECTIVES,
    OMEGA,
    SIGMA_MIN,
    VP_T_MIN,
    cfm_target,
    conditional_path,
    gaussian_head_nll,
    loss_fn,
    ot_fm_loss,
    vp_alpha,
    vp_alpha_prime,
    vp_beta,
    vp_fm_loss,
    vp_fm_target,
    vp_sigma,
    vp_sigma_prime,
    vp_sm_loss,
)
from .stream import SPLITS, make_batch, make_example
from .trainer import (
    AdamState,
    TrainConfig,
    TrainLog,
    TrainResult,
    adamw_step_,
    clip_gradients_,
    global_grad_norm,
    load_training_checkpoint,
    lr_at,
    save_training_checkpoint,
    train,
)

__all__ = [
    "AdamState",
    "BETA_MAX",
    "BETA_MIN",
    "OBJECTIVES",
    "OMEGA",
    "SIGMA_MIN",
    "SPLITS",
    "TrainConfig",
    "TrainLog",
    "TrainResult",
    "VP_T_MIN",
    "adamw_step_",
    "cfm_target",
    "clip_gradients_",
    "conditional_path",
    "gaussian_head_nll",
    "global_grad_norm",
    "load_training_checkpoint",
    "loss_fn",
    "lr_at",
    "make_batch",
    "make_example",
    "ot_fm_loss",
    "save_training_checkpoint",
    "train",
    "vp_alpha",
    "vp_alpha_prime",
    "vp_beta",
    "vp_fm_loss",
    "vp_fm_target",
    "vp_sigma",
    "vp_sigma_prime",
    "vp_sm_loss",
]
