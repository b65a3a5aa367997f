from . import autodiff
from .autodiff import Var, backward, constant, parameter
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .model import (
    ContextEncoding,
    ModelConfig,
    count_parameters,
    desk_config,
    encode_context,
    encode_tape,
    full_config,
    gaussian_head_out_dim,
    init_parameters,
    velocity_at,
    velocity_tape,
    with_gaussian_head,
)

__all__ = [
    "autodiff",
    "Var",
    "backward",
    "constant",
    "parameter",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "ContextEncoding",
    "ModelConfig",
    "count_parameters",
    "desk_config",
    "encode_context",
    "encode_tape",
    "full_config",
    "gaussian_head_out_dim",
    "init_parameters",
    "velocity_at",
    "velocity_tape",
    "with_gaussian_head",
]
