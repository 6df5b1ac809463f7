from ._backend import BACKEND
from .checkpoint import (CheckpointError, CheckpointShapeError, CheckpointVersionError,
                         TruncatedCheckpointError, load_checkpoint, save_checkpoint)
from .gradcheck import gradient_check, numeric_gradient
from .model import (LstmState, ModelConfig, ModelParams, ShapeError, init_params, lstm_step,
                    model_backward, model_forward, mse_loss, zero_params)
from .optim import AdamState, adam_update
from .variants import VARIANTS, layout_of, variant_config

__all__ = [
    "BACKEND", "AdamState", "CheckpointError", "CheckpointShapeError", "CheckpointVersionError",
    "LstmState", "ModelConfig", "ModelParams", "ShapeError", "TruncatedCheckpointError",
    "VARIANTS", "adam_update", "gradient_check", "init_params", "layout_of", "load_checkpoint",
    "lstm_step", "model_backward", "model_forward", "mse_loss", "numeric_gradient",
    "save_checkpoint", "variant_config", "zero_params",
]
