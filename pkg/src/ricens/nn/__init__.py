from .layers import ACTIVATIONS, Activation, Concat, Conv1D, Dense, Flatten, Layer, Sequential, ShapeError
from .losses import HUBER, MAE, MSE, LossKind
from .model import (
    AutoencoderNetwork,
    Network,
    OptimizerSpec,
    TrainConfig,
    TrainedModel,
    TrainingError,
    fit,
    forward,
    gradient_check,
)

__all__ = [
    "ACTIVATIONS", "Activation", "AutoencoderNetwork", "Concat", "Conv1D", "Dense", "Flatten",
    "HUBER", "Layer", "LossKind", "MAE", "MSE", "Network", "OptimizerSpec", "Sequential",
    "ShapeError", "TrainConfig", "TrainedModel", "TrainingError", "fit", "forward", "gradient_check",
]
