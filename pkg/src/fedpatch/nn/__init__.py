"""From-scratch convolutional patch classifier: forward, exact gradients,
Adam, and the binary weight format."""

from .adam import OptimizerState, adam_step, init_state
from .io import (WeightFormatError, decode_weights, encode_weights,
                 load_weights, save_weights)
from .network import backward, forward
from .spec import NetworkSpec, SpecError
from .training import TrainResult, train_epochs
from .weights import ModelWeights, ShapeMismatchError, init_weights

__all__ = [
    "NetworkSpec", "SpecError", "ModelWeights", "ShapeMismatchError",
    "init_weights", "forward", "backward", "OptimizerState", "init_state",
    "adam_step", "train_epochs", "TrainResult", "encode_weights",
    "decode_weights", "save_weights", "load_weights", "WeightFormatError",
]
