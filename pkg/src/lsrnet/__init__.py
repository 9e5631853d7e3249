"""LSR-Net bearing-fault diagnosis: numpy autograd, model, data pipeline, cost analysis."""

from .errors import ConfigError, ContractViolation, FormatError, LSRNetError, NumericError
from .model import CESConfig, DMConfig, LSRNet, LSRNetConfig, shape_trace
from .tensor import Tensor, no_grad

__all__ = [
    "CESConfig",
    "ConfigError",
    "ContractViolation",
    "DMConfig",
    "FormatError",
    "LSRNet",
    "LSRNetConfig",
    "LSRNetError",
    "NumericError",
    "Tensor",
    "no_grad",
    "shape_trace",
]

__version__ = "0.1.0"
