"""Differentiable-computation engine: tensors, layers, Adam, gradcheck."""
from .kernels import BACKEND
from .tensor import Tensor, ShapeError, concat
from .nn import Module, Conv2d, Linear, ResBlock, glorot_uniform
from .optim import Adam, NonFiniteGradientError
from .gradcheck import gradcheck, GradcheckReport
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "BACKEND", "Tensor", "ShapeError", "concat",
    "Module", "Conv2d", "Linear", "ResBlock", "glorot_uniform",
    "Adam", "NonFiniteGradientError",
    "gradcheck", "GradcheckReport",
    "save_checkpoint", "load_checkpoint",
]
