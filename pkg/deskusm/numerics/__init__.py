from .tensor import ShapeError, Tensor, Function, default_dtype, forward_backward, grad_enabled, no_grad, precision
from .models import GradReport
from .gradcheck import grad_check
from . import ops
from .nn import Embedding, LayerNorm, Linear, Module
from .optim import Adam, GroupSettings, schedule

__all__ = [
    "ShapeError",
    "Tensor",
    "Function",
    "default_dtype",
    "forward_backward",
    "grad_enabled",
    "no_grad",
    "precision",
    "GradReport",
    "grad_check",
    "ops",
    "Module",
    "Linear",
    "LayerNorm",
    "Embedding",
    "Adam",
    "GroupSettings",
    "schedule",
]
