from . import ops
from .container import load_bundle, load_tensor, save_bundle, save_tensor
from .core import ShapeError, Tensor, grad_enabled, no_grad
from .gradcheck import NonFiniteEvaluation, grad_check

__all__ = [
    "NonFiniteEvaluation",
    "ShapeError",
    "Tensor",
    "grad_check",
    "grad_enabled",
    "load_bundle",
    "load_tensor",
    "no_grad",
    "ops",
    "save_bundle",
    "save_tensor",
]
