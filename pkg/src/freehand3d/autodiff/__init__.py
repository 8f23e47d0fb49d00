from . import functional
from .checkpoint import CheckpointError, load_tensors, save_tensors
from .gradcheck import GradCheckError, grad_check
from .tensor import (
    ContractError,
    Node,
    ShapeError,
    Tensor,
    apply_primitive,
    as_tensor,
    backward,
    no_grad,
    parameter,
    trace,
)

__all__ = [
    "CheckpointError",
    "ContractError",
    "GradCheckError",
    "Node",
    "ShapeError",
    "Tensor",
    "apply_primitive",
    "as_tensor",
    "backward",
    "functional",
    "grad_check",
    "load_tensors",
    "no_grad",
    "parameter",
    "save_tensors",
    "trace",
]
