from autodiff.checkpoint import load_tensors, save_tensors
from autodiff.gradcheck import check_gradient
from autodiff.graph import Graph, GraphStateError, NonFiniteError, ShapeError, backward, forward
from autodiff.rng import derive_rng
from autodiff.tensor import Parameter, Tensor, as_tensor

__all__ = [
    "Graph",
    "GraphStateError",
    "NonFiniteError",
    "Parameter",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "backward",
    "check_gradient",
    "derive_rng",
    "forward",
    "load_tensors",
    "save_tensors",
]
