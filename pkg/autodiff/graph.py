"""
Recorded computation graphs with reverse-mode differentiation.

A `Graph` is built by running ordinary tensor code while the graph is active:
every primitive operation appends a node in execution order, which is a valid
topological order. Graphs are rebuilt on each forward call; nothing is carried
between calls except the bound parameters.
"""

import logging
from contextvars import ContextVar
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, DTypeLike

from autodiff.tensor import Tensor

logger = logging.getLogger(__name__)

BuildFn = Callable[[dict[str, Tensor]], Union[Tensor, Mapping[str, Tensor]]]
VjpFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
GradSpec = Union[None, ArrayLike, Mapping[str, ArrayLike]]

_ACTIVE_GRAPH: ContextVar[Optional["Graph"]] = ContextVar("active_graph", default=None)


class ShapeError(ValueError):
    """Raised when a node is constructed with inconsistent input shapes."""


class GraphStateError(RuntimeError):
    """Raised when graph methods are called out of order."""


class NonFiniteError(ArithmeticError):
    """Raised when a node produces NaN or infinite values."""


class Node:
    """One primitive operation recorded on a graph."""

    __slots__ = ("index", "op", "inputs", "output", "vjp")

    def __init__(self, index: int, op: str, inputs: tuple[Tensor, ...], output: Tensor, vjp: VjpFn) -> None:
        self.index = index
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp

    @property
    def name(self) -> str:
        return f"{self.op}#{self.index}"

    def __repr__(self) -> str:
        return f"<Node {self.name} out={self.output.shape}>"


def active_graph() -> Optional["Graph"]:
    """Return the graph currently recording operations, if any."""
    return _ACTIVE_GRAPH.get()


class Graph:
    """
    A tape of primitive operations supporting forward and backward passes.

    Used in two ways:

    - with a build function: `graph.forward(inputs)` rebuilds the tape from
      named inputs and `graph.backward(output_grad)` returns gradients for
      every input and bound parameter;
    - as a context manager around arbitrary tensor code, followed by
      `graph.gradient(loss, params)`.

    Attributes:
        build: Function mapping named input tensors to output tensor(s)
        params: Named parameters whose gradients are always reported
        dtype: Floating point precision for wrapped inputs
        check_finite: Raise NonFiniteError naming the node on NaN/inf output
        nodes: Recorded nodes in execution (topological) order
    """

    def __init__(
        self,
        build: Optional[BuildFn] = None,
        params: Optional[Mapping[str, Tensor]] = None,
        dtype: DTypeLike = np.float64,
        check_finite: bool = False,
    ) -> None:
        self.build = build
        self.params: dict[str, Tensor] = dict(params or {})
        self.dtype = np.dtype(dtype)
        self.check_finite = check_finite
        self.nodes: list[Node] = []
        self.inputs: dict[str, Tensor] = {}
        self.outputs: dict[str, Tensor] = {}
        self._forward_done = False
        self._token: object = None

    def __enter__(self) -> "Graph":
        if self._token is not None:
            raise GraphStateError("Graph is already active")
        self._token = _ACTIVE_GRAPH.set(self)
        return self

    def __exit__(self, *exc: object) -> None:
        _ACTIVE_GRAPH.reset(self._token)  # type: ignore[arg-type]
        self._token = None
        self._forward_done = True

    def next_label(self, op: str) -> str:
        """Identity the next recorded node of type `op` will get."""
        return f"{op}#{len(self.nodes)}"

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, vjp: VjpFn) -> Node:
        node = Node(len(self.nodes), op, inputs, output, vjp)
        if self.check_finite and not np.all(np.isfinite(output.data)):
            raise NonFiniteError(f"Non-finite values produced by node {node.name}")
        self.nodes.append(node)
        return node

    def forward(self, inputs: Mapping[str, ArrayLike]) -> dict[str, Tensor]:
        """
        Rebuild the tape from named inputs and return named outputs.

        Args:
            inputs: Values for every input the build function reads

        Returns:
            Mapping of output name to Tensor ("output" for single outputs)

        Raises:
            GraphStateError: If the graph has no build function
        """
        if self.build is None:
            raise GraphStateError("Graph has no build function; use it as a context manager")

        self.nodes = []
        self.inputs = {
            name: value if isinstance(value, Tensor) else Tensor(value, requires_grad=True, name=name, dtype=self.dtype)
            for name, value in inputs.items()
        }
        for name, tensor in self.inputs.items():
            tensor.requires_grad = True
            tensor.name = tensor.name or name

        with self:
            result = self.build(dict(self.inputs))

        if isinstance(result, Tensor):
            self.outputs = {"output": result}
        else:
            self.outputs = dict(result)
        logger.debug(f"Forward recorded {len(self.nodes)} nodes")
        return self.outputs

    def backward(self, output_grad: GradSpec = None) -> dict[str, np.ndarray]:
        """
        Propagate output gradients back through the tape.

        Args:
            output_grad: Gradient for the single output, a mapping per output
                name, or None for a scalar output (seeded with 1)

        Returns:
            Gradients for every named input and bound parameter; parameters
            the outputs do not depend on get exact zeros

        Raises:
            GraphStateError: If forward has not been executed
        """
        if not self._forward_done or not self.outputs:
            raise GraphStateError("backward called before forward")

        seeds: list[tuple[Tensor, np.ndarray]] = []
        if output_grad is None:
            if len(self.outputs) != 1:
                raise ValueError("output_grad is required for graphs with several outputs")
            (out,) = self.outputs.values()
            if out.size != 1:
                raise ValueError("output_grad is required for non-scalar outputs")
            seeds.append((out, np.ones_like(out.data)))
        elif isinstance(output_grad, Mapping):
            for name, grad in output_grad.items():
                seeds.append((self.outputs[name], np.asarray(grad, dtype=self.outputs[name].dtype)))
        else:
            if len(self.outputs) != 1:
                raise ValueError("Pass a mapping of output gradients for graphs with several outputs")
            (out,) = self.outputs.values()
            seeds.append((out, np.asarray(output_grad, dtype=out.dtype)))

        grads = self._propagate(seeds)
        named = {**self.inputs, **self.params}
        return {name: self._lookup(grads, tensor) for name, tensor in named.items()}

    def gradient(
        self,
        output: Tensor,
        wrt: Mapping[str, Tensor],
        output_grad: Optional[np.ndarray] = None,
    ) -> dict[str, np.ndarray]:
        """
        Gradients of a recorded output with respect to named tensors.

        Args:
            output: A tensor produced while this graph was active
            wrt: Named tensors (typically parameters)
            output_grad: Seed gradient; ones for a scalar output by default

        Returns:
            Mapping name → gradient array (zeros where independent)
        """
        if self._token is not None:
            raise GraphStateError("gradient called while the graph is still recording")
        if not self.nodes:
            return {name: np.zeros_like(t.data) for name, t in wrt.items()}
        seed = np.ones_like(output.data) if output_grad is None else np.asarray(output_grad, dtype=output.dtype)
        grads = self._propagate([(output, seed)])
        return {name: self._lookup(grads, tensor) for name, tensor in wrt.items()}

    def _propagate(self, seeds: list[tuple[Tensor, np.ndarray]]) -> dict[int, np.ndarray]:
        grads: dict[int, np.ndarray] = {}
        for tensor, seed in seeds:
            if seed.shape != tensor.shape:
                raise ShapeError(f"Output gradient shape {seed.shape} does not match output {tensor.shape}")
            self._accumulate(grads, tensor, seed)

        for node in reversed(self.nodes):
            grad = grads.get(id(node.output))
            if grad is None:
                continue
            for tensor, input_grad in zip(node.inputs, node.vjp(grad)):
                if input_grad is None or not tensor.requires_grad:
                    continue
                self._accumulate(grads, tensor, input_grad)
        return grads

    @staticmethod
    def _accumulate(grads: dict[int, np.ndarray], tensor: Tensor, grad: np.ndarray) -> None:
        key = id(tensor)
        if key in grads:
            grads[key] = grads[key] + grad
        else:
            grads[key] = np.array(grad, dtype=tensor.dtype, copy=True)

    @staticmethod
    def _lookup(grads: dict[int, np.ndarray], tensor: Tensor) -> np.ndarray:
        grad = grads.get(id(tensor))
        if grad is None:
            return np.zeros_like(tensor.data)
        return grad


def forward(graph: Graph, inputs: Mapping[str, ArrayLike]) -> dict[str, Tensor]:
    """Run `graph` on named inputs. See `Graph.forward`."""
    return graph.forward(inputs)


def backward(graph: Graph, output_grad: GradSpec = None) -> dict[str, np.ndarray]:
    """Back-propagate through the last forward of `graph`. See `Graph.backward`."""
    return graph.backward(output_grad)
