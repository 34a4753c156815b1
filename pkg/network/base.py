"""Parameter containers and the stochastic-forward context shared by all layers."""

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, TypeVar

import numpy as np
from numpy.typing import DTypeLike

from autodiff import Parameter, Tensor, derive_rng

logger = logging.getLogger(__name__)

ModuleT = TypeVar("ModuleT", bound="Module")


@dataclass
class ForwardContext:
    """
    Mode of a forward pass.

    Attributes:
        train: Whether stochastic regularizers draw masks
        rng: Stream for every mask drawn in this pass (required when training)
    """

    train: bool = False
    rng: Optional[np.random.Generator] = None

    def generator(self) -> np.random.Generator:
        if self.rng is None:
            raise ValueError("A training forward pass needs an explicit rng")
        return self.rng


EVAL = ForwardContext(train=False)


def check_rate(name: str, rate: float) -> None:
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"{name} rate must be in [0, 1], got {rate}")


def dropout_mask(
    shape: tuple[int, ...],
    rate: float,
    rng: np.random.Generator,
    dtype: DTypeLike = np.float64,
) -> Optional[np.ndarray]:
    """Inverted-scaled Bernoulli keep-mask, or None when `rate` is 0."""
    check_rate("dropout", rate)
    if rate == 0.0:
        return None
    if rate == 1.0:
        return np.zeros(shape, dtype=dtype)
    keep = rng.random(shape) >= rate
    return (keep / (1.0 - rate)).astype(dtype)


def apply_dropout(x: Tensor, rate: float, ctx: ForwardContext) -> Tensor:
    """Dropout on activations; identity in eval mode."""
    if not ctx.train or rate == 0.0:
        return x
    mask = dropout_mask(x.shape, rate, ctx.generator(), x.dtype)
    return x if mask is None else x * mask


class Module:
    """
    Named container of parameters, buffers and child modules.

    Parameter names are dotted paths (`encoder.block0.fwd.R`), and each one is
    initialized from its own stream derived from (seed, name), so adding a
    module never changes the initialization of another.
    """

    def __init__(self, name: str, seed: int = 0, dtype: DTypeLike = np.float64) -> None:
        self.name = name
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Parameter] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: list["Module"] = []

    def add_parameter(
        self,
        key: str,
        shape: tuple[int, ...],
        init: str = "uniform",
        decay: bool = True,
    ) -> Parameter:
        """
        Create and register a parameter.

        Args:
            key: Local name
            shape: Parameter shape; matrices are stored (fan_in, fan_out)
            init: "uniform" (±1/sqrt(fan_in)), "zeros" or "ones"
            decay: Whether weight decay and weight noise apply
        """
        full = f"{self.name}.{key}"
        if init == "uniform":
            bound = 1.0 / np.sqrt(shape[0])
            data = derive_rng(self.seed, full).uniform(-bound, bound, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        else:
            raise ValueError(f"Unknown init {init!r} for {full}")
        param = Parameter(data.astype(self.dtype), name=full, decay=decay)
        self._params[full] = param
        return param

    def add_buffer(self, key: str, value: np.ndarray) -> str:
        full = f"{self.name}.{key}"
        self._buffers[full] = np.asarray(value, dtype=self.dtype)
        return full

    def add_module(self, module: ModuleT) -> ModuleT:
        self._children.append(module)
        return module

    def modules(self) -> list["Module"]:
        """This module and all descendants, depth first."""
        found: list[Module] = [self]
        for child in self._children:
            found.extend(child.modules())
        return found

    def named_parameters(self) -> dict[str, Parameter]:
        params: dict[str, Parameter] = {}
        for module in self.modules():
            params.update(module._params)
        return params

    def named_buffers(self) -> dict[str, np.ndarray]:
        buffers: dict[str, np.ndarray] = {}
        for module in self.modules():
            buffers.update(module._buffers)
        return buffers

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        """Copies of every parameter and buffer, by full name."""
        state = {name: p.data.copy() for name, p in self.named_parameters().items()}
        state.update({name: b.copy() for name, b in self.named_buffers().items()})
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """
        Restore parameters and buffers.

        Raises:
            ValueError: On missing names or shape mismatches
        """
        for module in self.modules():
            for name, param in module._params.items():
                param.data = self._checked(name, param.data, state)
            for name, buffer in module._buffers.items():
                module._buffers[name] = self._checked(name, buffer, state)
        logger.debug(f"Loaded {len(state)} tensors into {self.name}")

    def _checked(self, name: str, current: np.ndarray, state: Mapping[str, np.ndarray]) -> np.ndarray:
        if name not in state:
            raise ValueError(f"Checkpoint is missing {name}")
        value = np.asarray(state[name])
        if value.shape != current.shape:
            raise ValueError(f"Shape mismatch for {name}: checkpoint {value.shape}, model {current.shape}")
        return value.astype(self.dtype)
