"""
numerics/nn.py — Module / Parameter registry and the basic layers

Models are trees of Module objects. Parameters are found by walking instance
attributes in assignment order (lists and dicts of modules included), which
gives every parameter a stable dotted name such as
`stages.1.blocks.0.attn.qkv.weight`. Those names key state_dict(), the
checkpoint file and the optimizer state.
"""

from __future__ import annotations

import logging
from typing import Iterator

import numpy as np

from marrprobe.exceptions import ConfigurationError, ShapeError
from numerics import ops
from numerics.tensor import DTensor, get_dtype

logger = logging.getLogger(__name__)


class Parameter(DTensor):
    """A learnable leaf tensor."""

    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)


class Module:
    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError

    # ---- registry ----
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            yield from _walk(value, f"{prefix}{attr}")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise ConfigurationError(
                    f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}"
                )
        for name, p in own.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ShapeError(f"load_state_dict: {name}", p.shape, value.shape)
            p.data = value.astype(get_dtype(), copy=True)

    def cast(self) -> "Module":
        """Re-cast every parameter to the current precision."""
        for p in self.parameters():
            p.data = p.data.astype(get_dtype())
        return self


def _walk(value, name: str) -> Iterator[tuple[str, Parameter]]:
    if isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=f"{name}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")
    elif isinstance(value, dict):
        for key, item in value.items():
            yield from _walk(item, f"{name}.{key}")


# ----------------------------------------------------------------------------- #
# Initializers                                                                  #
# ----------------------------------------------------------------------------- #
def xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ----------------------------------------------------------------------------- #
# Layers                                                                        #
# ----------------------------------------------------------------------------- #
class Linear(Module):
    """y = x @ W + b with W stored as [in, out]."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True, zero: bool = False):
        init = np.zeros((d_in, d_out)) if zero else xavier(rng, d_in, d_out, (d_in, d_out))
        self.weight = Parameter(init)
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def forward(self, x):
        y = ops.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return ops.layer_norm(x, self.gain, self.bias, self.eps)


class Conv3x3(Module):
    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, zero: bool = False):
        shape = (3, 3, c_in, c_out)
        init = np.zeros(shape) if zero else xavier(rng, 9 * c_in, 9 * c_out, shape)
        self.weight = Parameter(init)
        self.bias = Parameter(np.zeros(c_out))

    def forward(self, x):
        return ops.conv3x3(x, self.weight, self.bias)
