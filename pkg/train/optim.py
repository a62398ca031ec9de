"""
train/optim.py — Adam with global-norm clipping
"""

from __future__ import annotations

import logging
from typing import Iterable, Mapping

import numpy as np

from marrprobe.exceptions import ConfigurationError
from numerics.nn import Parameter

logger = logging.getLogger(__name__)


class Adam:
    """Adam over named parameters. `step` clips the global gradient norm first
    and returns the norm measured before clipping.
    """

    def __init__(
        self,
        named_parameters: Iterable[tuple[str, Parameter]],
        lr: float = 1e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        clip_norm: float | None = 5.0,
    ):
        if lr < 0:
            raise ConfigurationError(f"learning rate must be non-negative, got {lr}")
        if clip_norm is not None and clip_norm <= 0:
            raise ConfigurationError(f"clip norm must be positive, got {clip_norm}")
        self.params = dict(named_parameters)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {name: np.zeros(p.shape) for name, p in self.params.items()}
        self.v = {name: np.zeros(p.shape) for name, p in self.params.items()}

    def step(self, grads: Mapping[Parameter, np.ndarray]) -> float:
        g = {name: np.asarray(grads[p], dtype=np.float64) for name, p in self.params.items()}
        norm = float(np.sqrt(sum(float(np.sum(x * x)) for x in g.values())))
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
            logger.debug("clipping gradient norm %.3f to %.3f", norm, self.clip_norm)

        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            grad = g[name] * scale
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            if self.lr == 0:
                continue
            update = self.lr * (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)
            p.data = (p.data - update).astype(p.data.dtype)
        return norm

    # ---- checkpoint state ----
    def state_dict(self) -> dict[str, np.ndarray]:
        state = {"step": np.array([self.t])}
        for name in self.params:
            state[f"m.{name}"] = self.m[name]
            state[f"v.{name}"] = self.v[name]
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        missing = [k for n in self.params for k in (f"m.{n}", f"v.{n}") if k not in state]
        if "step" not in state or missing:
            raise ConfigurationError(f"optimizer state is missing entries: {(['step'] if 'step' not in state else []) + missing[:5]}")
        self.t = int(np.asarray(state["step"]).reshape(-1)[0])
        for name in self.params:
            self.m[name] = np.asarray(state[f"m.{name}"], dtype=np.float64).reshape(self.params[name].shape)
            self.v[name] = np.asarray(state[f"v.{name}"], dtype=np.float64).reshape(self.params[name].shape)
