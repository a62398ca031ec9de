"""
wint/layers.py — the building blocks of the probed encoder

All token tensors are batched: grids are [B, G, G, D], window sets are
[B, windows, tokens, D] in row-major window order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from marrprobe.exceptions import ConfigurationError, ContractError, ShapeError
from numerics import ops
from numerics.nn import LayerNorm, Linear, Module, Parameter
from numerics.tensor import DTensor

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------------- #
# Windows                                                                       #
# ----------------------------------------------------------------------------- #
@dataclass
class WindowSet:
    tokens: DTensor  # [B, windows, M (+1), D]
    window_side: int
    grid_side: int
    has_probe: bool = False

    @property
    def count(self) -> int:
        return self.tokens.shape[1]


def window_partition(grid: DTensor, window_side: int) -> WindowSet:
    b, g, g2, d = grid.shape
    if g != g2:
        raise ShapeError("window_partition expects a square grid", grid.shape)
    if window_side <= 0 or g % window_side:
        raise ConfigurationError(f"window side {window_side} does not divide grid side {g}")
    n = g // window_side
    x = ops.reshape(grid, (b, n, window_side, n, window_side, d))
    x = ops.transpose(x, (0, 1, 3, 2, 4, 5))
    return WindowSet(ops.reshape(x, (b, n * n, window_side * window_side, d)), window_side, g)


def window_merge(windows: WindowSet) -> DTensor:
    if windows.has_probe:
        raise ContractError("harvest the probe tokens before merging windows back into a grid")
    b, _, _, d = windows.tokens.shape
    ws, g = windows.window_side, windows.grid_side
    n = g // ws
    x = ops.reshape(windows.tokens, (b, n, n, ws, ws, d))
    x = ops.transpose(x, (0, 1, 3, 2, 4, 5))
    return ops.reshape(x, (b, g, g, d))


def insert_probes(windows: WindowSet, probe: DTensor) -> WindowSet:
    """Append the same probe vector [D] to every window as its last token."""
    if windows.has_probe:
        raise ContractError("probe tokens were already inserted into this window set")
    b, n, _, d = windows.tokens.shape
    slot = ops.broadcast_to(ops.reshape(probe, (1, 1, 1, d)), (b, n, 1, d))
    tokens = ops.concat([windows.tokens, slot], axis=2)
    return WindowSet(tokens, windows.window_side, windows.grid_side, has_probe=True)


def harvest_probes(windows: WindowSet) -> tuple[DTensor, WindowSet]:
    """Split off the probe slot: returns ([B, windows, D], visual-only window set)."""
    if not windows.has_probe:
        raise ContractError("no probe tokens to harvest: this stage was not probed")
    m = windows.tokens.shape[2] - 1
    probes = windows.tokens[:, :, m, :]
    visual = windows.tokens[:, :, :m, :]
    return probes, WindowSet(visual, windows.window_side, windows.grid_side, has_probe=False)


# ----------------------------------------------------------------------------- #
# Layers                                                                        #
# ----------------------------------------------------------------------------- #
class PatchEmbed(Module):
    """Flatten 4×4×3 patches, project to D and add a learned absolute position embedding."""

    def __init__(self, rng: np.random.Generator, image_size: int, dim: int, patch: int = 4):
        if image_size % patch:
            raise ConfigurationError(f"image size {image_size} is not divisible by patch size {patch}")
        self.patch = patch
        self.grid = image_size // patch
        self.proj = Linear(rng, patch * patch * 3, dim)
        self.pos = Parameter(rng.normal(0.0, 0.02, size=(self.grid, self.grid, dim)))

    def forward(self, images) -> DTensor:
        b, h, w, c = images.shape
        if h != w or h != self.grid * self.patch or c != 3:
            raise ConfigurationError(
                f"expected images of shape [B, {self.grid * self.patch}, {self.grid * self.patch}, 3], got {list(images.shape)}"
            )
        p, g = self.patch, self.grid
        x = ops.reshape(images, (b, g, p, g, p, 3))
        x = ops.transpose(x, (0, 1, 3, 2, 4, 5))
        x = ops.reshape(x, (b, g, g, p * p * 3))
        return self.proj(x) + self.pos


class Attention(Module):
    def __init__(self, rng: np.random.Generator, dim: int):
        self.heads = max(1, dim // 32)
        self.head_dim = dim // self.heads
        self.qkv = Linear(rng, dim, 3 * dim)
        self.proj = Linear(rng, dim, dim)
        self.last_weights: np.ndarray | None = None

    def forward(self, x) -> DTensor:
        n, t, d = x.shape
        h, hd = self.heads, self.head_dim
        qkv = ops.reshape(self.qkv(x), (n, t, 3, h, hd))
        qkv = ops.transpose(qkv, (2, 0, 3, 1, 4))  # [3, N, h, T, hd]
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ops.matmul(q, ops.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(hd))
        weights = ops.softmax(scores, axis=-1)
        self.last_weights = weights.data
        out = ops.matmul(weights, v)  # [N, h, T, hd]
        out = ops.reshape(ops.transpose(out, (0, 2, 1, 3)), (n, t, d))
        return self.proj(out)


class MLP(Module):
    def __init__(self, rng: np.random.Generator, dim: int, ratio: int = 4):
        self.fc1 = Linear(rng, dim, ratio * dim)
        self.fc2 = Linear(rng, ratio * dim, dim)

    def forward(self, x) -> DTensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class WinTBlock(Module):
    """Pre-norm window self-attention then MLP, both residual. No window shift."""

    def __init__(self, rng: np.random.Generator, dim: int):
        self.norm1 = LayerNorm(dim)
        self.attn = Attention(rng, dim)
        self.norm2 = LayerNorm(dim)
        self.mlp = MLP(rng, dim)

    def forward(self, x) -> DTensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))

    @staticmethod
    def expected_parameters(dim: int) -> int:
        return 12 * dim * dim + 13 * dim


class PatchMerge(Module):
    """Concatenate each 2×2 token group (4D channels) and project to 2D, no bias."""

    def __init__(self, rng: np.random.Generator, dim: int):
        self.reduction = Linear(rng, 4 * dim, 2 * dim, bias=False)

    def forward(self, grid) -> DTensor:
        g = grid.shape[1]
        if g % 2:
            raise ConfigurationError(f"patch merging needs an even grid side, got {g}")
        parts = [
            grid[:, 0::2, 0::2, :],
            grid[:, 1::2, 0::2, :],
            grid[:, 0::2, 1::2, :],
            grid[:, 1::2, 1::2, :],
        ]
        return self.reduction(ops.concat(parts, axis=-1))
