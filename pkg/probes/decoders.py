"""
probes/decoders.py — θ -> depth, albedo, view and light

θ is split into four contiguous segments (3/8, 3/8, 1/8, 1/8 of D by default):
geometry, albedo, view, light. Each has its own decoder; one decoder set is
shared by all probes of a level. Every head is bounded:

  depth  = d_mid + d_half · tanh(.)            in [d_min, d_max]
  albedo = 0.5 + 0.5 · tanh(.)                 in [0, 1]
  view   = tanh(.) · (π/4, π/2, π/4, .2, .2, .2)   (pitch, yaw, roll, tx, ty, tz)
  light  = (0.5 + 0.5 tanh, 0.5 + 0.5 tanh, tanh, tanh)   (k_a, k_d, l_x, l_y)

Final heads start at zero, so an untrained probe is the flat frontal midpoint.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from marrprobe.exceptions import ConfigurationError, ContractError
from numerics import ops
from numerics.nn import Conv3x3, Linear, Module
from numerics.tensor import DTensor

logger = logging.getLogger(__name__)

VIEW_SCALE = np.array([math.pi / 4, math.pi / 2, math.pi / 4, 0.2, 0.2, 0.2])


@dataclass
class GraphicsProbes:
    """Decoded probes of one level; the leading axes are [B, K]."""

    depth: DTensor   # [B, K, R, R]
    albedo: DTensor  # [B, K, R, R, 3]
    view: DTensor    # [B, K, 6]
    light: DTensor   # [B, K, 4]

    @property
    def count(self) -> int:
        return self.depth.shape[1]


def segment_lengths(dim: int, fractions=(3 / 8, 3 / 8, 1 / 8, 1 / 8)) -> tuple[int, int, int, int]:
    if len(fractions) != 4 or any(f <= 0 for f in fractions):
        raise ConfigurationError(f"need four positive segment fractions, got {fractions}")
    lengths = [max(1, int(round(dim * f))) for f in fractions[:3]]
    last = dim - sum(lengths)
    if last < 1:
        raise ConfigurationError(f"segment fractions {fractions} leave nothing for the light segment at D={dim}")
    return (*lengths, last)


def split_segments(theta, lengths) -> list[DTensor]:
    bounds = np.cumsum((0,) + tuple(lengths))
    return [theta[..., int(bounds[i]):int(bounds[i + 1])] for i in range(4)]


def light_direction(light, eps: float = 1e-12) -> DTensor:
    """(l_x, l_y) -> unit (l_x, l_y, l_z) with l_z = sqrt(1 - min(1, l_x² + l_y²))."""
    lx, ly = light[..., 2:3], light[..., 3:4]
    lz = ops.sqrt(ops.relu(1.0 - (lx * lx + ly * ly)) + eps)
    vec = ops.concat([lx, ly, lz], axis=-1)
    norm = ops.sqrt(ops.sum(vec * vec, axis=-1, keepdims=True))
    return vec / norm


class MapDecoder(Module):
    """Linear to a 4×4×C seed, then log2(R/4) × (2× nearest upsample, 3×3 conv, relu), then a conv head."""

    def __init__(self, rng: np.random.Generator, d_in: int, channels: int, resolution: int, out_channels: int):
        steps = math.log2(resolution / 4)
        if steps != int(steps) or steps < 0:
            raise ConfigurationError(f"decoder resolution {resolution} must be 4·2^n")
        self.channels = channels
        self.seed = Linear(rng, d_in, 16 * channels)
        self.ups = [Conv3x3(rng, channels, channels) for _ in range(int(steps))]
        self.head = Conv3x3(rng, channels, out_channels, zero=True)

    def forward(self, x) -> DTensor:
        n = x.shape[0]
        h = ops.relu(ops.reshape(self.seed(x), (n, 4, 4, self.channels)))
        for conv in self.ups:
            h = ops.relu(conv(ops.nearest_upsample(h)))
        return self.head(h)


class ParamMLP(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, hidden: int, d_out: int):
        self.fc1 = Linear(rng, d_in, hidden)
        self.fc2 = Linear(rng, hidden, d_out, zero=True)

    def forward(self, x) -> DTensor:
        return self.fc2(ops.relu(self.fc1(x)))


class ProbeDecoder(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        dim: int,
        resolution: int,
        channels: int,
        hidden: int,
        depth_range=(0.9, 1.1),
        fractions=(3 / 8, 3 / 8, 1 / 8, 1 / 8),
    ):
        d_min, d_max = depth_range
        if not d_min < d_max:
            raise ConfigurationError(f"depth range {depth_range} must have d_min < d_max")
        self.dim = dim
        self.resolution = resolution
        self.lengths = segment_lengths(dim, fractions)
        self.d_mid = 0.5 * (d_min + d_max)
        self.d_half = 0.5 * (d_max - d_min)
        lg, la, lv, ll = self.lengths
        self.depth_decoder = MapDecoder(rng, lg, channels, resolution, 1)
        self.albedo_decoder = MapDecoder(rng, la, channels, resolution, 3)
        self.view_mlp = ParamMLP(rng, lv, hidden, 6)
        self.light_mlp = ParamMLP(rng, ll, hidden, 4)

    def forward(self, theta) -> GraphicsProbes:
        return self.decode(theta)

    def decode(self, theta) -> GraphicsProbes:
        """θ [B, K, D] -> GraphicsProbes."""
        if theta.ndim != 3 or theta.shape[-1] != self.dim:
            raise ContractError(f"decoder expects [B, K, {self.dim}] features, got {list(theta.shape)}")
        b, k, d = theta.shape
        r = self.resolution
        flat = ops.reshape(theta, (b * k, d))
        tg, ta, tv, tl = split_segments(flat, self.lengths)

        depth = self.d_mid + self.d_half * ops.tanh(self.depth_decoder(tg))
        albedo = 0.5 + 0.5 * ops.tanh(self.albedo_decoder(ta))
        view = ops.tanh(self.view_mlp(tv)) * VIEW_SCALE
        raw = ops.tanh(self.light_mlp(tl))
        light = ops.concat([0.5 + 0.5 * raw[:, 0:2], raw[:, 2:4]], axis=-1)

        return GraphicsProbes(
            depth=ops.reshape(depth, (b, k, r, r)),
            albedo=ops.reshape(albedo, (b, k, r, r, 3)),
            view=ops.reshape(view, (b, k, 6)),
            light=ops.reshape(light, (b, k, 4)),
        )
