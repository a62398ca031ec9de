"""
train/confidence.py — the σ network

Four stride-2 conv layers down, a mirrored nearest-upsample path back up, and
a softplus head floored at σ_min. One σ map per image, shared by the direct
and the mirrored reconstruction terms.
"""

from __future__ import annotations

import numpy as np

from marrprobe.exceptions import ConfigurationError
from numerics import ops
from numerics.nn import Conv3x3, Module
from numerics.tensor import DTensor

DEPTH = 4


class ConfidenceNet(Module):
    def __init__(self, rng: np.random.Generator, resolution: int, channels: int, sigma_min: float = 1e-3):
        if resolution % (2 ** DEPTH):
            raise ConfigurationError(f"confidence net needs R divisible by {2 ** DEPTH}, got {resolution}")
        self.sigma_min = sigma_min
        widths = [3] + [channels] * DEPTH
        self.down = [Conv3x3(rng, widths[i], widths[i + 1]) for i in range(DEPTH)]
        self.up = [Conv3x3(rng, channels, channels) for _ in range(DEPTH)]
        self.head = Conv3x3(rng, channels, 1, zero=True)

    def forward(self, images) -> DTensor:
        """images [B, R, R, 3] -> σ [B, R, R, 1]."""
        h = images
        for conv in self.down:
            h = ops.relu(conv(h))[:, ::2, ::2, :]
        for conv in self.up:
            h = ops.relu(conv(ops.nearest_upsample(h)))
        return ops.softplus(self.head(h)) + self.sigma_min
