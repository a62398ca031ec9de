"""
wint/encoder.py — the probed window-transformer encoder

encode(images) runs every stage. Probed stages get one probe token per window
at stage entry (probe seed + per-stage probe embedding); the tokens attend with
the window through every block of the stage and are harvested at stage exit,
before patch merging.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from numerics.nn import Module, Parameter
from numerics.tensor import DTensor
from wint.config import EncoderConfig
from wint.layers import (
    PatchEmbed,
    PatchMerge,
    WinTBlock,
    harvest_probes,
    insert_probes,
    window_merge,
    window_partition,
)

logger = logging.getLogger(__name__)


@dataclass
class EncoderOutput:
    probes: dict[str, DTensor] = field(default_factory=dict)  # level -> [B, windows, D]
    grid: DTensor | None = None
    stage_grids: list[DTensor] = field(default_factory=list)


class Stage(Module):
    def __init__(self, rng: np.random.Generator, dim: int, blocks: int, window_side: int, probed: bool):
        self.window_side = window_side
        self.probed = probed
        self.blocks = [WinTBlock(rng, dim) for _ in range(blocks)]
        if probed:
            self.probe_seed = Parameter(np.zeros(dim))
            self.probe_embed = Parameter(rng.normal(0.0, 0.02, size=dim))

    def probe_vector(self) -> DTensor:
        return self.probe_seed + self.probe_embed

    def forward(self, grid) -> tuple[DTensor, DTensor | None]:
        windows = window_partition(grid, self.window_side)
        if self.probed:
            windows = insert_probes(windows, self.probe_vector())
        b, n, t, d = windows.tokens.shape
        x = windows.tokens.reshape(b * n, t, d)
        for block in self.blocks:
            x = block(x)
        windows.tokens = x.reshape(b, n, t, d)
        probes = None
        if self.probed:
            probes, windows = harvest_probes(windows)
        return window_merge(windows), probes


class WinTEncoder(Module):
    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config.validate()
        first = config.stages[0].token_dim
        self.embed = PatchEmbed(rng, config.image_size, first, config.patch)
        self.stages = [
            Stage(rng, s.token_dim, s.blocks, s.window_side, s.probed) for s in config.stages
        ]
        self.merges = [PatchMerge(rng, s.token_dim) for s in config.stages[:-1]]
        self.level_of = config.levels()

    def forward(self, images) -> EncoderOutput:
        return self.encode(images)

    def encode(self, images) -> EncoderOutput:
        out = EncoderOutput()
        grid = self.embed(images)
        for i, stage in enumerate(self.stages):
            grid, probes = stage(grid)
            out.stage_grids.append(grid)
            if probes is not None:
                out.probes[self.level_of[i]] = probes
            if i < len(self.merges):
                grid = self.merges[i](grid)
        out.grid = grid
        return out
