"""
probes/heads.py — one level's probe head: replication, templates, decoders
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from marrprobe.exceptions import ContractError
from numerics.nn import Module
from numerics.tensor import DTensor
from probes.activation import TemplateBank, replicate_high, template_activate
from probes.decoders import GraphicsProbes, ProbeDecoder


@dataclass
class ProbeOutput:
    probes: GraphicsProbes
    theta: DTensor
    assignment: np.ndarray  # [B, D], winning probe per feature dimension


class ProbeHead(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        dim: int,
        probes: int,
        resolution: int,
        channels: int,
        hidden: int,
        depth_range=(0.9, 1.1),
        fractions=(3 / 8, 3 / 8, 1 / 8, 1 / 8),
        temperature: float = 1.0,
    ):
        self.probes = probes
        self.temperature = temperature
        self.bank = TemplateBank(rng, dim, probes)
        self.decoder = ProbeDecoder(rng, dim, resolution, channels, hidden, depth_range, fractions)

    def forward(self, tokens, relaxed: bool = False) -> ProbeOutput:
        """tokens [B, windows, D] harvested from the stage."""
        windows = tokens.shape[1]
        if windows == 1 and self.probes > 1:
            tokens = replicate_high(tokens, self.probes)
        elif windows != self.probes:
            raise ContractError(f"{windows} probe tokens cannot feed {self.probes} templates")
        theta, assignment = template_activate(tokens, self.bank, self.temperature, relaxed=relaxed)
        return ProbeOutput(self.decoder.decode(theta), theta, assignment)
