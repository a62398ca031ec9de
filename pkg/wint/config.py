"""
wint/config.py — stage and encoder configuration, with the three presets

paper : 224 input, widths 96/192/384/768, blocks 2/2/6/2, 7×7 windows
        (64/16/4/1 windows), probe counts 64/16/4/6.
desk  : 64 input, widths 32/64/128/256, blocks 2/2/2/2, window sides 4/2/2/2
        (16/16/4/1 windows), probe counts 16/16/4/6.
tiny  : 32 input, widths 16/32/64, one block and one window per stage,
        2 probes per stage by replication, every stage probed.

"full" is accepted as another name for "paper".

Level names are assigned from the top probed stage down: high, mid, low, bottom.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from marrprobe.exceptions import ConfigurationError

PATCH = 4
LEVEL_NAMES = ("high", "mid", "low", "bottom")
PRESETS = ("paper", "desk", "tiny")
PRESET_ALIASES = {"full": "paper"}


@dataclass(frozen=True)
class StageConfig:
    blocks: int
    window_side: int
    token_dim: int
    probe_count: int
    probed: bool


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int
    stages: tuple[StageConfig, ...]
    resolution: int = 64
    decoder_channels: int = 16
    mlp_hidden: int = 32
    confidence_channels: int = 8
    preset: str = "custom"
    patch: int = PATCH

    # ---- derived geometry ----
    def grid_side(self, stage: int) -> int:
        return self.image_size // self.patch // (2 ** stage)

    def window_count(self, stage: int) -> int:
        return (self.grid_side(stage) // self.stages[stage].window_side) ** 2

    def levels(self) -> dict[int, str]:
        """Map probed stage index -> level name."""
        probed = [i for i, s in enumerate(self.stages) if s.probed]
        if len(probed) > len(LEVEL_NAMES):
            raise ConfigurationError(f"at most {len(LEVEL_NAMES)} probed stages are supported")
        return {stage: LEVEL_NAMES[len(probed) - 1 - i] for i, stage in enumerate(probed)}

    def level_stage(self, level: str) -> int:
        for stage, name in self.levels().items():
            if name == level:
                return stage
        raise ConfigurationError(f"level {level!r} is not probed; probed levels: {list(self.levels().values())}")

    def replicates(self, stage: int) -> bool:
        return self.window_count(stage) == 1 and self.stages[stage].probe_count > 1

    # ---- validation ----
    def validate(self) -> "EncoderConfig":
        if self.image_size <= 0 or self.image_size % self.patch:
            raise ConfigurationError(f"image size {self.image_size} is not divisible by patch size {self.patch}")
        if not self.stages:
            raise ConfigurationError("encoder needs at least one stage")
        if self.resolution < 4 or 2 ** round(math.log2(self.resolution / 4)) * 4 != self.resolution:
            raise ConfigurationError(f"probe resolution {self.resolution} must be 4·2^n")
        for i, stage in enumerate(self.stages):
            side = self.image_size // self.patch / (2 ** i)
            if side != int(side) or side < 1:
                raise ConfigurationError(f"stage {i + 1}: token grid side {side} is not an integer")
            side = int(side)
            if stage.window_side <= 0 or side % stage.window_side:
                raise ConfigurationError(
                    f"stage {i + 1}: window side {stage.window_side} does not divide grid side {side}"
                )
            if i and stage.token_dim != 2 * self.stages[i - 1].token_dim:
                raise ConfigurationError(f"stage {i + 1}: width must double after patch merging")
            if stage.token_dim < 8:
                raise ConfigurationError(f"stage {i + 1}: width {stage.token_dim} too small to split into probe segments")
            if stage.probed:
                windows = self.window_count(i)
                if stage.probe_count < 1 or (windows != 1 and windows != stage.probe_count):
                    raise ConfigurationError(
                        f"stage {i + 1}: {windows} windows cannot feed {stage.probe_count} probes "
                        "(needs one probe per window, or a single window to replicate)"
                    )
        self.levels()
        return self

    # ---- (de)serialization for checkpoints ----
    def to_dict(self) -> dict:
        data = asdict(self)
        data["stages"] = [asdict(s) for s in self.stages]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        try:
            stages = tuple(StageConfig(**s) for s in data["stages"])
            rest = {k: v for k, v in data.items() if k != "stages"}
            return cls(stages=stages, **rest).validate()
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed encoder config: {exc}") from None


def _stages(blocks, windows, dims, probes, probed) -> tuple[StageConfig, ...]:
    return tuple(
        StageConfig(blocks=b, window_side=w, token_dim=d, probe_count=k, probed=p)
        for b, w, d, k, p in zip(blocks, windows, dims, probes, probed)
    )


def preset(name: str, probe_bottom: bool = False) -> EncoderConfig:
    name = PRESET_ALIASES.get(name, name)
    if name == "paper":
        config = EncoderConfig(
            image_size=224,
            stages=_stages((2, 2, 6, 2), (7, 7, 7, 7), (96, 192, 384, 768), (64, 16, 4, 6),
                           (probe_bottom, True, True, True)),
            resolution=64, decoder_channels=32, mlp_hidden=64, confidence_channels=16, preset="paper",
        )
    elif name == "desk":
        config = EncoderConfig(
            image_size=64,
            stages=_stages((2, 2, 2, 2), (4, 2, 2, 2), (32, 64, 128, 256), (16, 16, 4, 6),
                           (probe_bottom, True, True, True)),
            resolution=64, decoder_channels=16, mlp_hidden=32, confidence_channels=8, preset="desk",
        )
    elif name == "tiny":
        config = EncoderConfig(
            image_size=32,
            stages=_stages((1, 1, 1), (8, 4, 2), (16, 32, 64), (2, 2, 2), (True, True, True)),
            resolution=16, decoder_channels=4, mlp_hidden=8, confidence_channels=4, preset="tiny",
        )
    else:
        raise ConfigurationError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    return config.validate()

