"""
train/model.py — encoder + probe heads + renderer + confidence net, and the total loss

One forward pass:

    images ──resize──► encoder ──probe tokens per level──► ProbeHead ──► assemble ──► render
       └────resize to R──► target, ConfidenceNet ──► σ

total_loss sums the per-level reconstruction losses with the level weights.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from marrprobe.exceptions import ConfigurationError, ShapeError
from numerics import ops
from numerics.nn import Module
from numerics.tensor import DTensor, as_tensor, no_grad
from probes.decoders import GraphicsProbes
from probes.heads import ProbeHead
from render.camera import CameraModel
from render.pipeline import RenderResult, SceneAssembly, assemble, render
from train.confidence import ConfidenceNet
from train.loss import reconstruction_loss
from wint.config import EncoderConfig, preset
from wint.encoder import WinTEncoder

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    encoder: EncoderConfig
    depth_range: tuple[float, float] = (0.9, 1.1)
    temperature: float = 1.0
    fractions: tuple[float, ...] = (3 / 8, 3 / 8, 1 / 8, 1 / 8)
    depth_scale: float = 5.0
    background: float = 0.5
    sigma_min: float = 1e-3
    levels: tuple[str, ...] | None = None  # None: every probed level gets a head

    @property
    def resolution(self) -> int:
        return self.encoder.resolution

    def active_levels(self) -> dict[int, str]:
        probed = self.encoder.levels()
        if self.levels is None:
            return probed
        unknown = set(self.levels) - set(probed.values())
        if unknown:
            raise ConfigurationError(
                f"levels {sorted(unknown)} are not probed; probed levels: {list(probed.values())}"
            )
        return {stage: name for stage, name in probed.items() if name in self.levels}

    def validate(self) -> "ModelConfig":
        self.encoder.validate()
        if not self.active_levels():
            raise ConfigurationError("model needs at least one probed level")
        if self.temperature <= 0:
            raise ConfigurationError(f"temperature must be positive, got {self.temperature}")
        if self.sigma_min <= 0:
            raise ConfigurationError(f"σ floor must be positive, got {self.sigma_min}")
        return self

    @classmethod
    def from_settings(cls, preset_name: str | None = None, probe_bottom: bool | None = None, **overrides) -> "ModelConfig":
        from django.conf import settings

        conf = settings.MARRPROBE
        encoder = preset(
            preset_name or conf["PRESET"],
            probe_bottom=conf["PROBE_BOTTOM"] if probe_bottom is None else probe_bottom,
        )
        values = dict(
            encoder=encoder,
            depth_range=tuple(conf["DEPTH_RANGE"]),
            temperature=conf["TEMPERATURE"],
            fractions=tuple(conf["SEGMENT_FRACTIONS"]),
            depth_scale=conf["DEPTH_SCALE"],
            background=conf["BACKGROUND"],
            sigma_min=conf["SIGMA_MIN"],
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values).validate()

    def to_dict(self) -> dict:
        data = asdict(self)
        data["encoder"] = self.encoder.to_dict()
        data["levels"] = list(self.levels) if self.levels is not None else None
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelConfig":
        try:
            values = dict(data)
            values["encoder"] = EncoderConfig.from_dict(values["encoder"])
            values["depth_range"] = tuple(values["depth_range"])
            values["fractions"] = tuple(values["fractions"])
            if values.get("levels") is not None:
                values["levels"] = tuple(values["levels"])
            return cls(**values).validate()
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed model config: {exc}") from None


def resize_images(images, size: int) -> np.ndarray:
    """[B, S, S, 3] -> [B, size, size, 3]: box average for integer factors, bilinear otherwise."""
    images = np.asarray(images.data if isinstance(images, DTensor) else images)
    if images.ndim != 4 or images.shape[1] != images.shape[2]:
        raise ShapeError("expected square images [B, S, S, C]", images.shape)
    b, s, _, c = images.shape
    if s == size:
        return images
    if s % size == 0:
        f = s // size
        return images.reshape(b, size, f, size, f, c).mean(axis=(2, 4))
    src = (np.arange(size) + 0.5) * s / size - 0.5
    rows, cols = np.meshgrid(src, src, indexing="ij")
    coords = np.broadcast_to(np.stack([rows, cols], axis=-1), (b, size, size, 2))
    with no_grad():
        return ops.bilinear_sample(images, coords).data


@dataclass
class LevelOutput:
    probes: GraphicsProbes
    assembly: SceneAssembly
    render: RenderResult
    theta: DTensor
    assignment: np.ndarray


@dataclass
class ModelOutput:
    target: np.ndarray  # [B, R, R, 3]
    sigma: DTensor      # [B, R, R, 1]
    levels: dict[str, LevelOutput] = field(default_factory=dict)


class GraphicsProbeModel(Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config.validate()
        self.seed = seed
        self.relaxed = False
        rng = np.random.default_rng(seed)
        enc = config.encoder
        self.encoder = WinTEncoder(enc, rng)
        self.heads = {
            level: ProbeHead(
                rng,
                enc.stages[stage].token_dim,
                enc.stages[stage].probe_count,
                enc.resolution,
                enc.decoder_channels,
                enc.mlp_hidden,
                config.depth_range,
                config.fractions,
                config.temperature,
            )
            for stage, level in config.active_levels().items()
        }
        self.confidence = ConfidenceNet(rng, enc.resolution, enc.confidence_channels, config.sigma_min)
        self.camera = CameraModel(
            enc.resolution,
            depth_scale=config.depth_scale,
            depth_mid=0.5 * sum(config.depth_range),
            background=config.background,
        )
        logger.debug("model built: %d parameters, levels %s", self.num_parameters(), list(self.heads))

    @property
    def levels(self) -> list[str]:
        return list(self.heads)

    def forward(self, images) -> ModelOutput:
        enc = self.config.encoder
        inputs = resize_images(images, enc.image_size)
        target = resize_images(images, enc.resolution)
        encoded = self.encoder.encode(as_tensor(inputs))
        out = ModelOutput(target=as_tensor(target).data, sigma=self.confidence(as_tensor(target)))
        for level, head in self.heads.items():
            probe = head(encoded.probes[level], relaxed=self.relaxed)
            scene = assemble(probe.probes)
            out.levels[level] = LevelOutput(
                probes=probe.probes,
                assembly=scene,
                render=render(scene, self.camera),
                theta=probe.theta,
                assignment=probe.assignment,
            )
        return out


@dataclass
class LossReport:
    total: DTensor
    per_level: dict[str, DTensor]
    per_image: dict[str, np.ndarray]
    output: ModelOutput


def level_weights(model: GraphicsProbeModel, weights: Mapping[str, float] | None) -> dict[str, float]:
    if weights is None:
        return {level: 1.0 for level in model.levels}
    resolved = {level: float(weights.get(level, 0.0)) for level in model.levels}
    if any(w < 0 for w in resolved.values()) or not any(w > 0 for w in resolved.values()):
        raise ConfigurationError(f"level weights must be non-negative with one positive, got {resolved}")
    return resolved


def total_loss(
    model: GraphicsProbeModel,
    images,
    weights: Mapping[str, float] | None = None,
    coverage_mode: str = "ignore",
) -> LossReport:
    resolved = level_weights(model, weights)
    output = model(images)
    per_level, per_image = {}, {}
    total = None
    for level, lo in output.levels.items():
        per = reconstruction_loss(
            output.target,
            lo.render.image,
            lo.render.flipped,
            output.sigma,
            lo.render.coverage,
            lo.render.coverage_flipped,
            coverage_mode=coverage_mode,
            sigma_min=model.config.sigma_min,
            per_image=True,
        )
        per_image[level] = per.data.copy()
        per_level[level] = ops.mean(per)
        if resolved[level] > 0:
            term = per_level[level] * resolved[level] if resolved[level] != 1.0 else per_level[level]
            total = term if total is None else total + term
    return LossReport(total=total, per_level=per_level, per_image=per_image, output=output)
