"""
data/synthetic.py — procedural multi-view head dataset

Every identity is an ellipsoidal head with mirrored bumps, two eye blobs and
a mouth, written as canonical depth + albedo and rendered by this repo's own
renderer at each yaw under one fixed light. All shape features are even in X,
so the canonical maps are exact mirror images of themselves.

Files per identity (the generator's ground truth):
    truth/id{identity:03d}_depth.pgm            16-bit canonical depth over the depth range
    truth/id{identity:03d}_albedo.ppm           8-bit canonical albedo

Files per view:
    images/id{identity:03d}_yaw{yaw:+03d}.ppm   8-bit RGB render
    depth/id{identity:03d}_yaw{yaw:+03d}.pgm    16-bit rendered depth over the view depth range
    coverage/id{identity:03d}_yaw{yaw:+03d}.pgm 1 where a surface was rasterized, else 0

A rotated frame reaches further in z than the canonical band, so rendered depth
is stored over the wider view depth range (see view_depth_range). Uncovered
pixels are stored as 0, the far end of that range, which no surface reaches.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from data.manifest import DatasetManifest, SampleRecord
from marrprobe.exceptions import ConfigurationError
from numerics.tensor import no_grad, precision
from render.camera import CameraModel
from render.imageio import write_depth_pgm, write_mask_pgm, write_ppm
from render.pipeline import render_view

logger = logging.getLogger(__name__)

MULTI_VIEW_YAWS = (0, 15, -15, 30, -30, 45, -45, 60, -60, 75, -75, 90, -90)
# canonical relief peaks stay below this share of the half band
PEAK_FILL = 0.95


class RenderedView(NamedTuple):
    image: np.ndarray       # [R, R, 3]
    depth: np.ndarray       # [R, R]; NaN where nothing was rasterized
    coverage: np.ndarray    # [R, R] bool


@dataclass(frozen=True)
class HeadSpec:
    seed: int
    radii: tuple[float, float, float]       # (rx, ry, rz) in canonical units
    base_color: tuple[float, float, float]
    eye_color: tuple[float, float, float]
    mouth_color: tuple[float, float, float]
    eyes: tuple[float, float, float]        # (x offset, y, radius); placed at ±x
    mouth: tuple[float, float, float]       # (y, half width, half height)
    bumps: tuple[tuple[float, float, float], ...]  # (x, y, width); placed at ±x
    bump_amplitude: float

    def validate(self) -> "HeadSpec":
        if min(self.radii) <= 0:
            raise ConfigurationError(f"head radii must be positive, got {self.radii}")
        for color in (self.base_color, self.eye_color, self.mouth_color):
            if min(color) < 0 or max(color) > 1:
                raise ConfigurationError(f"head colors must lie in [0, 1], got {color}")
        return self

    @classmethod
    def sample(cls, rng: np.random.Generator, seed: int = 0) -> "HeadSpec":
        rx = rng.uniform(0.55, 0.75)
        ry = rng.uniform(0.75, 0.92)
        rz = rng.uniform(0.30, 0.45)
        skin = rng.uniform([0.55, 0.40, 0.30], [0.90, 0.75, 0.60])
        ex = rng.uniform(0.18, 0.30) * rx / 0.65
        n_bumps = int(rng.integers(1, 3))
        bumps = tuple(
            (float(rng.uniform(0.0, 0.4)), float(rng.uniform(-0.5, 0.5)), float(rng.uniform(0.08, 0.2)))
            for _ in range(n_bumps)
        )
        return cls(
            seed=seed,
            radii=(float(rx), float(ry), float(rz)),
            base_color=tuple(float(c) for c in skin),
            eye_color=tuple(float(c) for c in rng.uniform(0.05, 0.3, size=3)),
            mouth_color=tuple(float(c) for c in np.clip(skin * [1.1, 0.5, 0.5], 0, 1)),
            eyes=(float(ex), float(rng.uniform(0.15, 0.3)), float(rng.uniform(0.06, 0.1))),
            mouth=(float(rng.uniform(-0.45, -0.3)), float(rng.uniform(0.15, 0.25)), float(rng.uniform(0.03, 0.06))),
            bumps=bumps,
            bump_amplitude=float(rng.uniform(0.02, 0.06)),
        ).validate()


def head_maps(
    head: HeadSpec,
    camera: CameraModel,
    background: float = 0.5,
    depth_max: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Canonical depth [R, R] and albedo [R, R, 3] of one head.

    The relief is scaled down, never clipped, when its peak would pass
    PEAK_FILL of the way to `depth_max` (default: the camera's band edge).
    """
    r = camera.resolution
    xs, ys = camera.canonical_xy()
    X, Y = xs.reshape(r, r), ys.reshape(r, r)
    rx, ry, rz = head.radii

    rho = 1.0 - (X / rx) ** 2 - (Y / ry) ** 2
    inside = rho > 0
    z = rz * np.sqrt(np.maximum(rho, 0.0))
    relief = np.zeros_like(X)
    for bx, by, width in head.bumps:
        left = np.exp(-((X + bx) ** 2 + (Y - by) ** 2) / (2 * width ** 2))
        right = np.exp(-((X - bx) ** 2 + (Y - by) ** 2) / (2 * width ** 2))
        relief = relief + (left + right)
    z = np.where(inside, z + head.bump_amplitude * relief, 0.0)
    if depth_max is None:
        depth_max = camera.depth_mid + 0.5 / camera.depth_scale
    limit = PEAK_FILL * (depth_max - camera.depth_mid) * camera.depth_scale
    if z.max() > limit:
        logger.debug("head %d: relief peak %.3f scaled to %.3f", head.seed, z.max(), limit)
        z = z * (limit / z.max())
    depth = camera.depth_mid + z / camera.depth_scale

    albedo = np.full((r, r, 3), background)
    albedo[inside] = head.base_color
    ex, ey, er = head.eyes
    eyes = inside & ((np.abs(X) - ex) ** 2 + (Y - ey) ** 2 < er ** 2)
    albedo[eyes] = head.eye_color
    my, mw, mh = head.mouth
    mouth = inside & ((X / mw) ** 2 + ((Y - my) / mh) ** 2 < 1.0)
    albedo[mouth] = head.mouth_color
    return depth, albedo


def view_depth_range(camera: CameraModel, depth_range: tuple[float, float]) -> tuple[float, float]:
    """Depth range that holds any yawed view of a canonical frame inside `depth_range`.

    Canonical |X| < 1 and 0 <= Z <= (d_max - d_mid) · depth_scale, so a rotation
    about the vertical axis keeps |z| below hypot(1, Z_max).
    """
    z_max = max(abs(d - camera.depth_mid) for d in depth_range) * camera.depth_scale
    reach = math.hypot(1.0, z_max) / camera.depth_scale
    return (camera.depth_mid - reach, camera.depth_mid + reach)


def render_head(depth, albedo, yaw_degrees: float, camera: CameraModel, light) -> RenderedView:
    view = np.array([[0.0, math.radians(yaw_degrees), 0.0, 0.0, 0.0, 0.0]])
    with no_grad():
        result = render_view(depth[None], albedo[None], view, np.asarray([light], dtype=float), camera)
    zbuf = result.fragments[0].zbuffer
    covered = np.isfinite(zbuf)
    rendered = np.where(covered, camera.depth_mid + np.where(covered, zbuf, 0.0) / camera.depth_scale, np.nan)
    return RenderedView(result.image.data[0], rendered, covered)


def generate_synthetic(
    out_dir,
    n_identities: int,
    size: int,
    seed: int,
    yaws: Sequence[int] = MULTI_VIEW_YAWS,
    depth_range: tuple[float, float] = (0.9, 1.1),
    depth_scale: float = 5.0,
    light: Sequence[float] = (0.4, 0.6, 0.0, 0.5),
    background: float = 0.5,
) -> DatasetManifest:
    if n_identities < 2:
        raise ConfigurationError(f"need at least 2 identities, got {n_identities}")
    if size < 4 or size % 4:
        raise ConfigurationError(f"image size must be a positive multiple of 4, got {size}")
    if not yaws or any(abs(y) > 90 for y in yaws) or len(set(yaws)) != len(yaws):
        raise ConfigurationError(f"yaws must be distinct angles in [-90, 90], got {list(yaws)}")

    out_dir = Path(out_dir)
    d_min, d_max = depth_range
    camera = CameraModel(size, depth_scale=depth_scale, depth_mid=0.5 * (d_min + d_max), background=background)
    view_range = view_depth_range(camera, depth_range)
    children = np.random.SeedSequence(seed).spawn(n_identities)
    records = []
    with precision("float64"):
        for identity, child in enumerate(children):
            head = HeadSpec.sample(np.random.default_rng(child), seed=identity)
            depth, albedo = head_maps(head, camera, background, depth_max=d_max)
            truth_depth = f"truth/id{identity:03d}_depth.pgm"
            truth_albedo = f"truth/id{identity:03d}_albedo.ppm"
            write_depth_pgm(out_dir / truth_depth, depth, depth_range)
            write_ppm(out_dir / truth_albedo, albedo)
            for yaw in yaws:
                stem = f"id{identity:03d}_yaw{int(yaw):+03d}"
                rendered = render_head(depth, albedo, yaw, camera, light)
                write_ppm(out_dir / "images" / f"{stem}.ppm", rendered.image)
                write_depth_pgm(out_dir / "depth" / f"{stem}.pgm", rendered.depth, view_range)
                write_mask_pgm(out_dir / "coverage" / f"{stem}.pgm", rendered.coverage)
                records.append(
                    SampleRecord(
                        image=f"images/{stem}.ppm",
                        depth=f"depth/{stem}.pgm",
                        identity=identity,
                        yaw=int(yaw),
                        coverage=f"coverage/{stem}.pgm",
                        truth_depth=truth_depth,
                        truth_albedo=truth_albedo,
                    )
                )
    logger.info("generated %d images for %d identities at %dpx", len(records), n_identities, size)
    manifest = DatasetManifest(
        root=out_dir,
        generator_seed=seed,
        image_size=size,
        yaws=tuple(int(y) for y in yaws),
        depth_range=(float(d_min), float(d_max)),
        records=records,
        view_depth_range=view_range,
    )
    manifest.save()
    return manifest
