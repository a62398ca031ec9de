"""
render/pipeline.py — probe assembly, canonical shading and the view warp

    assemble(probes)          per-pixel depth competition across a level's probes
    warp_to_view(...)         project the shaded canonical mesh through the view
    render(assembly, camera)  image and its horizontally mirrored counterpart
    profile_view(depth, ...)  gray relief renders of a depth map for inspection

Hard decisions (winning probe per pixel, winning triangle per pixel) are made
in numpy, recorded with `record_selection`, and held fixed in backward.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from marrprobe.exceptions import ContractError
from numerics import ops
from numerics.tensor import DTensor, as_tensor, get_dtype, no_grad, record_selection
from probes.decoders import GraphicsProbes
from render.camera import CameraModel
from render.geometry import normals_from_depth, shade
from render.rasterize import Fragments, barycentric, quad_faces, rasterize

logger = logging.getLogger(__name__)

PROFILE_ALBEDO = 0.75
PROFILE_LIGHT = (0.35, 0.65, 0.0, 0.0)


@dataclass
class SceneAssembly:
    """A level's probes merged into one canonical scene."""

    depth: DTensor    # [B, R, R]
    albedo: DTensor   # [B, R, R, 3]
    view: DTensor     # [B, 6]
    light: DTensor    # [B, 4]
    masks: np.ndarray  # [B, K, R, R] one-hot winner per pixel
    winners: np.ndarray  # [B, R, R]

    @property
    def resolution(self) -> int:
        return self.depth.shape[-1]


@dataclass
class WarpResult:
    image: DTensor         # [B, R, R, 3]
    coverage: np.ndarray   # [B, R, R] float 0/1
    fragments: list[Fragments]


@dataclass
class RenderResult:
    image: DTensor
    flipped: DTensor
    coverage: np.ndarray
    coverage_flipped: np.ndarray


def _merge_probe_list(probes: Sequence[GraphicsProbes]) -> GraphicsProbes:
    sizes = {p.depth.shape[-1] for p in probes}
    if len(sizes) != 1:
        raise ContractError(f"probes disagree on resolution: {sorted(sizes)}")
    return GraphicsProbes(
        depth=ops.concat([p.depth for p in probes], axis=1),
        albedo=ops.concat([p.albedo for p in probes], axis=1),
        view=ops.concat([p.view for p in probes], axis=1),
        light=ops.concat([p.light for p in probes], axis=1),
    )


def assemble(probes: GraphicsProbes | Sequence[GraphicsProbes]) -> SceneAssembly:
    """Winner-take-all on depth per canonical pixel; view and light are averaged.

    The largest depth wins (nearest surface), ties go to the lowest probe index.
    """
    if not isinstance(probes, GraphicsProbes):
        probes = _merge_probe_list(list(probes))
    depth = probes.depth
    if depth.ndim != 4 or depth.shape[-1] != depth.shape[-2]:
        raise ContractError(f"probe depth must be [B, K, R, R], got {list(depth.shape)}")
    if probes.albedo.shape[:4] != depth.shape:
        raise ContractError(
            f"albedo {list(probes.albedo.shape)} does not match depth {list(depth.shape)}"
        )
    k = depth.shape[1]
    winners = np.argmax(depth.data, axis=1)
    record_selection("depth_competition", winners)
    masks = (winners[:, None] == np.arange(k)[None, :, None, None]).astype(depth.dtype)

    merged_depth = ops.sum(depth * masks, axis=1)
    merged_albedo = ops.sum(probes.albedo * masks[..., None], axis=1)
    return SceneAssembly(
        depth=merged_depth,
        albedo=merged_albedo,
        view=ops.mean(probes.view, axis=1),
        light=ops.mean(probes.light, axis=1),
        masks=masks,
        winners=winners,
    )


def canonical_shading(depth, albedo, light, camera: CameraModel) -> DTensor:
    return shade(albedo, normals_from_depth(depth, camera.pixel_pitch), light)


def warp_to_view(canonical, depth, view, camera: CameraModel) -> WarpResult:
    """Carry the shaded canonical grid through the view.

    canonical [B, R, R, 3] vertex colors, depth [B, R, R], view [B, 6].
    Uncovered pixels take the background value.
    """
    canonical, depth, view = as_tensor(canonical), as_tensor(depth), as_tensor(view)
    b, r = depth.shape[0], camera.resolution
    if depth.shape[1:] != (r, r):
        raise ContractError(f"depth {list(depth.shape)} does not match camera resolution {r}")
    n_vert = r * r
    xy, z = camera.project(depth, view)
    faces = quad_faces(r)

    fragments = [rasterize(xy.data[i], z.data[i], faces, r) for i in range(b)]
    triangles = np.stack([f.triangles for f in fragments])
    record_selection("zbuffer", triangles)
    coverage = (triangles >= 0).astype(get_dtype())

    flat = np.flatnonzero(triangles >= 0)
    if flat.size == 0:
        logger.debug("view leaves every pixel uncovered")
        image = DTensor(np.full((b, r, r, 3), camera.background))
        return WarpResult(image, coverage, fragments)

    batch, pix = np.divmod(flat, n_vert)
    corner_ids = batch[:, None] * n_vert + faces[triangles.reshape(-1)[flat]]  # [P, 3]
    xy_flat = ops.reshape(xy, (b * n_vert, 2))
    colors = ops.reshape(canonical, (b * n_vert, 3))

    corners = []
    for c in range(3):
        v = ops.take(xy_flat, corner_ids[:, c])
        corners.extend([v[:, 0], v[:, 1]])
    rows, cols = np.divmod(pix, r)
    l0, l1, l2 = barycentric(cols + 0.5, rows + 0.5, *corners)

    p = flat.size
    color = (
        ops.reshape(l0, (p, 1)) * ops.take(colors, corner_ids[:, 0])
        + ops.reshape(l1, (p, 1)) * ops.take(colors, corner_ids[:, 1])
        + ops.reshape(l2, (p, 1)) * ops.take(colors, corner_ids[:, 2])
    )
    table = ops.concat([color, DTensor(np.full((1, 3), camera.background))], axis=0)
    index = np.full(b * n_vert, p, dtype=np.int64)
    index[flat] = np.arange(p)
    image = ops.reshape(ops.take(table, index), (b, r, r, 3))
    return WarpResult(image, coverage, fragments)


def render_view(depth, albedo, view, light, camera: CameraModel) -> WarpResult:
    return warp_to_view(canonical_shading(depth, albedo, light, camera), depth, view, camera)


def render(assembly: SceneAssembly, camera: CameraModel, flip: bool = True) -> RenderResult:
    """Render the assembled scene and, optionally, its mirror (same view and light)."""
    if assembly.resolution != camera.resolution:
        raise ContractError(
            f"assembly resolution {assembly.resolution} does not match camera {camera.resolution}"
        )
    direct = render_view(assembly.depth, assembly.albedo, assembly.view, assembly.light, camera)
    if not flip:
        return RenderResult(direct.image, None, direct.coverage, None)
    mirrored = render_view(
        ops.hflip(assembly.depth, axis=-1),
        ops.hflip(assembly.albedo, axis=-2),
        assembly.view,
        assembly.light,
        camera,
    )
    return RenderResult(direct.image, mirrored.image, direct.coverage, mirrored.coverage)


def profile_view(depth, camera: CameraModel, yaw: float = math.pi / 2) -> np.ndarray:
    """Gray relief of a single depth map [R, R] seen from `yaw` (radians) -> [R, R, 3]."""
    depth = np.asarray(depth.data if isinstance(depth, DTensor) else depth)
    r = camera.resolution
    with no_grad():
        result = render_view(
            depth[None],
            np.full((1, r, r, 3), PROFILE_ALBEDO),
            np.array([[0.0, yaw, 0.0, 0.0, 0.0, 0.0]]),
            np.array([PROFILE_LIGHT]),
            camera,
        )
    return result.image.data[0]
