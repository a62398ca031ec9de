"""
render/rasterize.py — triangle mesh over the pixel grid and a Z-buffer rasterizer

The rasterizer is pure numpy: it only decides which triangle wins each pixel.
Those decisions are frozen for the backward pass; gradients flow through the
barycentric interpolation rebuilt with differentiable ops in render.pipeline.

Pixel (i, j) has center (x, y) = (j + 0.5, i + 0.5). A pixel is covered when it
lies inside (or on the boundary of) a projected triangle; among covering
triangles the nearest (largest z) wins, ties go to the lowest triangle id.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

logger = logging.getLogger(__name__)

INSIDE_TOL = 1e-9
SMALL_BOX = 4


@lru_cache(maxsize=16)
def quad_faces(resolution: int) -> np.ndarray:
    """Two triangles per grid cell, [2·(R−1)², 3] vertex ids (row-major vertices)."""
    r = resolution
    i, j = np.meshgrid(np.arange(r - 1), np.arange(r - 1), indexing="ij")
    v00 = (i * r + j).ravel()
    v01 = v00 + 1
    v10 = v00 + r
    v11 = v10 + 1
    faces = np.empty((2 * v00.size, 3), dtype=np.int64)
    faces[0::2] = np.stack([v00, v10, v01], axis=1)
    faces[1::2] = np.stack([v01, v10, v11], axis=1)
    faces.setflags(write=False)
    return faces


def barycentric(px, py, x0, y0, x1, y1, x2, y2):
    """(λ0, λ1, λ2) of points against triangles; exact at the vertices."""
    ax, ay = x1 - x0, y1 - y0
    bx, by = x2 - x0, y2 - y0
    dx, dy = px - x0, py - y0
    area = ax * by - ay * bx
    l1 = (dx * by - dy * bx) / area
    l2 = (ax * dy - ay * dx) / area
    return 1.0 - l1 - l2, l1, l2


@dataclass
class Fragments:
    triangles: np.ndarray  # [R, R] winning triangle id, −1 where uncovered
    zbuffer: np.ndarray    # [R, R] camera z of the winner, −inf where uncovered

    @property
    def coverage(self) -> np.ndarray:
        return self.triangles >= 0


def _candidates(tri, cols, rows, valid, corners, zs, resolution):
    """Inside-test candidate pixels; returns (triangle id, flat pixel, z) of the hits."""
    x0, y0, x1, y1, x2, y2 = corners
    px, py = cols + 0.5, rows + 0.5
    l0, l1, l2 = barycentric(px, py, x0, y0, x1, y1, x2, y2)
    inside = valid & (l0 >= -INSIDE_TOL) & (l1 >= -INSIDE_TOL) & (l2 >= -INSIDE_TOL)
    z = l0 * zs[0] + l1 * zs[1] + l2 * zs[2]
    tri = np.broadcast_to(tri, inside.shape)
    return tri[inside], (rows * resolution + cols)[inside], z[inside]


def rasterize(xy: np.ndarray, z: np.ndarray, faces: np.ndarray, resolution: int) -> Fragments:
    """xy [V, 2] screen (col, row), z [V] camera depth (larger = nearer)."""
    r = resolution
    xs, ys = xy[faces, 0], xy[faces, 1]  # [T, 3]
    zv = z[faces]
    area = (xs[:, 1] - xs[:, 0]) * (ys[:, 2] - ys[:, 0]) - (ys[:, 1] - ys[:, 0]) * (xs[:, 2] - xs[:, 0])
    finite = np.isfinite(xs).all(axis=1) & np.isfinite(ys).all(axis=1) & np.isfinite(zv).all(axis=1)
    live = finite & (np.abs(area) > 1e-12)
    degenerate = int((finite & ~live).sum())
    if degenerate:
        logger.debug("skipping %d degenerate triangles", degenerate)

    with np.errstate(invalid="ignore"):
        c0 = np.clip(np.ceil(xs.min(axis=1) - 0.5), 0, r)
        c1 = np.clip(np.floor(xs.max(axis=1) - 0.5), -1, r - 1)
        r0 = np.clip(np.ceil(ys.min(axis=1) - 0.5), 0, r)
        r1 = np.clip(np.floor(ys.max(axis=1) - 0.5), -1, r - 1)
    width = np.where(live, c1 - c0 + 1, 0).astype(np.int64)
    height = np.where(live, r1 - r0 + 1, 0).astype(np.int64)
    live &= (width > 0) & (height > 0)

    hits_tri, hits_pix, hits_z = [], [], []
    small = live & (width <= SMALL_BOX) & (height <= SMALL_BOX)
    ids = np.flatnonzero(small)
    if ids.size:
        oy, ox = np.divmod(np.arange(SMALL_BOX * SMALL_BOX), SMALL_BOX)
        cols = c0[ids, None].astype(np.int64) + ox
        rows = r0[ids, None].astype(np.int64) + oy
        valid = (ox < width[ids, None]) & (oy < height[ids, None])
        corners = tuple(a[ids, None] for a in (xs[:, 0], ys[:, 0], xs[:, 1], ys[:, 1], xs[:, 2], ys[:, 2]))
        zs = tuple(zv[ids, k, None] for k in range(3))
        out = _candidates(ids[:, None], cols, rows, valid, corners, zs, r)
        for bucket, part in zip((hits_tri, hits_pix, hits_z), out):
            bucket.append(part)

    for t in np.flatnonzero(live & ~small):
        rows, cols = np.meshgrid(
            np.arange(int(r0[t]), int(r1[t]) + 1), np.arange(int(c0[t]), int(c1[t]) + 1), indexing="ij"
        )
        corners = (xs[t, 0], ys[t, 0], xs[t, 1], ys[t, 1], xs[t, 2], ys[t, 2])
        out = _candidates(np.int64(t), cols, rows, True, corners, tuple(zv[t]), r)
        for bucket, part in zip((hits_tri, hits_pix, hits_z), out):
            bucket.append(part)

    triangles = np.full(r * r, -1, dtype=np.int64)
    zbuffer = np.full(r * r, -np.inf)
    if hits_tri:
        tri = np.concatenate(hits_tri)
        pix = np.concatenate(hits_pix)
        zz = np.concatenate(hits_z)
        if tri.size:
            order = np.lexsort((tri, -zz, pix))
            pix, tri, zz = pix[order], tri[order], zz[order]
            first = np.r_[True, pix[1:] != pix[:-1]]
            triangles[pix[first]] = tri[first]
            zbuffer[pix[first]] = zz[first]
    return Fragments(triangles.reshape(r, r), zbuffer.reshape(r, r))
