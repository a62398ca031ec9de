"""
render/camera.py — canonical frame, 6DoF view and projection

Scaled orthographic camera looking down −z. Focal f = R/2 pixels, principal
point (R/2, R/2). Canonical vertex (i, j) sits at the pixel center:

    X = (j + 0.5 − R/2) / f
    Y = −(i + 0.5 − R/2) / f
    Z = (d − d_mid) · depth_scale        (larger stored depth = nearer)

The canonical depth plane sits at d_mid; under orthographic projection its
distance from the camera drops out, so the model carries no such field.

View (pitch, yaw, roll, tx, ty, tz) applies R = Rx(pitch)·Ry(yaw)·Rz(roll),
then adds t; the projection is x = R/2 + f·X', y = R/2 − f·Y'. For R a power
of two the identity view reproduces pixel centers exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from marrprobe.exceptions import ConfigurationError
from numerics import ops
from numerics.tensor import DTensor, as_tensor, get_dtype


@dataclass(frozen=True)
class CameraModel:
    resolution: int
    depth_scale: float = 5.0
    depth_mid: float = 1.0
    background: float = 0.5

    def __post_init__(self):
        if self.resolution < 3:
            raise ConfigurationError(f"render resolution must be at least 3, got {self.resolution}")
        if self.depth_scale <= 0:
            raise ConfigurationError(f"depth scale must be positive, got {self.depth_scale}")

    @property
    def focal(self) -> float:
        return self.resolution / 2.0

    @property
    def principal(self) -> tuple[float, float]:
        return (self.resolution / 2.0, self.resolution / 2.0)

    @property
    def pixel_pitch(self) -> float:
        """z-component of the unnormalized normal, in depth units per pixel."""
        return 1.0 / (self.focal * self.depth_scale)

    def canonical_xy(self) -> tuple[np.ndarray, np.ndarray]:
        r, f = self.resolution, self.focal
        centers = np.arange(r) + 0.5 - r / 2.0
        xs = np.tile(centers / f, r)
        ys = np.repeat(-centers / f, r)
        return xs, ys

    def project(self, depth, view) -> tuple[DTensor, DTensor]:
        """depth [B, R, R], view [B, 6] -> (screen xy [B, R², 2] as (col, row), z [B, R²])."""
        depth, view = as_tensor(depth), as_tensor(view)
        b, r = depth.shape[0], self.resolution
        v = r * r
        xs, ys = self.canonical_xy()
        dtype = get_dtype()
        X = DTensor(np.broadcast_to(xs, (b, v)), dtype=dtype)
        Y = DTensor(np.broadcast_to(ys, (b, v)), dtype=dtype)
        Z = (ops.reshape(depth, (b, v)) - self.depth_mid) * self.depth_scale
        points = ops.stack([X, Y, Z], axis=-1)  # [B, V, 3]
        rot = rotation_matrix(view[:, 0:3])
        cam = ops.matmul(points, ops.transpose(rot, (0, 2, 1)))
        cam = cam + ops.reshape(view[:, 3:6], (b, 1, 3))
        f, (cx, cy) = self.focal, self.principal
        x = cx + f * cam[:, :, 0]
        y = cy - f * cam[:, :, 1]
        return ops.stack([x, y], axis=-1), cam[:, :, 2]


def rotation_matrix(angles) -> DTensor:
    """angles [B, 3] = (pitch, yaw, roll) -> Rx(pitch) · Ry(yaw) · Rz(roll), [B, 3, 3]."""
    angles = as_tensor(angles)
    b = angles.shape[0]
    c, s = ops.cos(angles), ops.sin(angles)
    zero = DTensor(np.zeros(b))
    one = DTensor(np.ones(b))

    def mat(entries):
        return ops.reshape(ops.stack(entries, axis=-1), (b, 3, 3))

    cx, sx = c[:, 0], s[:, 0]
    cy, sy = c[:, 1], s[:, 1]
    cz, sz = c[:, 2], s[:, 2]
    rx = mat([one, zero, zero, zero, cx, -sx, zero, sx, cx])
    ry = mat([cy, zero, sy, zero, one, zero, -sy, zero, cy])
    rz = mat([cz, -sz, zero, sz, cz, zero, zero, zero, one])
    return ops.matmul(ops.matmul(rx, ry), rz)
