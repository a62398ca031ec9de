"""
render/geometry.py — normals from depth and Lambertian shading
"""

from __future__ import annotations

from marrprobe.exceptions import ContractError
from numerics import ops
from numerics.tensor import DTensor, as_tensor
from probes.decoders import light_direction


def _gradient(depth: DTensor, axis: int) -> DTensor:
    """Central differences in the interior, one-sided at both borders."""
    n = depth.shape[axis]

    def cut(start, stop):
        index = [slice(None)] * depth.ndim
        index[axis] = slice(start, stop)
        return depth[tuple(index)]

    first = cut(1, 2) - cut(0, 1)
    interior = (cut(2, n) - cut(0, n - 2)) * 0.5
    last = cut(n - 1, n) - cut(n - 2, n - 1)
    return ops.concat([first, interior, last], axis=axis)


def normals_from_depth(depth, pitch: float) -> DTensor:
    """depth [..., R, R] -> unit normals [..., R, R, 3] = normalize(−∂d/∂u, −∂d/∂v, pitch).

    u runs along columns, v along rows.
    """
    depth = as_tensor(depth)
    if depth.ndim < 2 or min(depth.shape[-2:]) < 3:
        raise ContractError(f"normals need a depth map of at least 3×3, got {list(depth.shape)}")
    du = _gradient(depth, depth.ndim - 1)
    dv = _gradient(depth, depth.ndim - 2)
    s = ops.broadcast_to(DTensor(pitch, dtype=depth.dtype), depth.shape)
    vec = ops.stack([-du, -dv, s], axis=-1)
    return vec / ops.sqrt(ops.sum(vec * vec, axis=-1, keepdims=True))


def shade(albedo, normals, light) -> DTensor:
    """albedo ⊙ (k_a + k_d · max(0, n·l)); albedo/normals [..., R, R, 3], light [..., 4]."""
    albedo, normals, light = as_tensor(albedo), as_tensor(normals), as_tensor(light)
    lead = light.shape[:-1]
    direction = ops.reshape(light_direction(light), lead + (1, 1, 3))
    ndotl = ops.sum(normals * direction, axis=-1, keepdims=True)
    ka = ops.reshape(light[..., 0:1], lead + (1, 1, 1))
    kd = ops.reshape(light[..., 1:2], lead + (1, 1, 1))
    return albedo * (ka + kd * ops.relu(ndotl))
