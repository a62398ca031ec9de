"""
numerics/ops.py — the closed op set

Every op takes DTensors (or constants, wrapped by as_tensor), computes its
forward with numpy and hands apply_op a closure returning input gradients.

Non-smooth points use subgradient 0: abs'(0) = 0, relu'(0) = 0.
bilinear_sample clamps coordinates to the border; the coordinate gradient is
zero along any axis where the clamp is active.
"""

from __future__ import annotations

import builtins
import logging
from typing import Sequence

import numpy as np

from marrprobe.exceptions import ShapeError
from numerics.tensor import DTensor, apply_op, as_tensor

logger = logging.getLogger(__name__)

_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


# ----------------------------------------------------------------------------- #
# Elementwise binary                                                            #
# ----------------------------------------------------------------------------- #
def _pair(a, b) -> tuple[DTensor, DTensor]:
    return as_tensor(a), as_tensor(b)


def _check_broadcast(op: str, a: DTensor, b: DTensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes do not broadcast", a.shape, b.shape) from None


def add(a, b) -> DTensor:
    a, b = _pair(a, b)
    _check_broadcast("add", a, b)
    return apply_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> DTensor:
    a, b = _pair(a, b)
    _check_broadcast("sub", a, b)
    return apply_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> DTensor:
    a, b = _pair(a, b)
    _check_broadcast("mul", a, b)
    av, bv = a.data, b.data
    return apply_op("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def div(a, b) -> DTensor:
    a, b = _pair(a, b)
    _check_broadcast("div", a, b)
    av, bv = a.data, b.data
    out = av / bv
    return apply_op("div", out, (a, b), lambda g: (g / bv, -g * out / bv))


def neg(x) -> DTensor:
    x = as_tensor(x)
    return apply_op("neg", -x.data, (x,), lambda g: (-g,))


def maximum(a, b) -> DTensor:
    """Elementwise max; ties send the gradient to `a`."""
    a, b = _pair(a, b)
    _check_broadcast("maximum", a, b)
    take_a = a.data >= b.data
    return apply_op(
        "maximum",
        np.where(take_a, a.data, b.data),
        (a, b),
        lambda g: (g * take_a, g * ~take_a),
    )


# ----------------------------------------------------------------------------- #
# Elementwise unary                                                             #
# ----------------------------------------------------------------------------- #
def exp(x) -> DTensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return apply_op("exp", y, (x,), lambda g: (g * y,))


def log(x) -> DTensor:
    x = as_tensor(x)
    xv = x.data
    return apply_op("log", np.log(xv), (x,), lambda g: (g / xv,))


def sqrt(x) -> DTensor:
    x = as_tensor(x)
    y = np.sqrt(x.data)
    return apply_op("sqrt", y, (x,), lambda g: (g * 0.5 / y,))


def abs(x) -> DTensor:  # noqa: A001
    x = as_tensor(x)
    s = np.sign(x.data)
    return apply_op("abs", np.abs(x.data), (x,), lambda g: (g * s,))


def sin(x) -> DTensor:
    x = as_tensor(x)
    xv = x.data
    return apply_op("sin", np.sin(xv), (x,), lambda g: (g * np.cos(xv),))


def cos(x) -> DTensor:
    x = as_tensor(x)
    xv = x.data
    return apply_op("cos", np.cos(xv), (x,), lambda g: (-g * np.sin(xv),))


def relu(x) -> DTensor:
    x = as_tensor(x)
    on = x.data > 0
    return apply_op("relu", np.where(on, x.data, 0).astype(x.dtype), (x,), lambda g: (g * on,))


def tanh(x) -> DTensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return apply_op("tanh", y, (x,), lambda g: (g * (1 - y * y),))


def sigmoid(x) -> DTensor:
    x = as_tensor(x)
    y = 0.5 * (1 + np.tanh(0.5 * x.data))
    return apply_op("sigmoid", y, (x,), lambda g: (g * y * (1 - y),))


def softplus(x) -> DTensor:
    x = as_tensor(x)
    xv = x.data
    y = np.logaddexp(0, xv).astype(x.dtype)
    s = 0.5 * (1 + np.tanh(0.5 * xv))
    return apply_op("softplus", y, (x,), lambda g: (g * s,))


def gelu(x) -> DTensor:
    """tanh approximation of GELU."""
    x = as_tensor(x)
    xv = x.data
    inner = _SQRT_2_OVER_PI * (xv + 0.044715 * xv**3)
    t = np.tanh(inner)
    y = 0.5 * xv * (1 + t)

    def _backward(g):
        dinner = _SQRT_2_OVER_PI * (1 + 3 * 0.044715 * xv**2)
        return (g * (0.5 * (1 + t) + 0.5 * xv * (1 - t * t) * dinner),)

    return apply_op("gelu", y.astype(x.dtype), (x,), _backward)


# ----------------------------------------------------------------------------- #
# Reductions                                                                    #
# ----------------------------------------------------------------------------- #
def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims: bool = False) -> DTensor:  # noqa: A001
    x = as_tensor(x)
    shape = x.shape
    axes = _norm_axes(axis, x.ndim)
    out = np.sum(x.data, axis=axes, keepdims=keepdims)

    def _backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return apply_op("sum", np.asarray(out, dtype=x.dtype), (x,), _backward)


def mean(x, axis=None, keepdims: bool = False) -> DTensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / builtins.max(count, 1))


# ----------------------------------------------------------------------------- #
# Shape                                                                         #
# ----------------------------------------------------------------------------- #
def reshape(x, shape: Sequence[int]) -> DTensor:
    x = as_tensor(x)
    src = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape: size mismatch", src, tuple(shape)) from None
    return apply_op("reshape", out, (x,), lambda g: (g.reshape(src),))


def transpose(x, axes: Sequence[int] | None = None) -> DTensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return apply_op("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def swapaxes(x, a: int, b: int) -> DTensor:
    x = as_tensor(x)
    perm = list(range(x.ndim))
    perm[a], perm[b] = perm[b], perm[a]
    return transpose(x, perm)


def broadcast_to(x, shape: Sequence[int]) -> DTensor:
    x = as_tensor(x)
    try:
        out = np.broadcast_to(x.data, tuple(shape))
    except ValueError:
        raise ShapeError("broadcast_to: incompatible", x.shape, tuple(shape)) from None
    return apply_op("broadcast_to", out, (x,), lambda g: (g,))


def _is_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray, DTensor)) for i in items)


def getitem(x, index) -> DTensor:
    """Basic slicing (with steps) and integer-array indexing."""
    x = as_tensor(x)
    if isinstance(index, DTensor):
        index = index.data.astype(np.int64)
    shape, dtype = x.shape, x.dtype
    out = x.data[index]
    advanced = _is_advanced(index)

    def _backward(g):
        full = np.zeros(shape, dtype=dtype)
        if advanced:
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return apply_op("getitem", np.array(out, copy=True), (x,), _backward)


def take(x, indices, axis: int = 0) -> DTensor:
    """Gather along one axis; repeated indices accumulate in backward."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim
    shape, dtype = x.shape, x.dtype
    out = np.take(x.data, idx, axis=axis)

    def _backward(g):
        full = np.zeros(shape, dtype=dtype)
        moved = np.moveaxis(full, axis, 0)
        gm = np.moveaxis(g, list(range(axis, axis + idx.ndim)), list(range(idx.ndim)))
        np.add.at(moved, idx, gm)
        return (full,)

    return apply_op("take", out, (x,), _backward)


def concat(tensors: Sequence, axis: int = 0) -> DTensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no tensors")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis):
            raise ShapeError("concat: shapes disagree off the concat axis", tensors[0].shape, t.shape)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def _backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return apply_op("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, _backward)


def stack(tensors: Sequence, axis: int = 0) -> DTensor:
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in tensors]
    return concat(expanded, axis=axis)


def hflip(x, axis: int = -1) -> DTensor:
    """Mirror along one axis (the image width axis of the caller's layout)."""
    x = as_tensor(x)
    return apply_op("hflip", np.flip(x.data, axis=axis).copy(), (x,), lambda g: (np.flip(g, axis=axis),))


def nearest_upsample(x, factor: int = 2) -> DTensor:
    """[N, H, W, C] -> [N, factor*H, factor*W, C] by pixel replication."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("nearest_upsample expects [N, H, W, C]", x.shape)
    n, h, w, c = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2)

    def _backward(g):
        return (g.reshape(n, h, factor, w, factor, c).sum(axis=(2, 4)),)

    return apply_op("nearest_upsample", out, (x,), _backward)


# ----------------------------------------------------------------------------- #
# Linear algebra and nn primitives                                              #
# ----------------------------------------------------------------------------- #
def matmul(a, b) -> DTensor:
    """Matrix product over the last two axes, batch axes broadcast."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul: inner dimensions disagree", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul: batch dimensions do not broadcast", a.shape, b.shape) from None
    av, bv = a.data, b.data

    def _backward(g):
        return (
            np.matmul(g, np.swapaxes(bv, -1, -2)),
            np.matmul(np.swapaxes(av, -1, -2), g),
        )

    return apply_op("matmul", np.matmul(av, bv), (a, b), _backward)


def softmax(x, axis: int = -1) -> DTensor:
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=axis, keepdims=True)

    def _backward(g):
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    return apply_op("softmax", s, (x,), _backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> DTensor:
    """Normalize the last axis to zero mean and unit variance, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    n = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    gv = gain.data

    def _backward(g):
        dxhat = g * gv
        dx = inv / n * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return dx, g * xhat, g

    return apply_op("layer_norm", xhat * gv + bias.data, (x, gain, bias), _backward)


def conv3x3(x, weight, bias=None) -> DTensor:
    """Stride-1 3×3 convolution with zero padding 1.

    x: [N, H, W, Cin], weight: [3, 3, Cin, Cout], bias: [Cout].
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.shape[:3] != (3, 3, x.shape[-1]):
        raise ShapeError("conv3x3: input/weight mismatch", x.shape, weight.shape)
    n, h, w, cin = x.shape
    cout = weight.shape[-1]
    padded = np.pad(x.data, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.concatenate(
        [padded[:, dy:dy + h, dx:dx + w, :] for dy in range(3) for dx in range(3)], axis=-1
    )
    wmat = weight.data.reshape(9 * cin, cout)
    out = cols @ wmat
    inputs: tuple[DTensor, ...] = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        inputs = inputs + (bias,)

    def _backward(g):
        gw = np.tensordot(cols, g, axes=([0, 1, 2], [0, 1, 2])).reshape(weight.shape)
        gcols = g @ wmat.T
        gpad = np.zeros_like(padded)
        k = 0
        for dy in range(3):
            for dx in range(3):
                gpad[:, dy:dy + h, dx:dx + w, :] += gcols[..., k * cin:(k + 1) * cin]
                k += 1
        grads = [gpad[:, 1:-1, 1:-1, :], gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1, 2)))
        return tuple(grads)

    return apply_op("conv3x3", out, inputs, _backward)


def bilinear_sample(grid, coords) -> DTensor:
    """Sample grid [H, W, C] (or [B, H, W, C]) at coords [..., 2] = (row, col).

    Integer coordinates hit pixel values exactly; coordinates outside the grid
    clamp to the border.
    """
    grid, coords = as_tensor(grid), as_tensor(coords)
    batched = grid.ndim == 4
    g4 = grid.data if batched else grid.data[None]
    c4 = coords.data if batched else coords.data[None]
    if c4.shape[-1] != 2 or c4.shape[0] != g4.shape[0] or c4.ndim != 4:
        raise ShapeError("bilinear_sample: grid/coords mismatch", grid.shape, coords.shape)
    b, h, w, c = g4.shape
    rows = np.clip(c4[..., 0], 0, h - 1)
    cols = np.clip(c4[..., 1], 0, w - 1)
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[..., None]
    fc = (cols - c0)[..., None]
    bi = np.arange(b)[:, None, None]
    v00, v01 = g4[bi, r0, c0], g4[bi, r0, c1]
    v10, v11 = g4[bi, r1, c0], g4[bi, r1, c1]
    out = (1 - fr) * ((1 - fc) * v00 + fc * v01) + fr * ((1 - fc) * v10 + fc * v11)
    row_live = ((c4[..., 0] >= 0) & (c4[..., 0] <= h - 1))[..., None]
    col_live = ((c4[..., 1] >= 0) & (c4[..., 1] <= w - 1))[..., None]

    def _backward(gout):
        gg = gout if batched else gout[None]
        ggrid = np.zeros_like(g4)
        np.add.at(ggrid, (bi, r0, c0), gg * (1 - fr) * (1 - fc))
        np.add.at(ggrid, (bi, r0, c1), gg * (1 - fr) * fc)
        np.add.at(ggrid, (bi, r1, c0), gg * fr * (1 - fc))
        np.add.at(ggrid, (bi, r1, c1), gg * fr * fc)
        d_row = ((1 - fc) * (v10 - v00) + fc * (v11 - v01)) * row_live
        d_col = ((1 - fr) * (v01 - v00) + fr * (v11 - v10)) * col_live
        gcoords = np.stack([(gg * d_row).sum(-1), (gg * d_col).sum(-1)], axis=-1)
        if not batched:
            ggrid, gcoords = ggrid[0], gcoords[0]
        return ggrid, gcoords

    return apply_op("bilinear_sample", out if batched else out[0], (grid, coords), _backward)
