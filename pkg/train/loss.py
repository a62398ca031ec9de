"""
train/loss.py — symmetric Laplacian negative log-likelihood with a confidence map

Per image, over the pixel-channels Ω kept by the coverage mode:

    L = 1/|Ω| Σ [ln(√2·σ) + √2·|Î − I| / σ]  +  the same with Î_flip

"ignore" drops pixels no triangle covers from Ω; "penalize" keeps every pixel,
so uncovered background counts as reconstruction error.
"""

from __future__ import annotations

import math

import numpy as np

from marrprobe.exceptions import ConfigurationError, ContractError, ShapeError
from numerics import ops
from numerics.tensor import DTensor, as_tensor

SQRT2 = math.sqrt(2.0)
COVERAGE_MODES = ("ignore", "penalize")


def _term(target: DTensor, rendered: DTensor, sigma: DTensor, weight: np.ndarray | None) -> DTensor:
    """Per-image mean NLL [B]."""
    nll = ops.log(SQRT2 * sigma) + SQRT2 * ops.abs(rendered - target) / sigma
    b, r, _, c = nll.shape
    if weight is None:
        return ops.sum(nll, axis=(1, 2, 3)) / float(r * r * c)
    weight = np.asarray(weight, dtype=nll.dtype).reshape(b, r, r, 1)
    count = np.maximum(weight.sum(axis=(1, 2, 3)) * c, 1.0)
    return ops.sum(nll * weight, axis=(1, 2, 3)) / count


def reconstruction_loss(
    target,
    rendered,
    flipped,
    sigma,
    coverage=None,
    coverage_flipped=None,
    coverage_mode: str = "ignore",
    sigma_min: float = 1e-3,
    per_image: bool = False,
) -> DTensor:
    """Batch mean (or per-image [B]) of the symmetric reconstruction NLL.

    target / rendered / flipped: [B, R, R, 3]; sigma: [B, R, R, 1] or [B, R, R].
    """
    target, rendered, flipped, sigma = (as_tensor(t) for t in (target, rendered, flipped, sigma))
    if coverage_mode not in COVERAGE_MODES:
        raise ConfigurationError(f"unknown coverage mode {coverage_mode!r}; expected one of {COVERAGE_MODES}")
    if rendered.shape != target.shape or flipped.shape != target.shape:
        raise ShapeError("reconstruction_loss: renders and target differ", target.shape, rendered.shape, flipped.shape)
    if sigma.ndim == 3:
        sigma = ops.reshape(sigma, sigma.shape + (1,))
    if sigma.shape[:3] != target.shape[:3]:
        raise ShapeError("reconstruction_loss: σ and target differ", sigma.shape, target.shape)
    if float(np.min(sigma.data)) < sigma_min * (1 - 1e-6):
        raise ContractError(f"σ below its floor {sigma_min}: min {float(np.min(sigma.data)):.3e}")

    if coverage_mode == "penalize":
        coverage = coverage_flipped = None
    per = _term(target, rendered, sigma, coverage) + _term(target, flipped, sigma, coverage_flipped)
    return per if per_image else ops.mean(per)
