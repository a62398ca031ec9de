"""
numerics/gradcheck.py — central finite differences against the tape

grad_check(f, params) runs f once under a Tape to get analytic gradients, then
perturbs coordinates one at a time by ±eps and compares

    error = |analytic - numeric| / max(1, |numeric|)

Coordinates whose perturbation changes a hard selection (hardmax winner,
depth-competition mask, Z-buffer triangle) are excluded: the function is not
differentiable there. Run it under `precision("float64")`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from numerics.tensor import DTensor, Tape, backward, no_grad, selection_trace

logger = logging.getLogger(__name__)


@dataclass
class GradCheckResult:
    max_error: float = 0.0
    worst: tuple[str, int] | None = None
    checked: int = 0
    excluded: list[tuple[str, int]] = field(default_factory=list)
    nonfinite: list[tuple[str, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.nonfinite

    def __float__(self) -> float:
        return self.max_error


def _label(p: DTensor, i: int) -> str:
    return p.name or f"param{i}"


def grad_check(
    f: Callable[[], DTensor],
    params: Sequence[DTensor],
    eps: float = 1e-4,
    max_coords_per_param: int | None = None,
    seed: int = 0,
) -> GradCheckResult:
    """Compare reverse-mode gradients of the scalar f() with central differences.

    f must rebuild its graph from `params` on every call. When
    max_coords_per_param is set, a seeded random subset of each parameter's
    coordinates is checked.
    """
    params = list(params)
    with Tape() as tape:
        root = f()
    analytic = backward(root, tape, params)
    rng = np.random.default_rng(seed)
    result = GradCheckResult()

    for pi, p in enumerate(params):
        label = _label(p, pi)
        grad = analytic[p].reshape(-1)
        p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_param is not None and flat.size > max_coords_per_param:
            coords = np.sort(rng.choice(flat.size, size=max_coords_per_param, replace=False))

        for c in coords:
            c = int(c)
            original = flat[c]
            with no_grad():
                flat[c] = original + eps
                with selection_trace() as plus_trace:
                    f_plus = f().item()
                flat[c] = original - eps
                with selection_trace() as minus_trace:
                    f_minus = f().item()
                flat[c] = original

            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                result.nonfinite.append((label, c))
                logger.warning("grad_check: non-finite f at %s[%d]", label, c)
                continue
            if plus_trace.differs(minus_trace):
                result.excluded.append((label, c))
                logger.info("grad_check: %s[%d] excluded, hard selection changed", label, c)
                continue

            numeric = (f_plus - f_minus) / (2 * eps)
            error = abs(float(grad[c]) - numeric) / max(1.0, abs(numeric))
            result.checked += 1
            if result.worst is None or error > result.max_error:
                result.max_error = error
                result.worst = (label, c)

    logger.debug(
        "grad_check: %d coords, %d excluded, max error %.3e",
        result.checked, len(result.excluded), result.max_error,
    )
    return result
