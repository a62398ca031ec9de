"""
probes/activation.py — template competition over feature dimensions

For K probe tokens p_k ∈ R^D and a template bank W [D × K]:

    A[d, k] = p_k[d] · W[d, k]
    A[d, :] -> one-hot of its argmax (ties -> lowest k)
    θ_k     = p_k ⊙ A[:, k]

so every feature dimension is owned by exactly one probe. The hardmax has no
useful derivative; backward is straight-through with the Jacobian of
softmax(A / τ) along k. With relaxed=True the forward itself is the softmax,
which is what finite-difference checks of the backward compare against.
"""

from __future__ import annotations

import logging

import numpy as np

from marrprobe.exceptions import ContractError
from numerics import ops
from numerics.nn import Module, Parameter
from numerics.tensor import DTensor, apply_op, as_tensor, record_selection

logger = logging.getLogger(__name__)


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def straight_through_hardmax(scores, temperature: float = 1.0, axis: int = -1) -> DTensor:
    """One-hot argmax forward, softmax(scores / τ) backward."""
    scores = as_tensor(scores)
    winners = np.argmax(scores.data, axis=axis)
    record_selection("hardmax", winners)
    onehot = np.zeros_like(scores.data)
    np.put_along_axis(onehot, np.expand_dims(winners, axis), 1.0, axis=axis)
    soft = _softmax(scores.data / temperature, axis)

    def _backward(g):
        return (soft * (g - np.sum(g * soft, axis=axis, keepdims=True)) / temperature,)

    return apply_op("straight_through_hardmax", onehot, (scores,), _backward)


class TemplateBank(Module):
    """W [D × K]: one learned template column per probe."""

    def __init__(self, rng: np.random.Generator, dim: int, probes: int):
        self.dim, self.probes = dim, probes
        self.weight = Parameter(rng.normal(0.0, 1.0, size=(dim, probes)))


def template_activate(
    tokens, bank: TemplateBank, temperature: float = 1.0, relaxed: bool = False
) -> tuple[DTensor, np.ndarray]:
    """tokens [B, K, D] -> (θ [B, K, D], assignment [B, D] of winning probe indices)."""
    tokens = as_tensor(tokens)
    if tokens.ndim != 3 or tokens.shape[1] != bank.probes or tokens.shape[2] != bank.dim:
        raise ContractError(
            f"template activation expects [B, {bank.probes}, {bank.dim}] tokens, got {list(tokens.shape)}"
        )
    scores = ops.transpose(tokens, (0, 2, 1)) * bank.weight  # [B, D, K]
    if relaxed:
        gates = ops.softmax(scores * (1.0 / temperature), axis=-1)
    else:
        gates = straight_through_hardmax(scores, temperature, axis=-1)
    theta = tokens * ops.transpose(gates, (0, 2, 1))
    return theta, np.argmax(scores.data, axis=-1)


def replicate_high(token, probes: int) -> DTensor:
    """[B, 1, D] -> [B, K, D] identical copies of the single top-stage token."""
    token = as_tensor(token)
    if token.ndim != 3 or token.shape[1] != 1:
        raise ContractError(f"replication needs exactly one token per image, got {list(token.shape)}")
    if probes < 1:
        raise ContractError(f"probe count must be at least 1, got {probes}")
    b, _, d = token.shape
    return ops.broadcast_to(token, (b, probes, d))
