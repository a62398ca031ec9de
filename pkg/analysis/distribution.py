"""
analysis/distribution.py — histograms of per-sample statistics and of perceived yaw
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from marrprobe.exceptions import ConfigurationError, EmptyResultError

YAW_LIMIT = 90.0


@dataclass(frozen=True)
class Distribution:
    name: str
    edges: np.ndarray
    counts: np.ndarray
    mean: float
    median: float

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"bin_lo": self.edges[:-1], "bin_hi": self.edges[1:], "count": self.counts.astype(int)}
        )


def distribution(values: Iterable[float], edges: Sequence[float], name: str = "") -> Distribution:
    """Counts per bin; values beyond the outer edges land in the outer bins."""
    values = np.asarray(list(values), dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    if values.size == 0:
        raise EmptyResultError(f"empty distribution{f' for {name}' if name else ''}")
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ConfigurationError(f"bin edges must be increasing with at least two entries, got {edges.tolist()}")
    counts, _ = np.histogram(np.clip(values, edges[0], edges[-1]), bins=edges)
    return Distribution(name, edges, counts, float(np.mean(values)), float(np.median(values)))


def field_distribution(records, field: str, edges: Sequence[float]) -> Distribution:
    return distribution((getattr(r, field) for r in records), edges, name=field)


def yaw_edges(step: float = 5.0) -> np.ndarray:
    return np.arange(-YAW_LIMIT, YAW_LIMIT + step / 2, step)


def view_yaw_degrees(views) -> np.ndarray:
    """Yaw component of [N, 6] views in degrees, rounded at 1e-9° so constructed angles bin stably."""
    views = np.asarray(views, dtype=np.float64).reshape(-1, 6)
    return np.round(np.degrees(views[:, 1]), 9)


def yaw_distribution(views, step: float = 5.0, name: str = "yaw") -> Distribution:
    return distribution(view_yaw_degrees(views), yaw_edges(step), name=name)
