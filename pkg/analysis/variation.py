"""
analysis/variation.py — depth / normal variations and the 2D / 2.5D / 3D verdicts

"Variation" is the population variance (ddof = 0) over the analyzed pixels:
depth after normalization to [0, 1] over the depth band, and each component
of the unit normal computed from the raw depth.

    3D    depth_var ≥ depth_3d
    2.5D  depth_var <  depth_3d and nz_var ≥ normal_25d
    2D    otherwise
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
import pandas as pd

from marrprobe.exceptions import ConfigurationError, EmptyResultError
from numerics.tensor import no_grad, precision
from render.geometry import normals_from_depth

logger = logging.getLogger(__name__)

CLASS_2D, CLASS_25D, CLASS_3D = "2D", "2.5D", "3D"
VARIANCE_NOTE = "variation = population variance (ddof=0); depth normalized to [0,1] over the depth band"


@dataclass(frozen=True)
class VariationRecord:
    sample_id: str
    level: str
    depth_var: float
    nx_var: float
    ny_var: float
    nz_var: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LevelThresholds:
    depth_3d: float = 15e-3
    normal_25d: float = 10e-3

    def __post_init__(self):
        if self.depth_3d <= 0 or self.normal_25d <= 0:
            raise ConfigurationError(f"thresholds must be positive, got {self}")

    @classmethod
    def from_settings(cls) -> "LevelThresholds":
        from django.conf import settings

        conf = settings.MARRPROBE
        return cls(conf["DEPTH_3D_THRESHOLD"], conf["NORMAL_25D_THRESHOLD"])


def variations(
    depth,
    depth_range: tuple[float, float],
    pitch: float,
    mask=None,
    sample_id: str = "",
    level: str = "",
) -> VariationRecord:
    """depth [R, R] merged canonical depth; mask [R, R] optionally restricts the pixels."""
    depth = np.asarray(depth, dtype=np.float64)
    d_min, d_max = depth_range
    normalized = (depth - d_min) / (d_max - d_min)
    with precision("float64"), no_grad():
        normals = normals_from_depth(depth, pitch).data
    keep = np.ones(depth.shape, dtype=bool) if mask is None else np.asarray(mask) > 0
    if not keep.any():
        logger.warning("sample %s level %s: empty analysis mask, variations set to 0", sample_id, level)
        return VariationRecord(sample_id, level, 0.0, 0.0, 0.0, 0.0)
    n = normals[keep]
    return VariationRecord(
        sample_id=sample_id,
        level=level,
        depth_var=float(np.var(normalized[keep])),
        nx_var=float(np.var(n[:, 0])),
        ny_var=float(np.var(n[:, 1])),
        nz_var=float(np.var(n[:, 2])),
    )


def classify(depth_var: float, nz_var: float, thresholds: LevelThresholds = LevelThresholds()) -> str:
    if depth_var >= thresholds.depth_3d:
        return CLASS_3D
    if nz_var >= thresholds.normal_25d:
        return CLASS_25D
    return CLASS_2D


def classify_level(record: VariationRecord, thresholds: LevelThresholds = LevelThresholds()) -> str:
    return classify(record.depth_var, record.nz_var, thresholds)


def level_summary(records: Iterable[VariationRecord], thresholds: LevelThresholds = LevelThresholds()) -> dict:
    """level -> mean variations and the verdict of the means."""
    by_level: dict[str, list[VariationRecord]] = {}
    for record in records:
        by_level.setdefault(record.level, []).append(record)
    if not by_level:
        raise EmptyResultError("no variation records to summarize")
    summary = {}
    for level in sorted(by_level):
        rows = by_level[level]
        means = {f"mean_{k}": float(np.mean([getattr(r, k) for r in rows])) for k in ("depth_var", "nx_var", "ny_var", "nz_var")}
        means["mean_normal_var"] = float(np.mean([means["mean_nx_var"], means["mean_ny_var"], means["mean_nz_var"]]))
        means["samples"] = len(rows)
        means["class"] = classify(means["mean_depth_var"], means["mean_nz_var"], thresholds)
        summary[level] = means
    return summary


@dataclass(frozen=True)
class EmergenceVerdict:
    emerged: bool
    mean_depth_var: float
    threshold: float
    samples: int

    def as_dict(self) -> dict:
        return asdict(self)


def emergence_verdict(records: Iterable[VariationRecord], thresholds: LevelThresholds = LevelThresholds()) -> EmergenceVerdict:
    values = [r.depth_var for r in records]
    if not values:
        raise EmptyResultError("no high-level records for the emergence verdict")
    mean = float(np.mean(values))
    verdict = EmergenceVerdict(mean >= thresholds.depth_3d, mean, thresholds.depth_3d, len(values))
    logger.info(
        "emergence: mean depth variation %.3e vs threshold %.3e -> %s",
        mean, thresholds.depth_3d, "emerged" if verdict.emerged else "not emerged",
    )
    return verdict


def summary_table(summary: dict) -> pd.DataFrame:
    """One row per level with the mean depth and z-normal variations in units of 1e-3."""
    return pd.DataFrame(
        [
            {
                "level": level,
                "depth_e3": row["mean_depth_var"] * 1e3,
                "normal_z_e3": row["mean_nz_var"] * 1e3,
                "class": row["class"],
            }
            for level, row in summary.items()
        ],
        columns=["level", "depth_e3", "normal_z_e3", "class"],
    )
