"""
analysis/tuning.py — which probe wins how much of each image, and under which yaw

Activation intensity of probe k on one image is the fraction of canonical
pixels its depth wins. The yaw attached to a record is the dataset's
ground-truth yaw, not the model's estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from marrprobe.exceptions import ContractError, EmptyResultError

logger = logging.getLogger(__name__)

DEFAULT_YAW_BINS = ((-60, -35), (-35, -5), (-5, 5), (5, 35), (35, 60))


@dataclass(frozen=True)
class TuningRecord:
    sample_id: str
    level: str
    probe: int
    intensity: float
    yaw: float


def activation_intensity(masks) -> np.ndarray:
    """masks [K, R, R] one-hot over K -> K intensities summing to 1."""
    masks = np.asarray(masks, dtype=np.float64)
    if masks.ndim != 3:
        raise ContractError(f"masks must be [K, R, R], got {list(masks.shape)}")
    if not np.all((masks == 0) | (masks == 1)) or not np.all(masks.sum(axis=0) == 1):
        raise ContractError("masks do not partition the canonical grid")
    return masks.sum(axis=(1, 2)) / (masks.shape[1] * masks.shape[2])


def tuning_records(sample_id: str, level: str, masks, yaw: float) -> list[TuningRecord]:
    intensities = activation_intensity(masks)
    return [TuningRecord(sample_id, level, k, float(v), float(yaw)) for k, v in enumerate(intensities)]


def yaw_bin(yaw: float, bins: Sequence[tuple[float, float]] = DEFAULT_YAW_BINS) -> int | None:
    """Index of the first closed bin [lo, hi] holding yaw, or None."""
    for i, (lo, hi) in enumerate(bins):
        if lo <= yaw <= hi:
            return i
    return None


@dataclass
class ViewBinReport:
    frame: pd.DataFrame
    out_of_range: int


def view_bin_report(records: Iterable[TuningRecord], bins: Sequence[tuple[float, float]] = DEFAULT_YAW_BINS) -> ViewBinReport:
    """Mean intensity per (level, probe, yaw bin); samples outside every bin are tallied."""
    records = list(records)
    if not records:
        raise EmptyResultError("no tuning records")
    sums: dict[tuple[str, int, int], float] = {}
    counts: dict[tuple[str, int, int], int] = {}
    outside: set[str] = set()
    for r in records:
        b = yaw_bin(r.yaw, bins)
        if b is None:
            outside.add(r.sample_id)
            continue
        key = (r.level, r.probe, b)
        sums[key] = sums.get(key, 0.0) + r.intensity
        counts[key] = counts.get(key, 0) + 1

    rows = []
    for level, probe in sorted({(r.level, r.probe) for r in records}):
        for b, (lo, hi) in enumerate(bins):
            n = counts.get((level, probe, b), 0)
            rows.append(
                {
                    "level": level,
                    "probe": probe,
                    "bin_lo": lo,
                    "bin_hi": hi,
                    "mean_intensity": sums[(level, probe, b)] / n if n else np.nan,
                    "count": n,
                }
            )
    if outside:
        logger.info("%d samples fall outside every yaw bin", len(outside))
    return ViewBinReport(pd.DataFrame(rows), len(outside))


def activation_frequency(records: Iterable[TuningRecord]) -> tuple[pd.DataFrame, dict[str, int]]:
    """Fraction of images in which each probe wins any pixel, and never-activated counts per level."""
    frame = pd.DataFrame([r.__dict__ for r in records])
    if frame.empty:
        raise EmptyResultError("no tuning records")
    frame["active"] = frame["intensity"] > 0
    freq = (
        frame.groupby(["level", "probe"], sort=True)["active"].mean().rename("frequency").reset_index()
    )
    never = {level: int((group["frequency"] == 0).sum()) for level, group in freq.groupby("level", sort=True)}
    return freq, never


def tuning_gallery(records: Iterable[TuningRecord], top_n: int = 8) -> pd.DataFrame:
    """Top-N samples per (level, probe) by intensity; ties go to the smaller sample id."""
    frame = pd.DataFrame([r.__dict__ for r in records])
    if frame.empty:
        raise EmptyResultError("no tuning records")
    frame = frame.sort_values(
        ["level", "probe", "intensity", "sample_id"], ascending=[True, True, False, True], kind="mergesort"
    )
    top = frame.groupby(["level", "probe"], sort=True).head(top_n).copy()
    top["rank"] = top.groupby(["level", "probe"]).cumcount() + 1
    return top[["level", "probe", "rank", "sample_id", "intensity", "yaw"]].reset_index(drop=True)
