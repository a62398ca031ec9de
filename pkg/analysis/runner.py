"""
analysis/runner.py — every report of a probe dump, written under one directory

    variations.csv            one row per (sample, level)
    distributions.csv         per-level histograms of each variation
    summary.json              level -> mean variations and verdict
    table.csv                 level, depth_e3, normal_z_e3, class
    yaw_hist.csv              perceived yaw per level, 5° bins over [-90°, 90°]
    view_bins.csv             mean activation intensity per probe and yaw bin
    activation_frequency.csv  fraction of images activating each probe
    tuning_gallery.csv        top samples per probe
    emergence.json            high-level verdict against the 3D threshold
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from analysis.distribution import field_distribution, yaw_distribution
from analysis.dumps import DumpTables, collect, read_index
from analysis.reports import write_csv, write_json
from analysis.tuning import DEFAULT_YAW_BINS, activation_frequency, tuning_gallery, view_bin_report
from analysis.variation import (
    VARIANCE_NOTE,
    LevelThresholds,
    emergence_verdict,
    level_summary,
    summary_table,
)
from marrprobe.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

REPORTS = ("variations", "yaw", "tuning", "emergence")
EMERGENCE_LEVEL = "high"

VARIATION_EDGES = {
    "depth_var": np.linspace(0.0, 0.05, 51),
    "nx_var": np.linspace(0.0, 0.2, 41),
    "ny_var": np.linspace(0.0, 0.2, 41),
    "nz_var": np.linspace(0.0, 0.1, 51),
}


@dataclass
class AnalysisOptions:
    thresholds: LevelThresholds = field(default_factory=LevelThresholds)
    yaw_bins: Sequence[tuple[float, float]] = DEFAULT_YAW_BINS
    yaw_step: float = 5.0
    top_n: int = 8
    mask_analysis: bool = False

    @classmethod
    def from_settings(cls, **overrides) -> "AnalysisOptions":
        from django.conf import settings

        conf = settings.MARRPROBE
        values = dict(
            thresholds=LevelThresholds.from_settings(),
            yaw_bins=tuple(tuple(b) for b in conf["YAW_BINS"]),
            yaw_step=conf["YAW_HIST_STEP"],
            top_n=conf["TUNING_TOP_N"],
            mask_analysis=conf["MASK_ANALYSIS"],
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def resolve_reports(names: Iterable[str] | None) -> tuple[str, ...]:
    names = list(names or ["all"])
    if "all" in names:
        return REPORTS
    unknown = sorted(set(names) - set(REPORTS))
    if unknown:
        raise ConfigurationError(f"unknown report(s) {unknown}; choose from {list(REPORTS)} or 'all'")
    return tuple(r for r in REPORTS if r in names)


def _variation_reports(tables: DumpTables, out: Path, options: AnalysisOptions) -> list[Path]:
    frame = pd.DataFrame([r.as_dict() for r in tables.variations])
    written = [write_csv(frame, out / "variations.csv", comment=VARIANCE_NOTE)]

    histograms = []
    for level in dict.fromkeys(r.level for r in tables.variations):
        records = [r for r in tables.variations if r.level == level]
        for name, edges in VARIATION_EDGES.items():
            hist = field_distribution(records, name, edges).to_frame()
            hist.insert(0, "field", name)
            hist.insert(0, "level", level)
            histograms.append(hist)
    written.append(write_csv(pd.concat(histograms, ignore_index=True), out / "distributions.csv", comment=VARIANCE_NOTE))

    summary = level_summary(tables.variations, options.thresholds)
    written.append(write_json(summary, out / "summary.json"))
    written.append(write_csv(summary_table(summary), out / "table.csv", comment=f"{VARIANCE_NOTE}; values x 1e-3"))
    for level, row in summary.items():
        logger.info(
            "%s: depth var %.3e, nz var %.3e -> %s", level, row["mean_depth_var"], row["mean_nz_var"], row["class"]
        )
    return written


def _yaw_report(tables: DumpTables, out: Path, options: AnalysisOptions) -> list[Path]:
    frames = []
    for level, views in tables.views.items():
        hist = yaw_distribution(views, options.yaw_step, name=level).to_frame()
        hist.insert(0, "level", level)
        frames.append(hist)
    return [write_csv(pd.concat(frames, ignore_index=True), out / "yaw_hist.csv", comment="perceived yaw in degrees")]


def _tuning_reports(tables: DumpTables, out: Path, options: AnalysisOptions) -> list[Path]:
    bins = view_bin_report(tables.tuning, options.yaw_bins)
    freq, never = activation_frequency(tables.tuning)
    for level, count in never.items():
        logger.info("%s: %d probe(s) never activated", level, count)
    return [
        write_csv(bins.frame, out / "view_bins.csv", comment=f"dataset yaw; {bins.out_of_range} sample(s) outside every bin"),
        write_csv(freq, out / "activation_frequency.csv", comment="fraction of images in which the probe wins a pixel"),
        write_csv(tuning_gallery(tables.tuning, options.top_n), out / "tuning_gallery.csv"),
    ]


def _emergence_report(tables: DumpTables, out: Path, options: AnalysisOptions) -> list[Path]:
    records = [r for r in tables.variations if r.level == EMERGENCE_LEVEL]
    verdict = emergence_verdict(records, options.thresholds)
    data = verdict.as_dict()
    data["verdict"] = "emerged" if verdict.emerged else "not emerged"
    data["level"] = EMERGENCE_LEVEL
    return [write_json(data, out / "emergence.json")]


_WRITERS = {
    "variations": _variation_reports,
    "yaw": _yaw_report,
    "tuning": _tuning_reports,
    "emergence": _emergence_report,
}


def run_analysis(dump_dir, out_dir, reports: Iterable[str] | None = None, options: AnalysisOptions | None = None) -> list[Path]:
    """Read a probe dump and write the requested reports; returns the written paths."""
    options = options or AnalysisOptions()
    selected = resolve_reports(reports)
    index = read_index(dump_dir)
    tables = collect(index, options.mask_analysis)
    out = Path(out_dir)
    written = []
    for name in selected:
        written.extend(_WRITERS[name](tables, out, options))
    logger.info("wrote %d report file(s) to %s", len(written), out)
    return written
