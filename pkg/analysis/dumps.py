"""
analysis/dumps.py — probe dumps: what a checkpoint sees on a split, on disk

Layout written by probe_split:

    <dump>/index.json
    <dump>/<sample>/level_<name>/assembly.bin        depth, albedo, view, light, masks,
                                                     coverage, assignment, theta
    <dump>/<sample>/level_<name>/render.ppm          rendered view
    <dump>/<sample>/level_<name>/render_flip.ppm     rendered view of the mirrored scene
    <dump>/<sample>/level_<name>/coverage.pgm        0/1
    <dump>/<sample>/level_<name>/depth.pgm           merged depth over the depth band
    <dump>/<sample>/level_<name>/depth_canonical.ppm gray relief, canonical view
    <dump>/<sample>/level_<name>/depth_profile.ppm   gray relief, yaw 90°
    <dump>/<sample>/level_<name>/mask_<k>.pgm        0/1, one per probe
    <dump>/<sample>/level_<name>/probe_<k>/probe.bin depth, albedo, view, light of probe k
    <dump>/<sample>/level_<name>/probe_<k>/depth.pgm

Every analysis reads the .bin files only, so it is a pure function of the dump.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from analysis.reports import read_json, write_json
from analysis.tuning import TuningRecord, tuning_records
from analysis.variation import VariationRecord, variations
from data.manifest import DatasetManifest, SampleRecord, load_batch
from marrprobe.exceptions import ArtifactIOError
from numerics.serialization import load_tensors, save_tensors
from numerics.tensor import no_grad
from render.imageio import write_depth_pgm, write_mask_pgm, write_ppm
from render.pipeline import profile_view
from train.model import GraphicsProbeModel, LevelOutput

logger = logging.getLogger(__name__)

INDEX_NAME = "index.json"


@dataclass(frozen=True)
class DumpIndex:
    root: Path
    checkpoint: str
    split: str
    levels: tuple[str, ...]
    depth_range: tuple[float, float]
    pitch: float
    resolution: int
    samples: tuple[dict, ...]

    def level_dir(self, sample_id: str, level: str) -> Path:
        return self.root / sample_id / f"level_{level}"

    def to_dict(self) -> dict:
        return {
            "checkpoint": self.checkpoint,
            "split": self.split,
            "levels": list(self.levels),
            "depth_range": list(self.depth_range),
            "pitch": self.pitch,
            "resolution": self.resolution,
            "samples": list(self.samples),
        }


def _write_level(level_dir: Path, lo: LevelOutput, i: int, model: GraphicsProbeModel) -> None:
    scene, probes, result = lo.assembly, lo.probes, lo.render
    depth_range = model.config.depth_range
    depth = scene.depth.data[i]
    save_tensors(
        level_dir / "assembly.bin",
        {
            "depth": depth,
            "albedo": scene.albedo.data[i],
            "view": scene.view.data[i],
            "light": scene.light.data[i],
            "masks": scene.masks[i],
            "coverage": result.coverage[i],
            "assignment": lo.assignment[i],
            "theta": lo.theta.data[i],
        },
    )
    write_ppm(level_dir / "render.ppm", result.image.data[i])
    write_ppm(level_dir / "render_flip.ppm", result.flipped.data[i])
    write_mask_pgm(level_dir / "coverage.pgm", result.coverage[i])
    write_depth_pgm(level_dir / "depth.pgm", depth, depth_range)
    write_ppm(level_dir / "depth_canonical.ppm", profile_view(depth, model.camera, yaw=0.0))
    write_ppm(level_dir / "depth_profile.ppm", profile_view(depth, model.camera))
    for k in range(probes.count):
        write_mask_pgm(level_dir / f"mask_{k}.pgm", scene.masks[i, k])
        probe_dir = level_dir / f"probe_{k}"
        save_tensors(
            probe_dir / "probe.bin",
            {
                "depth": probes.depth.data[i, k],
                "albedo": probes.albedo.data[i, k],
                "view": probes.view.data[i, k],
                "light": probes.light.data[i, k],
            },
        )
        write_depth_pgm(probe_dir / "depth.pgm", probes.depth.data[i, k], depth_range)


def probe_split(
    model: GraphicsProbeModel,
    manifest: DatasetManifest,
    records: Sequence[SampleRecord],
    out_dir,
    batch_size: int = 16,
    split: str = "test",
    checkpoint: str = "",
) -> DumpIndex:
    """Run the model over `records` and write one dump per (sample, level)."""
    out_dir = Path(out_dir)
    records = list(records)
    with no_grad():
        for start in range(0, len(records), batch_size):
            batch = records[start:start + batch_size]
            output = model(load_batch(manifest, batch))
            for level, lo in output.levels.items():
                for i, record in enumerate(batch):
                    _write_level(out_dir / record.sample_id / f"level_{level}", lo, i, model)
            logger.debug("probed %d/%d samples", start + len(batch), len(records))

    index = DumpIndex(
        root=out_dir,
        checkpoint=checkpoint,
        split=split,
        levels=tuple(model.levels),
        depth_range=tuple(model.config.depth_range),
        pitch=model.camera.pixel_pitch,
        resolution=model.config.resolution,
        samples=tuple({"sample_id": r.sample_id, "identity": r.identity, "yaw": r.yaw} for r in records),
    )
    write_json(index.to_dict(), out_dir / INDEX_NAME)
    logger.info("dumped %d samples x %d levels to %s", len(records), len(index.levels), out_dir)
    return index


def read_index(dump_dir) -> DumpIndex:
    dump_dir = Path(dump_dir)
    data = read_json(dump_dir / INDEX_NAME)
    try:
        return DumpIndex(
            root=dump_dir,
            checkpoint=str(data.get("checkpoint", "")),
            split=str(data["split"]),
            levels=tuple(data["levels"]),
            depth_range=tuple(float(v) for v in data["depth_range"]),
            pitch=float(data["pitch"]),
            resolution=int(data["resolution"]),
            samples=tuple(data["samples"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactIOError(dump_dir / INDEX_NAME, f"malformed dump index ({exc})") from exc


def load_assembly(index: DumpIndex, sample_id: str, level: str) -> dict[str, np.ndarray]:
    return load_tensors(index.level_dir(sample_id, level) / "assembly.bin")


@dataclass
class DumpTables:
    variations: list[VariationRecord] = field(default_factory=list)
    tuning: list[TuningRecord] = field(default_factory=list)
    views: dict[str, np.ndarray] = field(default_factory=dict)


def collect(index: DumpIndex, mask_analysis: bool = False) -> DumpTables:
    """Variation and tuning records plus the assembled views, level by level in index order."""
    tables = DumpTables()
    for level in index.levels:
        views = []
        for sample in index.samples:
            sample_id = sample["sample_id"]
            dump = load_assembly(index, sample_id, level)
            mask = dump["coverage"] if mask_analysis else None
            tables.variations.append(variations(dump["depth"], index.depth_range, index.pitch, mask, sample_id, level))
            tables.tuning.extend(tuning_records(sample_id, level, dump["masks"], sample["yaw"]))
            views.append(dump["view"])
        tables.views[level] = np.stack(views) if views else np.zeros((0, 6))
    logger.info(
        "collected %d samples over levels %s%s",
        len(index.samples), list(index.levels), " (coverage-masked)" if mask_analysis else "",
    )
    return tables
