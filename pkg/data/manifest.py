"""
data/manifest.py — the dataset manifest, identity splits, single-view filter, batch loading

manifest.json is one JSON object:

    {"generator_seed": 7, "image_size": 64, "yaws": [...], "depth_range": [0.9, 1.1],
     "view_depth_range": [0.776, 1.224],
     "records": [{"image": "images/id000_yaw+00.ppm", "depth": "depth/id000_yaw+00.pgm",
                  "coverage": "coverage/id000_yaw+00.pgm",
                  "truth_depth": "truth/id000_depth.pgm", "truth_albedo": "truth/id000_albedo.ppm",
                  "identity": 0, "yaw": 0, "pitch": 0, "split": "train"}, ...]}

Paths inside records are relative to the directory holding manifest.json.
Canonical depth is stored over depth_range, rendered depth over view_depth_range.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from marrprobe.exceptions import ArtifactIOError, ConfigurationError, EmptyResultError
from render.imageio import read_depth_pgm, read_pgm16, read_ppm

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
SPLITS = ("train", "test", "unassigned")


@dataclass(frozen=True)
class SampleRecord:
    image: str
    depth: str
    identity: int
    yaw: int
    pitch: int = 0
    split: str = "unassigned"
    coverage: str = ""
    truth_depth: str = ""
    truth_albedo: str = ""

    @property
    def sample_id(self) -> str:
        return Path(self.image).stem


@dataclass
class DatasetManifest:
    root: Path
    generator_seed: int
    image_size: int
    yaws: tuple[int, ...]
    depth_range: tuple[float, float]
    records: list[SampleRecord] = field(default_factory=list)
    view_depth_range: tuple[float, float] | None = None

    def __len__(self) -> int:
        return len(self.records)

    def identities(self, split: str | None = None) -> list[int]:
        return sorted({r.identity for r in self.records if split is None or r.split == split})

    def split(self, name: str) -> list[SampleRecord]:
        if name not in SPLITS:
            raise ConfigurationError(f"unknown split {name!r}; expected one of {SPLITS}")
        return [r for r in self.records if r.split == name]

    def with_records(self, records: Iterable[SampleRecord]) -> "DatasetManifest":
        return replace(self, records=list(records))

    # ---- JSON ----
    def to_dict(self) -> dict:
        return {
            "generator_seed": self.generator_seed,
            "image_size": self.image_size,
            "yaws": list(self.yaws),
            "depth_range": list(self.depth_range),
            "records": [asdict(r) for r in self.records],
            "view_depth_range": list(self.view_depth_range or self.depth_range),
        }

    def save(self, path=None) -> Path:
        path = Path(path) if path is not None else self.root / MANIFEST_NAME
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise ArtifactIOError(path, f"cannot write manifest ({exc.strerror})") from exc
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ArtifactIOError(path, "manifest not found") from exc
        except (OSError, json.JSONDecodeError) as exc:
            raise ArtifactIOError(path, f"unreadable manifest ({exc})") from exc
        try:
            return cls(
                root=path.parent,
                generator_seed=int(data["generator_seed"]),
                image_size=int(data["image_size"]),
                yaws=tuple(int(y) for y in data["yaws"]),
                depth_range=tuple(float(d) for d in data["depth_range"]),
                records=[SampleRecord(**r) for r in data["records"]],
                view_depth_range=tuple(float(d) for d in data.get("view_depth_range", data["depth_range"])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ArtifactIOError(path, f"malformed manifest ({exc})") from exc


def split_by_identity(manifest: DatasetManifest, fraction: float, seed: int) -> DatasetManifest:
    """Shuffle identities with the seed; the first ⌈fraction·n⌉ train, the rest test."""
    if not 0 < fraction < 1:
        raise ConfigurationError(f"train fraction must lie in (0, 1), got {fraction}")
    ids = manifest.identities()
    n_train = math.ceil(fraction * len(ids) - 1e-9)
    if n_train < 1 or n_train >= len(ids):
        raise ConfigurationError(
            f"train fraction {fraction} over {len(ids)} identities leaves an empty split"
        )
    order = np.random.default_rng(seed).permutation(ids)
    train_ids = {int(i) for i in order[:n_train]}
    logger.info("split %d identities: %d train, %d test", len(ids), n_train, len(ids) - n_train)
    return manifest.with_records(
        replace(r, split="train" if r.identity in train_ids else "test") for r in manifest.records
    )


def filter_single_view(manifest: DatasetManifest, yaw: int) -> DatasetManifest:
    kept = [r for r in manifest.records if r.yaw == yaw]
    if not kept:
        raise EmptyResultError(f"no records at yaw {yaw}; manifest yaws: {sorted(set(r.yaw for r in manifest.records))}")
    logger.info("single-view filter at yaw %+d keeps %d of %d records", yaw, len(kept), len(manifest))
    return replace(manifest.with_records(kept), yaws=(yaw,))


def load_batch(manifest: DatasetManifest, items: Sequence[int] | Sequence[SampleRecord]) -> np.ndarray:
    """Decode records (or record indices) into [B, S, S, 3] floats in [0, 1]."""
    records = [manifest.records[i] if not isinstance(i, SampleRecord) else i for i in items]
    images = [read_ppm(manifest.root / r.image) for r in records]
    for record, image in zip(records, images):
        if image.shape != (manifest.image_size, manifest.image_size, 3):
            raise ArtifactIOError(
                manifest.root / record.image,
                f"expected {manifest.image_size}×{manifest.image_size} RGB, got {list(image.shape)}",
            )
    if not images:
        return np.zeros((0, manifest.image_size, manifest.image_size, 3))
    return np.stack(images)


def read_ground_truth(manifest: DatasetManifest, record: SampleRecord) -> tuple[np.ndarray, np.ndarray]:
    """The generator's canonical (depth [S, S], albedo [S, S, 3]) for the record's identity."""
    if not record.truth_depth or not record.truth_albedo:
        raise ArtifactIOError(manifest.root / record.image, "record carries no ground-truth files")
    depth = read_depth_pgm(manifest.root / record.truth_depth, manifest.depth_range)
    return depth, read_ppm(manifest.root / record.truth_albedo)


def read_view_depth(manifest: DatasetManifest, record: SampleRecord) -> tuple[np.ndarray, np.ndarray]:
    """Rendered depth [S, S] (NaN where uncovered) and its coverage mask."""
    if not record.coverage:
        raise ArtifactIOError(manifest.root / record.image, "record carries no coverage mask")
    covered = read_pgm16(manifest.root / record.coverage) > 0
    depth = read_depth_pgm(manifest.root / record.depth, manifest.view_depth_range or manifest.depth_range)
    return np.where(covered, depth, np.nan), covered
