"""
train/loop.py — train_step, held-out statistics and fit

Run directory layout written by fit:

    <run>/run_manifest.json        every resolved hyper-parameter
    <run>/stats.csv                EpochStats series, one row per (epoch, level)
    <run>/checkpoints/epoch_XXX/   see train.checkpoint

Shuffling uses a generator seeded with (seed, epoch), so a resumed run visits
batches in the same order as an uninterrupted one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from analysis.reports import read_csv, write_csv, write_json
from analysis.variation import VARIANCE_NOTE, variations
from data.manifest import DatasetManifest, SampleRecord, load_batch
from marrprobe.exceptions import ConfigurationError, NumericalError
from numerics.serialization import load_tensors
from numerics.tensor import Tape, backward, get_precision, no_grad
from train.checkpoint import latest_checkpoint, read_checkpoint_meta, save_checkpoint
from train.loss import COVERAGE_MODES
from train.model import GraphicsProbeModel, ModelConfig, level_weights, total_loss
from train.optim import Adam

logger = logging.getLogger(__name__)

STATS_NAME = "stats.csv"
RUN_MANIFEST_NAME = "run_manifest.json"


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 30
    seed: int = 7
    level_weights: dict[str, float] = field(default_factory=lambda: {"bottom": 1.0, "low": 1.0, "mid": 1.0, "high": 1.0})
    coverage_mode: str = "ignore"
    checkpoint_every: int = 1
    clip_norm: float = 5.0
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    heldout_slice: int = 32
    mask_analysis: bool = False

    def validate(self) -> "TrainConfig":
        if self.lr < 0:
            raise ConfigurationError(f"learning rate must be non-negative, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 0 or self.checkpoint_every < 1 or self.heldout_slice < 1:
            raise ConfigurationError(
                "batch size, checkpoint cadence and held-out slice must be positive and epochs non-negative"
            )
        weights = self.level_weights
        if any(w < 0 for w in weights.values()) or not any(w > 0 for w in weights.values()):
            raise ConfigurationError(f"level weights must be non-negative with one positive, got {weights}")
        if self.coverage_mode not in COVERAGE_MODES:
            raise ConfigurationError(f"unknown coverage mode {self.coverage_mode!r}")
        return self

    @classmethod
    def from_settings(cls, **overrides) -> "TrainConfig":
        from django.conf import settings

        conf = settings.MARRPROBE
        values = dict(
            lr=conf["LR"],
            batch_size=conf["BATCH_SIZE"],
            epochs=conf["EPOCHS"],
            seed=conf["SEED"],
            level_weights=dict(conf["LEVEL_WEIGHTS"]),
            coverage_mode=conf["COVERAGE_MODE"],
            checkpoint_every=conf["CHECKPOINT_EVERY"],
            clip_norm=conf["CLIP_NORM"],
            betas=tuple(conf["ADAM_BETAS"]),
            adam_eps=conf["ADAM_EPS"],
            heldout_slice=conf["HELDOUT_SLICE"],
            mask_analysis=conf["MASK_ANALYSIS"],
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values).validate()

    def to_dict(self) -> dict:
        data = asdict(self)
        data["betas"] = list(self.betas)
        return data


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    level: str
    mean_depth_var: float
    mean_nx_var: float
    mean_ny_var: float
    mean_nz_var: float
    mean_loss: float


STATS_COLUMNS = [f.name for f in fields(EpochStats)]


@dataclass
class StepMetrics:
    loss: float
    grad_norm: float
    per_level: dict[str, float]


@dataclass
class FitResult:
    run_dir: Path
    stats: list[EpochStats]
    checkpoint: Path | None


def train_step(
    model: GraphicsProbeModel,
    optimizer: Adam,
    images,
    weights: Mapping[str, float] | None = None,
    coverage_mode: str = "ignore",
) -> StepMetrics:
    with Tape() as tape:
        report = total_loss(model, images, weights, coverage_mode)
    loss = report.total.item()
    if not math.isfinite(loss):
        entry = tape.first_nonfinite()
        where = f"op {entry.op!r} with output shape {list(entry.output.shape)}" if entry else "the loss itself"
        raise NumericalError(f"non-finite loss ({loss}); first non-finite tensor produced by {where}")
    grads = backward(report.total, tape, model.parameters())
    norm = optimizer.step(grads)
    per_level = {level: t.item() for level, t in report.per_level.items()}
    logger.debug("step loss %.6f grad norm %.4f %s", loss, norm, per_level)
    return StepMetrics(loss, norm, per_level)


def evaluate(
    model: GraphicsProbeModel,
    manifest: DatasetManifest,
    records: Sequence[SampleRecord],
    epoch: int,
    batch_size: int = 16,
    coverage_mode: str = "ignore",
    mask_analysis: bool = False,
) -> list[EpochStats]:
    """Per-level mean variations and loss over the held-out records."""
    depth_range = model.config.depth_range
    pitch = model.camera.pixel_pitch
    rows: dict[str, list] = {level: [] for level in model.levels}
    losses: dict[str, list] = {level: [] for level in model.levels}
    with no_grad():
        for start in range(0, len(records), batch_size):
            batch = list(records[start:start + batch_size])
            report = total_loss(model, load_batch(manifest, batch), None, coverage_mode)
            for level, lo in report.output.levels.items():
                losses[level].extend(report.per_image[level].tolist())
                depth = lo.assembly.depth.data
                for i, record in enumerate(batch):
                    mask = lo.render.coverage[i] if mask_analysis else None
                    rows[level].append(variations(depth[i], depth_range, pitch, mask, record.sample_id, level))
    stats = []
    for level in model.levels:
        recs = rows[level]
        stats.append(
            EpochStats(
                epoch=epoch,
                level=level,
                mean_depth_var=float(np.mean([r.depth_var for r in recs])),
                mean_nx_var=float(np.mean([r.nx_var for r in recs])),
                mean_ny_var=float(np.mean([r.ny_var for r in recs])),
                mean_nz_var=float(np.mean([r.nz_var for r in recs])),
                mean_loss=float(np.mean(losses[level])),
            )
        )
    return stats


def write_stats(run_dir, stats: Sequence[EpochStats]) -> Path:
    frame = pd.DataFrame([asdict(s) for s in stats], columns=STATS_COLUMNS)
    return write_csv(frame, Path(run_dir) / STATS_NAME, comment=VARIANCE_NOTE)


def read_stats(run_dir) -> list[EpochStats]:
    frame = read_csv(Path(run_dir) / STATS_NAME)
    return [
        EpochStats(int(row.epoch), str(row.level), float(row.mean_depth_var), float(row.mean_nx_var),
                   float(row.mean_ny_var), float(row.mean_nz_var), float(row.mean_loss))
        for row in frame.itertuples(index=False)
    ]


def fit(
    manifest: DatasetManifest,
    model_config: ModelConfig,
    config: TrainConfig,
    run_dir,
    resume: bool = False,
    extra_manifest: Mapping | None = None,
) -> FitResult:
    config.validate()
    run_dir = Path(run_dir)
    train_records = manifest.split("train")
    test_records = manifest.split("test")
    if not train_records:
        raise ConfigurationError(f"training split of {manifest.root} is empty")
    if not test_records:
        raise ConfigurationError(f"test split of {manifest.root} is empty; held-out statistics need one")
    heldout = test_records[: config.heldout_slice]

    model = GraphicsProbeModel(model_config, seed=config.seed)
    weights = level_weights(model, config.level_weights)
    optimizer = Adam(model.named_parameters(), config.lr, config.betas, config.adam_eps, config.clip_norm)

    stats: list[EpochStats] = []
    start = 0
    latest = latest_checkpoint(run_dir) if resume else None
    if latest is not None:
        meta = read_checkpoint_meta(latest)
        model.load_state_dict(load_tensors(latest / "params.bin"))
        optimizer.load_state_dict(load_tensors(latest / "optim.bin"))
        start = int(meta["epoch"])
        if (run_dir / STATS_NAME).exists():
            stats = [s for s in read_stats(run_dir) if s.epoch <= start]
        logger.info("resuming from %s at epoch %d", latest, start)

    write_json(
        {
            "dataset": str(manifest.root),
            "train_records": len(train_records),
            "heldout_records": len(heldout),
            "precision": get_precision(),
            "parameters": model.num_parameters(),
            "model": model_config.to_dict(),
            "train": config.to_dict(),
            **dict(extra_manifest or {}),
        },
        run_dir / RUN_MANIFEST_NAME,
    )
    logger.info(
        "training %d parameters on %d images (%d held out), epochs %d..%d",
        model.num_parameters(), len(train_records), len(heldout), start + 1, config.epochs,
    )

    for epoch in range(start + 1, config.epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(len(train_records))
        losses = []
        for i in range(0, len(order), config.batch_size):
            batch = [train_records[j] for j in order[i:i + config.batch_size]]
            metrics = train_step(model, optimizer, load_batch(manifest, batch), weights, config.coverage_mode)
            losses.append(metrics.loss)
        epoch_stats = evaluate(
            model, manifest, heldout, epoch, config.batch_size, config.coverage_mode, config.mask_analysis
        )
        stats.extend(epoch_stats)
        write_stats(run_dir, stats)
        for s in epoch_stats:
            logger.info(
                "epoch %d %s: depth var %.3e, nz var %.3e, held-out loss %.4f",
                epoch, s.level, s.mean_depth_var, s.mean_nz_var, s.mean_loss,
            )
        logger.info("epoch %d: mean train loss %.4f", epoch, float(np.mean(losses)))
        if epoch % config.checkpoint_every == 0 or epoch == config.epochs:
            save_checkpoint(run_dir, epoch, model, optimizer, {"train": config.to_dict()})

    if latest_checkpoint(run_dir) is None:
        save_checkpoint(run_dir, 0, model, optimizer, {"train": config.to_dict()})
        write_stats(run_dir, stats)
    return FitResult(run_dir, stats, latest_checkpoint(run_dir))
