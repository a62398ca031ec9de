"""
train/checkpoint.py — checkpoint directories

    <run>/checkpoints/epoch_003/params.bin    model parameters (tensor file)
    <run>/checkpoints/epoch_003/optim.bin     Adam moments and step
    <run>/checkpoints/epoch_003/config.json   model config, train config, epoch, seed
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path

from marrprobe.exceptions import ArtifactIOError, ConfigurationError
from numerics.serialization import load_tensors, save_tensors
from train.model import GraphicsProbeModel, ModelConfig
from train.optim import Adam

logger = logging.getLogger(__name__)

_EPOCH_DIR = re.compile(r"^epoch_(\d{3,})$")


def checkpoint_dir(run_dir, epoch: int) -> Path:
    return Path(run_dir) / "checkpoints" / f"epoch_{epoch:03d}"


def save_checkpoint(run_dir, epoch: int, model: GraphicsProbeModel, optimizer: Adam, extra: dict | None = None) -> Path:
    path = checkpoint_dir(run_dir, epoch)
    save_tensors(path / "params.bin", model.state_dict())
    save_tensors(path / "optim.bin", optimizer.state_dict())
    meta = {"epoch": epoch, "seed": model.seed, "model": model.config.to_dict(), **(extra or {})}
    try:
        (path / "config.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ArtifactIOError(path / "config.json", f"cannot write ({exc.strerror})") from exc
    logger.info("checkpoint written: %s", path)
    return path


def latest_checkpoint(run_dir) -> Path | None:
    root = Path(run_dir) / "checkpoints"
    if not root.is_dir():
        return None
    found = sorted(
        (int(m.group(1)), p) for p in root.iterdir() if p.is_dir() and (m := _EPOCH_DIR.match(p.name))
    )
    return found[-1][1] if found else None


def read_checkpoint_meta(path) -> dict:
    path = Path(path)
    meta_path = path / "config.json"
    try:
        return json.loads(meta_path.read_text())
    except FileNotFoundError as exc:
        raise ArtifactIOError(meta_path, "checkpoint config not found") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactIOError(meta_path, f"unreadable checkpoint config ({exc})") from exc


def load_model(path) -> tuple[GraphicsProbeModel, dict]:
    """Rebuild a model from a checkpoint directory (or a run directory: its latest checkpoint)."""
    path = Path(path)
    if not (path / "params.bin").exists():
        latest = latest_checkpoint(path)
        if latest is None:
            raise ArtifactIOError(path, "no checkpoint found")
        path = latest
    meta = read_checkpoint_meta(path)
    try:
        config = ModelConfig.from_dict(meta["model"])
    except KeyError:
        raise ArtifactIOError(path / "config.json", "checkpoint config lacks the model section") from None
    except ConfigurationError as exc:
        raise ArtifactIOError(path / "config.json", str(exc)) from exc
    model = GraphicsProbeModel(config, seed=int(meta.get("seed", 0)))
    model.load_state_dict(load_tensors(path / "params.bin"))
    meta["path"] = str(path)
    return model, meta
