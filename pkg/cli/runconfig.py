"""
cli/runconfig.py — one resolved view of every knob a command uses

Resolution order, later wins:
  1. settings.MARRPROBE
  2. an INI file given with --config
  3. command-line flags that were actually passed

INI layout (every key optional, unknown sections or keys are rejected):

    [run]       out, seed, precision
    [data]      dataset, identities, size, yaws, train_fraction, single_view
    [model]     preset, probe_bottom, levels, depth_range, temperature, depth_scale, background, sigma_min
    [train]     lr, batch_size, epochs, level_weights, coverage_mode, checkpoint_every, clip_norm,
                heldout_slice
    [analysis]  depth_3d_threshold, normal_25d_threshold, yaw_step, top_n, mask_analysis

Lists are comma separated; level_weights reads "low:1, mid:1, high:1".
"""

from __future__ import annotations

import configparser
import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from django.conf import settings

from analysis.runner import AnalysisOptions
from analysis.variation import LevelThresholds
from marrprobe.exceptions import ArtifactIOError, ConfigurationError
from train.loop import TrainConfig
from train.model import ModelConfig
from wint.config import PRESET_ALIASES, PRESETS

logger = logging.getLogger(__name__)


def _bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value not in configparser.ConfigParser.BOOLEAN_STATES:
        raise ValueError(f"not a boolean: {raw!r}")
    return configparser.ConfigParser.BOOLEAN_STATES[value]


def _items(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(v) for v in _items(raw))


def _float_pair(raw: str) -> tuple[float, float]:
    values = tuple(float(v) for v in _items(raw))
    if len(values) != 2:
        raise ValueError(f"expected two numbers, got {raw!r}")
    return values


def _strings(raw: str) -> tuple[str, ...]:
    return tuple(_items(raw))


def parse_weights(raw: str) -> dict[str, float]:
    weights = {}
    for item in _items(raw):
        level, sep, value = item.partition(":")
        if not sep:
            raise ValueError(f"expected level:weight, got {item!r}")
        weights[level.strip()] = float(value)
    return weights


PARSERS: dict[str, dict[str, Callable[[str], Any]]] = {
    "run": {"out": str, "seed": int, "precision": str},
    "data": {
        "dataset": str,
        "identities": int,
        "size": int,
        "yaws": _ints,
        "train_fraction": float,
        "single_view": int,
    },
    "model": {
        "preset": str,
        "probe_bottom": _bool,
        "levels": _strings,
        "depth_range": _float_pair,
        "temperature": float,
        "depth_scale": float,
        "background": float,
        "sigma_min": float,
    },
    "train": {
        "lr": float,
        "batch_size": int,
        "epochs": int,
        "level_weights": parse_weights,
        "coverage_mode": str,
        "checkpoint_every": int,
        "clip_norm": float,
        "heldout_slice": int,
    },
    "analysis": {
        "depth_3d_threshold": float,
        "normal_25d_threshold": float,
        "yaw_step": float,
        "top_n": int,
        "mask_analysis": _bool,
    },
}

PRECISIONS = ("float32", "float64")


def _defaults() -> dict[str, dict[str, Any]]:
    conf = settings.MARRPROBE
    out = Path(conf["OUT"])
    return {
        "run": {"out": str(out), "seed": conf["SEED"], "precision": conf["PRECISION"]},
        "data": {
            "dataset": None,
            "identities": conf["IDENTITIES"],
            "size": conf["IMAGE_SIZE"],
            "yaws": tuple(conf["YAWS"]),
            "train_fraction": conf["TRAIN_FRACTION"],
            "single_view": None,
        },
        "model": {
            "preset": conf["PRESET"],
            "probe_bottom": conf["PROBE_BOTTOM"],
            "levels": None,
            "depth_range": tuple(conf["DEPTH_RANGE"]),
            "temperature": conf["TEMPERATURE"],
            "depth_scale": conf["DEPTH_SCALE"],
            "background": conf["BACKGROUND"],
            "sigma_min": conf["SIGMA_MIN"],
        },
        "train": {
            "lr": conf["LR"],
            "batch_size": conf["BATCH_SIZE"],
            "epochs": conf["EPOCHS"],
            "level_weights": dict(conf["LEVEL_WEIGHTS"]),
            "coverage_mode": conf["COVERAGE_MODE"],
            "checkpoint_every": conf["CHECKPOINT_EVERY"],
            "clip_norm": conf["CLIP_NORM"],
            "heldout_slice": conf["HELDOUT_SLICE"],
        },
        "analysis": {
            "depth_3d_threshold": conf["DEPTH_3D_THRESHOLD"],
            "normal_25d_threshold": conf["NORMAL_25D_THRESHOLD"],
            "yaw_step": conf["YAW_HIST_STEP"],
            "top_n": conf["TUNING_TOP_N"],
            "mask_analysis": conf["MASK_ANALYSIS"],
        },
    }


def read_ini(path) -> dict[str, dict[str, Any]]:
    """Parse and type-check an INI file; unknown sections and keys are configuration errors."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ArtifactIOError(path, "config file not found") from exc
    except OSError as exc:
        raise ArtifactIOError(path, f"unreadable config file ({exc.strerror})") from exc
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc

    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in PARSERS:
            raise ConfigurationError(f"{path}: unknown section [{section}]; known: {sorted(PARSERS)}")
        for key, raw in parser.items(section):
            convert = PARSERS[section].get(key)
            if convert is None:
                raise ConfigurationError(f"{path}: unknown key {key!r} in [{section}]; known: {sorted(PARSERS[section])}")
            try:
                values.setdefault(section, {})[key] = convert(raw)
            except ValueError as exc:
                raise ConfigurationError(f"{path}: bad value for [{section}] {key}: {exc}") from exc
    return values


@dataclass
class RunConfig:
    values: dict[str, dict[str, Any]] = field(default_factory=_defaults)

    @classmethod
    def resolve(cls, config_path=None, overrides: Mapping[str, Mapping[str, Any]] | None = None) -> "RunConfig":
        config = cls()
        if config_path:
            config.merge(read_ini(config_path))
        config.merge({s: {k: v for k, v in kv.items() if v is not None} for s, kv in (overrides or {}).items()})
        config.validate()
        return config

    def merge(self, values: Mapping[str, Mapping[str, Any]]) -> None:
        for section, items in values.items():
            if section not in PARSERS:
                raise ConfigurationError(f"unknown config section {section!r}")
            for key, value in items.items():
                if key not in PARSERS[section]:
                    raise ConfigurationError(f"unknown config key {key!r} in [{section}]")
                self.values[section][key] = value

    def validate(self) -> "RunConfig":
        if self.get("run", "precision") not in PRECISIONS:
            raise ConfigurationError(f"precision must be one of {PRECISIONS}, got {self.get('run', 'precision')!r}")
        name = self.get("model", "preset")
        if PRESET_ALIASES.get(name, name) not in PRESETS:
            raise ConfigurationError(f"preset must be one of {PRESETS}, got {name!r}")
        self.values["model"]["preset"] = PRESET_ALIASES.get(name, name)
        return self

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    @property
    def seed(self) -> int:
        return int(self.get("run", "seed"))

    @property
    def out(self) -> Path:
        return Path(self.get("run", "out"))

    @property
    def dataset(self) -> Path:
        """The dataset directory; defaults to <out>/dataset."""
        dataset = self.get("data", "dataset")
        return Path(dataset) if dataset else self.out / "dataset"

    def model_config(self) -> ModelConfig:
        model = self.values["model"]
        levels = model["levels"]
        return ModelConfig.from_settings(
            model["preset"],
            model["probe_bottom"],
            levels=tuple(levels) if levels else None,
            depth_range=tuple(model["depth_range"]),
            temperature=model["temperature"],
            depth_scale=model["depth_scale"],
            background=model["background"],
            sigma_min=model["sigma_min"],
        )

    def train_config(self) -> TrainConfig:
        train = self.values["train"]
        return TrainConfig.from_settings(
            seed=self.seed,
            mask_analysis=self.get("analysis", "mask_analysis"),
            **{k: copy.deepcopy(v) for k, v in train.items()},
        )

    def analysis_options(self) -> AnalysisOptions:
        analysis = self.values["analysis"]
        return AnalysisOptions.from_settings(
            thresholds=LevelThresholds(analysis["depth_3d_threshold"], analysis["normal_25d_threshold"]),
            yaw_step=analysis["yaw_step"],
            top_n=analysis["top_n"],
            mask_analysis=analysis["mask_analysis"],
        )

    def to_dict(self) -> dict:
        def plain(value):
            if isinstance(value, tuple):
                return list(value)
            if isinstance(value, dict):
                return {k: plain(v) for k, v in value.items()}
            return value

        return {section: {k: plain(v) for k, v in items.items()} for section, items in self.values.items()}
