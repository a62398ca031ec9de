"""
cli/base.py — what every marrprobe management command shares

    --config PATH       INI file layered over settings.MARRPROBE
    --out DIR           output root (default: MARRPROBE_OUT)
    --seed N
    --precision float32|float64

Subclasses implement `run(config, **options)`; library errors become
CommandError with the error's exit code.
"""

from __future__ import annotations

import logging

from django.core.management.base import BaseCommand, CommandError

from cli.runconfig import PRECISIONS, RunConfig
from marrprobe.exceptions import MarrProbeError
from numerics.tensor import precision

logger = logging.getLogger(__name__)


def csv_list(cast=str):
    def parse(raw: str):
        return tuple(cast(v.strip()) for v in raw.split(",") if v.strip())

    return parse


class RunCommand(BaseCommand):
    def add_arguments(self, parser):
        parser.add_argument("--config", help="INI file with [run] [data] [model] [train] [analysis] sections")
        parser.add_argument("--out", help="Output root")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--precision", choices=PRECISIONS)

    def overrides(self, options) -> dict:
        """Section -> key -> value for the flags this command exposes."""
        return {}

    def handle(self, *args, **options):
        try:
            base = {"run": {"out": options.get("out"), "seed": options.get("seed"), "precision": options.get("precision")}}
            sections = self.overrides(options)
            for section, values in base.items():
                sections.setdefault(section, {}).update(values)
            config = RunConfig.resolve(options.get("config"), sections)
            with precision(config.get("run", "precision")):
                self.run(config, **{k: v for k, v in options.items() if k != "config"})
        except MarrProbeError as exc:
            logger.debug("command failed", exc_info=True)
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

    def run(self, config: RunConfig, **options) -> None:
        raise NotImplementedError
