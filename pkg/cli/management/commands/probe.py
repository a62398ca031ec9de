"""
Management command: probe
-------------------------

Purpose:
    Runs a trained checkpoint over one split and dumps, per sample and level,
    the decoded probes, the assembled scene, its masks and its renders.

Usage:
    python manage.py probe --run runs/desk --split test
    python manage.py probe --checkpoint runs/desk/checkpoints/epoch_010 --dump runs/desk/probe10
"""

from pathlib import Path

from analysis.dumps import probe_split
from cli.base import RunCommand
from data.manifest import SPLITS, DatasetManifest
from marrprobe.exceptions import EmptyResultError
from train.checkpoint import load_model


class Command(RunCommand):
    help = "Dump graphics probes of a checkpoint over a dataset split."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--dataset", help="Dataset directory or manifest (default <out>/dataset)")
        parser.add_argument("--run", help="Run directory; its latest checkpoint is used (default <out>/run)")
        parser.add_argument("--checkpoint", help="A specific checkpoint directory")
        parser.add_argument("--split", choices=SPLITS + ("all",), default="test")
        parser.add_argument("--dump", help="Dump directory (default <run>/probe)")
        parser.add_argument("--batch-size", type=int, dest="batch_size")

    def overrides(self, options):
        return {"data": {"dataset": options.get("dataset")}, "train": {"batch_size": options.get("batch_size")}}

    def run(self, config, **options):
        run_dir = Path(options.get("run") or config.out / "run")
        source = Path(options.get("checkpoint") or run_dir)
        model, meta = load_model(source)
        manifest = DatasetManifest.load(config.dataset)
        split = options.get("split") or "test"
        records = manifest.records if split == "all" else manifest.split(split)
        if not records:
            raise EmptyResultError(f"split {split!r} of {manifest.root} has no records")
        dump_dir = Path(options.get("dump") or run_dir / "probe")
        index = probe_split(
            model,
            manifest,
            records,
            dump_dir,
            batch_size=config.get("train", "batch_size"),
            split=split,
            checkpoint=Path(meta["path"]).name,
        )
        self.stdout.write(
            self.style.SUCCESS(
                f"Dumped {len(index.samples)} {split} samples x levels {', '.join(index.levels)} to {dump_dir}"
            )
        )
