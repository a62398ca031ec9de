"""
Management command: train
-------------------------

Purpose:
    Trains the graphics-probe model on a dataset's train split and tracks
    held-out variations per epoch.

Behavior:
    - Writes <run>/run_manifest.json, <run>/stats.csv and checkpoints.
    - --resume continues from the latest checkpoint in <run>.
    - A non-finite loss stops the run with exit code 4 and names the op.

Usage:
    python manage.py train --preset desk --epochs 30 --run runs/desk
    python manage.py train --levels high --level-weights high:1
"""

from cli.base import RunCommand, csv_list
from cli.runconfig import parse_weights
from data.manifest import DatasetManifest
from train.loop import fit
from wint.config import PRESET_ALIASES, PRESETS


class Command(RunCommand):
    help = "Train the model and write checkpoints plus per-epoch statistics."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--dataset", help="Dataset directory or manifest (default <out>/dataset)")
        parser.add_argument("--run", help="Run directory (default <out>/run)")
        parser.add_argument("--preset", choices=PRESETS + tuple(PRESET_ALIASES))
        parser.add_argument("--probe-bottom", action="store_true", default=None, dest="probe_bottom")
        parser.add_argument("--levels", type=csv_list(), help="Probed levels to train, e.g. low,mid,high")
        parser.add_argument("--epochs", type=int)
        parser.add_argument("--lr", type=float)
        parser.add_argument("--batch-size", type=int, dest="batch_size")
        parser.add_argument("--level-weights", type=parse_weights, dest="level_weights", help="e.g. low:1,mid:1,high:1")
        parser.add_argument("--coverage-mode", choices=["ignore", "penalize"], dest="coverage_mode")
        parser.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
        parser.add_argument("--resume", action="store_true")

    def overrides(self, options):
        return {
            "data": {"dataset": options.get("dataset")},
            "model": {key: options.get(key) for key in ("preset", "probe_bottom", "levels")},
            "train": {
                key: options.get(key)
                for key in ("epochs", "lr", "batch_size", "level_weights", "coverage_mode", "checkpoint_every")
            },
        }

    def run(self, config, **options):
        run_dir = options.get("run") or config.out / "run"
        manifest = DatasetManifest.load(config.dataset)
        model_config = config.model_config()
        result = fit(
            manifest,
            model_config,
            config.train_config(),
            run_dir,
            resume=options.get("resume", False),
            extra_manifest={"config": config.to_dict()},
        )
        for s in result.stats[-len(model_config.active_levels()):]:
            self.stdout.write(
                f"epoch {s.epoch} {s.level}: depth var {s.mean_depth_var:.3e}, "
                f"nz var {s.mean_nz_var:.3e}, loss {s.mean_loss:.4f}"
            )
        self.stdout.write(self.style.SUCCESS(f"Training finished; checkpoint {result.checkpoint}"))
