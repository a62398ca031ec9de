"""
Management command: dataset
---------------------------

Purpose:
    Renders the synthetic multi-view face set, splits it by identity and
    writes the manifest.

Behavior:
    - Deterministic: the same flags and seed produce the same bytes.
    - --single-view YAW renders only that yaw (the single-view control set).

Usage:
    python manage.py dataset --identities 20 --size 64 --seed 7
    python manage.py dataset --identities 20 --single-view 0 --dataset runs/frontal
"""

from django.conf import settings

from cli.base import RunCommand, csv_list
from data.manifest import filter_single_view, split_by_identity
from data.synthetic import generate_synthetic


class Command(RunCommand):
    help = "Generate the synthetic multi-view dataset and its identity split."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--dataset", help="Dataset directory (default <out>/dataset)")
        parser.add_argument("--identities", type=int)
        parser.add_argument("--size", type=int)
        parser.add_argument("--yaws", type=csv_list(int), help="Comma-separated yaw angles in degrees")
        parser.add_argument("--single-view", type=int, dest="single_view")
        parser.add_argument("--train-fraction", type=float, dest="train_fraction")

    def overrides(self, options):
        return {
            "data": {
                key: options.get(key)
                for key in ("dataset", "identities", "size", "yaws", "single_view", "train_fraction")
            }
        }

    def run(self, config, **options):
        conf = settings.MARRPROBE
        single_view = config.get("data", "single_view")
        yaws = (single_view,) if single_view is not None else config.get("data", "yaws")
        manifest = generate_synthetic(
            config.dataset,
            config.get("data", "identities"),
            config.get("data", "size"),
            seed=config.seed,
            yaws=yaws,
            depth_range=config.get("model", "depth_range"),
            depth_scale=config.get("model", "depth_scale"),
            light=conf["LIGHT"],
            background=config.get("model", "background"),
        )
        if single_view is not None:
            manifest = filter_single_view(manifest, single_view)
        manifest = split_by_identity(manifest, config.get("data", "train_fraction"), seed=config.seed)
        path = manifest.save()

        train, test = manifest.split("train"), manifest.split("test")
        self.stdout.write(
            self.style.SUCCESS(
                f"Wrote {len(manifest)} images ({len(train)} train, {len(test)} test) to {path.parent}"
            )
        )
