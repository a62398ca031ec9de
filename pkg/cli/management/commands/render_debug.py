"""
Management command: render_debug
--------------------------------

Purpose:
    Renders hand-made inputs through the differentiable renderer so its
    output can be compared against a visual oracle.

Inputs:
    --albedo  PPM, [R, R, 3]
    --depth   16-bit PGM over the depth band (default: a flat plane at mid-depth)
    --view    JSON list of 6 numbers: rotation (radians) then translation
    --light   JSON list of 4 numbers: ambient, diffuse, l_x, l_y (default 1, 0, 0, 0)
    --yaw     degrees; replaces the view's yaw

Outputs (in --render-out): render.ppm, coverage.pgm

Malformed or missing inputs exit with code 2 and name the file.

Usage:
    python manage.py render_debug --albedo face.ppm --yaw 30 --render-out debug/
"""

import math
from pathlib import Path

import numpy as np

from analysis.reports import read_json
from cli.base import RunCommand
from marrprobe.exceptions import ArtifactIOError, ConfigurationError
from render.camera import CameraModel
from render.imageio import read_depth_pgm, read_ppm, write_mask_pgm, write_ppm
from render.pipeline import render_view

AMBIENT_ONLY = (1.0, 0.0, 0.0, 0.0)


def _read_input(reader, path, *args):
    try:
        return reader(path, *args)
    except ArtifactIOError as exc:
        raise ConfigurationError(str(exc)) from exc


def _vector(path, length: int) -> np.ndarray:
    raw = _read_input(read_json, path)
    try:
        values = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError):
        values = np.zeros(0)
    if values.shape != (length,) or not np.all(np.isfinite(values)):
        raise ConfigurationError(f"{path}: expected a list of {length} finite numbers")
    return values


class Command(RunCommand):
    help = "Render albedo/depth/view/light files through the renderer."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--albedo", required=True)
        parser.add_argument("--depth")
        parser.add_argument("--view")
        parser.add_argument("--light")
        parser.add_argument("--yaw", type=float, help="Yaw in degrees")
        parser.add_argument("--render-out", dest="render_out", help="Output directory (default <out>/render_debug)")

    def run(self, config, **options):
        depth_range = tuple(config.get("model", "depth_range"))
        albedo = _read_input(read_ppm, options["albedo"])
        r = albedo.shape[0]
        if albedo.shape != (r, r, 3) or r < 3:
            raise ConfigurationError(f"{options['albedo']}: albedo must be square, got {list(albedo.shape)}")

        if options.get("depth"):
            depth = _read_input(read_depth_pgm, options["depth"], depth_range)
            if depth.shape != (r, r):
                raise ConfigurationError(
                    f"{options['depth']}: depth {list(depth.shape)} does not match albedo {[r, r]}"
                )
        else:
            depth = np.full((r, r), 0.5 * sum(depth_range))
        view = _vector(options["view"], 6) if options.get("view") else np.zeros(6)
        if options.get("yaw") is not None:
            view[1] = math.radians(options["yaw"])
        light = _vector(options["light"], 4) if options.get("light") else np.array(AMBIENT_ONLY)

        camera = CameraModel(
            r,
            depth_scale=config.get("model", "depth_scale"),
            depth_mid=0.5 * sum(depth_range),
            background=config.get("model", "background"),
        )
        result = render_view(depth[None], albedo[None], view[None], light[None], camera)

        out_dir = Path(options.get("render_out") or config.out / "render_debug")
        write_ppm(out_dir / "render.ppm", result.image.data[0])
        write_mask_pgm(out_dir / "coverage.pgm", result.coverage[0])
        covered = float(result.coverage[0].mean())
        self.stdout.write(self.style.SUCCESS(f"Rendered {r}x{r} view to {out_dir} (coverage {covered:.4f})"))
