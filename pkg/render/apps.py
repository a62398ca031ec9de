"""
render/apps.py

AppConfig for the differentiable renderer.

Depth competition between probes, normals from depth, Lambertian shading,
the scaled-orthographic 6DoF warp with a Z-buffer rasterizer, and the
PPM/PGM image files every other app reads and writes.
"""
from django.apps import AppConfig


class RenderConfig(AppConfig):
    name = "render"
    verbose_name = "Differentiable renderer"
