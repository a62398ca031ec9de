"""
wint/apps.py

AppConfig for the probed window-transformer encoder.

Patch embedding, shift-free window attention stages, probe-token insertion and
harvesting, patch merging, and the paper / desk / tiny presets.
"""
from django.apps import AppConfig


class WintConfig(AppConfig):
    name = "wint"
    verbose_name = "Window transformer encoder"
