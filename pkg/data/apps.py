"""
data/apps.py

AppConfig for the synthetic dataset.

Why this app exists
-------------------
Training and analysis need multi-view faces with known geometry. This app
renders procedural heads at a sweep of yaw angles, keeps the ground-truth
depth next to every image, and owns the manifest: identity-disjoint splits,
single-view filtering and batch loading.
"""
from django.apps import AppConfig


class DataConfig(AppConfig):
    name = "data"
    verbose_name = "Synthetic multi-view faces"
