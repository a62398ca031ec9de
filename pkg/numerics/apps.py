"""
numerics/apps.py

AppConfig for the tensor engine.

Why this app exists
-------------------
Every other app builds on it: DTensor + Tape (reverse-mode autodiff), the
closed op set, the Module/Parameter registry, the finite-difference gradient
checker and the tensor file format used by checkpoints and probe dumps.

It has no models; nothing here touches the database.
"""
from django.apps import AppConfig


class NumericsConfig(AppConfig):
    name = "numerics"
    verbose_name = "Tensor engine"
