"""
train/apps.py

AppConfig for training.

The full model (encoder, probe heads, renderer, confidence net), the symmetric
reconstruction loss, Adam, checkpoints and the per-epoch statistics series.
"""
from django.apps import AppConfig


class TrainingConfig(AppConfig):
    name = "train"
    verbose_name = "Training"
