"""
analysis/apps.py

AppConfig for the probing analyses.

Everything here reads probe dumps, never a live model: depth and normal
variations with their 2D / 2.5D / 3D verdicts, perceived-yaw histograms,
probe tuning against the dataset yaw, and the emergence verdict.
"""
from django.apps import AppConfig


class AnalysisConfig(AppConfig):
    name = "analysis"
    verbose_name = "Probe analyses"
