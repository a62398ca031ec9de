"""
probes/apps.py

AppConfig for the graphics probes.

Turns harvested probe tokens into graphics probes: template competition over
feature dimensions, replication of the single top-stage token, and the
depth / albedo / view / light decoders.
"""
from django.apps import AppConfig


class ProbesConfig(AppConfig):
    name = "probes"
    verbose_name = "Graphics probes"
