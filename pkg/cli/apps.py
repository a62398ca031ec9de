"""
cli/apps.py

AppConfig for the command line.

Why this app exists
-------------------
It holds no numerics of its own. Its management commands (dataset, train,
probe, analyze, render_debug) resolve a RunConfig from settings, an optional
INI file and flags, call into the other apps, and map their errors onto the
exit codes 2 (configuration), 3 (I/O) and 4 (numerical).
"""
from django.apps import AppConfig


class CliConfig(AppConfig):
    name = "cli"
    verbose_name = "Command line"
