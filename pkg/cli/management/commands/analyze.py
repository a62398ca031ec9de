"""
Management command: analyze
---------------------------

Purpose:
    Turns a probe dump into CSV/JSON reports: variation distributions and
    level verdicts, perceived-yaw histograms, probe tuning, emergence.

Usage:
    python manage.py analyze --dump runs/desk/probe
    python manage.py analyze --dump runs/frontal/probe --report emergence
"""

from pathlib import Path

from analysis.runner import REPORTS, run_analysis
from cli.base import RunCommand


class Command(RunCommand):
    help = "Compute the analysis reports of a probe dump."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--dump", help="Probe dump directory (default <out>/run/probe)")
        parser.add_argument("--reports", help="Report directory (default: next to the dump, named reports)")
        parser.add_argument(
            "--report", action="append", choices=REPORTS + ("all",), dest="report",
            help="Report to compute; repeat for several (default all)",
        )
        parser.add_argument("--mask-analysis", action="store_true", default=None, dest="mask_analysis",
                            help="Restrict variations to covered pixels")
        parser.add_argument("--depth-3d-threshold", type=float, dest="depth_3d_threshold")
        parser.add_argument("--normal-25d-threshold", type=float, dest="normal_25d_threshold")

    def overrides(self, options):
        return {
            "analysis": {
                key: options.get(key) for key in ("mask_analysis", "depth_3d_threshold", "normal_25d_threshold")
            }
        }

    def run(self, config, **options):
        dump_dir = Path(options.get("dump") or config.out / "run" / "probe")
        out_dir = Path(options.get("reports") or dump_dir.parent / "reports")
        written = run_analysis(dump_dir, out_dir, options.get("report"), config.analysis_options())
        for path in written:
            self.stdout.write(str(path))
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(written)} report file(s) to {out_dir}"))
