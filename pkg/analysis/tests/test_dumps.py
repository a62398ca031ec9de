"""
Tests for probe dumps and the reports computed from them.
"""
import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_array_equal

from analysis.dumps import collect, probe_split, read_index
from analysis.runner import AnalysisOptions, resolve_reports, run_analysis
from data.manifest import split_by_identity
from data.synthetic import generate_synthetic
from marrprobe.exceptions import ArtifactIOError, ConfigurationError
from render.imageio import read_pgm16
from train.model import GraphicsProbeModel, ModelConfig
from wint.config import preset


def _tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class ProbeDumpTests(SimpleTestCase):
    """
    Dumps of an untrained tiny model on two test images:
      - one assembly per (sample, level), masks partition the grid on disk
      - re-probing gives the same bytes
      - zero-initialized view heads perceive yaw 0 everywhere
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls.tmp = Path(cls._tmp.name)
        manifest = generate_synthetic(cls.tmp / "ds", 2, 32, seed=7, yaws=(0, 30))
        cls.manifest = split_by_identity(manifest, 0.5, seed=7)
        cls.model = GraphicsProbeModel(ModelConfig(encoder=preset("tiny")).validate(), seed=0)
        cls.index = probe_split(cls.model, cls.manifest, cls.manifest.split("test"), cls.tmp / "dump", batch_size=2)

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def test_one_assembly_per_sample_and_level(self):
        self.assertEqual(len(list((self.tmp / "dump").rglob("assembly.bin"))), 2 * 3)
        index = read_index(self.tmp / "dump")
        self.assertEqual(index.levels, ("low", "mid", "high"))
        self.assertEqual([s["yaw"] for s in index.samples], [0, 30])

    def test_masks_partition_from_disk(self):
        sample = self.index.samples[0]["sample_id"]
        for level in self.index.levels:
            level_dir = self.index.level_dir(sample, level)
            total = sum(read_pgm16(level_dir / f"mask_{k}.pgm") for k in range(2))
            assert_array_equal(total, np.ones((16, 16), dtype=np.int64))
            self.assertTrue((level_dir / "probe_1" / "probe.bin").exists())
            self.assertTrue((level_dir / "depth_profile.ppm").exists())

    def test_reprobing_is_bitwise_identical(self):
        probe_split(self.model, self.manifest, self.manifest.split("test"), self.tmp / "again", batch_size=1)
        self.assertEqual(_tree(self.tmp / "dump"), _tree(self.tmp / "again"))

    def test_untrained_views_are_frontal(self):
        tables = collect(self.index)
        for views in tables.views.values():
            assert_array_equal(views[:, 1], 0.0)
        self.assertEqual(len(tables.variations), 6)
        self.assertEqual(len(tables.tuning), 6 * 2)

    def test_reports(self):
        out = self.tmp / "reports"
        run_analysis(self.tmp / "dump", out)
        summary = json.loads((out / "summary.json").read_text())
        self.assertEqual(set(summary), {"low", "mid", "high"})
        emergence = json.loads((out / "emergence.json").read_text())
        self.assertIn(emergence["verdict"], {"emerged", "not emerged"})
        for name in ("variations.csv", "distributions.csv", "table.csv", "yaw_hist.csv", "view_bins.csv",
                     "activation_frequency.csv", "tuning_gallery.csv"):
            self.assertTrue((out / name).exists(), name)

        again = self.tmp / "reports_again"
        run_analysis(self.tmp / "dump", again)
        self.assertEqual(_tree(out), _tree(again))

    def test_single_report_and_masking(self):
        out = self.tmp / "emergence_only"
        written = run_analysis(self.tmp / "dump", out, ["emergence"], AnalysisOptions(mask_analysis=True))
        self.assertEqual([p.name for p in written], ["emergence.json"])

    def test_missing_dump(self):
        with self.assertRaises(ArtifactIOError):
            run_analysis(self.tmp / "nowhere", self.tmp / "out")

    def test_unknown_report(self):
        with self.assertRaises(ConfigurationError):
            resolve_reports(["plots"])
        self.assertEqual(resolve_reports(None), ("variations", "yaw", "tuning", "emergence"))
