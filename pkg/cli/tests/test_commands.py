"""
End-to-end tests of the management commands on the tiny preset.

The whole pipeline (dataset -> train -> probe -> analyze) runs twice into two
output roots; both runs must produce the same bytes.
"""
import json
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from numpy.testing import assert_array_equal

from render.imageio import read_pgm16, write_ppm

PIPELINE_FLAGS = ["--seed", "7", "--precision", "float64"]


def _call(*args) -> str:
    out = StringIO()
    call_command(*args, stdout=out)
    return out.getvalue()


def _run_pipeline(root: Path) -> None:
    common = ["--out", str(root), *PIPELINE_FLAGS]
    _call("dataset", *common, "--identities", "2", "--size", "32", "--yaws", "0,30", "--train-fraction", "0.5")
    _call("train", *common, "--preset", "tiny", "--epochs", "1", "--batch-size", "2", "--lr", "0.001")
    _call("probe", *common, "--batch-size", "2")
    _call("analyze", *common)


def _tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# ----------------------- #
# dataset -> train -> probe -> analyze
# ----------------------- #
class PipelineTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls.tmp = Path(cls._tmp.name)
        cls.first, cls.second = cls.tmp / "first", cls.tmp / "second"
        _run_pipeline(cls.first)
        _run_pipeline(cls.second)

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def test_dataset_counts(self):
        manifest = json.loads((self.first / "dataset" / "manifest.json").read_text())
        self.assertEqual(len(manifest["records"]), 4)
        self.assertEqual(sorted({r["split"] for r in manifest["records"]}), ["test", "train"])

    def test_train_outputs(self):
        run = self.first / "run"
        self.assertTrue((run / "checkpoints" / "epoch_001" / "params.bin").exists())
        lines = (run / "stats.csv").read_text().splitlines()
        self.assertTrue(lines[0].startswith("# "))
        self.assertEqual(len(lines), 2 + 3)
        manifest = json.loads((run / "run_manifest.json").read_text())
        self.assertEqual(manifest["config"]["model"]["preset"], "tiny")

    def test_probe_masks_partition(self):
        index = json.loads((self.first / "run" / "probe" / "index.json").read_text())
        self.assertEqual(len(index["samples"]), 2)
        self.assertEqual(len(list((self.first / "run" / "probe").rglob("assembly.bin"))), 2 * 3)
        for sample in index["samples"]:
            for level in index["levels"]:
                level_dir = self.first / "run" / "probe" / sample["sample_id"] / f"level_{level}"
                total = sum(read_pgm16(level_dir / f"mask_{k}.pgm") for k in range(2))
                assert_array_equal(total, np.ones((16, 16), dtype=np.int64))

    def test_summary_schema(self):
        summary = json.loads((self.first / "run" / "reports" / "summary.json").read_text())
        self.assertEqual(set(summary), {"low", "mid", "high"})
        for row in summary.values():
            self.assertIn(row["class"], {"2D", "2.5D", "3D"})

    def test_pipeline_is_bitwise_reproducible(self):
        self.assertEqual((self.first / "dataset" / "manifest.json").read_bytes(),
                         (self.second / "dataset" / "manifest.json").read_bytes())
        self.assertEqual((self.first / "run" / "stats.csv").read_bytes(), (self.second / "run" / "stats.csv").read_bytes())
        self.assertEqual(_tree(self.first / "run" / "probe"), _tree(self.second / "run" / "probe"))
        self.assertEqual(_tree(self.first / "run" / "reports"), _tree(self.second / "run" / "reports"))

    def test_single_report(self):
        reports = self.tmp / "emergence_only"
        _call("analyze", "--out", str(self.first), "--reports", str(reports), "--report", "emergence")
        verdict = json.loads((reports / "emergence.json").read_text())
        self.assertIn("verdict", verdict)
        self.assertEqual([p.name for p in reports.iterdir()], ["emergence.json"])

    def test_levels_flag_restricts_rows(self):
        run = self.tmp / "high_only"
        _call("train", "--out", str(self.first), *PIPELINE_FLAGS, "--run", str(run), "--preset", "tiny",
              "--epochs", "1", "--batch-size", "2", "--levels", "high")
        lines = (run / "stats.csv").read_text().splitlines()[2:]
        self.assertEqual([line.split(",")[1] for line in lines], ["high"])


# ----------------------- #
# Exit codes
# ----------------------- #
class ExitCodeTests(SimpleTestCase):
    def setUp(self):
        self.tmp = Path(self.enterContext(tempfile.TemporaryDirectory()))

    def assertExit(self, code, *args):
        with self.assertRaises(CommandError) as ctx:
            _call(*args)
        self.assertEqual(ctx.exception.returncode, code)
        return str(ctx.exception)

    def test_dataset_config_error(self):
        self.assertExit(2, "dataset", "--out", str(self.tmp), "--identities", "1")

    def test_dataset_single_view(self):
        _call("dataset", "--out", str(self.tmp), "--identities", "2", "--size", "16", "--single-view", "0")
        manifest = json.loads((self.tmp / "dataset" / "manifest.json").read_text())
        self.assertEqual({r["yaw"] for r in manifest["records"]}, {0})
        self.assertEqual(len(manifest["records"]), 2)

    def test_dataset_rerun_is_identical(self):
        args = ("dataset", "--out", str(self.tmp), "--identities", "2", "--size", "16", "--yaws", "0,45")
        _call(*args)
        first = (self.tmp / "dataset" / "manifest.json").read_bytes()
        _call(*args)
        self.assertEqual((self.tmp / "dataset" / "manifest.json").read_bytes(), first)

    def test_train_without_dataset(self):
        self.assertExit(3, "train", "--out", str(self.tmp), "--preset", "tiny", "--epochs", "1")

    def test_train_accepts_paper_preset(self):
        # parsing succeeds; the run stops at the missing dataset
        self.assertExit(3, "train", "--out", str(self.tmp), "--preset", "paper", "--epochs", "1")
        self.assertExit(3, "train", "--out", str(self.tmp), "--preset", "full", "--epochs", "1")

    def test_probe_without_checkpoint(self):
        self.assertExit(3, "probe", "--out", str(self.tmp))

    def test_analyze_without_dump(self):
        self.assertExit(3, "analyze", "--out", str(self.tmp))

    def test_unknown_config_key(self):
        ini = self.tmp / "bad.ini"
        ini.write_text("[train]\nepochz = 3\n")
        message = self.assertExit(2, "dataset", "--out", str(self.tmp), "--config", str(ini))
        self.assertIn("epochz", message)


# ----------------------- #
# render_debug
# ----------------------- #
class RenderDebugTests(SimpleTestCase):
    """
    Visual oracles through the command line:
      - flat depth, identity view, ambient-only light reproduces the albedo file byte-for-byte
      - yaw 30 shrinks the covered area
    """

    def setUp(self):
        self.tmp = Path(self.enterContext(tempfile.TemporaryDirectory()))
        rng = np.random.default_rng(0)
        self.albedo = write_ppm(self.tmp / "albedo.ppm", rng.integers(0, 256, size=(32, 32, 3)) / 255.0)

    def _render(self, out, *extra):
        _call("render_debug", "--out", str(self.tmp), "--precision", "float64", "--albedo", str(self.albedo),
              "--render-out", str(self.tmp / out), *extra)
        return self.tmp / out

    def test_ambient_only_is_identity(self):
        out = self._render("flat")
        self.assertEqual((out / "render.ppm").read_bytes(), self.albedo.read_bytes())
        self.assertTrue(np.all(read_pgm16(out / "coverage.pgm") == 1))

    def test_yaw_reduces_coverage(self):
        frontal = read_pgm16(self._render("frontal") / "coverage.pgm").sum()
        turned = read_pgm16(self._render("turned", "--yaw", "30") / "coverage.pgm").sum()
        self.assertLess(turned, frontal)

    def test_missing_light_names_the_file(self):
        light = self.tmp / "no_light.json"
        with self.assertRaises(CommandError) as ctx:
            self._render("x", "--light", str(light))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn(str(light), str(ctx.exception))

    def test_malformed_view(self):
        view = self.tmp / "view.json"
        view.write_text("[0, 1, 2]")
        with self.assertRaises(CommandError) as ctx:
            self._render("x", "--view", str(view))
        self.assertEqual(ctx.exception.returncode, 2)
