import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_array_equal

from data.manifest import split_by_identity
from data.synthetic import generate_synthetic
from marrprobe.exceptions import ArtifactIOError, ConfigurationError
from numerics.serialization import load_tensors
from train.checkpoint import latest_checkpoint, load_model
from train.loop import RUN_MANIFEST_NAME, STATS_NAME, TrainConfig, fit, read_stats
from train.model import ModelConfig
from wint.config import preset


def _config(**overrides) -> TrainConfig:
    values = dict(lr=1e-3, batch_size=2, epochs=1, seed=7)
    values.update(overrides)
    return TrainConfig(**values).validate()


# ----------------------- #
# fit
# ----------------------- #
class FitTests(SimpleTestCase):
    """
    One-epoch runs of the tiny preset on two identities × two yaws:
      - same seed → identical stats bytes
      - resume continues from the latest checkpoint
      - an unsplit manifest is rejected
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls.tmp = Path(cls._tmp.name)
        cls.raw = generate_synthetic(cls.tmp / "ds", 2, 32, seed=7, yaws=(0, 30))
        cls.manifest = split_by_identity(cls.raw, 0.5, seed=7)
        cls.model_config = ModelConfig(encoder=preset("tiny")).validate()

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def test_same_seed_same_stats(self):
        a = fit(self.manifest, self.model_config, _config(), self.tmp / "run_a")
        b = fit(self.manifest, self.model_config, _config(), self.tmp / "run_b")
        self.assertEqual((a.run_dir / STATS_NAME).read_bytes(), (b.run_dir / STATS_NAME).read_bytes())
        self.assertEqual([(s.epoch, s.level) for s in a.stats], [(1, "low"), (1, "mid"), (1, "high")])
        self.assertTrue((a.run_dir / RUN_MANIFEST_NAME).exists())
        self.assertEqual(a.checkpoint.name, "epoch_001")

    def test_stats_round_trip(self):
        result = fit(self.manifest, self.model_config, _config(), self.tmp / "run_rt")
        stats = read_stats(result.run_dir)
        self.assertEqual([s.level for s in stats], ["low", "mid", "high"])
        for read, written in zip(stats, result.stats):
            self.assertAlmostEqual(read.mean_loss, written.mean_loss, places=8)

    def test_resume(self):
        run = self.tmp / "run_resume"
        fit(self.manifest, self.model_config, _config(epochs=1), run)
        result = fit(self.manifest, self.model_config, _config(epochs=2), run, resume=True)
        self.assertEqual(latest_checkpoint(run).name, "epoch_002")
        self.assertEqual(sorted({s.epoch for s in read_stats(run)}), [1, 2])

    def test_restricted_levels_write_only_those_rows(self):
        config = ModelConfig(encoder=preset("tiny"), levels=("high",)).validate()
        result = fit(self.manifest, config, _config(level_weights={"high": 1.0}), self.tmp / "run_high")
        self.assertEqual({s.level for s in read_stats(result.run_dir)}, {"high"})

    def test_checkpoint_reloads(self):
        result = fit(self.manifest, self.model_config, _config(), self.tmp / "run_ckpt")
        model, meta = load_model(result.run_dir)
        self.assertEqual(meta["epoch"], 1)
        saved = load_tensors(result.checkpoint / "params.bin")
        for name, param in model.named_parameters():
            assert_array_equal(param.data.astype(np.float32), saved[name])

    def test_zero_epochs_still_checkpoint(self):
        result = fit(self.manifest, self.model_config, _config(epochs=0), self.tmp / "run_zero")
        self.assertEqual(result.checkpoint.name, "epoch_000")
        self.assertEqual(result.stats, [])

    def test_unsplit_manifest_rejected(self):
        with self.assertRaises(ConfigurationError):
            fit(self.raw, self.model_config, _config(), self.tmp / "run_raw")

    def test_missing_checkpoint(self):
        with self.assertRaises(ArtifactIOError):
            load_model(self.tmp / "no_such_run")


class TrainConfigTests(SimpleTestCase):
    def test_invalid_values(self):
        for bad in ({"lr": -1.0}, {"batch_size": 0}, {"coverage_mode": "crop"}, {"level_weights": {"high": 0.0}}):
            with self.assertRaises(ConfigurationError):
                _config(**bad)

    def test_from_settings_overrides(self):
        config = TrainConfig.from_settings(epochs=3, lr=None)
        self.assertEqual(config.epochs, 3)
        self.assertEqual(config.lr, 1e-4)
