"""
Tests for the synthetic dataset: generation, manifest, splits, loading.
"""
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from data.manifest import (
    DatasetManifest,
    SampleRecord,
    filter_single_view,
    load_batch,
    read_ground_truth,
    read_view_depth,
    split_by_identity,
)
from data.synthetic import (
    MULTI_VIEW_YAWS,
    HeadSpec,
    generate_synthetic,
    head_maps,
    render_head,
    view_depth_range,
)
from marrprobe.exceptions import ArtifactIOError, ConfigurationError, EmptyResultError
from numerics.tensor import precision
from render.camera import CameraModel
from render.imageio import read_pgm16, write_ppm


def _manifest(n_identities, yaws=(0, 30)):
    records = [
        SampleRecord(image=f"images/id{i:03d}_yaw{y:+03d}.ppm", depth=f"depth/id{i:03d}_yaw{y:+03d}.pgm", identity=i, yaw=y)
        for i in range(n_identities)
        for y in yaws
    ]
    return DatasetManifest(Path("."), 0, 16, tuple(yaws), (0.9, 1.1), records)


class GenerateTests(SimpleTestCase):
    """
    Generator contracts:
      - one image per identity and yaw, yaw multiset per identity is the yaw set
      - same seed → identical bytes
      - frontal render of a head equals its own mirror
    """

    def setUp(self):
        self.tmp = Path(self.enterContext(tempfile.TemporaryDirectory()))

    def test_counts_and_yaw_sets(self):
        manifest = generate_synthetic(self.tmp / "ds", 2, 16, seed=7)
        self.assertEqual(len(manifest), 26)
        for identity in (0, 1):
            yaws = sorted(r.yaw for r in manifest.records if r.identity == identity)
            self.assertEqual(yaws, sorted(MULTI_VIEW_YAWS))
        self.assertTrue((self.tmp / "ds" / "manifest.json").exists())
        self.assertTrue((self.tmp / "ds" / "images" / "id001_yaw-90.ppm").exists())
        self.assertTrue((self.tmp / "ds" / "depth" / "id000_yaw+00.pgm").exists())

    def test_same_seed_same_bytes(self):
        a = generate_synthetic(self.tmp / "a", 2, 16, seed=3, yaws=(0, 45))
        b = generate_synthetic(self.tmp / "b", 2, 16, seed=3, yaws=(0, 45))
        for ra, rb in zip(a.records, b.records):
            self.assertEqual((a.root / ra.image).read_bytes(), (b.root / rb.image).read_bytes())
            self.assertEqual((a.root / ra.depth).read_bytes(), (b.root / rb.depth).read_bytes())
        self.assertEqual((a.root / "manifest.json").read_text(), (b.root / "manifest.json").read_text())

    def test_different_identities_differ(self):
        manifest = generate_synthetic(self.tmp / "ds", 2, 16, seed=1, yaws=(0,))
        first, second = load_batch(manifest, [0, 1])
        self.assertFalse(np.array_equal(first, second))

    def test_frontal_render_is_mirror_symmetric(self):
        camera = CameraModel(32)
        spec = HeadSpec.sample(np.random.default_rng(4))
        depth, albedo = head_maps(spec, camera)
        assert_array_equal(depth, depth[:, ::-1])
        with precision("float64"):
            rendered = render_head(depth, albedo, 0, camera, (0.4, 0.6, 0.0, 0.5))
        assert_array_equal(rendered.image, rendered.image[:, ::-1])

    def test_invalid_arguments(self):
        with self.assertRaises(ConfigurationError):
            generate_synthetic(self.tmp, 1, 16, seed=0)
        with self.assertRaises(ConfigurationError):
            generate_synthetic(self.tmp, 2, 18, seed=0)

    def test_head_spec_validation(self):
        spec = HeadSpec.sample(np.random.default_rng(0))
        with self.assertRaises(ConfigurationError):
            HeadSpec(**{**spec.__dict__, "radii": (0.5, -1.0, 0.3)}).validate()


# ----------------------- #
# Ground truth and stored depth
# ----------------------- #
class GroundTruthTests(SimpleTestCase):
    """
    Retained generator output:
      - canonical depth and albedo per identity, referenced from every record
      - no stored depth pixel saturates, at oblique and profile yaws too
      - uncovered pixels are flagged by the coverage mask
    """

    YAWS = (0, 60, -60, 90, -90)

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls.manifest = generate_synthetic(Path(cls._tmp.name) / "ds", 2, 64, seed=7, yaws=cls.YAWS)

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def test_truth_files_are_referenced(self):
        for record in self.manifest.records:
            for name in (record.truth_depth, record.truth_albedo, record.coverage):
                self.assertTrue((self.manifest.root / name).exists(), name)
        truths = {(r.identity, r.truth_depth, r.truth_albedo) for r in self.manifest.records}
        self.assertEqual(len(truths), 2)

    def test_truth_matches_the_generator(self):
        camera = CameraModel(64)
        child = np.random.SeedSequence(7).spawn(2)[1]
        depth, albedo = head_maps(HeadSpec.sample(np.random.default_rng(child), seed=1), camera, depth_max=1.1)
        record = next(r for r in self.manifest.records if r.identity == 1)
        stored_depth, stored_albedo = read_ground_truth(self.manifest, record)
        assert_allclose(stored_depth, depth, atol=0.2 / 65535)
        assert_allclose(stored_albedo, albedo, atol=1 / 510 + 1e-12)

    def test_canonical_depth_never_saturates(self):
        for record in self.manifest.records:
            codes = read_pgm16(self.manifest.root / record.truth_depth)
            self.assertLess(codes.max(), 65535)

    def test_rendered_depth_never_saturates(self):
        for record in self.manifest.records:
            codes = read_pgm16(self.manifest.root / record.depth)
            covered = read_pgm16(self.manifest.root / record.coverage) > 0
            self.assertTrue(covered.any(), record.depth)
            self.assertGreater(codes[covered].min(), 0, record.depth)
            self.assertLess(codes[covered].max(), 65535, record.depth)
            self.assertTrue(np.all(codes[~covered] == 0), record.depth)

    def test_oblique_depth_leaves_the_canonical_band(self):
        record = next(r for r in self.manifest.records if r.yaw == 60)
        depth, covered = read_view_depth(self.manifest, record)
        lo, hi = self.manifest.view_depth_range
        self.assertLess(np.nanmin(depth), 0.9)
        self.assertTrue(lo < np.nanmin(depth) and np.nanmax(depth) < hi)
        self.assertTrue(np.all(np.isnan(depth[~covered])))

    def test_manifest_keeps_view_range(self):
        loaded = DatasetManifest.load(self.manifest.root)
        self.assertEqual(loaded.view_depth_range, self.manifest.view_depth_range)
        self.assertEqual(loaded.records, self.manifest.records)


class HeadMapTests(SimpleTestCase):
    def test_relief_stays_inside_the_band(self):
        camera = CameraModel(64)
        for child in np.random.SeedSequence(7).spawn(20):
            depth, _ = head_maps(HeadSpec.sample(np.random.default_rng(child)), camera, depth_max=1.1)
            self.assertLessEqual(depth.max(), 1.0 + 0.95 * 0.1 + 1e-12)
            self.assertGreaterEqual(depth.min(), 1.0)
            assert_array_equal(depth, depth[:, ::-1])

    def test_view_depth_range_bounds(self):
        lo, hi = view_depth_range(CameraModel(64), (0.9, 1.1))
        self.assertAlmostEqual(hi - 1.0, np.hypot(1.0, 0.5) / 5.0)
        self.assertAlmostEqual(1.0 - lo, hi - 1.0)

    def test_uncovered_pixels_are_nan(self):
        camera = CameraModel(16)
        depth, albedo = head_maps(HeadSpec.sample(np.random.default_rng(3)), camera)
        with precision("float64"):
            rendered = render_head(depth, albedo, 90, camera, (0.4, 0.6, 0.0, 0.5))
        self.assertFalse(rendered.coverage.all())
        self.assertTrue(np.all(np.isnan(rendered.depth[~rendered.coverage])))
        self.assertTrue(np.all(np.isfinite(rendered.depth[rendered.coverage])))

    def test_records_without_truth(self):
        manifest = _manifest(2, (0,))
        with self.assertRaises(ArtifactIOError):
            read_ground_truth(manifest, manifest.records[0])
        with self.assertRaises(ArtifactIOError):
            read_view_depth(manifest, manifest.records[0])


class SplitTests(SimpleTestCase):
    def test_ninety_percent_of_ten(self):
        split = split_by_identity(_manifest(10), 0.9, seed=7)
        self.assertEqual(len(split.identities("train")), 9)
        self.assertEqual(len(split.identities("test")), 1)

    def test_half_of_two(self):
        split = split_by_identity(_manifest(2), 0.5, seed=0)
        self.assertEqual(len(split.identities("train")), 1)
        self.assertEqual(len(split.identities("test")), 1)

    def test_identity_disjoint_for_many_seeds(self):
        base = _manifest(7)
        for seed in range(25):
            split = split_by_identity(base, 0.7, seed)
            self.assertFalse(set(split.identities("train")) & set(split.identities("test")))
            for identity in range(7):
                tags = {r.split for r in split.records if r.identity == identity}
                self.assertEqual(len(tags), 1)

    def test_empty_side_rejected(self):
        with self.assertRaises(ConfigurationError):
            split_by_identity(_manifest(2), 0.99, seed=0)
        with self.assertRaises(ConfigurationError):
            split_by_identity(_manifest(2), 1.0, seed=0)


class FilterTests(SimpleTestCase):
    def test_single_view_keeps_one_yaw(self):
        manifest = _manifest(4, MULTI_VIEW_YAWS)
        frontal = filter_single_view(manifest, 0)
        self.assertEqual(len(frontal), len(manifest) // 13)
        self.assertEqual({r.yaw for r in filter_single_view(manifest, 90).records}, {90})

    def test_union_over_yaws_restores_manifest(self):
        manifest = _manifest(3, MULTI_VIEW_YAWS)
        union = [r for y in MULTI_VIEW_YAWS for r in filter_single_view(manifest, y).records]
        self.assertEqual(sorted(union, key=repr), sorted(manifest.records, key=repr))

    def test_absent_yaw(self):
        with self.assertRaises(EmptyResultError):
            filter_single_view(_manifest(2), 45)


class LoadBatchTests(SimpleTestCase):
    def setUp(self):
        self.tmp = Path(self.enterContext(tempfile.TemporaryDirectory()))
        self.rng = np.random.default_rng(0)

    def test_round_trip_and_duplicates(self):
        manifest = _manifest(2, (0,))
        manifest.root = self.tmp
        originals = self.rng.uniform(size=(2, 16, 16, 3))
        for record, image in zip(manifest.records, originals):
            write_ppm(self.tmp / record.image, image)
        batch = load_batch(manifest, [0, 1, 1])
        self.assertEqual(batch.shape, (3, 16, 16, 3))
        self.assertLessEqual(np.abs(batch[:2] - originals).max(), 1 / 510 + 1e-12)
        assert_array_equal(batch[1], batch[2])
        self.assertTrue(batch.min() >= 0 and batch.max() <= 1)

    def test_missing_file_names_the_path(self):
        manifest = _manifest(2, (0,))
        manifest.root = self.tmp
        with self.assertRaises(ArtifactIOError) as ctx:
            load_batch(manifest, [0])
        self.assertIn("id000_yaw+00.ppm", str(ctx.exception))

    def test_manifest_round_trip(self):
        manifest = split_by_identity(_manifest(4), 0.5, seed=1)
        manifest.root = self.tmp
        path = manifest.save()
        loaded = DatasetManifest.load(path)
        self.assertEqual(loaded.records, manifest.records)
        self.assertEqual(loaded.yaws, manifest.yaws)

    def test_corrupt_manifest(self):
        (self.tmp / "manifest.json").write_text("{not json")
        with self.assertRaises(ArtifactIOError):
            DatasetManifest.load(self.tmp)
