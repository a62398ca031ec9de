import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from marrprobe.exceptions import ConfigurationError, ContractError
from numerics.tensor import DTensor, precision
from wint.config import preset
from wint.encoder import WinTEncoder
from wint.layers import (
    Attention,
    PatchEmbed,
    PatchMerge,
    WinTBlock,
    harvest_probes,
    insert_probes,
    window_merge,
    window_partition,
)


def _identity_block(block: WinTBlock) -> WinTBlock:
    for p in (block.attn.proj.weight, block.attn.proj.bias, block.mlp.fc2.weight, block.mlp.fc2.bias):
        p.data[...] = 0.0
    return block


class PresetTests(SimpleTestCase):
    def test_paper_preset_matches_stage_table(self):
        config = preset("paper")
        self.assertEqual([s.blocks for s in config.stages], [2, 2, 6, 2])
        self.assertEqual([config.window_count(i) for i in range(4)], [64, 16, 4, 1])
        self.assertEqual([s.probe_count for s in config.stages], [64, 16, 4, 6])
        self.assertEqual(config.levels(), {1: "low", 2: "mid", 3: "high"})

    def test_probe_bottom_adds_bottom_level(self):
        config = preset("desk", probe_bottom=True)
        self.assertEqual(config.levels(), {0: "bottom", 1: "low", 2: "mid", 3: "high"})

    def test_tiny_preset_probes_every_stage(self):
        config = preset("tiny")
        self.assertEqual(config.levels(), {0: "low", 1: "mid", 2: "high"})
        self.assertTrue(all(config.replicates(i) for i in range(3)))

    def test_full_is_another_name_for_paper(self):
        self.assertEqual(preset("full"), preset("paper"))
        self.assertEqual(preset("full").preset, "paper")

    def test_unknown_preset(self):
        with self.assertRaises(ConfigurationError):
            preset("huge")


class WindowTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_full_scale_partition(self):
        windows = window_partition(DTensor(np.zeros((1, 56, 56, 1))), 7)
        self.assertEqual(windows.tokens.shape, (1, 64, 49, 1))

    def test_single_window(self):
        windows = window_partition(DTensor(np.zeros((1, 4, 4, 2))), 4)
        self.assertEqual(windows.tokens.shape, (1, 1, 16, 2))

    def test_row_major_window_order(self):
        grid = np.arange(16.0).reshape(1, 4, 4, 1)
        windows = window_partition(DTensor(grid), 2).tokens.data[0, :, :, 0]
        assert_array_equal(windows[1], [2, 3, 6, 7])
        assert_array_equal(windows[2], [8, 9, 12, 13])

    def test_partition_round_trip_is_bitwise(self):
        grid = self.rng.normal(size=(2, 8, 8, 3))
        back = window_merge(window_partition(DTensor(grid), 4))
        self.assertEqual(back.data.tobytes(), DTensor(grid).data.tobytes())

    def test_indivisible_window(self):
        with self.assertRaises(ConfigurationError):
            window_partition(DTensor(np.zeros((1, 6, 6, 1))), 4)

    def test_probe_slot_contracts(self):
        windows = window_partition(DTensor(np.zeros((1, 8, 8, 4))), 2)
        probed = insert_probes(windows, DTensor(np.ones(4)))
        self.assertEqual(probed.tokens.shape, (1, 16, 5, 4))
        with self.assertRaises(ContractError):
            insert_probes(probed, DTensor(np.ones(4)))
        with self.assertRaises(ContractError):
            harvest_probes(windows)


class LayerTests(SimpleTestCase):
    def setUp(self):
        self.enterContext(precision("float64"))
        self.rng = np.random.default_rng(1)

    def test_patch_embed_grid_sides(self):
        self.assertEqual(PatchEmbed(self.rng, 224, 8).grid, 56)
        embed = PatchEmbed(self.rng, 64, 8)
        self.assertEqual(embed(DTensor(self.rng.uniform(size=(1, 64, 64, 3)))).shape, (1, 16, 16, 8))

    def test_patch_embed_zero_image(self):
        embed = PatchEmbed(self.rng, 16, 8)
        out = embed(DTensor(np.zeros((1, 16, 16, 3)))).data[0]
        assert_array_equal(out, embed.proj.bias.data + embed.pos.data)

    def test_patch_embed_rejects_indivisible_size(self):
        with self.assertRaises(ConfigurationError):
            PatchEmbed(self.rng, 30, 8)

    def test_attention_rows_sum_to_one(self):
        attn = Attention(self.rng, 64)
        attn(DTensor(self.rng.normal(size=(3, 5, 64))))
        self.assertEqual(attn.heads, 2)
        assert_allclose(attn.last_weights.sum(axis=-1), 1.0, atol=1e-6)

    def test_zero_output_projection_leaves_mlp_path(self):
        block = WinTBlock(self.rng, 16)
        block.attn.proj.weight.data[...] = 0.0
        block.attn.proj.bias.data[...] = 0.0
        x = DTensor(self.rng.normal(size=(2, 5, 16)))
        expected = x.data + block.mlp(block.norm2(x)).data
        assert_allclose(block(x).data, expected, atol=1e-12)

    def test_single_head_attention_scalar_oracle(self):
        attn = Attention(self.rng, 4)
        x = self.rng.normal(size=(1, 3, 4))
        out = attn(DTensor(x)).data[0]
        wq, wk, wv = np.split(attn.qkv.weight.data, 3, axis=1)
        bq, bk, bv = np.split(attn.qkv.bias.data, 3)
        q, k, v = x[0] @ wq + bq, x[0] @ wk + bk, x[0] @ wv + bv
        expected = np.zeros((3, 4))
        for i in range(3):
            scores = [sum(q[i, c] * k[j, c] for c in range(4)) / 2.0 for j in range(3)]
            e = [np.exp(s - max(scores)) for s in scores]
            for j in range(3):
                expected[i] += e[j] / sum(e) * v[j]
        expected = expected @ attn.proj.weight.data + attn.proj.bias.data
        assert_allclose(out, expected, atol=1e-10)

    def test_block_parameter_count_formula(self):
        for dim in (16, 32, 96):
            block = WinTBlock(self.rng, dim)
            self.assertEqual(block.num_parameters(), WinTBlock.expected_parameters(dim))

    def test_patch_merge_shapes(self):
        merge = PatchMerge(self.rng, 32)
        self.assertEqual(merge(DTensor(np.zeros((1, 16, 16, 32)))).shape, (1, 8, 8, 64))
        with self.assertRaises(ConfigurationError):
            merge(DTensor(np.zeros((1, 5, 5, 32))))

    def test_patch_merge_permutation_projection(self):
        merge = PatchMerge(self.rng, 2)
        perm = np.zeros((8, 4))
        for out_c, in_c in enumerate((7, 0, 5, 2)):
            perm[in_c, out_c] = 1.0
        merge.reduction.weight.data[...] = perm
        grid = self.rng.normal(size=(1, 2, 2, 2))
        concatenated = np.concatenate([grid[0, 0, 0], grid[0, 1, 0], grid[0, 0, 1], grid[0, 1, 1]])
        assert_array_equal(merge(DTensor(grid)).data[0, 0, 0], concatenated[[7, 0, 5, 2]])

    def test_identity_blocks_return_probe_vector(self):
        windows = window_partition(DTensor(self.rng.normal(size=(1, 4, 4, 8))), 2)
        seed = self.rng.normal(size=8)
        probed = insert_probes(windows, DTensor(seed))
        block = _identity_block(WinTBlock(self.rng, 8))
        probed.tokens = block(probed.tokens.reshape(4, 5, 8)).reshape(1, 4, 5, 8)
        probes, visual = harvest_probes(probed)
        assert_array_equal(probes.data[0], np.tile(seed, (4, 1)))
        self.assertFalse(visual.has_probe)


class EncodeTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(2)

    def test_desk_probe_shapes(self):
        encoder = WinTEncoder(preset("desk"), np.random.default_rng(0))
        out = encoder.encode(DTensor(self.rng.uniform(size=(1, 64, 64, 3))))
        self.assertEqual(
            {k: v.shape for k, v in out.probes.items()},
            {"low": (1, 16, 64), "mid": (1, 4, 128), "high": (1, 1, 256)},
        )
        self.assertEqual(out.grid.shape, (1, 2, 2, 256))

    def test_paper_probe_shapes(self):
        encoder = WinTEncoder(preset("paper"), np.random.default_rng(0))
        out = encoder.encode(DTensor(self.rng.uniform(size=(1, 224, 224, 3))))
        self.assertEqual(
            {k: v.shape for k, v in out.probes.items()},
            {"low": (1, 16, 192), "mid": (1, 4, 384), "high": (1, 1, 768)},
        )

    def test_identical_images_identical_probes(self):
        encoder = WinTEncoder(preset("tiny"), np.random.default_rng(0))
        image = self.rng.uniform(size=(1, 32, 32, 3))
        a = encoder.encode(DTensor(np.concatenate([image, image])))
        for level, tokens in a.probes.items():
            self.assertEqual(tokens.data[0].tobytes(), tokens.data[1].tobytes(), level)

    def test_wrong_image_side(self):
        encoder = WinTEncoder(preset("tiny"), np.random.default_rng(0))
        with self.assertRaises(ConfigurationError):
            encoder.encode(DTensor(np.zeros((1, 64, 64, 3))))

    def test_zero_seed_probes_diverge_across_windows(self):
        encoder = WinTEncoder(preset("desk"), np.random.default_rng(0))
        self.assertTrue(np.all(encoder.stages[1].probe_seed.data == 0))
        out = encoder.encode(DTensor(self.rng.uniform(size=(1, 64, 64, 3))))
        low = out.probes["low"].data[0]
        self.assertGreater(np.abs(low[0] - low[5]).max(), 1e-6)

    def test_window_locality_at_first_stage(self):
        encoder = WinTEncoder(preset("desk"), np.random.default_rng(0))
        image = self.rng.uniform(size=(1, 64, 64, 3))
        # window 0 of stage 1 covers tokens [0:4, 0:4] -> pixels [0:16, 0:16]
        masked = np.zeros_like(image)
        masked[:, :16, :16] = image[:, :16, :16]
        full = encoder.encode(DTensor(image)).stage_grids[0].data[0, :4, :4]
        local = encoder.encode(DTensor(masked)).stage_grids[0].data[0, :4, :4]
        assert_allclose(full, local, rtol=0, atol=1e-6)
