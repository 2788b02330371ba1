"""Model forward contracts: per-frame independence, heads, memory split, I/O."""

import numpy as np
import pytest

from tubeseg.autodiff import Tensor, constant, layer_norm, matmul
from tubeseg.data import VideoClip, make_class_table
from tubeseg.data.synthetic import generate_synthetic_sequence
from tubeseg.errors import CheckpointError, ConfigError, FormatError
from tubeseg.model import (
    ModelConfig,
    axial_block_forward,
    backbone_forward,
    depth_head_forward,
    global_block_forward,
    init_memory,
    init_params,
    latent_block_forward,
    load_config,
    load_params,
    predict_tubes,
    save_config,
    save_params,
)
from tubeseg.model.config import MemoryLayout


class TestBackbone:
    def test_output_shape(self, toy_params, toy_sequence, toy_config):
        clip, _ = toy_sequence.clips[0]
        feats = backbone_forward(toy_params, clip)
        assert feats.shape == (clip.num_frames, clip.height, clip.width, toy_config.channels)

    def test_frame_permutation_equivariance(self, toy_params, toy_sequence):
        clip, _ = toy_sequence.clips[0]
        flipped = VideoClip(frames=clip.frames[::-1].copy(), depth=None, d_max=clip.d_max)
        a = backbone_forward(toy_params, clip).data
        b = backbone_forward(toy_params, flipped).data
        np.testing.assert_array_equal(a[::-1], b)

    def test_zero_input_zero_bias_gives_zero(self, toy_config):
        params = init_params(toy_config)
        clip = VideoClip(frames=np.zeros((2, 4, 4, 3), dtype=np.uint8))
        out = backbone_forward(params, clip)
        np.testing.assert_array_equal(out.data, np.zeros_like(out.data))


class TestAxialBlock:
    def test_shape_preserved(self, toy_params, toy_config, rng):
        x = constant(rng.normal(size=(2, 5, 7, toy_config.channels)))
        out = axial_block_forward(toy_params, "block0.axial", x)
        assert out.shape == x.shape

    def test_single_pixel_is_value_path_residual(self, toy_params, toy_config, rng):
        """H=W=1: one-key softmax makes each attention the value projection."""
        x = constant(rng.normal(size=(3, 1, 1, toy_config.channels)))
        out = axial_block_forward(toy_params, "block0.axial", x)

        def value_path(t, prefix):
            normed = layer_norm(
                t, toy_params[f"{prefix}.ln.gain"], toy_params[f"{prefix}.ln.bias"]
            )
            return matmul(normed, toy_params[f"{prefix}.wv"])

        step1 = x.data + value_path(x, "block0.axial.h").data
        expected = step1 + value_path(constant(step1), "block0.axial.w").data
        np.testing.assert_allclose(out.data, expected, atol=1e-12)


class TestLatentBlock:
    def test_identical_frames_identical_updates(self, toy_params, toy_config, rng):
        frame = rng.normal(size=(1, 4, 4, toy_config.channels))
        x = constant(np.concatenate([frame, frame], axis=0))
        lat = constant(np.broadcast_to(
            rng.normal(size=(toy_config.latent_size, toy_config.channels)),
            (2, toy_config.latent_size, toy_config.channels),
        ).copy())
        frames_out, latent_out = latent_block_forward(toy_params, "block0.latent", x, lat)
        np.testing.assert_allclose(frames_out.data[0], frames_out.data[1], atol=1e-12)
        np.testing.assert_allclose(latent_out.data[0], latent_out.data[1], atol=1e-12)

    def test_single_latent_single_pixel_composition(self, rng):
        """L=1, one pixel: F2L adds a projection of the single latent row."""
        cfg = ModelConfig.toy(latent_size=1, num_classes=3, stuff_count=1)
        params = init_params(cfg)
        x = constant(rng.normal(size=(1, 1, 1, cfg.channels)))
        lat = constant(rng.normal(size=(1, 1, cfg.channels)))
        frames_out, latent_out = latent_block_forward(params, "block0.latent", x, lat)

        def attend_one(prefix, q_src, kv_src, q_norm, kv_norm):
            qn = layer_norm(q_src, params[f"{prefix}.{q_norm}.gain"], params[f"{prefix}.{q_norm}.bias"])
            kn = layer_norm(kv_src, params[f"{prefix}.{kv_norm}.gain"], params[f"{prefix}.{kv_norm}.bias"])
            # single key: softmax is 1, output = v = kn @ wv
            return matmul(kn, params[f"{prefix}.wv"]).data

        lat1 = lat.data + attend_one(
            "block0.latent.l2f", constant(lat.data), constant(x.data.reshape(1, 1, -1)),
            "ln_lat", "ln_frm",
        )
        lat2 = lat1 + attend_one(
            "block0.latent.l2l", constant(lat1), constant(lat1), "ln", "ln"
        )
        np.testing.assert_allclose(latent_out.data, lat2, atol=1e-12)
        pixel = x.data.reshape(1, 1, -1) + attend_one(
            "block0.latent.f2l", constant(x.data.reshape(1, 1, -1)), constant(lat2),
            "ln_frm", "ln_lat",
        )
        np.testing.assert_allclose(frames_out.data.reshape(1, 1, -1), pixel, atol=1e-12)


class TestGlobalBlock:
    def test_shapes_preserved(self, toy_params, toy_config, rng):
        x_v = constant(rng.normal(size=(24, toy_config.channels)))
        x_m = constant(rng.normal(size=(toy_config.memory_size, toy_config.channels)))
        v, m = global_block_forward(toy_params, "block0.global", x_v, x_m)
        assert v.shape == x_v.shape
        assert m.shape == x_m.shape

    def test_single_memory_slot(self, rng):
        cfg = ModelConfig.toy(memory_size=1, stuff_count=0, num_classes=3)
        params = init_params(cfg)
        x_v = constant(rng.normal(size=(6, cfg.channels)))
        x_m = constant(rng.normal(size=(1, cfg.channels)))
        v, m = global_block_forward(params, "block0.global", x_v, x_m)
        assert m.shape == (1, cfg.channels)
        assert np.isfinite(m.data).all() and np.isfinite(v.data).all()


class TestMemoryLayout:
    def test_kitti_like_allocation(self):
        cfg = ModelConfig(memory_size=128, num_classes=19, stuff_count=17)
        layout = init_memory(cfg)
        assert layout.thing_slots == range(0, 111)
        assert layout.stuff_slots == range(111, 128)

    def test_no_stuff_all_thing_slots(self):
        layout = init_memory(ModelConfig.toy(memory_size=6, stuff_count=0, num_classes=2))
        assert layout.thing_slots == range(0, 6)
        assert layout.stuff_slots == range(6, 6)

    def test_single_thing_slot_boundary(self):
        layout = init_memory(ModelConfig.toy(memory_size=3, stuff_count=2, num_classes=3))
        assert list(layout.thing_slots) == [0]

    def test_memory_must_exceed_stuff(self):
        with pytest.raises(ConfigError):
            ModelConfig.toy(memory_size=2, stuff_count=2, num_classes=3)

    def test_stuff_binding_is_stable_bijection(self):
        table = make_class_table(2, 3)
        layout = MemoryLayout(memory_size=8, stuff_count=3)
        slots = [layout.slot_for_stuff_class(c, table) for c in table.stuff_ids()]
        assert slots == [5, 6, 7]
        back = [layout.stuff_class_for_slot(s, table) for s in slots]
        assert back == list(table.stuff_ids())
        again = [layout.slot_for_stuff_class(c, table) for c in table.stuff_ids()]
        assert slots == again


class TestPredictTubes:
    def test_per_pixel_probability_sums(self, toy_params, toy_config, toy_sequence):
        clip, _ = toy_sequence.clips[0]
        forward = predict_tubes(toy_params, toy_config, clip)
        sums = forward.m_hat.data.sum(axis=0)
        assert np.abs(sums - 1.0).max() <= 1e-9
        assert np.abs(forward.p.data.sum(axis=1) - 1.0).max() <= 1e-9

    def test_single_slot_probability_one(self, toy_sequence):
        cfg = ModelConfig.toy(memory_size=1, stuff_count=0, num_classes=3)
        params = init_params(cfg)
        clip, _ = toy_sequence.clips[0]
        forward = predict_tubes(params, cfg, clip)
        np.testing.assert_allclose(forward.m_hat.data, 1.0, atol=1e-12)

    def test_identical_embeddings_uniform_masks(self, toy_config, toy_sequence):
        params = init_params(toy_config)
        # Collapse the segmentation head so every slot shares one embedding.
        params["head.seg.w1"].data[...] = 0.0
        params["head.seg.w2"].data[...] = 0.0
        params["head.seg.b2"].data[...] = 1.0
        clip, _ = toy_sequence.clips[0]
        forward = predict_tubes(params, toy_config, clip)
        np.testing.assert_allclose(
            forward.m_hat.data, 1.0 / toy_config.memory_size, atol=1e-12
        )

    def test_output_fields_shapes(self, toy_params, toy_config, toy_sequence):
        clip, _ = toy_sequence.clips[0]
        t, h, w = clip.num_frames, clip.height, clip.width
        n, d, c = toy_config.memory_size, toy_config.num_classes, toy_config.channels
        fwd = predict_tubes(toy_params, toy_config, clip)
        assert fwd.m_hat.shape == (n, t, h, w)
        assert fwd.tube_logits.shape == (n, t, h, w)
        assert fwd.p.shape == (n, d + 1)
        assert fwd.semantic_logits.shape == (t, h, w, d)
        assert fwd.w.shape == (n, c)
        assert fwd.x_v_prime.shape == (t * h * w, c)


class TestDepthHead:
    @pytest.fixture()
    def depth_setup(self, toy_sequence):
        cfg = ModelConfig.toy(num_classes=3, stuff_count=1, depth_enabled=True)
        return cfg, init_params(cfg), toy_sequence.clips[0][0]

    def test_range_strictly_inside(self, depth_setup):
        cfg, params, clip = depth_setup
        forward = predict_tubes(params, cfg, clip)
        assert (forward.depth.data > 0).all()
        assert (forward.depth.data < cfg.d_max).all()

    def test_zero_preactivation_gives_half_range(self, depth_setup):
        cfg, params, clip = depth_setup
        for name in ("head.depth.conv0.kernel", "head.depth.conv0.bias",
                     "head.depth.conv1.kernel", "head.depth.conv1.bias"):
            params[name].data[...] = 0.0
        feats = backbone_forward(params, clip)
        depth = depth_head_forward(params, cfg, feats)
        np.testing.assert_allclose(depth.data, cfg.d_max / 2.0, atol=1e-12)

    def test_large_negative_preactivation_stays_positive(self, depth_setup):
        cfg, params, clip = depth_setup
        params["head.depth.conv1.kernel"].data[...] = 0.0
        params["head.depth.conv1.bias"].data[...] = -50.0
        feats = backbone_forward(params, clip)
        depth = depth_head_forward(params, cfg, feats)
        assert (depth.data > 0).all()
        assert depth.data.max() < 1e-12

    def test_disabled_head_rejected(self, toy_params, toy_config, toy_sequence):
        clip, _ = toy_sequence.clips[0]
        feats = backbone_forward(toy_params, clip)
        with pytest.raises(ConfigError):
            depth_head_forward(toy_params, toy_config, feats)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, toy_params, tmp_path):
        path = tmp_path / "model.tprm"
        save_params(toy_params, path)
        loaded = load_params(path)
        assert loaded.names() == toy_params.names()
        for name in toy_params.names():
            np.testing.assert_array_equal(loaded[name].data, toy_params[name].data)

    def test_shape_mismatch_names_parameter(self, toy_params, tmp_path):
        path = tmp_path / "model.tprm"
        save_params(toy_params, path)
        other = init_params(ModelConfig.toy(channels=8, num_classes=3, stuff_count=1))
        with pytest.raises(CheckpointError) as err:
            load_params(path, expected=other)
        assert "backbone.conv0.kernel" in str(err.value)

    def test_corrupted_length_field(self, toy_params, tmp_path):
        path = tmp_path / "model.tprm"
        save_params(toy_params, path)
        blob = bytearray(path.read_bytes())
        blob[8:12] = (99999).to_bytes(4, "little")  # entry count
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_params(path)

    def test_init_deterministic(self, toy_config):
        a, b = init_params(toy_config), init_params(toy_config)
        for name in a.names():
            np.testing.assert_array_equal(a[name].data, b[name].data)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        cfg = ModelConfig.toy(num_classes=5, stuff_count=2, depth_enabled=True)
        path = tmp_path / "model.cfg"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "model.cfg"
        path.write_text("C=8\nbogus=1\n")
        with pytest.raises(ConfigError):
            load_config(path)
