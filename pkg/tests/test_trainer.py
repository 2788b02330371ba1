"""Training loop: updates, reproducibility, temporal pairing, evaluation."""

import numpy as np
import pytest

from tubeseg.autodiff import Tape
from tubeseg.data import generate_synthetic_sequence, save_class_table, save_clip, save_manifest
from tubeseg.data.types import DatasetManifest
from tubeseg.errors import ConfigError
from tubeseg.losses import LossWeights, total_loss
from tubeseg.model import ModelConfig, init_memory, init_params
from tubeseg.trainer import (
    TrainConfig,
    TrainItem,
    _clip_losses,
    build_items,
    evaluate_checkpoint,
    make_temporal_pair,
    train_loop,
    train_step,
)


@pytest.fixture()
def scene():
    seq = generate_synthetic_sequence(
        seed=7, num_frames=2, height=12, width=12, num_things=2, num_stuff=1,
        with_depth=False,
    )
    clip, ann = seq.clips[0]
    return seq, [TrainItem(clip=clip, ann=ann)]


def _write_manifest(tmp_path, seq):
    paths = []
    for i, (clip, ann) in enumerate(seq.clips):
        name = f"clip_{i:03d}.tseg"
        save_clip(clip, ann, tmp_path / name)
        paths.append(name)
    save_class_table(seq.table, tmp_path / "classes.txt")
    manifest = DatasetManifest(
        clip_paths=paths, class_table_path="classes.txt", clip_length=seq.clip_length
    )
    save_manifest(manifest, tmp_path / "manifest.txt")
    return tmp_path / "manifest.txt"


class TestTrainStep:
    def test_zero_learning_rate_keeps_params_bitwise(self, scene, toy_config):
        seq, items = scene
        params = init_params(toy_config)
        before = {name: params[name].data.copy() for name in params.names()}
        train_step(params, items, toy_config, TrainConfig(learning_rate=0.0), seq.table)
        for name in params.names():
            np.testing.assert_array_equal(params[name].data, before[name])

    def test_loss_decreases_over_first_50_steps(self, scene, toy_config):
        """At lr=1e-2 the total decreases; small fluctuation allowed after step 5."""
        seq, items = scene
        params = init_params(toy_config)
        cfg = TrainConfig(steps=50, learning_rate=1e-2, seed=0)
        reports = train_loop(params, items, toy_config, cfg, seq.table)
        totals = [r.total for r in reports]
        assert totals[5] < totals[0]
        for i in range(5, 49):
            assert totals[i + 1] <= totals[i] * 1.05
        assert totals[-1] < totals[5]

    def test_bitwise_reproducibility(self, scene, toy_config):
        seq, items = scene

        def run():
            params = init_params(toy_config)
            train_loop(params, items, toy_config,
                       TrainConfig(steps=5, learning_rate=0.05, seed=3), seq.table)
            return {name: params[name].data.copy() for name in params.names()}

        a, b = run(), run()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_temporal_loss_zero_on_duplicated_clip(self, toy_config):
        seq = generate_synthetic_sequence(
            seed=7, num_frames=2, height=12, width=12, num_things=2, num_stuff=1,
            with_depth=False,
        )
        clip, ann = seq.clips[0]
        # Static pair: both sides are the same clip at the same offset.
        item = TrainItem(clip=clip, ann=ann, pair_clip=clip, pair_ann=ann)
        params = init_params(toy_config)
        cfg = TrainConfig(steps=3, learning_rate=0.01, seed=0, temporal_enabled=True)

        # The trainer compares shifted slices; identical logits only arise for a
        # static scene, so isolate the loss instead: same forward on both sides.
        from tubeseg.losses import temporal_consistency_loss
        from tubeseg.model import predict_tubes

        for _ in range(3):
            fwd_a = predict_tubes(params, toy_config, clip)
            fwd_b = predict_tubes(params, toy_config, clip)
            loss = temporal_consistency_loss(fwd_a.tube_logits, fwd_b.tube_logits)
            assert float(loss.data.reshape(())) == 0.0
            train_step(params, [TrainItem(clip=clip, ann=ann)], toy_config,
                       TrainConfig(steps=1, learning_rate=0.05, seed=0), seq.table)

    def test_temporal_pair_training_runs(self, toy_config):
        seq = generate_synthetic_sequence(
            seed=9, num_frames=3, height=10, width=10, num_things=1, num_stuff=1,
            clip_length=2, with_depth=False,
        )
        cfg = TrainConfig(steps=2, learning_rate=0.01, seed=0, temporal_enabled=True)
        items = build_items(seq.clips, cfg, seq.table)
        assert len(items) == 1
        params = init_params(toy_config)
        reports = train_loop(params, items, toy_config, cfg, seq.table)
        assert "temporal" in reports[0].components
        assert reports[0].components["temporal"] >= 0.0

    def test_step_gradient_is_sum_of_component_gradients(self, scene, toy_config):
        """Backward of the weighted sum equals the weighted sum of backwards."""
        seq, items = scene
        item = items[0]
        layout = init_memory(toy_config)
        params = init_params(toy_config)

        with Tape() as tape:
            _, components = _clip_losses(
                params, toy_config, seq.table, layout, item.clip, item.ann, 0
            )
            objective, _ = total_loss(components, LossWeights())
            tape.backward(objective)
        combined = {n: params[n].grad.copy() for n in params.names() if params[n].grad is not None}

        weights = LossWeights().per_component()
        summed = {}
        for name, _ in components.items():
            params.zero_grad()
            with Tape() as tape:
                _, comps = _clip_losses(
                    params, toy_config, seq.table, layout, item.clip, item.ann, 0
                )
                from tubeseg.autodiff import constant, mul, reshape

                tape.backward(mul(reshape(comps[name], ()), constant(weights[name])))
            for pname in params.names():
                grad = params[pname].grad
                if grad is None:
                    continue
                summed[pname] = summed.get(pname, 0) + grad
        for pname, grad in combined.items():
            np.testing.assert_allclose(grad, summed[pname], rtol=1e-9, atol=1e-12)

    def test_clip_paste_training_runs(self, toy_config):
        seq = generate_synthetic_sequence(
            seed=13, num_frames=2, height=12, width=12, num_things=2, num_stuff=1,
            with_depth=False,
        )
        seq2 = generate_synthetic_sequence(
            seed=14, num_frames=2, height=12, width=12, num_things=2, num_stuff=1,
            with_depth=False,
        )
        items = [
            TrainItem(clip=c, ann=a)
            for c, a in [seq.clips[0], seq2.clips[0]]
        ]
        params = init_params(toy_config)
        cfg = TrainConfig(steps=2, learning_rate=0.01, seed=0, clip_paste_enabled=True)
        reports = train_loop(params, items, toy_config, cfg, seq.table)
        assert all(np.isfinite(r.total) for r in reports)

    def test_temporal_requires_clip_length_two(self):
        with pytest.raises(ConfigError):
            TrainConfig(clip_length=1, temporal_enabled=True)


class TestTemporalPair:
    def test_window_cut(self):
        seq = generate_synthetic_sequence(
            seed=5, num_frames=3, height=8, width=8, num_things=1, num_stuff=1
        )
        clip, ann = seq.clips[0]
        item = make_temporal_pair(clip, ann)
        assert item.clip.num_frames == 2
        assert item.pair_clip.num_frames == 2
        np.testing.assert_array_equal(item.clip.frames[1], item.pair_clip.frames[0])


class TestEvaluateCheckpoint:
    def test_oracle_bypass_is_perfect(self, tmp_path, toy_config):
        seq = generate_synthetic_sequence(
            seed=21, num_frames=4, height=12, width=12, num_things=2, num_stuff=1,
            clip_length=2,
        )
        manifest = _write_manifest(tmp_path, seq)
        params = init_params(toy_config)
        report = evaluate_checkpoint(params, manifest, toy_config, oracle=True)
        assert report.stq == 1.0
        assert report.vpq == 1.0

    def test_untrained_params_metrics_in_range(self, tmp_path, toy_config):
        seq = generate_synthetic_sequence(
            seed=22, num_frames=3, height=10, width=10, num_things=1, num_stuff=1,
            clip_length=2,
        )
        manifest = _write_manifest(tmp_path, seq)
        params = init_params(toy_config)
        report = evaluate_checkpoint(params, manifest, toy_config)
        for value in (report.sq, report.aq, report.stq, report.vpq):
            assert 0.0 <= value <= 1.0
