"""Clip-paste: validity, occlusion handling, pixel conservation, determinism."""

import numpy as np
import pytest

from tubeseg.augment import PasteSpec, clip_paste, draw_paste_spec
from tubeseg.data import (
    TubeAnnotation,
    TubeEntry,
    VideoClip,
    generate_synthetic_sequence,
    validate_annotation,
)
from tubeseg.errors import AugmentationError


def _scene(seed, **kw):
    defaults = dict(num_frames=2, height=12, width=12, num_things=2, num_stuff=1)
    defaults.update(kw)
    return generate_synthetic_sequence(seed=seed, **defaults)


def _spec(source, target, tube_ids, apply=True):
    return PasteSpec(
        source_clip=source[0],
        source_ann=source[1],
        target_clip=target[0],
        target_ann=target[1],
        selected_tube_ids=tube_ids,
        apply=apply,
    )


class TestClipPaste:
    def test_apply_false_is_identity(self):
        src = _scene(1).clips[0]
        tgt = _scene(2).clips[0]
        clip, ann = clip_paste(_spec(src, tgt, [1], apply=False))
        assert clip.frames.tobytes() == tgt[0].frames.tobytes()
        assert ann.label_map.tobytes() == tgt[1].label_map.tobytes()
        assert ann.tubes == tgt[1].tubes

    def test_paste_onto_void_target(self):
        src = _scene(3).clips[0]
        shape = src[0].frames.shape
        void_clip = VideoClip(
            frames=np.zeros(shape, dtype=np.uint8),
            depth=np.full(shape[:3], 1.0),
            d_max=src[0].d_max,
        )
        void_ann = TubeAnnotation(label_map=np.zeros(shape[:3], dtype=np.uint16), tubes=[])
        selected = [t.tube_id for t in src[1].tubes]
        clip, ann = clip_paste(_spec(src, (void_clip, void_ann), selected))
        assert len(ann.tubes) == len(selected)
        for tube in src[1].tubes:
            src_mask = src[1].label_map == tube.tube_id
            match = [t for t in ann.tubes if t.class_id == tube.class_id and
                     (ann.label_map > 0)[src_mask].all()]
            assert match
        assert ((ann.label_map > 0) == (src[1].label_map > 0)).all()

    def test_full_occlusion_deletes_target_tube(self):
        """A pasted rectangle covering a smaller thing removes it entirely."""
        from tubeseg.data.synthetic import ObjectSpec, StuffSpec, make_class_table, render_sequence

        table = make_class_table(2, 1)
        big = ObjectSpec("rect", (6, 6), (2, 2), (0, 0), (200, 0, 0), 0, 1, 5.0)
        small = ObjectSpec("rect", (2, 2), (3, 3), (0, 0), (0, 200, 0), 1, 1, 5.0)
        band = StuffSpec(0, 10, (9, 9, 90), 2, 2, 18.0)
        src = render_sequence([big], [band], 2, 10, 10, table, clip_length=2).clips[0]
        tgt = render_sequence([small], [band], 2, 10, 10, table, clip_length=2).clips[0]

        clip, ann = clip_paste(_spec(src, tgt, [1]))
        classes = [t.class_id for t in ann.tubes]
        assert 1 not in classes  # small thing fully covered
        pasted = [t for t in ann.tubes if t.class_id == 0]
        assert len(pasted) == 1
        assert (ann.label_map == pasted[0].tube_id).sum() == 2 * 36

    def test_pixel_conservation_law(self):
        src = _scene(5).clips[0]
        tgt = _scene(6).clips[0]
        selected = [src[1].tubes[0].tube_id]
        support = np.isin(src[1].label_map, selected)
        clip, ann = clip_paste(_spec(src, tgt, selected))
        target_labeled = tgt[1].label_map > 0
        expected = (target_labeled & ~support).sum() + support.sum()
        assert (ann.label_map > 0).sum() == expected

    def test_stuff_replacement_keeps_uniqueness(self):
        src = _scene(7).clips[0]
        tgt = _scene(8).clips[0]
        stuff_ids = [t.tube_id for t in src[1].tubes if not t.is_thing]
        clip, ann = clip_paste(_spec(src, tgt, stuff_ids))
        assert validate_annotation(ann, _scene(7).table) == []
        stuff_classes = [t.class_id for t in ann.tubes if not t.is_thing]
        assert len(stuff_classes) == len(set(stuff_classes))

    @pytest.mark.parametrize("seed", range(50))
    def test_seeded_paste_validity(self, seed):
        table = _scene(100 + seed).table
        src = _scene(100 + seed).clips[0]
        tgt = _scene(200 + seed).clips[0]
        spec = draw_paste_spec(src, tgt, seed=seed)
        clip, ann = clip_paste(spec)
        assert validate_annotation(ann, table) == []
        support = np.isin(src[1].label_map, spec.selected_tube_ids) if spec.apply else \
            np.zeros_like(src[1].label_map, dtype=bool)
        expected = ((tgt[1].label_map > 0) & ~support).sum() + support.sum()
        assert (ann.label_map > 0).sum() == expected

    def test_determinism_per_seed(self):
        src = _scene(9).clips[0]
        tgt = _scene(10).clips[0]
        a = clip_paste(draw_paste_spec(src, tgt, seed=4))
        b = clip_paste(draw_paste_spec(src, tgt, seed=4))
        assert a[0].frames.tobytes() == b[0].frames.tobytes()
        assert a[1].label_map.tobytes() == b[1].label_map.tobytes()

    def test_shape_mismatch_rejected(self):
        src = _scene(11).clips[0]
        tgt = _scene(12, height=10, width=10).clips[0]
        with pytest.raises(AugmentationError):
            clip_paste(_spec(src, tgt, [1]))

    def test_depth_presence_mismatch_rejected(self):
        src = _scene(13).clips[0]
        seq = _scene(14, with_depth=False)
        with pytest.raises(AugmentationError):
            clip_paste(_spec(src, seq.clips[0], [1]))

    def test_unknown_selected_tube_rejected(self):
        src = _scene(15).clips[0]
        tgt = _scene(16).clips[0]
        with pytest.raises(AugmentationError):
            clip_paste(_spec(src, tgt, [99]))
