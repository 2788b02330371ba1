"""Finite-difference verification of every primitive, block and loss.

Each check builds a scalar objective from leaf tensors and compares
reverse-mode gradients against central differences. Checks run at
well-conditioned parameter magnitudes: at tiny initialization scales some
gradients fall below the double-precision noise floor of central differences
without being wrong. The stop-gradient factors of the matching loss are
frozen to constants (see ``pq_frozen_factors``), which is the objective the
detached loss actually differentiates.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    Tensor,
    absolute,
    add,
    concat,
    constant,
    conv2d_3x3,
    div,
    exp,
    expand0,
    finite_difference_check,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mul,
    neg,
    normalize_rows,
    relu,
    reshape,
    scaled_dot_attention,
    sigmoid,
    slice_axis,
    softmax_axis,
    sqrt,
    sub,
    sum_axis,
    transpose,
    tsum,
)
from .data.synthetic import (
    ObjectSpec,
    StuffSpec,
    generate_synthetic_sequence,
    make_class_table,
    render_sequence,
)
from .data.types import TubeAnnotation
from .losses import (
    LossWeights,
    Matching,
    instance_discrimination_loss,
    match_clip,
    pq_style_loss,
    pq_style_terms,
    temporal_consistency_loss,
    total_loss,
    tube_id_cross_entropy,
    video_semantic_loss,
)
from .losses.components import depth_loss, pq_frozen_factors
from .model import ModelConfig, init_memory, init_params, predict_tubes
from .model.blocks import axial_block_forward, global_block_forward, latent_block_forward
from .model.network import ClipForward, backbone_forward, depth_head_forward


def _scalarize(out, rng):
    r = constant(rng.normal(size=out.shape))
    return tsum(add(mul(out, r), mul(out, out)))


def _leaf(rng, shape, offset=0.0, positive=False):
    values = rng.normal(size=shape)
    if positive:
        values = np.abs(values) + 0.5
    elif offset:
        values = values + offset * np.sign(values + 1e-12)
    return Tensor(values, requires_grad=True)


def _recondition(params, seed: int, std: float = 0.4) -> None:
    """Redraw parameter values at O(1) scale so no gradient drowns in noise."""
    rng = np.random.default_rng(seed)
    for _, tensor in params.items():
        tensor.data[...] = rng.normal(0.0, std, size=tensor.shape)


def primitive_checks(seed: int = 0, eps: float = 1e-5) -> dict:
    rng = np.random.default_rng(seed)
    checks = {}

    a = _leaf(rng, (3, 4))
    b = _leaf(rng, (4,))
    checks["add_broadcast"] = finite_difference_check(
        lambda: _scalarize(add(a, b), np.random.default_rng(1)), [a, b], eps
    )
    c = _leaf(rng, (3, 1))
    d = _leaf(rng, (1, 5))
    checks["mul_broadcast"] = finite_difference_check(
        lambda: _scalarize(mul(c, d), np.random.default_rng(2)), [c, d], eps
    )
    e = _leaf(rng, (2, 3))
    f = _leaf(rng, (2, 3), positive=True)
    checks["sub"] = finite_difference_check(
        lambda: _scalarize(sub(e, f), np.random.default_rng(3)), [e, f], eps
    )
    checks["div"] = finite_difference_check(
        lambda: _scalarize(div(e, f), np.random.default_rng(4)), [e, f], eps
    )
    g = _leaf(rng, (6,), offset=0.3)
    checks["neg"] = finite_difference_check(lambda: tsum(mul(neg(g), neg(g))), [g], eps)
    checks["relu"] = finite_difference_check(
        lambda: _scalarize(relu(g), np.random.default_rng(5)), [g], eps
    )
    checks["abs"] = finite_difference_check(
        lambda: _scalarize(absolute(g), np.random.default_rng(6)), [g], eps
    )
    h = _leaf(rng, (5,))
    checks["exp"] = finite_difference_check(
        lambda: _scalarize(exp(h), np.random.default_rng(7)), [h], eps
    )
    i = _leaf(rng, (5,), positive=True)
    checks["log"] = finite_difference_check(
        lambda: _scalarize(log(i), np.random.default_rng(8)), [i], eps
    )
    checks["sqrt"] = finite_difference_check(
        lambda: _scalarize(sqrt(i), np.random.default_rng(9)), [i], eps
    )
    checks["sigmoid"] = finite_difference_check(
        lambda: _scalarize(sigmoid(h), np.random.default_rng(10)), [h], eps
    )

    m1 = _leaf(rng, (4, 3))
    m2 = _leaf(rng, (3, 5))
    checks["matmul"] = finite_difference_check(
        lambda: _scalarize(matmul(m1, m2), np.random.default_rng(11)), [m1, m2], eps
    )
    b1 = _leaf(rng, (2, 3, 4))
    b2 = _leaf(rng, (2, 4, 2))
    checks["matmul_batched"] = finite_difference_check(
        lambda: _scalarize(matmul(b1, b2), np.random.default_rng(12)), [b1, b2], eps
    )
    w = _leaf(rng, (4, 3))
    checks["matmul_mixed_rank"] = finite_difference_check(
        lambda: _scalarize(matmul(b1, w), np.random.default_rng(13)), [b1, w], eps
    )

    s = _leaf(rng, (3, 4))
    checks["sum"] = finite_difference_check(lambda: tsum(mul(s, s)), [s], eps)
    checks["sum_axis"] = finite_difference_check(
        lambda: _scalarize(sum_axis(s, 0), np.random.default_rng(14)), [s], eps
    )
    checks["sum_axis_keepdims"] = finite_difference_check(
        lambda: _scalarize(sum_axis(s, -1, keepdims=True), np.random.default_rng(15)), [s], eps
    )
    checks["reshape_transpose"] = finite_difference_check(
        lambda: _scalarize(transpose(reshape(s, (2, 2, 3)), (2, 0, 1)), np.random.default_rng(16)),
        [s],
        eps,
    )
    checks["slice"] = finite_difference_check(
        lambda: _scalarize(slice_axis(s, 1, 1, 3), np.random.default_rng(17)), [s], eps
    )
    t1 = _leaf(rng, (2, 3))
    t2 = _leaf(rng, (4, 3))
    checks["concat"] = finite_difference_check(
        lambda: _scalarize(concat([t1, t2], 0), np.random.default_rng(18)), [t1, t2], eps
    )
    checks["expand0"] = finite_difference_check(
        lambda: _scalarize(expand0(t1, 3), np.random.default_rng(19)), [t1], eps
    )

    sm = _leaf(rng, (3, 5))
    checks["softmax"] = finite_difference_check(
        lambda: _scalarize(softmax_axis(sm, 1), np.random.default_rng(20)), [sm], eps
    )
    checks["log_softmax"] = finite_difference_check(
        lambda: _scalarize(log_softmax(sm, 0), np.random.default_rng(21)), [sm], eps
    )

    x = _leaf(rng, (2, 3, 4))
    gain = _leaf(rng, (4,), positive=True)
    bias = _leaf(rng, (4,))
    checks["layer_norm"] = finite_difference_check(
        lambda: _scalarize(layer_norm(x, gain, bias), np.random.default_rng(22)),
        [x, gain, bias],
        eps,
    )

    ci = _leaf(rng, (2, 4, 4))
    ck = _leaf(rng, (3, 2, 3, 3))
    checks["conv2d_3x3"] = finite_difference_check(
        lambda: _scalarize(conv2d_3x3(ci, ck), np.random.default_rng(23)), [ci, ck], eps
    )

    q = _leaf(rng, (3, 4))
    k = _leaf(rng, (5, 4))
    v = _leaf(rng, (5, 4))
    checks["attention"] = finite_difference_check(
        lambda: _scalarize(scaled_dot_attention(q, k, v), np.random.default_rng(24)),
        [q, k, v],
        eps,
    )
    bq = _leaf(rng, (2, 3, 4))
    bk = _leaf(rng, (2, 5, 4))
    bv = _leaf(rng, (2, 5, 4))
    checks["attention_batched"] = finite_difference_check(
        lambda: _scalarize(scaled_dot_attention(bq, bk, bv), np.random.default_rng(25)),
        [bq, bk, bv],
        eps,
    )
    nr = _leaf(rng, (4, 3))
    checks["normalize_rows"] = finite_difference_check(
        lambda: _scalarize(normalize_rows(nr), np.random.default_rng(26)), [nr], eps
    )
    return checks


def _tiny_config(depth=True):
    return ModelConfig(
        channels=6,
        memory_size=5,
        latent_size=3,
        num_blocks=1,
        num_classes=2,
        stuff_count=1,
        d_max=20.0,
        clip_length=2,
        seed=0,
        depth_enabled=depth,
    )


def block_checks(seed: int = 0, eps: float = 1e-5) -> dict:
    cfg = _tiny_config()
    params = init_params(cfg)
    _recondition(params, seed=seed + 100)
    rng = np.random.default_rng(seed)
    checks = {}

    def block_params(prefix):
        return [t for name, t in params.items() if name.startswith(prefix)]

    x_f = _leaf(rng, (2, 3, 3, cfg.channels))
    checks["axial_block"] = finite_difference_check(
        lambda: _scalarize(
            axial_block_forward(params, "block0.axial", x_f), np.random.default_rng(30)
        ),
        [x_f] + block_params("block0.axial"),
        eps,
    )

    x_l = _leaf(rng, (2, cfg.latent_size, cfg.channels))

    def latent_obj():
        frames, latent = latent_block_forward(params, "block0.latent", x_f, x_l)
        return add(
            _scalarize(frames, np.random.default_rng(31)),
            _scalarize(latent, np.random.default_rng(32)),
        )

    checks["latent_block"] = finite_difference_check(
        latent_obj, [x_f, x_l] + block_params("block0.latent"), eps
    )

    x_v = _leaf(rng, (10, cfg.channels))
    x_m = _leaf(rng, (cfg.memory_size, cfg.channels))

    def global_obj():
        video, memory = global_block_forward(params, "block0.global", x_v, x_m)
        return add(
            _scalarize(video, np.random.default_rng(33)),
            _scalarize(memory, np.random.default_rng(34)),
        )

    checks["global_block"] = finite_difference_check(
        global_obj, [x_v, x_m] + block_params("block0.global"), eps
    )

    seq = generate_synthetic_sequence(
        seed=5, num_frames=2, height=4, width=4, num_things=1, num_stuff=1, d_max=cfg.d_max
    )
    clip, _ = seq.clips[0]
    backbone_params = [t for name, t in params.items() if name.startswith("backbone.")]
    checks["backbone"] = finite_difference_check(
        lambda: _scalarize(backbone_forward(params, clip), np.random.default_rng(35)),
        backbone_params,
        eps,
    )

    depth_params = [t for name, t in params.items() if name.startswith("head.depth.")]
    checks["depth_head"] = finite_difference_check(
        lambda: _scalarize(
            depth_head_forward(params, cfg, backbone_forward(params, clip)),
            np.random.default_rng(36),
        ),
        backbone_params + depth_params,
        eps,
    )
    return checks


def _fake_forward(leaves: dict, d_max: float) -> ClipForward:
    """Assemble a ClipForward from loss-facing leaf tensors."""
    n, t, h, w = leaves["tube_logits"].shape
    c = leaves["features"].shape[1]
    m_hat = softmax_axis(leaves["tube_logits"], axis=0)
    p = softmax_axis(leaves["class_logits"], axis=1)
    return ClipForward(
        x_v=reshape(leaves["features"], (t, h * w, c)),
        x_v_prime=leaves["features"],
        x_m=leaves["class_logits"],
        w=leaves["features"],
        p=p,
        tube_logits=leaves["tube_logits"],
        class_logits=leaves["class_logits"],
        m_hat=m_hat,
        semantic_logits=leaves["semantic_logits"],
        depth=mul(sigmoid(leaves["depth_raw"]), constant(d_max)),
        shape=(t, h, w),
    )


def loss_checks(seed: int = 0, eps: float = 1e-5) -> dict:
    """Gradient-check every loss component against leaf-level forward outputs."""
    cfg = _tiny_config()
    layout = init_memory(cfg)
    seq = generate_synthetic_sequence(
        seed=11, num_frames=2, height=5, width=5, num_things=1, num_stuff=1, d_max=cfg.d_max
    )
    _, ann = seq.clips[0]
    rng = np.random.default_rng(seed)
    n, d = cfg.memory_size, cfg.num_classes
    t, h, w = ann.label_map.shape
    c = cfg.channels

    leaves = {
        "tube_logits": _leaf(rng, (n, t, h, w)),
        "class_logits": _leaf(rng, (n, d + 1)),
        "features": _leaf(rng, (t * h * w, c)),
        "semantic_logits": _leaf(rng, (t, h, w, d)),
        "depth_raw": _leaf(rng, (t, h, w)),
    }
    leaf_list = list(leaves.values())
    base = _fake_forward(leaves, cfg.d_max)
    matching = match_clip(base, ann, seq.table, layout)
    frozen = pq_frozen_factors(base, ann, matching)
    checks = {}

    checks["pq_loss"] = finite_difference_check(
        lambda: pq_style_loss(
            _fake_forward(leaves, cfg.d_max), ann, matching, frozen_factors=frozen
        ),
        leaf_list,
        eps,
    )
    checks["tube_id_ce"] = finite_difference_check(
        lambda: tube_id_cross_entropy(_fake_forward(leaves, cfg.d_max), ann, matching),
        leaf_list,
        eps,
    )
    checks["semantic"] = finite_difference_check(
        lambda: video_semantic_loss(
            _fake_forward(leaves, cfg.d_max).semantic_logits, ann, seq.table
        ),
        leaf_list,
        eps,
    )
    checks["instance_disc"] = finite_difference_check(
        lambda: instance_discrimination_loss(
            _fake_forward(leaves, cfg.d_max).x_v_prime, ann, seed=7
        ),
        leaf_list,
        eps,
    )
    gt_depth = np.abs(np.random.default_rng(40).normal(8.0, 2.0, size=(t, h, w))) + 0.5
    checks["depth_loss"] = finite_difference_check(
        lambda: depth_loss(
            _fake_forward(leaves, cfg.d_max).depth, gt_depth, np.ones_like(gt_depth, dtype=bool)
        ),
        leaf_list,
        eps,
    )

    other = _leaf(np.random.default_rng(seed + 1), (n, t, h, w))
    checks["temporal"] = finite_difference_check(
        lambda: temporal_consistency_loss(leaves["tube_logits"], other),
        [leaves["tube_logits"], other],
        eps,
    )
    return checks


def full_model_check(eps: float = 1e-5) -> float:
    """Finite-difference the total objective of one training forward.

    Two overlapping clips of a moving scene, all loss components including
    the temporal term, differentiated with respect to every parameter.
    """
    cfg = _tiny_config()
    layout = init_memory(cfg)
    table = make_class_table(1, 1)
    thing = ObjectSpec(
        shape="rect", size=(2, 3), start=(1, 0), velocity=(1, 1),
        color=(200, 40, 40), class_id=0, track_id=1, depth=6.0,
    )
    band = StuffSpec(row_start=0, row_stop=6, color=(30, 160, 90), class_id=1, track_id=2, depth=18.0)
    seq = render_sequence([thing], [band], num_frames=3, height=6, width=6, table=table,
                          d_max=cfg.d_max, clip_length=2)
    (clip_a, ann_a), (clip_b, ann_b) = seq.clips[0], seq.clips[1]

    params = init_params(cfg)
    _recondition(params, seed=200, std=0.35)
    matching_a = match_clip(predict_tubes(params, cfg, clip_a), ann_a, table, layout)
    matching_b = match_clip(predict_tubes(params, cfg, clip_b), ann_b, table, layout)
    frozen_a = pq_frozen_factors(predict_tubes(params, cfg, clip_a), ann_a, matching_a)
    frozen_b = pq_frozen_factors(predict_tubes(params, cfg, clip_b), ann_b, matching_b)
    weights = LossWeights(depth=1.0)

    def objective():
        fa = predict_tubes(params, cfg, clip_a)
        fb = predict_tubes(params, cfg, clip_b)

        def side(forward, clip, ann, matching, frozen, seed):
            pos, negterm = pq_style_terms(forward, ann, matching, frozen_factors=frozen)
            return {
                "pq_pos": pos,
                "pq_neg": negterm,
                "tube_id_ce": tube_id_cross_entropy(forward, ann, matching),
                "semantic": video_semantic_loss(forward.semantic_logits, ann, table),
                "instance_disc": instance_discrimination_loss(forward.x_v_prime, ann, seed=seed),
                "depth": depth_loss(
                    forward.depth, clip.depth, np.ones_like(clip.depth, dtype=bool)
                ),
            }

        ca = side(fa, clip_a, ann_a, matching_a, frozen_a, 3)
        cb = side(fb, clip_b, ann_b, matching_b, frozen_b, 4)
        components = {name: mul(add(ca[name], cb[name]), constant(0.5)) for name in ca}
        components["temporal"] = temporal_consistency_loss(
            slice_axis(fa.tube_logits, 1, 1, 2), slice_axis(fb.tube_logits, 1, 0, 1)
        )
        objective_tensor, _ = total_loss(components, weights)
        return objective_tensor

    return finite_difference_check(objective, params.tensors(), eps)


def run_gradient_suite(eps: float = 1e-5) -> dict:
    """All named checks; the suite passes when max(values) < 1e-4."""
    results = {}
    for name, err in primitive_checks(eps=eps).items():
        results[f"primitive.{name}"] = err
    for name, err in block_checks(eps=eps).items():
        results[f"block.{name}"] = err
    for name, err in loss_checks(eps=eps).items():
        results[f"loss.{name}"] = err
    results["full_model"] = full_model_check(eps=eps)
    return results
