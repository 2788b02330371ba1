"""Full network: backbone, hierarchical block stack, output heads.

The clip forward produces N soft tubes via a dot-product between decoded
pixel features and per-slot tube embeddings, softmax-normalized over slots at
every pixel, together with per-slot class distributions (with a trailing
"none" column), shared semantic logits, and an optional depth map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import (
    Tensor,
    add,
    constant,
    conv2d_3x3,
    expand0,
    matmul,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax_axis,
    stack0,
    swap_last2,
    transpose,
)
from ..data.types import VideoClip
from ..errors import ConfigError, DimensionError
from .blocks import axial_block_forward, global_block_forward, latent_block_forward
from .config import ModelConfig
from .params import Parameters


@dataclass
class ClipForward:
    """Everything the losses and inference consume from one clip forward."""

    x_v: Tensor  # (T,HW,C) backbone pixel features
    x_v_prime: Tensor  # (THW,C) decoded pixel features
    x_m: Tensor  # (N,C) refined global memory
    w: Tensor  # (N,C) tube embeddings
    p: Tensor  # (N,D+1) class distributions, last column is "none"
    tube_logits: Tensor  # (N,T,H,W) pre-softmax tube scores
    class_logits: Tensor  # (N,D+1) pre-softmax class scores
    m_hat: Tensor  # (N,T,H,W) soft tubes, softmax over N per pixel
    semantic_logits: Tensor  # (T,H,W,D)
    depth: Tensor | None  # (T,H,W) in (0, d_max)
    shape: tuple  # (T,H,W)


def _frame_stack(clip: VideoClip) -> list:
    """Constant (3,H,W) tensors in [0,1], one per frame."""
    scaled = clip.frames.astype(np.float64) / 255.0
    return [constant(np.moveaxis(scaled[t], -1, 0)) for t in range(clip.num_frames)]


def _conv_layer(params: Parameters, prefix: str, x: Tensor) -> Tensor:
    c_out = params[f"{prefix}.kernel"].shape[0]
    y = conv2d_3x3(x, params[f"{prefix}.kernel"])
    return add(y, reshape(params[f"{prefix}.bias"], (c_out, 1, 1)))


def backbone_forward(params: Parameters, clip: VideoClip) -> Tensor:
    """Per-frame conv features (T,H,W,C); frames never mix."""
    feats = []
    for frame in _frame_stack(clip):
        h = relu(_conv_layer(params, "backbone.conv0", frame))
        h = relu(_conv_layer(params, "backbone.conv1", h))
        h = relu(_conv_layer(params, "backbone.conv2", h))
        feats.append(h)
    stacked = stack0(feats)  # (T,C,H,W)
    return transpose(stacked, (0, 2, 3, 1))


def depth_head_forward(params: Parameters, config: ModelConfig, backbone_feats: Tensor) -> Tensor:
    """Depth in (0, d_max) from backbone features via sigmoid scaling."""
    if not config.depth_enabled:
        raise ConfigError("depth head invoked but depth_enabled is false")
    t, h, w, c = backbone_feats.shape
    per_frame = transpose(backbone_feats, (0, 3, 1, 2))  # (T,C,H,W)
    outs = []
    for i in range(t):
        x = reshape(slice_frame(per_frame, i), (c, h, w))
        x = relu(_conv_layer(params, "head.depth.conv0", x))
        x = _conv_layer(params, "head.depth.conv1", x)
        outs.append(reshape(x, (h, w)))
    raw = stack0(outs)  # (T,H,W)
    return mul(sigmoid(raw), constant(config.d_max))


def slice_frame(x: Tensor, index: int) -> Tensor:
    from ..autodiff import slice_axis

    return slice_axis(x, 0, index, index + 1)


def _two_layer_head(params: Parameters, prefix: str, x: Tensor) -> Tensor:
    h = relu(add(matmul(x, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
    return add(matmul(h, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def predict_tubes(params: Parameters, config: ModelConfig, clip: VideoClip) -> ClipForward:
    """Run the whole model on one clip."""
    t, h, w = clip.num_frames, clip.height, clip.width
    c, n = config.channels, config.memory_size

    backbone_feats = backbone_forward(params, clip)  # (T,H,W,C)
    x_f = backbone_feats
    x_l = expand0(params["memory.latent"], t)  # (T,L,C), copied per frame
    x_m = params["memory.global"]  # (N,C)

    for b in range(config.num_blocks):
        x_f = axial_block_forward(params, f"block{b}.axial", x_f)
        x_f, x_l = latent_block_forward(params, f"block{b}.latent", x_f, x_l)
        x_v = reshape(x_f, (t * h * w, c))
        x_v, x_m = global_block_forward(params, f"block{b}.global", x_v, x_m)
        x_f = reshape(x_v, (t, h, w, c))

    x_v_prime = reshape(x_f, (t * h * w, c))

    w_embed = _two_layer_head(params, "head.seg", x_m)  # (N,C)
    class_logits = _two_layer_head(params, "head.cls", x_m)  # (N,D+1)
    p = softmax_axis(class_logits, axis=1)

    scores = matmul(x_v_prime, swap_last2(w_embed))  # (THW,N)
    tube_logits = reshape(transpose(scores, (1, 0)), (n, t, h, w))
    m_hat = softmax_axis(tube_logits, axis=0)

    semantic_logits = reshape(
        add(matmul(x_v_prime, params["head.sem.w"]), params["head.sem.b"]),
        (t, h, w, config.num_classes),
    )

    depth = depth_head_forward(params, config, backbone_feats) if config.depth_enabled else None

    return ClipForward(
        x_v=reshape(backbone_feats, (t, h * w, c)),
        x_v_prime=x_v_prime,
        x_m=x_m,
        w=w_embed,
        p=p,
        tube_logits=tube_logits,
        class_logits=class_logits,
        m_hat=m_hat,
        semantic_logits=semantic_logits,
        depth=depth,
        shape=(t, h, w),
    )


def check_clip_shapes(config: ModelConfig, clip: VideoClip) -> None:
    if clip.frames.shape[3] != 3:
        raise DimensionError("clips must be RGB")
