"""Dual-path transformer blocks: axial frame attention, latent and global paths.

All attention is single-head, pre-norm, with the attention output added
residually (no output projection, so a one-key softmax reduces exactly to the
value path).
"""

from __future__ import annotations

from ..autodiff import (
    Tensor,
    add,
    concat,
    layer_norm,
    matmul,
    relu,
    reshape,
    scaled_dot_attention,
    transpose,
)
from .params import Parameters


def _attend(params: Parameters, prefix: str, query_src: Tensor, kv_src: Tensor,
            q_norm: str, kv_norm: str) -> Tensor:
    qn = layer_norm(query_src, params[f"{prefix}.{q_norm}.gain"], params[f"{prefix}.{q_norm}.bias"])
    kn = layer_norm(kv_src, params[f"{prefix}.{kv_norm}.gain"], params[f"{prefix}.{kv_norm}.bias"])
    q = matmul(qn, params[f"{prefix}.wq"])
    k = matmul(kn, params[f"{prefix}.wk"])
    v = matmul(kn, params[f"{prefix}.wv"])
    return scaled_dot_attention(q, k, v)


def _self_attend(params: Parameters, prefix: str, x: Tensor) -> Tensor:
    return _attend(params, prefix, x, x, "ln", "ln")


def _ffn(params: Parameters, prefix: str, x: Tensor) -> Tensor:
    h = layer_norm(x, params[f"{prefix}.ln.gain"], params[f"{prefix}.ln.bias"])
    h = relu(add(matmul(h, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
    return add(matmul(h, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def axial_block_forward(params: Parameters, prefix: str, x_f: Tensor) -> Tensor:
    """Frame-level self-attention along height, then width.

    ``x_f`` is (T,H,W,C); frames and the orthogonal axis batch together.
    """
    # Along height: sequences of length H, batched over (T, W).
    xh = transpose(x_f, (0, 2, 1, 3))
    xh = add(xh, _self_attend(params, f"{prefix}.h", xh))
    x = transpose(xh, (0, 2, 1, 3))
    # Along width: sequences of length W, batched over (T, H).
    return add(x, _self_attend(params, f"{prefix}.w", x))


def latent_block_forward(params: Parameters, prefix: str, x_f: Tensor, x_l: Tensor):
    """Message passing between per-frame pixels and a per-frame latent memory.

    ``x_f`` is (T,H,W,C) and ``x_l`` is (T,L,C); frames stay independent.
    Order: latent gathers from frames, refines itself, then writes back.
    """
    t, h, w, c = x_f.shape
    frames = reshape(x_f, (t, h * w, c))
    x_l = add(x_l, _attend(params, f"{prefix}.l2f", x_l, frames, "ln_lat", "ln_frm"))
    x_l = add(x_l, _self_attend(params, f"{prefix}.l2l", x_l))
    frames = add(frames, _attend(params, f"{prefix}.f2l", frames, x_l, "ln_frm", "ln_lat"))
    return reshape(frames, (t, h, w, c)), x_l


def global_block_forward(params: Parameters, prefix: str, x_v: Tensor, x_m: Tensor):
    """Clip-level dual path between flattened pixels (THW,C) and memory (N,C).

    The memory update attends jointly over video features and memory
    (fused M2V + M2M); pixels then read back from the refined memory.
    """
    kv = concat([x_v, x_m], axis=0)
    x_m = add(x_m, _attend(params, f"{prefix}.m2v", x_m, kv, "ln_mem", "ln_kv"))
    x_m = add(x_m, _ffn(params, f"{prefix}.ffn_mem", x_m))
    x_v = add(x_v, _attend(params, f"{prefix}.v2m", x_v, x_m, "ln_vid", "ln_mem"))
    x_v = add(x_v, _ffn(params, f"{prefix}.ffn_vid", x_v))
    return x_v, x_m
