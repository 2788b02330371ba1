"""Trainable parameter store, seeded initialization and TPRM checkpoints.

TPRM layout (little-endian): magic "TPRM", u32 version=1, u32 entry count,
then per entry u16 name length, name bytes, u8 rank, u32 extents, f64 data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..autodiff import Tensor
from ..errors import CheckpointError, FormatError
from .config import ModelConfig

MAGIC = b"TPRM"
VERSION = 1


class Parameters:
    """Named map of trainable leaf tensors with stable iteration order."""

    def __init__(self, tensors: dict):
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self):
        return list(self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def copy(self) -> "Parameters":
        return Parameters(
            {k: Tensor(v.data.copy(), requires_grad=v.requires_grad) for k, v in self.items()}
        )


def _normal(rng, shape, std=0.02):
    return rng.normal(0.0, std, size=shape)


def _he(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def _attention(rng, store, prefix, c, norms):
    for norm in norms:
        store[f"{prefix}.{norm}.gain"] = np.ones(c)
        store[f"{prefix}.{norm}.bias"] = np.zeros(c)
    for mat in ("wq", "wk", "wv"):
        store[f"{prefix}.{mat}"] = _normal(rng, (c, c))


def _ffn(rng, store, prefix, c):
    hidden = 2 * c
    store[f"{prefix}.ln.gain"] = np.ones(c)
    store[f"{prefix}.ln.bias"] = np.zeros(c)
    store[f"{prefix}.w1"] = _normal(rng, (c, hidden))
    store[f"{prefix}.b1"] = np.zeros(hidden)
    store[f"{prefix}.w2"] = _normal(rng, (hidden, c))
    store[f"{prefix}.b2"] = np.zeros(c)


def init_params(config: ModelConfig) -> Parameters:
    """Seeded deterministic initialization for every trainable tensor.

    Conv kernels use fan-in scaling so backbone activations stay O(1); all
    other weights use the 0.02-std normal, biases zero, norm gains one.
    """
    rng = np.random.default_rng(config.seed)
    c = config.channels
    store = {}

    store["backbone.conv0.kernel"] = _he(rng, (c, 3, 3, 3), 27)
    store["backbone.conv0.bias"] = np.zeros(c)
    for i in (1, 2):
        store[f"backbone.conv{i}.kernel"] = _he(rng, (c, c, 3, 3), 9 * c)
        store[f"backbone.conv{i}.bias"] = np.zeros(c)

    for b in range(config.num_blocks):
        _attention(rng, store, f"block{b}.axial.h", c, ("ln",))
        _attention(rng, store, f"block{b}.axial.w", c, ("ln",))
        _attention(rng, store, f"block{b}.latent.l2f", c, ("ln_lat", "ln_frm"))
        _attention(rng, store, f"block{b}.latent.l2l", c, ("ln",))
        _attention(rng, store, f"block{b}.latent.f2l", c, ("ln_frm", "ln_lat"))
        _attention(rng, store, f"block{b}.global.m2v", c, ("ln_mem", "ln_kv"))
        _ffn(rng, store, f"block{b}.global.ffn_mem", c)
        _attention(rng, store, f"block{b}.global.v2m", c, ("ln_vid", "ln_mem"))
        _ffn(rng, store, f"block{b}.global.ffn_vid", c)

    store["memory.latent"] = _normal(rng, (config.latent_size, c))
    store["memory.global"] = _normal(rng, (config.memory_size, c))

    store["head.seg.w1"] = _normal(rng, (c, c))
    store["head.seg.b1"] = np.zeros(c)
    store["head.seg.w2"] = _normal(rng, (c, c))
    store["head.seg.b2"] = np.zeros(c)
    store["head.cls.w1"] = _normal(rng, (c, c))
    store["head.cls.b1"] = np.zeros(c)
    store["head.cls.w2"] = _normal(rng, (c, config.num_classes + 1))
    store["head.cls.b2"] = np.zeros(config.num_classes + 1)
    store["head.sem.w"] = _normal(rng, (c, config.num_classes))
    store["head.sem.b"] = np.zeros(config.num_classes)

    if config.depth_enabled:
        store["head.depth.conv0.kernel"] = _he(rng, (c, c, 3, 3), 9 * c)
        store["head.depth.conv0.bias"] = np.zeros(c)
        store["head.depth.conv1.kernel"] = _he(rng, (1, c, 3, 3), 9 * c)
        store["head.depth.conv1.bias"] = np.zeros(1)

    return Parameters({k: Tensor(v, requires_grad=True) for k, v in store.items()})


def save_params(params: Parameters, path) -> None:
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(params))
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        arr = tensor.data
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_params(path, expected: Parameters | None = None) -> Parameters:
    """Read a checkpoint; with ``expected``, verify names and shapes match."""
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"truncated checkpoint at offset {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise FormatError("bad checkpoint magic")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        numel = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(take(8 * numel), dtype="<f8").reshape(shape)
        tensors[name] = Tensor(values.copy(), requires_grad=True)
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes in checkpoint")

    if expected is not None:
        for name, tensor in expected.items():
            if name not in tensors:
                raise CheckpointError(f"checkpoint missing parameter {name!r}")
            if tensors[name].shape != tensor.shape:
                raise CheckpointError(
                    f"parameter {name!r} has shape {tensors[name].shape}, expected {tensor.shape}"
                )
        extra = set(tensors) - set(dict(expected.items()))
        if extra:
            raise CheckpointError(f"checkpoint has unexpected parameters {sorted(extra)}")
    return Parameters(tensors)
