"""Model hyperparameters, config file I/O, and the thing/stuff memory split."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from ..data.types import ClassTable
from ..errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 128  # C
    memory_size: int = 128  # N, one output slot per element
    latent_size: int = 16  # L
    num_blocks: int = 2
    num_classes: int = 19  # D real classes; the class head adds one "none" column
    stuff_count: int = 17
    d_max: float = 80.0
    clip_length: int = 2  # T
    seed: int = 0
    depth_enabled: bool = False

    def __post_init__(self):
        if self.memory_size <= self.stuff_count:
            raise ConfigError(
                f"memory size {self.memory_size} must exceed stuff count {self.stuff_count}"
            )
        if min(self.channels, self.latent_size, self.num_blocks, self.num_classes) < 1:
            raise ConfigError("channels, latent size, blocks and classes must be >= 1")
        if self.stuff_count < 0 or self.stuff_count > self.num_classes:
            raise ConfigError("stuff count must lie in [0, num_classes]")
        if self.clip_length < 1:
            raise ConfigError("clip length must be >= 1")

    @classmethod
    def toy(cls, **overrides) -> "ModelConfig":
        """Desk-scale defaults used by tests and the CLI examples."""
        base = cls(
            channels=16,
            memory_size=8,
            latent_size=4,
            num_blocks=1,
            num_classes=3,
            stuff_count=1,
            d_max=20.0,
            clip_length=2,
            seed=0,
            depth_enabled=False,
        )
        return replace(base, **overrides) if overrides else base


_KEYS = {
    "C": ("channels", int),
    "N": ("memory_size", int),
    "L": ("latent_size", int),
    "num_blocks": ("num_blocks", int),
    "D": ("num_classes", int),
    "stuff_count": ("stuff_count", int),
    "d_max": ("d_max", float),
    "T": ("clip_length", int),
    "seed": ("seed", int),
    "depth_enabled": ("depth_enabled", lambda v: v.lower() in ("1", "true", "yes")),
}


def save_config(config: ModelConfig, path) -> None:
    lines = [
        f"C={config.channels}",
        f"N={config.memory_size}",
        f"L={config.latent_size}",
        f"num_blocks={config.num_blocks}",
        f"D={config.num_classes}",
        f"stuff_count={config.stuff_count}",
        f"d_max={config.d_max}",
        f"T={config.clip_length}",
        f"seed={config.seed}",
        f"depth_enabled={int(config.depth_enabled)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_config(path) -> ModelConfig:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno} is not key=value: {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        field, conv = _KEYS[key]
        try:
            values[field] = conv(raw.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return ModelConfig(**values)


@dataclass(frozen=True)
class MemoryLayout:
    """Slot allocation: things first, then one dedicated slot per stuff class."""

    memory_size: int
    stuff_count: int

    @property
    def thing_slots(self) -> range:
        return range(0, self.memory_size - self.stuff_count)

    @property
    def stuff_slots(self) -> range:
        return range(self.memory_size - self.stuff_count, self.memory_size)

    def slot_for_stuff_class(self, class_id: int, table: ClassTable) -> int:
        stuff_ids = table.stuff_ids()
        return self.stuff_slots[stuff_ids.index(class_id)]

    def stuff_class_for_slot(self, slot: int, table: ClassTable) -> int:
        return table.stuff_ids()[slot - self.stuff_slots.start]


def init_memory(config: ModelConfig) -> MemoryLayout:
    """Fixed slot split; the j-th stuff slot binds the j-th stuff class by id."""
    if config.memory_size <= config.stuff_count:
        raise ConfigError("memory size must exceed stuff count")
    return MemoryLayout(config.memory_size, config.stuff_count)
