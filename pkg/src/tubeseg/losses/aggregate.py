"""Weighted aggregation of loss components into one objective."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..autodiff import Tensor, add, constant, mul, reshape
from ..errors import ConfigError
from .components import NEG_CLASS_WEIGHT

COMPONENT_NAMES = (
    "pq_pos",
    "pq_neg",
    "tube_id_ce",
    "semantic",
    "instance_disc",
    "temporal",
    "depth",
)


@dataclass(frozen=True)
class LossWeights:
    pq: float = 1.0
    tube_id: float = 1.0
    semantic: float = 1.0
    instance_disc: float = 1.0
    temporal: float = 1.0
    depth: float = 100.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ConfigError(f"loss weight {name} must be >= 0, got {value}")

    def per_component(self) -> dict:
        return {
            "pq_pos": self.pq,
            "pq_neg": self.pq * NEG_CLASS_WEIGHT,
            "tube_id_ce": self.tube_id,
            "semantic": self.semantic,
            "instance_disc": self.instance_disc,
            "temporal": self.temporal,
            "depth": self.depth,
        }


@dataclass
class LossReport:
    total: float
    components: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)

    def weighted_sum(self) -> float:
        return sum(self.weights[k] * v for k, v in self.components.items())


def total_loss(components: dict, weights: LossWeights) -> tuple:
    """(scalar objective tensor, report of per-component values and weights).

    ``components`` maps names from COMPONENT_NAMES to scalar tensors; missing
    components count as zero.
    """
    per_component = weights.per_component()
    unknown = set(components) - set(COMPONENT_NAMES)
    if unknown:
        raise ConfigError(f"unknown loss components {sorted(unknown)}")

    total = None
    values = {}
    used = {}
    for name in COMPONENT_NAMES:
        if name not in components:
            continue
        tensor = components[name]
        if tensor.size != 1:
            raise ConfigError(f"component {name} is not scalar: shape {tensor.shape}")
        weight = per_component[name]
        values[name] = float(tensor.data.reshape(()))
        used[name] = weight
        term = mul(reshape(tensor, ()), constant(weight))
        total = term if total is None else add(total, term)
    if total is None:
        total = constant(0.0)
    report = LossReport(total=float(total.data.reshape(())), components=values, weights=used)
    return total, report
