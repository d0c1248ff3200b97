"""Closed-form area and latency models for the microcell array.

Latency of one ANN layer on an array with ``k_physical`` microcells per side::

    ceil(k_layer / k_physical) * (t_transport + t_mult) + t_merge + t_activation

where ``t_activation`` is the sum of the five reaction-pipeline stages.  The
array area is ``(footprint_factor * k * channel_width)**2``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

HOUR = 3600.0
MM2_PER_CM2 = 100.0

REPORT_COLUMNS = (
    "config_name",
    "cells_per_side",
    "area_pessimistic_cm2",
    "area_optimistic_cm2",
    "exec_time_per_layer_hr",
    "serialization_input",
    "serialization_hidden",
    "serialization_output",
)


@dataclass(frozen=True)
class TimingConstants:
    """Stage durations in seconds.

    Only the aggregates ``t_transport + t_mult`` and ``t_merge + t_activation``
    are pinned by published numbers; the split of the second sum across the
    pipeline stages is a placeholder.
    """

    t_transport: float = 120.0
    t_mult: float = 2.0 * HOUR
    t_merge: float = 1.0 * HOUR
    t_displacement: float = 1.0 * HOUR
    t_threshold: float = 1.0 * HOUR
    t_gate: float = 1.0 * HOUR
    t_translation: float = 1.0 * HOUR
    t_nick: float = 1.0367 * HOUR

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"timing.{name} must be >= 0, got {value}")

    @property
    def t_activation(self) -> float:
        return self.t_displacement + self.t_threshold + self.t_gate + self.t_translation + self.t_nick

    @property
    def pipeline_stages(self) -> list[tuple[str, float]]:
        return [
            ("PIPE_DISPLACEMENT", self.t_displacement),
            ("PIPE_THRESHOLD", self.t_threshold),
            ("PIPE_GATE", self.t_gate),
            ("PIPE_TRANSLATION", self.t_translation),
            ("PIPE_NICK", self.t_nick),
        ]


@dataclass(frozen=True)
class Geometry:
    """Channel width and microcell footprint.

    ``cell_area_mm2`` overrides the computed ``(factor * c)**2`` per-cell area
    when a published, rounded coefficient should be used instead.
    """

    channel_width_um: float
    footprint_factor: int
    cell_area_mm2: float | None = None

    def __post_init__(self):
        if self.channel_width_um <= 0:
            raise ValueError("channel_width_um must be positive")
        if self.footprint_factor < 1 or int(self.footprint_factor) != self.footprint_factor:
            raise ValueError("footprint_factor must be a positive integer")
        if self.cell_area_mm2 is not None and self.cell_area_mm2 <= 0:
            raise ValueError("cell_area_mm2 must be positive")

    @property
    def per_cell_mm2(self) -> float:
        if self.cell_area_mm2 is not None:
            return self.cell_area_mm2
        return (self.footprint_factor * self.channel_width_um / 1000.0) ** 2


PESSIMISTIC = Geometry(channel_width_um=200.0, footprint_factor=6)
# (3 * 0.035 mm)**2 = 0.011025 mm^2, published rounded to 0.01 mm^2
OPTIMISTIC = Geometry(channel_width_um=35.0, footprint_factor=3, cell_area_mm2=0.01)
OPTIMISTIC_EXACT = Geometry(channel_width_um=35.0, footprint_factor=3)


@dataclass(frozen=True)
class DeviceConfig:
    k_physical: int
    geometry: Geometry = PESSIMISTIC
    timing: TimingConstants = field(default_factory=TimingConstants)
    name: str = ""

    def __post_init__(self):
        if self.k_physical < 1:
            raise ValueError("k_physical must be >= 1")


PUBLISHED_CONFIGS = (
    DeviceConfig(196, name="Config-1"),
    DeviceConfig(49, name="Config-2"),
    DeviceConfig(16, name="Config-3"),
    DeviceConfig(4, name="Config-4"),
)
MNIST_LAYERS = (784, 784, 10)


@dataclass(frozen=True)
class LayerPlan:
    k_layer: int
    k_physical: int

    @property
    def serialization_factor(self) -> int:
        return serialization_factor(self.k_layer, self.k_physical)


def area_mm2(config: DeviceConfig) -> float:
    return config.geometry.per_cell_mm2 * config.k_physical ** 2


def area(config: DeviceConfig) -> float:
    """Microcell array area in mm^2."""
    return area_mm2(config)


def area_cm2(config: DeviceConfig) -> float:
    return area_mm2(config) / MM2_PER_CM2


def serialization_factor(k_layer: int, k_physical: int) -> int:
    if k_layer < 1 or k_physical < 1:
        raise ValueError("layer and array sizes must be >= 1")
    return -(-k_layer // k_physical)


def layer_latency_s(plan: LayerPlan, timing: TimingConstants) -> float:
    return (plan.serialization_factor * (timing.t_transport + timing.t_mult)
            + timing.t_merge + timing.t_activation)


def layer_latency(plan: LayerPlan, timing: TimingConstants) -> float:
    """Per-layer execution time in hours."""
    return layer_latency_s(plan, timing) / HOUR


def network_latencies(layer_sizes: Sequence[int], config: DeviceConfig) -> list[float]:
    """Latency in hours for each entry of ``layer_sizes`` (input layer included)."""
    return [layer_latency(LayerPlan(n, config.k_physical), config.timing) for n in layer_sizes]


@dataclass
class ExploreRow:
    config_name: str
    cells_per_side: int
    area_pessimistic_cm2: float
    area_optimistic_cm2: float
    exec_time_per_layer_hr: float
    serialization_input: int
    serialization_hidden: int
    serialization_output: int
    layer_latencies_hr: list[float] = field(default_factory=list)

    def as_record(self) -> dict:
        return {c: getattr(self, c) for c in REPORT_COLUMNS}


def explore(configs: Sequence[DeviceConfig], layer_sizes: Sequence[int] = MNIST_LAYERS,
            exact_optimistic: bool = False) -> list[ExploreRow]:
    """Area/latency trade-off table over array sizes.

    ``layer_sizes`` is (input, hidden, output); the reported per-layer time is
    the hidden layer's.
    """
    if not configs:
        raise ValueError("explore needs at least one device configuration")
    if len(layer_sizes) < 2 or any(n < 1 for n in layer_sizes):
        raise ValueError(f"network needs at least an input and an output layer, got {list(layer_sizes)}")
    optimistic = OPTIMISTIC_EXACT if exact_optimistic else OPTIMISTIC
    hidden = layer_sizes[1] if len(layer_sizes) > 2 else layer_sizes[0]
    rows = []
    for cfg in configs:
        k = cfg.k_physical
        rows.append(ExploreRow(
            config_name=cfg.name or f"k{k}",
            cells_per_side=k,
            area_pessimistic_cm2=area_cm2(replace(cfg, geometry=PESSIMISTIC)),
            area_optimistic_cm2=area_cm2(replace(cfg, geometry=optimistic)),
            exec_time_per_layer_hr=layer_latency(LayerPlan(hidden, k), cfg.timing),
            serialization_input=serialization_factor(layer_sizes[0], k),
            serialization_hidden=serialization_factor(hidden, k),
            serialization_output=serialization_factor(layer_sizes[-1], k),
            layer_latencies_hr=network_latencies(layer_sizes, cfg),
        ))
    return rows


def rows_to_csv(rows: Sequence[ExploreRow], digits: int = 4) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        rec = r.as_record()
        w.writerow([round(v, digits) if isinstance(v, float) else v for v in rec.values()])
    return buf.getvalue()


def fit_affine(factors: Sequence[float], hours: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares ``hours = slope * factor + intercept``; returns (slope, intercept, rms residual)."""
    n = len(factors)
    mx = math.fsum(factors) / n
    my = math.fsum(hours) / n
    sxx = math.fsum((x - mx) ** 2 for x in factors)
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(factors, hours))
    slope = sxy / sxx
    intercept = my - slope * mx
    rms = math.sqrt(math.fsum((y - (slope * x + intercept)) ** 2 for x, y in zip(factors, hours)) / n)
    return slope, intercept, rms
