"""Experiment configuration (JSON) with path-qualified validation errors.

Example::

    {
      "format_version": 1,
      "chemistry": {"t": 100000, "efficiency": 1.0, "spurious_rate": 0.0,
                    "gain": 1000.0, "replenishment_excess": true,
                    "output_cap": 1.0, "seed": 0},
      "device": {"k_physical": 196, "channel_width_um": 200.0, "footprint_factor": 6,
                 "cell_area_mm2": null, "timing": {"t_transport": 120.0, ...}},
      "network": {"spec_path": null, "theta_default": 0.5},
      "training": {"hidden_sizes": [64], "slope": 10.0, "learning_rate": 0.01,
                   "epochs": 60, "batch_size": 32, "readout": "fraction", "seed": 0},
      "run": {"mode": "ideal", "trace_path": null, "report_path": null}
    }

Every section and field is optional; omitted values take the defaults below.
Timing constants are in seconds.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .ann import ExecutionMode, ModeKind, READOUTS, TrainConfig
from .chem import ChemistryErrorModel
from .data import load_json
from .device import DeviceConfig, Geometry, TimingConstants

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ChemistrySection:
    t: int = 10**5
    efficiency: float = 1.0
    spurious_rate: float = 0.0
    gain: float = 1e3
    replenishment_excess: bool = True
    output_cap: float = 1.0
    seed: int = 0

    @property
    def activation_gain(self) -> float | None:
        return None if self.replenishment_excess else self.gain


@dataclass
class DeviceSection:
    k_physical: int = 196
    channel_width_um: float = 200.0
    footprint_factor: int = 6
    cell_area_mm2: float | None = None
    timing: dict = field(default_factory=lambda: asdict(TimingConstants()))


@dataclass
class NetworkSection:
    spec_path: str | None = None
    theta_default: float = 0.5


@dataclass
class TrainingSection:
    hidden_sizes: list = field(default_factory=lambda: [64])
    slope: float = 10.0
    learning_rate: float = 0.01
    epochs: int = 60
    batch_size: int = 32
    readout: str = "fraction"
    seed: int = 0


@dataclass
class RunSection:
    mode: str = "ideal"
    trace_path: str | None = None
    report_path: str | None = None


@dataclass
class ExperimentConfig:
    chemistry: ChemistrySection = field(default_factory=ChemistrySection)
    device: DeviceSection = field(default_factory=DeviceSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    run: RunSection = field(default_factory=RunSection)

    def error_model(self) -> ChemistryErrorModel:
        return ChemistryErrorModel(self.chemistry.efficiency, self.chemistry.spurious_rate)

    def device_config(self, name: str = "") -> DeviceConfig:
        d = self.device
        return DeviceConfig(d.k_physical, Geometry(d.channel_width_um, d.footprint_factor, d.cell_area_mm2),
                            TimingConstants(**d.timing), name)

    def execution_mode(self, mode: str | None = None) -> ExecutionMode:
        return ExecutionMode.parse(mode or self.run.mode, self.chemistry.t, self.chemistry.seed)

    def train_config(self) -> TrainConfig:
        tr = self.training
        return TrainConfig(tuple(tr.hidden_sizes), tr.slope, tr.learning_rate, tr.epochs, tr.batch_size, tr.readout)


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _number(path, v, *, integer=False, lo=None, hi=None, lo_open=False, hi_open=False, nullable=False):
    if v is None and nullable:
        return
    ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok_type:
        _fail(path, f"expected {'an integer' if integer else 'a number'}, got {v!r}")
    if lo is not None and (v <= lo if lo_open else v < lo):
        _fail(path, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and (v >= hi if hi_open else v > hi):
        _fail(path, f"must be {'<' if hi_open else '<='} {hi}, got {v}")


def _section(path, cls, raw):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        _fail(path, "expected an object")
    names = {f.name for f in fields(cls)}
    for key in raw:
        if key not in names:
            _fail(f"{path}.{key}", "unknown field")
    return cls(**raw)


def _check_path(path, value, base: Path, must_exist: bool):
    if value is None:
        return None
    if not isinstance(value, str):
        _fail(path, f"expected a path string, got {value!r}")
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    if must_exist and not p.exists():
        _fail(path, f"file {p} does not exist")
    if not must_exist and not p.parent.exists():
        _fail(path, f"directory {p.parent} does not exist")
    return str(p)


def from_dict(raw: dict, base: Path = Path(".")) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    version = raw.get("format_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        _fail("format_version", f"unsupported version {version!r}")
    known = {"format_version", "chemistry", "device", "network", "training", "run"}
    for key in raw:
        if key not in known:
            _fail(key, "unknown section")
    cfg = ExperimentConfig(
        chemistry=_section("chemistry", ChemistrySection, raw.get("chemistry")),
        device=_section("device", DeviceSection, raw.get("device")),
        network=_section("network", NetworkSection, raw.get("network")),
        training=_section("training", TrainingSection, raw.get("training")),
        run=_section("run", RunSection, raw.get("run")),
    )
    c = cfg.chemistry
    _number("chemistry.t", c.t, integer=True, lo=1)
    _number("chemistry.efficiency", c.efficiency, lo=0, hi=1, lo_open=True)
    _number("chemistry.spurious_rate", c.spurious_rate, lo=0, hi=1, hi_open=True)
    _number("chemistry.gain", c.gain, lo=0, lo_open=True)
    if not isinstance(c.replenishment_excess, bool):
        _fail("chemistry.replenishment_excess", f"expected true or false, got {c.replenishment_excess!r}")
    _number("chemistry.output_cap", c.output_cap, lo=0, hi=1, lo_open=True)
    _number("chemistry.seed", c.seed, integer=True, lo=0)
    d = cfg.device
    _number("device.k_physical", d.k_physical, integer=True, lo=1)
    _number("device.channel_width_um", d.channel_width_um, lo=0, lo_open=True)
    _number("device.footprint_factor", d.footprint_factor, integer=True, lo=1)
    _number("device.cell_area_mm2", d.cell_area_mm2, lo=0, lo_open=True, nullable=True)
    if not isinstance(d.timing, dict):
        _fail("device.timing", "expected an object")
    timing_names = {f.name for f in fields(TimingConstants)}
    merged = asdict(TimingConstants())
    for key, value in d.timing.items():
        if key not in timing_names:
            _fail(f"device.timing.{key}", "unknown field")
        _number(f"device.timing.{key}", value, lo=0)
        merged[key] = value
    d.timing = merged
    n = cfg.network
    n.spec_path = _check_path("network.spec_path", n.spec_path, base, must_exist=True)
    _number("network.theta_default", n.theta_default, lo=0, hi=1, lo_open=True, hi_open=True)
    tr = cfg.training
    if not isinstance(tr.hidden_sizes, list) or not tr.hidden_sizes:
        _fail("training.hidden_sizes", "expected a nonempty list of layer sizes")
    for i, h in enumerate(tr.hidden_sizes):
        _number(f"training.hidden_sizes[{i}]", h, integer=True, lo=1)
    _number("training.slope", tr.slope, lo=0, lo_open=True)
    _number("training.learning_rate", tr.learning_rate, lo=0, lo_open=True)
    _number("training.epochs", tr.epochs, integer=True, lo=1)
    _number("training.batch_size", tr.batch_size, integer=True, lo=1)
    _number("training.seed", tr.seed, integer=True, lo=0)
    if tr.readout not in READOUTS:
        _fail("training.readout", f"must be one of {list(READOUTS)}, got {tr.readout!r}")
    r = cfg.run
    if r.mode not in [m.value for m in ModeKind]:
        _fail("run.mode", f"must be one of {[m.value for m in ModeKind]}, got {r.mode!r}")
    r.trace_path = _check_path("run.trace_path", r.trace_path, base, must_exist=False)
    r.report_path = _check_path("run.report_path", r.report_path, base, must_exist=False)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config: file {path} does not exist")
    return from_dict(load_json(path), path.parent)


def default_config() -> ExperimentConfig:
    return from_dict({})


def to_dict(cfg: ExperimentConfig) -> dict:
    return {"format_version": CONFIG_VERSION, **asdict(cfg)}
