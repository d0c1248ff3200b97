"""Feedforward networks on the nicked-DNA engine.

A layer with fan-in ``k`` computes, per neuron ``i``, the merged-droplet
fraction ``pre_i = (1/k) * sum_j x_j * w_ij`` and then a seesaw step
``out_i = cap if pre_i > theta_i else 0``.  Weights and inputs live in
[0, 1].  Float networks are trained without those bounds (weights only need
to be nonnegative) and mapped onto the engine by ``quantize_network``.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import chem
from .chem import ActivationParams, ChemistryErrorModel, Mode, IDEAL_CHEMISTRY
from .device import DeviceConfig, network_latencies
from .fluidics import simulate_layer
from .trace import Event, shifted

FORMAT_VERSION = 1
READOUTS = ("fraction", "step")


class ConstraintError(ValueError):
    pass


class QuantizationError(ValueError):
    pass


class ModeKind(enum.Enum):
    FLOAT = "float"
    IDEAL = "ideal"
    SAMPLED = "sampled"
    FLUIDICS = "fluidics"


@dataclass(frozen=True)
class ExecutionMode:
    kind: ModeKind
    t: int = 10**6
    seed: int = 0

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("molecule count t must be >= 1")

    @classmethod
    def parse(cls, text: str, t: int = 10**6, seed: int = 0) -> ExecutionMode:
        return cls(ModeKind(text.strip().lower()), t, seed)

    @property
    def chem_mode(self) -> Mode:
        return Mode.SAMPLED if self.kind in (ModeKind.SAMPLED, ModeKind.FLUIDICS) else Mode.IDEAL

    def __str__(self):
        if self.kind in (ModeKind.SAMPLED, ModeKind.FLUIDICS):
            return f"{self.kind.value}(t={self.t},seed={self.seed})"
        return self.kind.value


FLOAT_REFERENCE = ExecutionMode(ModeKind.FLOAT)
IDEAL_CHEM = ExecutionMode(ModeKind.IDEAL)


@dataclass
class NetworkSpec:
    """Engine-ready network: weights in [0, 1], thresholds in (0, 1)."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    thresholds: list[np.ndarray]
    scales: list[float] = field(default_factory=list)
    output_cap: float = 1.0
    output_readout: str = "fraction"

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.thresholds = [np.broadcast_to(np.asarray(t, dtype=float), (w.shape[0],)).copy()
                           for t, w in zip(self.thresholds, self.weights)]
        if not self.scales:
            self.scales = [1.0] * len(self.weights)
        if len(self.layer_sizes) != len(self.weights) + 1:
            raise ValueError("need one weight matrix per pair of adjacent layers")
        for i, w in enumerate(self.weights):
            if w.shape != (self.layer_sizes[i + 1], self.layer_sizes[i]):
                raise ValueError(f"layer {i} weights have shape {w.shape}, expected "
                                 f"{(self.layer_sizes[i + 1], self.layer_sizes[i])}")
            if w.size and (w.min() < 0 or w.max() > 1):
                raise ConstraintError(f"layer {i} weights must lie in [0, 1]")
        for i, t in enumerate(self.thresholds):
            if np.any(t <= 0) or np.any(t >= 1):
                raise ConstraintError(f"layer {i} thresholds must lie in (0, 1)")
        if self.output_readout not in READOUTS:
            raise ValueError(f"output_readout must be one of {READOUTS}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "layer_sizes": list(map(int, self.layer_sizes)),
            "weights": [w.ravel().tolist() for w in self.weights],
            "thresholds": [t.tolist() for t in self.thresholds],
            "scales": [float(s) for s in self.scales],
            "output_cap": self.output_cap,
            "output_readout": self.output_readout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> NetworkSpec:
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported network format_version {d.get('format_version')!r}")
        sizes = d["layer_sizes"]
        weights = [np.array(w, dtype=float).reshape(sizes[i + 1], sizes[i]) for i, w in enumerate(d["weights"])]
        return cls(sizes, weights, d["thresholds"], d.get("scales", []),
                   d.get("output_cap", 1.0), d.get("output_readout", "fraction"))


@dataclass
class FloatNetwork:
    """Unbounded float model: ``z = x @ W.T - theta`` with ``W >= 0`` and ``theta > 0``."""

    weights: list[np.ndarray]
    thresholds: list[np.ndarray]
    readout: str = "fraction"

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def predict(self, x: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(x)
        for i, (w, th) in enumerate(zip(self.weights, self.thresholds)):
            z = a @ w.T
            if i == len(self.weights) - 1 and self.readout == "fraction":
                return np.argmax(z, axis=1)
            a = (z > th).astype(float)
        return np.argmax(a, axis=1)


def quantize_network(weights: Sequence[np.ndarray], thresholds: Sequence[np.ndarray],
                     input_scale: float = 1.0, output_cap: float = 1.0, readout: str = "fraction",
                     zero_fallback: bool = False) -> NetworkSpec:
    """Max-normalize each weight matrix and rescale thresholds to merged-droplet units.

    A float layer fires when ``x @ W.T > theta``.  On the engine the same
    neuron sees ``(1/k) * (x / s_x) @ (W / s).T``, so the threshold becomes
    ``theta / (k * s * s_x)``.  Downstream layers see step outputs, whose
    scale is ``output_cap`` on both sides.
    """
    ws, ths, scales = [], [], []
    s_x = float(input_scale)
    for i, (w, th) in enumerate(zip(weights, thresholds)):
        w = np.asarray(w, dtype=float)
        if np.any(w < 0):
            raise ConstraintError(f"layer {i} has negative weights; the engine only stores nonnegative values")
        s = float(w.max()) if w.size else 0.0
        if s == 0.0:
            if not zero_fallback:
                raise QuantizationError(f"layer {i} is all zeros; its scale is undefined")
            s = 1.0
        k = w.shape[1]
        th_chem = np.broadcast_to(np.asarray(th, dtype=float), (w.shape[0],)) / (k * s * s_x)
        if np.any(th_chem <= 0) or np.any(th_chem >= 1):
            bad = th_chem[(th_chem <= 0) | (th_chem >= 1)]
            raise QuantizationError(f"layer {i}: rescaled thresholds {bad[:4]} fall outside (0, 1)")
        ws.append(w / s)
        ths.append(th_chem)
        scales.append(s)
        s_x = 1.0  # step outputs carry the same cap in both models
    sizes = [ws[0].shape[1]] + [w.shape[0] for w in ws]
    return NetworkSpec(sizes, ws, ths, scales, output_cap, readout)


@dataclass
class LayerOutput:
    pre_activation: np.ndarray
    output: np.ndarray
    events: list[Event] = field(default_factory=list, repr=False)


def _step(pre, thresholds, cap):
    return np.where(pre > thresholds, cap, 0.0)


def run_layer(inputs, weights, thresholds, mode: ExecutionMode = IDEAL_CHEM, seed=None,
              output_cap: float = 1.0, err: ChemistryErrorModel = IDEAL_CHEMISTRY,
              gain: float | None = None) -> LayerOutput:
    """One layer: per-neuron products, row merge, and seesaw activation.

    ``gain=None`` is the excess-replenishment step; a number selects the
    replenishment-limited ramp ``min(cap, gain * (pre - theta))``.
    """
    x = np.asarray(inputs, dtype=float)
    w = np.asarray(weights, dtype=float)
    if x.ndim != 1 or w.ndim != 2 or w.shape[1] != x.size:
        raise ValueError(f"shape mismatch: {x.shape} inputs for weights {w.shape}")
    if x.size and (x.min() < 0 or x.max() > 1):
        raise ValueError("layer inputs must lie in [0, 1]")
    n_out, k = w.shape
    th = np.broadcast_to(np.asarray(thresholds, dtype=float), (n_out,))
    act_params = ActivationParams(th, output_cap, gain is None, gain or chem.DEFAULT_GAIN)
    if mode.kind is ModeKind.FLOAT:
        pre = (w @ x) / k
        if gain is None:
            return LayerOutput(pre, _step(pre, th, output_cap))
        return LayerOutput(pre, np.minimum(output_cap, gain * np.maximum(pre - th, 0.0)))
    if mode.kind is ModeKind.FLUIDICS:
        run = simulate_layer(x, w, th, mode.t, Mode.SAMPLED, seed if seed is not None else mode.seed,
                             err=err, output_cap=output_cap, gain=gain)
        return LayerOutput(run.pre_activations, run.activations, run.events)
    cmode = mode.chem_mode
    rng = chem.as_rng(seed if seed is not None else mode.seed) if cmode is Mode.SAMPLED else None
    # row i of the array holds a copy of every input; column j multiplies by w_ij
    cells = chem.encode_fraction(np.broadcast_to(x, (n_out, k)), mode.t, cmode)
    cells = chem.nick_site_b(cells, chem.weight_dose(w, mode.t, k), k, rng)
    pools = chem.merge_along(chem.probe_readout(cells, err))
    pre = np.asarray(pools.fraction, dtype=float)
    act = chem.seesaw_activation(pre, act_params, err)
    dose = chem.translate_to_enzyme(act, pools.reference_total, err)
    fresh = chem.nick_fresh(dose, pools.reference_total, pools.reference_total, cmode)
    return LayerOutput(pre, np.asarray(fresh.a_fraction, dtype=float))


@dataclass
class InferenceResult:
    pre_activations: list[np.ndarray]
    outputs: np.ndarray
    predicted_class: int
    latency_hr: float
    layer_latencies_hr: list[float]
    events: list[Event] = field(default_factory=list, repr=False)


def _layer_seeds(mode: ExecutionMode, n: int, sample: int | None) -> list:
    if mode.kind not in (ModeKind.SAMPLED, ModeKind.FLUIDICS):
        return [None] * n
    key = [mode.seed] if sample is None else [mode.seed, sample]
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(key).spawn(n)]


def infer(net: NetworkSpec, x, mode: ExecutionMode = IDEAL_CHEM, device: DeviceConfig | None = None,
          err: ChemistryErrorModel = IDEAL_CHEMISTRY, sample: int | None = None,
          gain: float | None = None) -> InferenceResult:
    """Run every layer in sequence.

    The predicted class is the argmax of the output-layer fractions
    (``output_readout="fraction"``) or of the step outputs (``"step"``);
    ties go to the lowest index.  ``sample`` decorrelates the seeds of
    different inputs under one mode seed.
    """
    a = np.asarray(x, dtype=float)
    if a.shape != (net.layer_sizes[0],):
        raise ValueError(f"input has shape {a.shape}, network expects ({net.layer_sizes[0]},)")
    seeds = _layer_seeds(mode, net.n_layers, sample)
    pres, events = [], []
    for w, th, seed in zip(net.weights, net.thresholds, seeds):
        lo = run_layer(a, w, th, mode, seed, net.output_cap, err, gain)
        pres.append(lo.pre_activation)
        # each layer's array starts its own clock; chain them end to end
        start = events[-1].time_s if events else 0.0
        events.extend(shifted(lo.events, start))
        a = lo.output
    outputs = pres[-1] if net.output_readout == "fraction" else a
    device = device or DeviceConfig(k_physical=max(net.layer_sizes))
    lat = network_latencies(net.layer_sizes, device)
    return InferenceResult(pres, outputs, int(np.argmax(outputs)), sum(lat), lat, events)


def predict_batch(net: NetworkSpec, images: np.ndarray, mode: ExecutionMode,
                  err: ChemistryErrorModel = IDEAL_CHEMISTRY) -> tuple[np.ndarray, list[list[np.ndarray]]]:
    preds, pres = [], []
    for i, x in enumerate(images):
        r = infer(net, x, mode, err=err, sample=i)
        preds.append(r.predicted_class)
        pres.append(r.pre_activations)
    return np.array(preds), pres


# -- training -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    hidden_sizes: tuple[int, ...] = (64,)
    slope: float = 10.0
    learning_rate: float = 0.01
    epochs: int = 60
    batch_size: int = 32
    readout: str = "fraction"
    positive_weight: float = 3.0
    theta_floor: float = 1e-6

    def __post_init__(self):
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}")
        if self.slope <= 0 or self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("slope, learning_rate, epochs and batch_size must be positive")


def surrogate(z, slope):
    """Steep logistic stand-in for the step, used only for gradients."""
    return 0.5 * (1.0 + np.tanh(0.5 * slope * z))


def loss_and_grad(weights, thresholds, x, targets, cfg: TrainConfig):
    """Mean loss over the batch and its gradient with respect to weights and thresholds.

    Hidden layers use the surrogate of ``x @ W.T - theta``.  The output layer
    is trained with softmax cross-entropy on ``slope * x @ W.T`` for fraction
    readout, or with positively weighted binary cross-entropy on the
    surrogate for step readout.
    """
    n = len(x)
    acts, hs = [x], []
    a = x
    for w, th in zip(weights[:-1], thresholds[:-1]):
        h = surrogate(a @ w.T - th, cfg.slope)
        hs.append(h)
        a = h
        acts.append(a)
    z = a @ weights[-1].T
    eps = 1e-12
    if cfg.readout == "fraction":
        s = cfg.slope * z
        s = s - s.max(axis=1, keepdims=True)
        logp = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
        loss = -np.sum(targets * logp) / n
        dz = cfg.slope * (np.exp(logp) - targets) / n
        dth_out = np.zeros_like(thresholds[-1])
    else:
        o = surrogate(z - thresholds[-1], cfg.slope)
        wgt = np.where(targets > 0, cfg.positive_weight, 1.0)
        loss = -np.sum(wgt * (targets * np.log(o + eps) + (1 - targets) * np.log(1 - o + eps))) / n
        # exact derivative of the clipped-log BCE is within eps of this
        dz = cfg.slope * wgt * (o - targets) / n
        dth_out = -dz.sum(axis=0)
    gw = [None] * len(weights)
    gt = [None] * len(weights)
    gw[-1] = dz.T @ acts[-1]
    gt[-1] = dth_out
    for i in range(len(weights) - 2, -1, -1):
        dh = dz @ weights[i + 1]
        h = hs[i]
        dz = dh * cfg.slope * h * (1.0 - h)
        gw[i] = dz.T @ acts[i]
        gt[i] = -dz.sum(axis=0)
    return loss, gw, gt


def _project(weights, thresholds, cfg: TrainConfig):
    for i in range(len(weights)):
        np.maximum(weights[i], 0.0, out=weights[i])
        np.maximum(thresholds[i], cfg.theta_floor, out=thresholds[i])


def _finalize_thresholds(weights, thresholds, floor):
    """Pull unreachable thresholds down to the row sum; such a neuron stays silent either way."""
    out = []
    for w, th in zip(weights, thresholds):
        k, s = w.shape[1], float(w.max())
        th = np.where(th >= w.sum(axis=1), w.sum(axis=1), th)
        out.append(np.clip(th, floor, max(k * s * (1 - 1e-9), floor)))
    return out


def train(data, cfg: TrainConfig = TrainConfig(), seed: int = 0, n_classes: int = 10,
          history: list | None = None) -> FloatNetwork:
    """Mini-batch training with Adam steps and projection onto ``W >= 0, theta > 0``."""
    x_all = np.asarray(data.images, dtype=float)
    y_all = np.asarray(data.labels)
    if x_all.size == 0:
        raise ValueError("empty dataset")
    if x_all.min() < 0 or x_all.max() > 1:
        raise ValueError("training images must be normalized to [0, 1]")
    if y_all.min() < 0 or y_all.max() >= n_classes:
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = [x_all.shape[1], *cfg.hidden_sizes, n_classes]
    weights = [rng.uniform(0.0, 2.0 / sizes[i], (sizes[i + 1], sizes[i])) for i in range(len(sizes) - 1)]
    thresholds = []
    a = x_all
    for w in weights:
        z = a @ w.T
        th = np.maximum(np.median(z, axis=0), cfg.theta_floor)
        thresholds.append(th)
        a = (z > th).astype(float)
    targets = np.eye(n_classes)[y_all]
    params = weights + thresholds
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, step = 0.9, 0.999, 0
    nl = len(weights)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y_all))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, gw, gt = loss_and_grad(weights, thresholds, x_all[idx], targets[idx], cfg)
            total += loss * len(idx)
            step += 1
            for j, g in enumerate(gw + gt):
                m[j] = b1 * m[j] + (1 - b1) * g
                v[j] = b2 * v[j] + (1 - b2) * g * g
                params[j] -= cfg.learning_rate * (m[j] / (1 - b1 ** step)) / (np.sqrt(v[j] / (1 - b2 ** step)) + 1e-8)
            _project(weights, thresholds, cfg)
        if history is not None:
            history.append(total / len(y_all))
    thresholds = _finalize_thresholds(weights, thresholds, cfg.theta_floor)
    return FloatNetwork([w.copy() for w in weights], thresholds, cfg.readout)


def to_spec(net: FloatNetwork, output_cap: float = 1.0) -> NetworkSpec:
    th = list(net.thresholds)
    if net.readout == "fraction":
        # the output step is not read; park its threshold mid-range
        w = net.weights[-1]
        th[-1] = np.full(w.shape[0], 0.5 * w.shape[1] * max(float(w.max()), 1e-300))
    return quantize_network(net.weights, th, 1.0, output_cap, net.readout)


def accuracy(net: NetworkSpec | FloatNetwork, data, mode: ExecutionMode = FLOAT_REFERENCE) -> float:
    if isinstance(net, FloatNetwork):
        return float(np.mean(net.predict(data.images) == data.labels))
    preds, _ = predict_batch(net, data.images, mode)
    return float(np.mean(preds == data.labels))


# -- comparison ------------------------------------------------------------------

@dataclass
class PairReport:
    mode_a: str
    mode_b: str
    agreement: float
    max_pre_diff: list[float]
    n_samples: int


COMPARE_COLUMNS = ("mode_a", "mode_b", "n_samples", "agreement", "layer", "max_abs_pre_activation_diff")


def compare_modes(net: NetworkSpec, images: np.ndarray, modes: Sequence[ExecutionMode],
                  err: ChemistryErrorModel = IDEAL_CHEMISTRY) -> list[PairReport]:
    """Prediction agreement and per-layer worst pre-activation gap for every pair of modes."""
    if len(modes) < 2:
        raise ValueError("compare needs at least two modes")
    runs = {m: predict_batch(net, images, m, err) for m in modes}
    reports = []
    for a, b in itertools.combinations(modes, 2):
        pa, prea = runs[a]
        pb, preb = runs[b]
        diffs = [max(float(np.max(np.abs(x[l] - y[l]))) for x, y in zip(prea, preb))
                 for l in range(net.n_layers)]
        reports.append(PairReport(str(a), str(b), float(np.mean(pa == pb)), diffs, len(images)))
    return reports


def reports_to_csv(reports: Sequence[PairReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_COLUMNS)
    for r in reports:
        for layer, d in enumerate(r.max_pre_diff):
            w.writerow([r.mode_a, r.mode_b, r.n_samples, f"{r.agreement:.6f}", layer, f"{d:.6e}"])
    return buf.getvalue()
