"""Discrete-event model of the microcell array, merge modules and reaction pipelines.

Droplet motion is a sequence of timed segment transitions.  The transport
budget ``t_transport`` is spread over four legs (DNA loading, enzyme loading,
co-exit to the merge module, separation), so one full layer on the array
spans exactly ``t_transport + t_mult + t_merge + t_activation``.

Row ``i`` of the array is neuron ``i``; column ``j`` carries input ``j``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import chem
from .chem import (ActivationParams, ChemistryErrorModel, EnzymeDose, Mode, SolutionState,
                   SsdnaPool, IDEAL_CHEMISTRY)
from .device import TimingConstants
from .trace import Event, NO_DROPLET, SEPARATOR_KIND

FAULTS = frozenset({"skip_valve_step", "double_occupy", "swap_merge_phases", "unequal_merge_path"})


class ProtocolError(RuntimeError):
    pass


class Valve(enum.Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass
class Droplet:
    id: str
    payload: SolutionState | SsdnaPool | EnzymeDose
    position: str
    created_at: float


@dataclass
class Microcell:
    row: int
    col: int
    valve_l: Valve = Valve.OPEN
    valve_r: Valve = Valve.OPEN
    left_slot: str | None = None
    right_slot: str | None = None
    mixed: Droplet | None = None
    ready_at: float = 0.0


@dataclass(frozen=True)
class PipelineParams:
    activation: ActivationParams
    err: ChemistryErrorModel = IDEAL_CHEMISTRY
    fresh_total: float | None = None


class MicrocellArray:
    """A ``rows x cols`` grid of microcells with one merge module and pipeline per row.

    ``faults`` switches on deliberate protocol violations so that the trace
    validator can be shown to catch them.
    """

    def __init__(self, k: int, cols: int | None = None, timing: TimingConstants | None = None,
                 seed=None, faults: Sequence[str] = ()):
        if k < 1 or (cols is not None and cols < 1):
            raise ValueError("array dimensions must be >= 1")
        unknown = set(faults) - FAULTS
        if unknown:
            raise ValueError(f"unknown fault toggles {sorted(unknown)}")
        self.rows = k
        self.cols = k if cols is None else cols
        self.timing = timing or TimingConstants()
        self.faults = frozenset(faults)
        self.rng = np.random.Generator(np.random.PCG64(seed)) if seed is not None else None
        self.cells = [[Microcell(r, c) for c in range(self.cols)] for r in range(self.rows)]
        self.clock = 0.0
        self.events: list[Event] = []
        self._ids = itertools.count(1)
        self._loaded: dict[tuple[int, int], tuple[Droplet, Droplet]] = {}

    @property
    def k(self) -> int:
        return self.cols

    @property
    def leg(self) -> float:
        return self.timing.t_transport / 4.0

    def _emit(self, time_s, kind, row=-1, col=-1, droplet_id=NO_DROPLET):
        if time_s < self.clock:
            raise ProtocolError(f"event {kind} at {time_s} precedes clock {self.clock}")
        self.clock = time_s
        self.events.append(Event(time_s, kind, row, col, droplet_id))

    def new_droplet(self, payload, position: str = "reservoir") -> Droplet:
        return Droplet(f"d{next(self._ids):06d}", payload, position, self.clock)

    def _rng_for(self, mode: Mode):
        if mode is Mode.SAMPLED and self.rng is None:
            raise ProtocolError("sampled payloads need an array seed")
        return self.rng

    # -- microcell protocol ------------------------------------------------

    def _check_pair(self, cell: Microcell, dna: Droplet, enzyme: Droplet):
        if not isinstance(dna.payload, SolutionState) or not isinstance(enzyme.payload, EnzymeDose):
            raise TypeError("a microcell takes a DNA solution droplet and an enzyme droplet")
        if cell.left_slot is not None or cell.right_slot is not None or cell.mixed is not None:
            raise ProtocolError(f"microcell ({cell.row},{cell.col}) is occupied")

    def _load_steps(self, pairs):
        """Steps 1-4 for every (cell, dna, enzyme), batched across cells."""
        t0 = self.clock
        skip = "skip_valve_step" in self.faults
        for cell, _, _ in pairs:
            cell.valve_r, cell.valve_l = Valve.CLOSED, Valve.OPEN
            self._emit(t0, "R_CLOSE_L_OPEN", cell.row, cell.col)
        for cell, dna, _ in pairs:
            cell.left_slot = dna.id
            dna.position = f"cell[{cell.row},{cell.col}].L"
            self._emit(t0 + self.leg, "DNA_LOAD_LEFT", cell.row, cell.col, dna.id)
            if "double_occupy" in self.faults and (cell.row, cell.col) == (0, 0):
                self._emit(t0 + self.leg, "DNA_LOAD_LEFT", 0, 0, f"{dna.id}x")
        for cell, _, _ in pairs:
            cell.valve_l, cell.valve_r = Valve.CLOSED, Valve.OPEN
            if not (skip and (cell.row, cell.col) == (0, 0)):
                self._emit(t0 + self.leg, "L_CLOSE_R_OPEN", cell.row, cell.col)
        for cell, _, enzyme in pairs:
            cell.right_slot = enzyme.id
            enzyme.position = f"cell[{cell.row},{cell.col}].R"
            self._emit(t0 + 2 * self.leg, "ENZYME_LOAD_RIGHT", cell.row, cell.col, enzyme.id)

    def _mix_steps(self, pairs, k: int) -> list[Droplet]:
        """Steps 5-6: open both valves, co-exit, and nick site B in the mixed droplet."""
        t0 = self.clock
        for cell, _, _ in pairs:
            cell.valve_l = cell.valve_r = Valve.OPEN
            self._emit(t0, "BOTH_OPEN", cell.row, cell.col)
        mixed = []
        for cell, dna, enzyme in pairs:
            rng = self._rng_for(dna.payload.mode)
            payload = chem.nick_site_b(dna.payload, enzyme.payload, k, rng)
            drop = self.new_droplet(payload, f"cell[{cell.row},{cell.col}].out")
            cell.left_slot = cell.right_slot = None
            cell.mixed = drop
            cell.ready_at = t0 + self.leg + self.timing.t_mult
            self._emit(t0 + self.leg, "CO_EXIT_MIX", cell.row, cell.col, drop.id)
            mixed.append(drop)
        return mixed

    def run_microcell_protocol(self, row: int, col: int, dna: Droplet, enzyme: Droplet,
                               k: int | None = None) -> Droplet:
        """Load one DNA and one enzyme droplet into a cell and mix them (steps 1-6)."""
        cell = self.cells[row][col]
        self._check_pair(cell, dna, enzyme)
        pairs = [(cell, dna, enzyme)]
        self._load_steps(pairs)
        return self._mix_steps(pairs, self.cols if k is None else k)[0]

    def load_array(self, dna: Sequence[Sequence[Droplet]], enzyme: Sequence[Sequence[Droplet]]) -> None:
        """Fill every cell with one DNA (left) and one enzyme (right) droplet."""
        for name, grid in (("DNA", dna), ("enzyme", enzyme)):
            if len(grid) != self.rows or any(len(r) != self.cols for r in grid):
                n = sum(len(r) for r in grid)
                raise ValueError(f"expected {self.rows}x{self.cols} {name} droplets, got {n}")
        pairs = []
        for r in range(self.rows):
            for c in range(self.cols):
                cell = self.cells[r][c]
                self._check_pair(cell, dna[r][c], enzyme[r][c])
                pairs.append((cell, dna[r][c], enzyme[r][c]))
        self._load_steps(pairs)
        for cell, d, e in pairs:
            self._loaded[(cell.row, cell.col)] = (d, e)

    def mix_array(self) -> list[list[Droplet]]:
        pairs = []
        for r in range(self.rows):
            for c in range(self.cols):
                if (r, c) not in self._loaded:
                    raise ProtocolError(f"cell ({r},{c}) was not loaded")
                pairs.append((self.cells[r][c], *self._loaded.pop((r, c))))
        mixed = self._mix_steps(pairs, self.cols)
        return [mixed[r * self.cols:(r + 1) * self.cols] for r in range(self.rows)]

    # -- merge module S ----------------------------------------------------

    def merge_rows(self, rows: Sequence[int] | None = None) -> list[Droplet]:
        """Two-phase merge of each row's mixed droplets into one droplet per row."""
        rows = list(range(self.rows)) if rows is None else list(rows)
        for r in rows:
            for cell in self.cells[r]:
                if cell.mixed is None:
                    raise ProtocolError(f"cell ({r},{cell.col}) has not completed mixing")
        t0 = max([self.clock] + [c.ready_at for r in rows for c in self.cells[r]])
        half = self.timing.t_merge / 2.0
        phases = [("MERGE_Y_PHASE", "MERGE_Y_COLLECT"), ("MERGE_Z_PHASE", "MERGE_ARRIVE")]
        if "swap_merge_phases" in self.faults:
            phases.reverse()
        late = "unequal_merge_path" in self.faults
        evs = []
        for i, (phase, per_drop) in enumerate(phases):
            t_phase = t0 + i * half
            evs.extend(Event(t_phase, phase, r) for r in rows)
            for r in rows:
                for cell in self.cells[r]:
                    skew = 1.0 if (late and per_drop == "MERGE_ARRIVE" and r == rows[0]
                                   and cell.col == self.cols - 1) else 0.0
                    evs.append(Event(t_phase + half + skew, per_drop, r, cell.col, cell.mixed.id))
        # stable sort keeps a phase's collections ahead of the next phase opening
        for e in sorted(evs, key=lambda e: e.time_s):
            self._emit(e.time_s, e.kind, e.row, e.col, e.droplet_id)
        merged = []
        for r in rows:
            payload = chem.merge_pools([c.mixed.payload for c in self.cells[r]])
            drop = self.new_droplet(payload, f"S[{r}]")
            self._emit(self.clock, "MERGE_DONE", r, -1, drop.id)
            for cell in self.cells[r]:
                cell.mixed = None
            merged.append(drop)
        return merged

    def merge_row(self, row: int) -> Droplet:
        return self.merge_rows([row])[0]

    # -- reaction pipeline P and separator ----------------------------------

    def run_reaction_pipelines(self, droplets: Sequence[Droplet], params: Sequence[PipelineParams],
                               rows: Sequence[int] | None = None) -> list[Droplet]:
        """Readout, activation, enzyme translation and fresh nicking for each merged droplet."""
        rows = list(range(len(droplets))) if rows is None else list(rows)
        for d in droplets:
            if not isinstance(d.payload, SolutionState):
                raise TypeError("the reaction pipeline takes a merged DNA solution droplet")
        t = self.clock
        pools = [chem.probe_readout(d.payload, p.err) for d, p in zip(droplets, params)]
        outs = [None] * len(droplets)
        doses = [None] * len(droplets)
        fresh = [None] * len(droplets)
        for stage, duration in self.timing.pipeline_stages:
            t += duration
            for i, (d, p) in enumerate(zip(droplets, params)):
                if stage == "PIPE_GATE":
                    outs[i] = chem.seesaw_activation(pools[i].fraction, p.activation, p.err)
                elif stage == "PIPE_TRANSLATION":
                    doses[i] = chem.translate_to_enzyme(outs[i], pools[i].reference_total, p.err)
                elif stage == "PIPE_NICK":
                    mode = d.payload.mode
                    total = p.fresh_total or d.payload.total
                    fresh[i] = chem.nick_fresh(doses[i], pools[i].reference_total, total, mode,
                                               self._rng_for(mode))
                self._emit(t, stage, rows[i], -1, d.id)
        return [self.new_droplet(s, f"P[{r}]") for s, r in zip(fresh, rows)]

    def run_reaction_pipeline(self, droplet: Droplet, params: PipelineParams, row: int = 0) -> Droplet:
        return self.run_reaction_pipelines([droplet], [params], [row])[0]

    def separate_droplets(self, droplets: Sequence[Droplet], k: int,
                          rows: Sequence[int] | None = None) -> list[list[Droplet]]:
        """Pinch each droplet into ``k`` equally spaced droplets."""
        if k < 1:
            raise ValueError("k must be >= 1")
        rows = list(range(len(droplets))) if rows is None else list(rows)
        parts = []
        for d in droplets:
            mode = getattr(d.payload, "mode", Mode.IDEAL)
            rng = self._rng_for(mode) if k > 1 else None
            parts.append([self.new_droplet(p, "separator") for p in chem.split_droplet(d.payload, k, rng)])
        t0 = self.clock
        for j in range(k):
            for r, group in zip(rows, parts):
                self._emit(t0 + self.leg * (j + 1) / k, SEPARATOR_KIND, r, j, group[j].id)
        return parts

    def separate_droplet(self, droplet: Droplet, k: int, row: int = 0) -> list[Droplet]:
        return self.separate_droplets([droplet], k, [row])[0]


@dataclass
class LayerRun:
    outputs: list[list[Droplet]]
    merged: list[Droplet]
    activations: np.ndarray
    pre_activations: np.ndarray
    events: list[Event] = field(repr=False)
    end_time_s: float = 0.0


def simulate_layer(inputs, weights, thresholds, t: int = 10**6, mode: Mode = Mode.IDEAL, seed=None,
                   timing: TimingConstants | None = None, err: ChemistryErrorModel = IDEAL_CHEMISTRY,
                   n_next: int = 1, output_cap: float = 1.0, faults: Sequence[str] = (),
                   gain: float | None = None) -> LayerRun:
    """Run one ANN layer through the array.

    ``inputs`` is either a vector of fractions (encoded fresh) or, for a
    downstream layer, a list with one list of droplets per input column.
    """
    weights = np.asarray(weights, dtype=float)
    n_out, n_in = weights.shape
    arr = MicrocellArray(n_out, n_in, timing, seed, faults)
    if len(inputs) != n_in:
        raise ValueError(f"layer takes {n_in} inputs, got {len(inputs)}")
    if isinstance(inputs[0], (list, tuple)):
        dna = [[inputs[j][i] for j in range(n_in)] for i in range(n_out)]
    else:
        dna = [[arr.new_droplet(chem.encode_fraction(float(x), t, mode)) for x in inputs] for _ in range(n_out)]
    dna_total = dna[0][0].payload.total
    enzyme = [[arr.new_droplet(chem.weight_dose(weights[i, j], dna_total, n_in)) for j in range(n_in)]
              for i in range(n_out)]
    arr.load_array(dna, enzyme)
    arr.mix_array()
    merged = arr.merge_rows()
    thresholds = np.broadcast_to(np.asarray(thresholds, dtype=float), (n_out,))
    params = [PipelineParams(ActivationParams(float(th), output_cap, gain is None, gain or chem.DEFAULT_GAIN), err)
              for th in thresholds]
    pre = np.array([float(chem.probe_readout(d.payload, p.err).fraction) for d, p in zip(merged, params)])
    fresh = arr.run_reaction_pipelines(merged, params)
    act = np.array([float(d.payload.a_fraction) for d in fresh])
    outputs = arr.separate_droplets(fresh, n_next)
    return LayerRun(outputs, merged, act, pre, arr.events, arr.clock)
