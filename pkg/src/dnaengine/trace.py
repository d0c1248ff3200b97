"""Event-trace text format and the protocol validator.

A trace is line-delimited, tab-separated text::

    # dnaengine-trace v1
    # time_s	event_kind	row	col	droplet_id
    0.000000	R_CLOSE_L_OPEN	0	0	-
    30.000000	DNA_LOAD_LEFT	0	0	d000001
    ...

``row``/``col`` are ``-1`` where an event is not tied to a cell or a column
and ``droplet_id`` is ``-`` for valve-only events.  The validator only reads
these records; it knows nothing about the simulator.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

TRACE_MAGIC = "# dnaengine-trace v1"
TRACE_COLUMNS = ("time_s", "event_kind", "row", "col", "droplet_id")

MICROCELL_STEPS = (
    "R_CLOSE_L_OPEN",
    "DNA_LOAD_LEFT",
    "L_CLOSE_R_OPEN",
    "ENZYME_LOAD_RIGHT",
    "BOTH_OPEN",
    "CO_EXIT_MIX",
)
MERGE_KINDS = ("MERGE_Y_PHASE", "MERGE_Y_COLLECT", "MERGE_Z_PHASE", "MERGE_ARRIVE", "MERGE_DONE")
PIPELINE_KINDS = ("PIPE_DISPLACEMENT", "PIPE_THRESHOLD", "PIPE_GATE", "PIPE_TRANSLATION", "PIPE_NICK")
SEPARATOR_KIND = "SEPARATE_EMIT"
NO_DROPLET = "-"


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    time_s: float
    kind: str
    row: int = -1
    col: int = -1
    droplet_id: str = NO_DROPLET

    def to_line(self) -> str:
        return f"{self.time_s:.6f}\t{self.kind}\t{self.row}\t{self.col}\t{self.droplet_id}"

    @classmethod
    def from_line(cls, line: str) -> Event:
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 5:
            raise TraceFormatError(f"expected 5 tab-separated fields, got {len(parts)}: {line!r}")
        t, kind, row, col, did = parts
        try:
            return cls(float(t), kind, int(row), int(col), did)
        except ValueError as exc:
            raise TraceFormatError(f"malformed trace line {line!r}: {exc}") from None


def shifted(events: Iterable[Event], dt: float) -> list[Event]:
    """The same events ``dt`` seconds later, for chaining per-layer logs."""
    return [replace(e, time_s=e.time_s + dt) for e in events]


def dumps(events: Iterable[Event]) -> str:
    lines = [TRACE_MAGIC, "# " + "\t".join(TRACE_COLUMNS)]
    lines.extend(e.to_line() for e in events)
    return "\n".join(lines) + "\n"


def loads(text: str) -> list[Event]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_MAGIC:
        raise TraceFormatError("missing trace header")
    return [Event.from_line(ln) for ln in lines[1:] if ln.strip() and not ln.startswith("#")]


def write_trace(events: Iterable[Event], path) -> None:
    Path(path).write_text(dumps(events))


def read_trace(path) -> list[Event]:
    return loads(Path(path).read_text())


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str

    def __str__(self):
        return f"{self.rule}: {self.message}"


def _check_clock(events, out):
    for prev, cur in zip(events, events[1:]):
        if cur.time_s < prev.time_s:
            out.append(Violation("clock-monotonic", f"time goes back from {prev.time_s} to {cur.time_s} at {cur.kind}"))
            return


def _check_microcells(events, out):
    per_cell = defaultdict(list)
    for e in events:
        if e.kind in MICROCELL_STEPS:
            per_cell[(e.row, e.col)].append(e.kind)
    n = len(MICROCELL_STEPS)
    for cell, kinds in sorted(per_cell.items()):
        for start in range(0, len(kinds), n):
            chunk = tuple(kinds[start:start + n])
            if chunk != MICROCELL_STEPS[:len(chunk)] or len(chunk) != n:
                out.append(Violation("microcell-grammar", f"cell {cell} ran {list(chunk)}"))
                break


def _check_merges(events, out):
    per_row = defaultdict(list)
    for e in events:
        if e.kind in MERGE_KINDS:
            per_row[e.row].append(e)
    for row, evs in sorted(per_row.items()):
        state = "idle"
        collected: list[int] = []
        arrived: list[Event] = []
        for e in evs:
            if e.kind == "MERGE_Y_PHASE" and state == "idle":
                state, collected, arrived = "Y", [], []
            elif e.kind == "MERGE_Y_COLLECT" and state == "Y":
                collected.append(e.col)
            elif e.kind == "MERGE_Z_PHASE" and state == "Y":
                state = "Z"
            elif e.kind == "MERGE_ARRIVE" and state == "Z":
                arrived.append(e)
            elif e.kind == "MERGE_DONE" and state == "Z":
                if sorted(collected) != sorted(a.col for a in arrived) or not arrived:
                    out.append(Violation("merge-grammar", f"row {row}: collected {collected} but merged "
                                         f"{[a.col for a in arrived]}"))
                if len({a.time_s for a in arrived}) > 1:
                    out.append(Violation("merge-equal-path",
                                         f"row {row}: arrival times {[a.time_s for a in arrived]} differ"))
                state = "idle"
            else:
                out.append(Violation("merge-grammar", f"row {row}: {e.kind} at t={e.time_s} while in phase {state}"))
                break
        else:
            if state != "idle":
                out.append(Violation("merge-grammar", f"row {row}: merge left unfinished in phase {state}"))


def _check_occupancy(events, out):
    occupied: dict[tuple, str] = {}

    def take(seg, did, e):
        if seg in occupied:
            out.append(Violation("mutual-exclusion",
                                 f"segment {seg} holds {occupied[seg]} and {did} at t={e.time_s}"))
        occupied[seg] = did

    for e in events:
        if e.kind == "DNA_LOAD_LEFT":
            take(("L", e.row, e.col), e.droplet_id, e)
        elif e.kind == "ENZYME_LOAD_RIGHT":
            take(("R", e.row, e.col), e.droplet_id, e)
        elif e.kind == "CO_EXIT_MIX":
            occupied.pop(("L", e.row, e.col), None)
            occupied.pop(("R", e.row, e.col), None)
            take(("OUT", e.row, e.col), e.droplet_id, e)
        elif e.kind == "MERGE_ARRIVE":
            occupied.pop(("OUT", e.row, e.col), None)
        elif e.kind == "MERGE_DONE":
            take(("S", e.row), e.droplet_id, e)
        elif e.kind == SEPARATOR_KIND:
            occupied.pop(("S", e.row), None)


def _check_separator(events, out):
    per_row = defaultdict(list)
    for e in events:
        if e.kind == SEPARATOR_KIND:
            per_row[e.row].append(e)
    for row, evs in per_row.items():
        # consecutive runs with col restarting at 0 are separate separations
        runs, cur = [], []
        for e in evs:
            if e.col == 0 and cur:
                runs.append(cur)
                cur = []
            cur.append(e)
        runs.append(cur)
        for run in runs:
            gaps = [b.time_s - a.time_s for a, b in zip(run, run[1:])]
            if gaps and max(gaps) - min(gaps) > 1e-6:
                out.append(Violation("separator-spacing", f"row {row}: uneven emission gaps {gaps}"))


def validate(events: list[Event]) -> list[Violation]:
    """Check a trace against the microcell, merge, occupancy and clock rules."""
    out: list[Violation] = []
    _check_clock(events, out)
    _check_microcells(events, out)
    _check_merges(events, out)
    _check_occupancy(events, out)
    _check_separator(events, out)
    return out


def occupancy_after_loading(events: list[Event]) -> dict[tuple[int, int], tuple[str, str]]:
    """Replay loading events: (row, col) -> (DNA droplet id, enzyme droplet id)."""
    dna, enz = {}, {}
    for e in events:
        if e.kind == "DNA_LOAD_LEFT":
            dna[(e.row, e.col)] = e.droplet_id
        elif e.kind == "ENZYME_LOAD_RIGHT":
            enz[(e.row, e.col)] = e.droplet_id
    return {cell: (dna[cell], enz.get(cell)) for cell in dna}
