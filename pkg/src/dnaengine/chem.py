"""Completion-level model of nicked-DNA solutions.

Every template molecule carries two nicking sites, A and B, so a droplet is a
population split over four species (unnicked, A-only, B-only, AB).  Only the
AB species releases a probe-displaceable fragment, so its share of the
population is the stored product.

Two modes are supported.  ``Mode.IDEAL`` keeps exact real fractions.
``Mode.SAMPLED`` keeps integer molecule counts and draws every stochastic
event from a seeded PCG64 generator.  Reactions run to completion; kinetics
only show up through the device timing constants.

All operations accept batched states: ``SolutionState.species`` has shape
``(..., 4)`` and every leading axis is an independent droplet.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

UNNICKED, A_ONLY, B_ONLY, AB = range(4)
SPECIES_NAMES = ("unnicked", "A-only", "B-only", "AB")
MAX_INTER_NICK_SPAN_BP = 18
DEFAULT_GAIN = 1e3
_TOL = 1e-12


class Mode(enum.Enum):
    IDEAL = "ideal"
    SAMPLED = "sampled"


class ChemistryError(ValueError):
    pass


class DoseOverflowError(ChemistryError):
    """An enzyme dose asks for a nick probability above one."""


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ChemistryError("sampled chemistry needs an explicit seed")
    return np.random.Generator(np.random.PCG64(seed))


def _round_count(x):
    # np.rint rounds half to even
    return np.rint(x).astype(np.int64)


@dataclass(frozen=True)
class NickTemplate:
    site_a_id: str = "A"
    site_b_id: str = "B"
    inter_nick_span_bp: int = MAX_INTER_NICK_SPAN_BP
    has_magnetic_bead: bool = True

    def __post_init__(self):
        if self.site_a_id == self.site_b_id:
            raise ChemistryError("nicking sites A and B must be distinct")
        if not 0 < self.inter_nick_span_bp <= MAX_INTER_NICK_SPAN_BP:
            raise ChemistryError(
                f"inter-nick span {self.inter_nick_span_bp} bp exceeds {MAX_INTER_NICK_SPAN_BP} bp;"
                " the fragment between the nicks would not detach")


@dataclass(frozen=True)
class ChemistryErrorModel:
    """Leakage knobs: ``efficiency`` of intended reactions, ``spurious_rate`` of unintended ones."""

    efficiency: float = 1.0
    spurious_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ChemistryError(f"efficiency must lie in (0, 1], got {self.efficiency}")
        if not 0.0 <= self.spurious_rate < 1.0:
            raise ChemistryError(f"spurious_rate must lie in [0, 1), got {self.spurious_rate}")


IDEAL_CHEMISTRY = ChemistryErrorModel()


@dataclass(frozen=True)
class ActivationParams:
    threshold: float
    output_cap: float = 1.0
    replenishment_excess: bool = True
    gain: float = DEFAULT_GAIN

    def __post_init__(self):
        th = np.asarray(self.threshold, dtype=float)
        if np.any(th <= 0.0) or np.any(th >= 1.0):
            raise ChemistryError(f"activation threshold must lie in (0, 1), got {self.threshold}")
        if not 0.0 < self.output_cap <= 1.0:
            raise ChemistryError(f"output_cap must lie in (0, 1], got {self.output_cap}")
        if self.gain <= 0:
            raise ChemistryError("gain must be positive")


@dataclass(frozen=True)
class SolutionState:
    """A droplet (or a batch of droplets) of double-nick templates.

    ``species[..., i]`` is a fraction in ideal mode and a molecule count in
    sampled mode.  ``total`` is the number of template molecules per droplet.
    """

    species: np.ndarray
    total: float
    mode: Mode = Mode.IDEAL
    rng_seed: int | None = None
    template: NickTemplate = field(default_factory=NickTemplate)

    def __post_init__(self):
        sp = np.array(self.species, dtype=np.int64 if self.mode is Mode.SAMPLED else float)
        if sp.shape[-1:] != (4,):
            raise ChemistryError(f"species must have a trailing axis of 4, got shape {sp.shape}")
        if self.total <= 0:
            raise ChemistryError("total molecule count must be positive")
        if np.any(sp < 0):
            raise ChemistryError("species amounts must be nonnegative")
        expected = self.total if self.mode is Mode.SAMPLED else 1.0
        if self.mode is Mode.SAMPLED:
            if np.any(sp.sum(axis=-1) != expected):
                raise ChemistryError("species counts must sum to the total")
        elif np.any(np.abs(sp.sum(axis=-1) - 1.0) > _TOL * 10):
            raise ChemistryError("species fractions must sum to 1")
        sp.setflags(write=False)
        object.__setattr__(self, "species", sp)

    @property
    def fractions(self) -> np.ndarray:
        if self.mode is Mode.IDEAL:
            return self.species
        return self.species / self.total

    @property
    def counts(self) -> np.ndarray:
        if self.mode is Mode.SAMPLED:
            return self.species
        return self.species * self.total

    @property
    def ab_fraction(self):
        return self.fractions[..., AB]

    @property
    def a_fraction(self):
        f = self.fractions
        return f[..., A_ONLY] + f[..., AB]

    @property
    def b_fraction(self):
        f = self.fractions
        return f[..., B_ONLY] + f[..., AB]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.species.shape[:-1]


@dataclass(frozen=True)
class EnzymeDose:
    concentration: np.ndarray | float
    tagged: bool = False

    def __post_init__(self):
        if np.any(np.asarray(self.concentration) < 0):
            raise ChemistryError("enzyme concentration must be nonnegative")


@dataclass(frozen=True)
class SsdnaPool:
    """Released single-stranded fragments, measured against ``reference_total`` templates."""

    count: np.ndarray | float
    reference_total: float

    def __post_init__(self):
        if self.reference_total <= 0:
            raise ChemistryError("reference_total must be positive")
        c = np.asarray(self.count)
        if np.any(c < 0) or np.any(c > self.reference_total * (1 + _TOL)):
            raise ChemistryError("ssDNA count must lie in [0, reference_total]")

    @property
    def fraction(self):
        return np.asarray(self.count) / self.reference_total


def encode_fraction(a, t: float, mode: Mode = Mode.IDEAL, seed=None) -> SolutionState:
    """Split, nick site A on one part, and mix back at ratio ``a``.

    The volumetric split is deterministic, so sampled mode nicks exactly
    ``round(a * t)`` molecules (half to even).
    """
    a = np.asarray(a, dtype=float)
    if np.any(a < 0) or np.any(a > 1):
        raise ChemistryError("encoded fraction must lie in [0, 1]")
    if t < 1:
        raise ChemistryError("a droplet needs at least one template molecule")
    species = np.zeros(a.shape + (4,))
    if mode is Mode.SAMPLED:
        if t != int(t):
            raise ChemistryError("sampled mode needs an integer molecule count")
        t = int(t)
        nicked = _round_count(a * t)
        species = np.stack([t - nicked, nicked, np.zeros_like(nicked), np.zeros_like(nicked)], axis=-1)
    else:
        species[..., UNNICKED] = 1.0 - a
        species[..., A_ONLY] = a
    return SolutionState(species, t, mode, seed if isinstance(seed, int) else None)


def weight_dose(b, t: float, k: int) -> EnzymeDose:
    """Enzyme amount that encodes ``b`` when spread over ``k`` microcells of ``t`` templates."""
    return EnzymeDose(np.asarray(b, dtype=float) * t * (1.0 / k))


def nick_probability(dose: EnzymeDose, t: float, k: int):
    b = np.asarray(dose.concentration, dtype=float) * k / t
    if np.any(b > 1.0 + _TOL):
        raise DoseOverflowError(f"enzyme dose requests nick probability {np.max(b):.6g} > 1")
    return np.minimum(b, 1.0)


def nick_site_b(s: SolutionState, dose: EnzymeDose, k: int = 1, seed=None) -> SolutionState:
    """Nick site B independently of site A with probability ``E * k / t``."""
    b = nick_probability(dose, s.total, k)
    b = np.broadcast_to(b, s.batch_shape)
    if s.mode is Mode.IDEAL:
        f = s.species
        out = np.empty_like(f)
        out[..., UNNICKED] = f[..., UNNICKED] * (1.0 - b)
        out[..., A_ONLY] = f[..., A_ONLY] * (1.0 - b)
        out[..., B_ONLY] = f[..., B_ONLY] + f[..., UNNICKED] * b
        out[..., AB] = f[..., AB] + f[..., A_ONLY] * b
        return replace(s, species=out)
    rng = as_rng(seed)
    c = s.species
    new_b = rng.binomial(c[..., UNNICKED], b)
    new_ab = rng.binomial(c[..., A_ONLY], b)
    out = c.copy()
    out[..., UNNICKED] -= new_b
    out[..., B_ONLY] += new_b
    out[..., A_ONLY] -= new_ab
    out[..., AB] += new_ab
    return replace(s, species=out)


def probe_readout(s: SolutionState, err: ChemistryErrorModel = IDEAL_CHEMISTRY) -> SsdnaPool:
    """Heat, add probe strands, and pull the released fragments away from the beads."""
    counts = s.counts
    ab = counts[..., AB]
    rest = counts[..., UNNICKED] + counts[..., A_ONLY] + counts[..., B_ONLY]
    if err.efficiency == 1.0 and err.spurious_rate == 0.0:
        released = ab
    else:
        released = err.efficiency * ab + err.spurious_rate * rest
        if s.mode is Mode.SAMPLED:
            released = _round_count(released)
    return SsdnaPool(released, s.total)


def merge_pools(items: Sequence[SsdnaPool | SolutionState]):
    """Combine ``k`` droplets into one; counts add and the reference total scales by ``k``."""
    if not items:
        raise ChemistryError("merge needs at least one droplet")
    first = items[0]
    if any(type(it) is not type(first) for it in items):
        raise ChemistryError("cannot merge pools with solutions")
    if isinstance(first, SsdnaPool):
        if any(p.reference_total != first.reference_total for p in items):
            raise ChemistryError("merged pools must share a reference total")
        return merge_along(SsdnaPool(np.stack([np.asarray(p.count) for p in items], axis=-1),
                                     first.reference_total))
    if any(s.total != first.total or s.mode is not first.mode for s in items):
        raise ChemistryError("merged solutions must share total and mode")
    stacked = replace(first, species=np.stack([s.species for s in items], axis=-2))
    return merge_along(stacked)


def merge_along(x, axis: int = -1):
    """Merge a batch of droplets along one batch axis (the last by default)."""
    if isinstance(x, SsdnaPool):
        c = np.asarray(x.count)
        k = c.shape[axis]
        return SsdnaPool(c.sum(axis=axis), x.reference_total * k)
    if axis >= 0:
        raise ChemistryError("use a negative batch axis for solutions")
    sp = x.species
    sp_axis = axis - 1  # skip the trailing species axis
    k = sp.shape[sp_axis]
    if x.mode is Mode.IDEAL:
        merged = sp.mean(axis=sp_axis)
    else:
        merged = sp.sum(axis=sp_axis)
    return replace(x, species=merged, total=x.total * k)


def seesaw_activation(x, p: ActivationParams, err: ChemistryErrorModel = IDEAL_CHEMISTRY):
    """Threshold, gate, and replenishment reactions applied to an ssDNA fraction.

    The threshold strand consumes input 1:1, so ``x == threshold`` leaves no
    residue and gives 0.  With excess replenishment any residue drives the
    output to ``output_cap``; otherwise the output is ``gain * residue`` capped.
    Leakage scales the high output by ``efficiency`` and lets a
    ``spurious_rate`` share of the cap through when the gate is off.
    """
    x = np.asarray(x, dtype=float)
    residue = np.maximum(x - p.threshold, 0.0)
    if p.replenishment_excess:
        on = np.where(residue > 0.0, p.output_cap, 0.0)
    else:
        on = np.minimum(p.output_cap, p.gain * residue)
    if err.efficiency == 1.0 and err.spurious_rate == 0.0:
        out = on
    else:
        out = np.where(residue > 0.0, err.efficiency * on, err.spurious_rate * p.output_cap)
    return out if out.ndim else float(out)


def translate_to_enzyme(out, reference_total: float,
                        err: ChemistryErrorModel = IDEAL_CHEMISTRY) -> EnzymeDose:
    """Untag nicking enzyme one-for-one with output strands; tagged surplus is pulled down."""
    out = np.asarray(out, dtype=float)
    return EnzymeDose(err.efficiency * out * reference_total, tagged=False)


def nick_fresh(dose: EnzymeDose, reference_total: float, t: float,
               mode: Mode = Mode.IDEAL, seed=None) -> SolutionState:
    """Nick site A on ``t`` fresh templates with an untagged enzyme dose."""
    a = np.asarray(dose.concentration, dtype=float) / reference_total
    if np.any(a > 1.0 + _TOL):
        raise DoseOverflowError("untagged enzyme exceeds the fresh template count")
    return encode_fraction(np.clip(a, 0.0, 1.0), t, mode, seed)


def split_droplet(s: SolutionState | SsdnaPool, k: int, seed=None) -> list:
    """Pinch a droplet into ``k`` equal parts.

    Sampled solutions are partitioned by a multivariate hypergeometric draw.
    When the total is not divisible by ``k`` the remainder molecules go one
    each to the first parts (round-robin).
    """
    if k < 1:
        raise ChemistryError("k must be >= 1")
    if k == 1:
        return [s]
    if isinstance(s, SsdnaPool):
        c = np.asarray(s.count) / k
        return [SsdnaPool(c, s.reference_total / k) for _ in range(k)]
    if s.mode is Mode.IDEAL:
        return [replace(s, total=s.total / k) for _ in range(k)]
    if s.species.ndim != 1:
        raise ChemistryError("sampled split works on one droplet at a time")
    rng = as_rng(seed)
    total = int(s.total)
    sizes = [total // k + (1 if i < total % k else 0) for i in range(k)]
    if sizes[-1] == 0:
        raise ChemistryError(f"cannot split {total} molecules into {k} nonempty parts")
    remaining = s.species.copy()
    parts = []
    for size in sizes[:-1]:
        draw = rng.multivariate_hypergeometric(remaining, size)
        remaining = remaining - draw
        parts.append(replace(s, species=draw, total=size))
    parts.append(replace(s, species=remaining, total=sizes[-1]))
    return parts


def multiply(a: float, b: float, t: float = 10**6, mode: Mode = Mode.IDEAL, seed=None,
             err: ChemistryErrorModel = IDEAL_CHEMISTRY) -> float:
    """Encode ``a``, nick B with a dose encoding ``b``, and read out the product fraction."""
    rng = as_rng(seed) if mode is Mode.SAMPLED else None
    s = encode_fraction(a, t, mode)
    s = nick_site_b(s, weight_dose(b, t, 1), 1, rng)
    return float(probe_readout(s, err).fraction)
