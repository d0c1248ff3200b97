"""Unit-interval algebra of stochastic logic gates and a serial bitstream engine.

A value x in [0, 1] is carried either exactly (``gate_eval``) or as a random
bitstream whose bits are 1 with probability x (``bitstream_encode``).  Bitwise
Boolean gates on independent streams then compute the same functions on the
encoded probabilities.

Bitstreams are drawn from numpy's PCG64 generator (64-bit state increment,
128-bit LCG with XSL-RR output), which is bit-reproducible across platforms
for a fixed integer seed.
"""

from __future__ import annotations

import ast
import enum
from dataclasses import dataclass, field

import numpy as np


class GateKind(enum.Enum):
    NOT = "NOT"
    AND = "AND"
    OR = "OR"
    NAND = "NAND"
    NOR = "NOR"
    XOR = "XOR"
    XNOR = "XNOR"

    @property
    def arity(self) -> int:
        return 1 if self is GateKind.NOT else 2

    @classmethod
    def parse(cls, name: str | GateKind) -> GateKind:
        if isinstance(name, GateKind):
            return name
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown gate {name!r}; expected one of {[g.name for g in cls]}") from None


def _check_unit(name: str, v: float) -> float:
    v = float(v)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name}={v!r} is outside [0, 1]")
    return v


@dataclass(frozen=True)
class FractionalValue:
    """A relative concentration or probability in [0, 1]."""

    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", _check_unit("value", self.value))

    def __float__(self) -> float:
        return self.value


_FORMULAS = {
    GateKind.AND: lambda x, y: x * y,
    GateKind.OR: lambda x, y: x + y - x * y,
    GateKind.NAND: lambda x, y: 1.0 - x * y,
    GateKind.NOR: lambda x, y: 1.0 - x - y + x * y,
    GateKind.XOR: lambda x, y: x + y - 2.0 * x * y,
    GateKind.XNOR: lambda x, y: 1.0 - x - y + 2.0 * x * y,
}


def gate_eval(gate: GateKind | str, x: float, y: float | None = None) -> float:
    """Exact stochastic function of ``gate`` at probabilities ``x`` (and ``y``).

    >>> gate_eval("OR", 0.3, 0.4)
    0.58
    """
    gate = GateKind.parse(gate)
    x = _check_unit("x", float(x))
    if gate is GateKind.NOT:
        if y is not None:
            raise TypeError("NOT takes exactly one input")
        return 1.0 - x
    if y is None:
        raise TypeError(f"{gate.name} takes exactly two inputs")
    y = _check_unit("y", float(y))
    out = _FORMULAS[gate](x, y)
    # floating cancellation can leave results a few ulps outside the interval
    return min(1.0, max(0.0, out))


@dataclass(frozen=True)
class Bitstream:
    bits: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size == 0:
            raise ValueError("a bitstream is a nonempty 1-D sequence")
        if np.any(bits > 1):
            raise ValueError("bitstream entries must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def length(self) -> int:
        return int(self.bits.size)

    def __len__(self) -> int:
        return self.length

    def mean(self) -> float:
        return float(self.bits.mean())


def bitstream_encode(x: float, n: int, seed: int) -> Bitstream:
    """Draw ``n`` independent bits, each 1 with probability ``x``."""
    x = _check_unit("x", x)
    if n < 1:
        raise ValueError("bitstream length must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    bits = (rng.random(n) < x).astype(np.uint8)
    return Bitstream(bits, seed)


_BITWISE = {
    GateKind.AND: lambda a, b: a & b,
    GateKind.OR: lambda a, b: a | b,
    GateKind.NAND: lambda a, b: 1 - (a & b),
    GateKind.NOR: lambda a, b: 1 - (a | b),
    GateKind.XOR: lambda a, b: a ^ b,
    GateKind.XNOR: lambda a, b: 1 - (a ^ b),
}


def bitstream_gate_apply(gate: GateKind | str, s1: Bitstream, s2: Bitstream | None = None) -> Bitstream:
    gate = GateKind.parse(gate)
    if gate is GateKind.NOT:
        if s2 is not None:
            raise TypeError("NOT takes exactly one input")
        return Bitstream(1 - s1.bits)
    if s2 is None:
        raise TypeError(f"{gate.name} takes exactly two inputs")
    if s1.length != s2.length:
        raise ValueError(f"bitstream lengths differ: {s1.length} != {s2.length}")
    return Bitstream(_BITWISE[gate](s1.bits, s2.bits).astype(np.uint8))


def _parse(expr: str) -> ast.Expression:
    # upper-casing lets "and(...)" through; lowercase gate names are Python keywords
    try:
        return ast.parse(expr.strip().upper(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse gate expression {expr!r}: {exc.msg}") from None


def evaluate_expression(expr: str) -> float:
    """Evaluate a nested gate expression such as ``"XOR(0.3, NOT(0.2))"``."""
    tree = _parse(expr)

    def walk(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            gate = GateKind.parse(node.func.id)
            args = [walk(a) for a in node.args]
            if len(args) != gate.arity:
                raise TypeError(f"{gate.name} takes {gate.arity} argument(s), got {len(args)}")
            return gate_eval(gate, *args)
        raise ValueError(f"unsupported syntax in gate expression: {ast.dump(node)}")

    return walk(tree.body)


def evaluate_expression_bitstream(expr: str, n: int, seed: int) -> float:
    """Estimate a gate expression by pushing independent bitstreams through it.

    Every numeric leaf gets its own stream, seeded from ``seed`` in order of
    appearance.
    """
    tree = _parse(expr)
    children = iter(np.random.SeedSequence(seed).spawn(4096))

    def walk(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            child_seed = int(next(children).generate_state(1, np.uint64)[0])
            return bitstream_encode(float(node.value), n, child_seed)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            gate = GateKind.parse(node.func.id)
            args = [walk(a) for a in node.args]
            if len(args) != gate.arity:
                raise TypeError(f"{gate.name} takes {gate.arity} argument(s), got {len(args)}")
            return bitstream_gate_apply(gate, *args)
        raise ValueError(f"unsupported syntax in gate expression: {ast.dump(node)}")

    return walk(tree.body).mean()
