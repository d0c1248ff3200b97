import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnaengine.stochastic import (
    Bitstream, FractionalValue, GateKind, bitstream_encode, bitstream_gate_apply,
    evaluate_expression, evaluate_expression_bitstream, gate_eval,
)

unit = st.floats(0.0, 1.0, allow_nan=False)
TRUTH = {
    GateKind.AND: lambda p, q: p and q,
    GateKind.OR: lambda p, q: p or q,
    GateKind.NAND: lambda p, q: not (p and q),
    GateKind.NOR: lambda p, q: not (p or q),
    GateKind.XOR: lambda p, q: p != q,
    GateKind.XNOR: lambda p, q: p == q,
}


def brute_force(gate, x, y=None):
    """Probability the gate outputs 1, summed over the Boolean input table."""
    if gate is GateKind.NOT:
        return 1.0 - x
    total = 0.0
    for p, q in itertools.product([0, 1], repeat=2):
        weight = (x if p else 1 - x) * (y if q else 1 - y)
        total += weight * TRUTH[gate](p, q)
    return total


def test_examples():
    assert gate_eval("AND", 0.5, 0.5) == 0.25
    assert gate_eval(GateKind.NOT, 3 / 8) == 5 / 8
    assert gate_eval("XOR", 1, 1) == 0
    assert gate_eval("OR", 0.3, 0.4) == pytest.approx(brute_force(GateKind.OR, 0.3, 0.4), abs=1e-12)
    assert gate_eval("OR", 0.3, 0.4) == pytest.approx(0.58, abs=1e-12)


def test_arity_errors():
    with pytest.raises(TypeError):
        gate_eval("NOT", 0.1, 0.2)
    with pytest.raises(TypeError):
        gate_eval("AND", 0.1)
    with pytest.raises(ValueError):
        gate_eval("AND", 1.5, 0.2)
    with pytest.raises(ValueError):
        gate_eval("MAYBE", 0.1, 0.2)


def test_fractional_value_range():
    assert float(FractionalValue(0.25)) == 0.25
    with pytest.raises(ValueError):
        FractionalValue(-0.1)


@given(st.sampled_from(list(GateKind)), unit, unit)
def test_range_closure(gate, x, y):
    out = gate_eval(gate, x) if gate is GateKind.NOT else gate_eval(gate, x, y)
    assert 0.0 <= out <= 1.0


@given(st.sampled_from(list(GateKind)), unit, unit)
def test_matches_truth_table(gate, x, y):
    got = gate_eval(gate, x) if gate is GateKind.NOT else gate_eval(gate, x, y)
    want = brute_force(gate, x) if gate is GateKind.NOT else brute_force(gate, x, y)
    assert abs(got - want) <= 1e-12


@given(unit, unit)
def test_de_morgan(x, y):
    assert gate_eval("NAND", x, y) == gate_eval("NOT", gate_eval("AND", x, y))
    assert gate_eval("NOR", x, y) == pytest.approx(gate_eval("NOT", gate_eval("OR", x, y)), abs=1e-15)
    assert gate_eval("XNOR", x, y) == pytest.approx(gate_eval("NOT", gate_eval("XOR", x, y)), abs=1e-15)


def test_encode_extremes():
    assert not bitstream_encode(0.0, 100, 1).bits.any()
    assert bitstream_encode(1.0, 100, 1).bits.all()
    assert len(bitstream_encode(0.5, 17, 1)) == 17


def test_encode_deterministic_and_bounded():
    a = bitstream_encode(3 / 8, 10**5, 7)
    b = bitstream_encode(3 / 8, 10**5, 7)
    assert np.array_equal(a.bits, b.bits)
    x = 3 / 8
    assert abs(a.mean() - x) <= 4 * math.sqrt(x * (1 - x) / 10**5)


def test_encode_bad_length():
    with pytest.raises(ValueError):
        bitstream_encode(0.5, 0, 1)


def test_bits_are_read_only():
    s = bitstream_encode(0.5, 8, 1)
    with pytest.raises(ValueError):
        s.bits[0] = 1


def test_and_of_ones():
    ones = Bitstream(np.ones(32))
    assert bitstream_gate_apply("AND", ones, ones).bits.all()


def test_and_of_halves():
    n = 10**5
    out = bitstream_gate_apply("AND", bitstream_encode(0.5, n, 1), bitstream_encode(0.5, n, 2))
    assert abs(out.mean() - 0.25) <= 4 * math.sqrt(0.25 * 0.75 / n)


def test_length_mismatch():
    with pytest.raises(ValueError):
        bitstream_gate_apply("AND", bitstream_encode(0.5, 8, 1), bitstream_encode(0.5, 9, 1))
    with pytest.raises(TypeError):
        bitstream_gate_apply("NOT", bitstream_encode(0.5, 8, 1), bitstream_encode(0.5, 8, 1))


@pytest.mark.parametrize("gate", list(GateKind))
@pytest.mark.parametrize("n", [1, 4, 16])
def test_exhaustive_bitwise(gate, n):
    # every n-bit pair when small, otherwise a fixed enumeration over 4-bit blocks
    pairs = list(itertools.product([0, 1], repeat=2))
    s1 = Bitstream(np.array([pairs[i % 4][0] for i in range(n)]))
    s2 = Bitstream(np.array([pairs[i % 4][1] for i in range(n)]))
    if gate is GateKind.NOT:
        out = bitstream_gate_apply(gate, s1)
        assert list(out.bits) == [1 - b for b in s1.bits]
    else:
        out = bitstream_gate_apply(gate, s1, s2)
        assert list(out.bits) == [int(TRUTH[gate](p, q)) for p, q in zip(s1.bits, s2.bits)]


@pytest.mark.parametrize("gate", list(GateKind))
def test_bitstream_algebra_agreement(gate):
    n = 10**5
    x, y = 0.3, 0.65
    s1, s2 = bitstream_encode(x, n, 11), bitstream_encode(y, n, 12)
    if gate is GateKind.NOT:
        emp, exact = bitstream_gate_apply(gate, s1).mean(), gate_eval(gate, x)
    else:
        emp, exact = bitstream_gate_apply(gate, s1, s2).mean(), gate_eval(gate, x, y)
    assert abs(emp - exact) <= 5 * math.sqrt(0.25 / n)


def test_expression_evaluation():
    assert evaluate_expression("XOR(0.3, NOT(0.2))") == pytest.approx(0.3 + 0.8 - 2 * 0.3 * 0.8)
    assert evaluate_expression("and(0.5, 0.5)") == 0.25
    with pytest.raises(TypeError):
        evaluate_expression("AND(0.5)")
    with pytest.raises(ValueError):
        evaluate_expression("__import__('os')")
    est = evaluate_expression_bitstream("XOR(0.3, NOT(0.2))", 10**5, 0)
    assert abs(est - 0.62) <= 5 * math.sqrt(0.25 / 10**5)
