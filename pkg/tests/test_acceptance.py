"""Acceptance criteria, one test each, with a PASS/FAIL line in the terminal summary."""

import contextlib
import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from dnaengine import ann, chem, trace
from dnaengine.chem import ActivationParams, Mode
from dnaengine.device import PUBLISHED_CONFIGS, DeviceConfig, LayerPlan, TimingConstants, explore, layer_latency
from dnaengine.fluidics import simulate_layer
from dnaengine.stochastic import GateKind, bitstream_encode, bitstream_gate_apply, gate_eval


@contextlib.contextmanager
def criterion(name, limit_s):
    t0 = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        elapsed = time.perf_counter() - t0
        ACCEPTANCE_LINES.append(f"FAIL  {name}  ({elapsed:.2f} s)  {type(exc).__name__}: {exc}".splitlines()[0])
        print(ACCEPTANCE_LINES[-1])
        raise
    elapsed = time.perf_counter() - t0
    ok = elapsed < limit_s
    note = ", ".join(f"{k}={v}" for k, v in detail.items())
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}  ({elapsed:.2f} s of {limit_s} s)  {note}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, f"{name} took {elapsed:.1f} s, limit {limit_s} s"


TRUTH = {
    GateKind.AND: lambda p, q: p & q,
    GateKind.OR: lambda p, q: p | q,
    GateKind.NAND: lambda p, q: 1 - (p & q),
    GateKind.NOR: lambda p, q: 1 - (p | q),
    GateKind.XOR: lambda p, q: p ^ q,
    GateKind.XNOR: lambda p, q: 1 - (p ^ q),
}


def truth_table_expectation(gate, x, y):
    if gate is GateKind.NOT:
        return 1.0 - x
    return sum((x if p else 1 - x) * (y if q else 1 - y) * TRUTH[gate](p, q)
               for p, q in itertools.product([0, 1], repeat=2))


def test_gate_algebra():
    with criterion("gate algebra", 10) as d:
        rng = np.random.Generator(np.random.PCG64(1))
        worst = 0.0
        for gate in GateKind:
            for x, y in rng.uniform(0, 1, (1000, 2)):
                got = gate_eval(gate, x) if gate is GateKind.NOT else gate_eval(gate, x, y)
                worst = max(worst, abs(got - truth_table_expectation(gate, x, y)))
        assert worst <= 1e-12
        n = 10**5
        bound = 4 * math.sqrt(0.25 / n)
        for i, gate in enumerate(GateKind):
            x, y = 0.2 + 0.1 * i, 0.85 - 0.1 * i
            s1, s2 = bitstream_encode(x, n, 100 + i), bitstream_encode(y, n, 200 + i)
            out = bitstream_gate_apply(gate, s1) if gate is GateKind.NOT else bitstream_gate_apply(gate, s1, s2)
            exact = gate_eval(gate, x) if gate is GateKind.NOT else gate_eval(gate, x, y)
            assert abs(out.mean() - exact) <= bound, gate
        d["max_err"] = f"{worst:.1e}"


def test_multiplication():
    with criterion("multiplication", 60) as d:
        rng = np.random.Generator(np.random.PCG64(2))
        for a, b in rng.uniform(0, 1, (1000, 2)):
            assert abs(chem.multiply(a, b) - a * b) <= 1e-12
        t = 10**6
        hits = 0
        for seed in range(20):
            a, b = rng.uniform(0, 1, 2)
            ab = a * b
            hits += abs(chem.multiply(a, b, t, Mode.SAMPLED, seed) - ab) <= 4 * math.sqrt(ab * (1 - ab) / t)
        assert hits >= 19
        d["sampled_within_bound"] = f"{hits}/20"


def test_table2_reproduction():
    published = {
        "Config-1": (553.19, 3.84, 14.17),
        "Config-2": (34.57, 0.24, 38.6),
        "Config-3": (3.69, 0.03, 105.6),
        "Config-4": (0.23, 0.002, 404.6),
    }
    with criterion("design-space table", 1):
        rows = explore(list(PUBLISHED_CONFIGS))
        for row in rows:
            pess, opt, hours = published[row.config_name]
            assert abs(row.area_pessimistic_cm2 - pess) <= 0.01
            assert abs(row.area_optimistic_cm2 - opt) <= (0.001 if row.config_name == "Config-4" else 0.01)
            assert abs(row.exec_time_per_layer_hr - hours) <= 0.1
        assert [r.serialization_hidden for r in rows] == [4, 16, 49, 196]
        assert [r.serialization_input for r in rows] == [4, 16, 49, 196]
        assert rows[-1].serialization_output == 3
        assert abs(layer_latency(LayerPlan(784, 784), TimingConstants()) - 8.07) <= 0.01
        assert abs(explore([DeviceConfig(784)])[0].exec_time_per_layer_hr - 8.07) <= 0.01


def composed_layer(x, w, th, t):
    n_out, k = w.shape
    pres, outs = [], []
    for i in range(n_out):
        cells = [chem.nick_site_b(chem.encode_fraction(x[j], t), chem.weight_dose(w[i, j], t, k), k)
                 for j in range(k)]
        merged = chem.merge_pools(cells)
        pool = chem.probe_readout(merged)
        act = chem.seesaw_activation(pool.fraction, ActivationParams(th[i]))
        fresh = chem.nick_fresh(chem.translate_to_enzyme(act, pool.reference_total), pool.reference_total,
                                merged.total)
        pres.append(pool.fraction)
        outs.append(fresh.a_fraction)
    return np.array(pres), np.array(outs)


def test_fluidics_protocol():
    with criterion("fluidics protocol", 30) as d:
        rng = np.random.Generator(np.random.PCG64(3))
        events = 0
        for k in (1, 2, 4, 8):
            x, w, th = rng.uniform(0, 1, k), rng.uniform(0, 1, (k, k)), rng.uniform(0.05, 0.6, k)
            run = simulate_layer(x, w, th, 10**6)
            assert trace.validate(run.events) == []
            pre, out = composed_layer(x, w, th, 10**6)
            assert np.max(np.abs(run.pre_activations - pre)) <= 1e-12
            assert np.max(np.abs(run.activations - out)) <= 1e-12
            a = simulate_layer(x, w, th, 10**5, Mode.SAMPLED, seed=k, n_next=2)
            b = simulate_layer(x, w, th, 10**5, Mode.SAMPLED, seed=k, n_next=2)
            assert trace.validate(a.events) == []
            assert trace.dumps(a.events).encode() == trace.dumps(b.events).encode()
            events += len(run.events) + len(a.events)
            if k > 1:
                for fault in ("skip_valve_step", "double_occupy", "swap_merge_phases", "unequal_merge_path"):
                    bad = simulate_layer(x, w, th, 10**6, faults=[fault])
                    assert trace.validate(bad.events), fault
        d["events_checked"] = events


def test_activation_semantics():
    with criterion("activation", 5):
        rng = np.random.Generator(np.random.PCG64(4))
        eps = 1e-9
        for th in rng.uniform(0.01, 0.99, 100):
            p = ActivationParams(th)
            assert chem.seesaw_activation(0.0, p) == 0.0
            assert chem.seesaw_activation(th - eps, p) == 0.0
            assert chem.seesaw_activation(th, p) == 0.0
            assert chem.seesaw_activation(th + eps, p) == 1.0
            assert chem.seesaw_activation(1.0, p) == 1.0
            for x in rng.uniform(0, 1, 20):
                once = chem.seesaw_activation(x, p)
                assert chem.seesaw_activation(once, p) == once


def test_end_to_end_digits(digits):
    with criterion("end-to-end digits", 600) as d:
        train_set, test_set = digits.split(400, 0)
        net = ann.train(train_set, ann.TrainConfig(hidden_sizes=(64,)), seed=0)
        spec = ann.to_spec(net)
        assert spec.layer_sizes == [64, 64, 10]
        assert min(float(w.min()) for w in net.weights) >= 0
        acc = ann.accuracy(net, test_set)
        assert acc >= 0.90
        imgs = test_set.images[:200]
        sampled = ann.ExecutionMode(ann.ModeKind.SAMPLED, 10**5, 0)
        reports = ann.compare_modes(spec, imgs, [ann.FLOAT_REFERENCE, ann.IDEAL_CHEM, sampled])
        by_pair = {(r.mode_a, r.mode_b): r for r in reports}
        float_vs_ideal = by_pair[(str(ann.FLOAT_REFERENCE), str(ann.IDEAL_CHEM))]
        ideal_vs_sampled = by_pair[(str(ann.IDEAL_CHEM), str(sampled))]
        assert float_vs_ideal.agreement == 1.0
        assert ideal_vs_sampled.agreement >= 0.95
        d["held_out_acc"] = f"{acc:.3f}"
        d["ideal_vs_sampled"] = f"{ideal_vs_sampled.agreement:.3f}"


def test_convergence_slope():
    with criterion("convergence slope", 300) as d:
        rng = np.random.Generator(np.random.PCG64(5))
        w, x = rng.uniform(0, 1, (16, 16)), rng.uniform(0, 1, 16)
        ideal = ann.run_layer(x, w, 0.5).pre_activation
        ts = [10**3, 10**4, 10**5, 10**6]
        errs = []
        for t in ts:
            diffs = [ann.run_layer(x, w, 0.5, ann.ExecutionMode(ann.ModeKind.SAMPLED, t, s)).pre_activation - ideal
                     for s in range(30)]
            errs.append(float(np.sqrt(np.mean(np.square(diffs)))))
        slope = np.polyfit(np.log10(ts), np.log10(errs), 1)[0]
        assert abs(slope + 0.5) <= 0.1
        d["slope"] = f"{slope:.3f}"


def test_gradient_check():
    with criterion("gradient check", 30) as d:
        rng = np.random.Generator(np.random.PCG64(6))
        h = 1e-6
        worst = 0.0
        for point in range(100):
            readout = "fraction" if point % 2 == 0 else "step"
            cfg = ann.TrainConfig(hidden_sizes=(4,), slope=float(rng.uniform(2, 10)), readout=readout)
            ws = [rng.uniform(0, 0.6, (4, 5)), rng.uniform(0, 0.6, (3, 4))]
            ths = [rng.uniform(0.1, 1.0, 4), rng.uniform(0.1, 1.0, 3)]
            xb = rng.uniform(0, 1, (8, 5))
            yb = np.eye(3)[rng.integers(0, 3, 8)]
            _, gw, gt = ann.loss_and_grad(ws, ths, xb, yb, cfg)
            analytic, numeric = [], []
            for p, g in zip(ws + ths, gw + gt):
                for idx in np.ndindex(p.shape):
                    old = p[idx]
                    p[idx] = old + h
                    up = ann.loss_and_grad(ws, ths, xb, yb, cfg)[0]
                    p[idx] = old - h
                    dn = ann.loss_and_grad(ws, ths, xb, yb, cfg)[0]
                    p[idx] = old
                    numeric.append((up - dn) / (2 * h))
                    analytic.append(g[idx])
            a, n = np.array(analytic), np.array(numeric)
            rel = np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n))
            worst = max(worst, rel)
        assert worst <= 1e-4
        d["worst_rel_err"] = f"{worst:.1e}"
