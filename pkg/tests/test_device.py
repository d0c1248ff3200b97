import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnaengine import device
from dnaengine.device import (
    HOUR, OPTIMISTIC, OPTIMISTIC_EXACT, PUBLISHED_CONFIGS, PESSIMISTIC, DeviceConfig, Geometry,
    LayerPlan, TimingConstants, area_cm2, area_mm2, explore, fit_affine, layer_latency,
    serialization_factor,
)

GOLDEN_HEADER = ("config_name,cells_per_side,area_pessimistic_cm2,area_optimistic_cm2,"
                 "exec_time_per_layer_hr,serialization_input,serialization_hidden,serialization_output")


def test_area_examples():
    assert area_mm2(DeviceConfig(196, PESSIMISTIC)) == pytest.approx(55319.04)
    assert area_cm2(DeviceConfig(196, OPTIMISTIC)) == pytest.approx(3.8416)
    assert area_mm2(DeviceConfig(1, PESSIMISTIC)) == pytest.approx((6 * 0.2) ** 2)
    assert area_mm2(DeviceConfig(1, OPTIMISTIC_EXACT)) == pytest.approx((3 * 0.035) ** 2)
    assert device.area(DeviceConfig(10, PESSIMISTIC)) == area_mm2(DeviceConfig(10, PESSIMISTIC))


def test_serialization_examples():
    assert serialization_factor(784, 196) == 4
    assert serialization_factor(10, 4) == 3
    assert serialization_factor(10, 16) == 1
    with pytest.raises(ValueError):
        serialization_factor(0, 4)


def test_latency_examples():
    t = TimingConstants()
    assert layer_latency(LayerPlan(784, 784), t) == pytest.approx(8.07, abs=0.01)
    assert layer_latency(LayerPlan(784, 196), t) == pytest.approx(14.17, abs=0.01)
    assert layer_latency(LayerPlan(784, 16), t) == pytest.approx(105.6, abs=0.1)


def test_timing_aggregates():
    t = TimingConstants()
    assert (t.t_transport + t.t_mult) / HOUR == pytest.approx(2.0333, abs=1e-4)
    assert (t.t_merge + t.t_activation) / HOUR == pytest.approx(6.0367, abs=1e-4)
    assert t.t_activation == pytest.approx(t.t_displacement + t.t_threshold + t.t_gate
                                           + t.t_translation + t.t_nick)
    assert sum(d for _, d in t.pipeline_stages) == pytest.approx(t.t_activation)
    with pytest.raises(ValueError):
        TimingConstants(t_mult=-1.0)


def test_affine_fit_over_published_points():
    # four published (factor, hours) pairs
    slope, intercept, rms = fit_affine([4, 16, 49, 196], [14.17, 38.6, 105.6, 404.6])
    assert slope == pytest.approx(2.0333, abs=0.005)
    assert intercept == pytest.approx(6.0367, abs=0.1)
    assert rms < 0.05


def test_latency_exactly_affine():
    t = TimingConstants()
    factors = np.arange(1, 201)
    hours = [layer_latency(LayerPlan(int(f), 1), t) for f in factors]
    slope, intercept, rms = fit_affine(factors.tolist(), hours)
    assert slope == pytest.approx((t.t_transport + t.t_mult) / HOUR, rel=1e-12)
    assert rms < 1e-9


@given(st.integers(1, 500), st.integers(1, 50))
def test_area_quadratic_in_k(k, m):
    a1 = area_mm2(DeviceConfig(k, PESSIMISTIC))
    am = area_mm2(DeviceConfig(k * m, PESSIMISTIC))
    assert am / a1 == pytest.approx(m * m, rel=1e-12)


@given(st.floats(1.0, 1000.0), st.floats(1.0, 10.0))
def test_area_quadratic_in_width(c, m):
    a1 = area_mm2(DeviceConfig(7, Geometry(c, 6)))
    am = area_mm2(DeviceConfig(7, Geometry(c * m, 6)))
    assert am / a1 == pytest.approx(m * m, rel=1e-9)


@given(st.integers(1, 2000), st.integers(1, 999))
def test_monotone_in_array_size(k_layer, kp):
    t = TimingConstants()
    assert layer_latency(LayerPlan(k_layer, kp + 1), t) <= layer_latency(LayerPlan(k_layer, kp), t)
    assert area_mm2(DeviceConfig(kp + 1)) >= area_mm2(DeviceConfig(kp))
    assert serialization_factor(k_layer, kp) >= 1


def test_explore_single_and_errors():
    rows = explore([DeviceConfig(784)])
    assert len(rows) == 1
    assert rows[0].exec_time_per_layer_hr == pytest.approx(8.07, abs=0.01)
    assert len(rows[0].layer_latencies_hr) == 3
    with pytest.raises(ValueError):
        explore([])
    with pytest.raises(ValueError):
        explore([DeviceConfig(4)], [])


def test_explore_exact_optimistic():
    exact = explore(list(PUBLISHED_CONFIGS), exact_optimistic=True)[0]
    assert exact.area_optimistic_cm2 == pytest.approx(196**2 * 0.105**2 / 100)


def test_csv_golden_header_and_order():
    text = device.rows_to_csv(explore(list(PUBLISHED_CONFIGS)))
    lines = text.splitlines()
    assert lines[0] == GOLDEN_HEADER
    assert tuple(lines[0].split(",")) == device.REPORT_COLUMNS
    recs = list(csv.DictReader(io.StringIO(text)))
    assert [r["config_name"] for r in recs] == ["Config-1", "Config-2", "Config-3", "Config-4"]
    assert lines[1] == "Config-1,196,553.1904,3.8416,14.17,4,4,1"


def test_config_validation():
    with pytest.raises(ValueError):
        DeviceConfig(0)
    with pytest.raises(ValueError):
        Geometry(0.0, 6)
    assert math.isclose(OPTIMISTIC.per_cell_mm2, 0.01)
