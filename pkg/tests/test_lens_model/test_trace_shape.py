import time

import numpy as np
import pytest

from quantum_thermal_lens import ModelNumericalError, Scenario, TraceModel, ValidationError, intensity, trace
from tests.scenarios import PUMP_ON, PUMP_ON_OFF, TRUTH

NO_DECAY = TRUTH.with_values(k=0.0, c_r=1.0)


def _at(times: np.ndarray, values: np.ndarray, t: float) -> float:
    return float(values[np.argmin(np.abs(times - t))])


def test_rising_branch_drops_fast_then_slow():
    times = np.arange(0.0, PUMP_ON.duration, 0.5)
    values = trace(PUMP_ON, NO_DECAY, times)

    assert np.all(values[times < PUMP_ON.t_on] == 1.0)
    rising = values[times >= PUMP_ON.t_on]
    assert np.all(np.diff(rising) <= 1e-12)

    fast_drop = 1 - _at(times, values, PUMP_ON.t_on + 6.0)
    mid_drop = 1 - _at(times, values, PUMP_ON.t_on + 20.0)
    final_drop = 1 - values[-1]
    assert final_drop > 0.2
    assert fast_drop > 0.4 * final_drop
    assert final_drop - mid_drop > 0.02


def test_continuous_across_shutter_times():
    s = PUMP_ON_OFF
    eps = 1e-6
    times = np.array([s.t_on - eps, s.t_on, s.t_on + eps, s.t_off - eps, s.t_off, s.t_off + eps])
    values = trace(s, TRUTH, times)

    assert values[0] == 1.0
    assert values[2] == pytest.approx(1.0, abs=1e-4)
    assert values[3] == pytest.approx(values[4], abs=1e-4)
    assert values[5] == pytest.approx(values[4], abs=1e-4)


def test_relaxation_recovers_on_two_timescales():
    s = PUMP_ON_OFF
    times = np.arange(0.0, s.duration, 0.5)
    values = trace(s, NO_DECAY, times)

    relaxing = values[times >= s.t_off]
    assert np.all(np.diff(relaxing) >= -1e-12)

    deficit_off = 1 - _at(times, values, s.t_off)
    deficit_later = 1 - _at(times, values, s.t_off + 10.0)
    assert 0.1 * deficit_off < deficit_later < 0.8 * deficit_off
    assert values[-1] > 0.99


def test_separate_relaxation_times():
    s = Scenario(t_on=10.0, t_off=110.0, duration=210.0, relax_params=(0.5, 20.0))
    times = np.array([s.t_off + 2.0])
    faster = trace(s, NO_DECAY, times)
    default = trace(PUMP_ON_OFF, NO_DECAY, times)
    assert faster[0] > default[0]


def test_single_sample_equals_intensity():
    s = Scenario(t_on=4.0, duration=10.0)
    assert trace(s, TRUTH, [6.5])[0] == intensity(2.5, TRUTH)


def test_zero_amplitudes_give_flat_trace():
    flat = TRUTH.with_values(theta_th=0.0, theta_s=0.0)
    values = trace(PUMP_ON_OFF, flat, np.arange(0.0, 200.0, 5.0))
    np.testing.assert_allclose(values, 1.0, atol=1e-12)


def test_power_scale_multiplies_phase():
    times = np.array([50.0])
    halved = Scenario(t_on=40.0, duration=340.0, power_scale=0.5)
    assert trace(halved, TRUTH, times)[0] == pytest.approx(
        trace(PUMP_ON, TRUTH.with_values(theta_th=0.2, theta_s=0.15), times)[0], rel=1e-12)


def test_phase_grids_are_reused():
    model = TraceModel(np.arange(0.0, 100.0, 1.0))
    scenario = Scenario(t_on=10.0, duration=100.0)
    model.evaluate(scenario, TRUTH)
    builds = model.grid_builds
    model.evaluate(scenario, TRUTH.with_values(theta_th=0.7, theta_s=0.1, c_r=0.5))
    assert model.grid_builds == builds


def test_unvalidated_model_defers_to_spot_check():
    model = TraceModel(np.arange(0.0, 100.0, 1.0), validate=False)
    scenario = Scenario(t_on=10.0, duration=100.0)
    unresolved = TRUTH.with_values(theta_th=500.0)
    model.evaluate(scenario, unresolved)
    with pytest.raises(ModelNumericalError):
        model.spot_check(scenario, unresolved)
    model.spot_check(scenario, TRUTH)
    with pytest.raises(ModelNumericalError):
        TraceModel(np.arange(0.0, 100.0, 1.0)).evaluate(scenario, unresolved)


@pytest.mark.parametrize('times', [
    [0.0, 2.0, 1.0],
    [-1.0, 0.0],
    [0.0, float('nan')],
])
def test_invalid_sample_times(times):
    with pytest.raises(ValidationError):
        TraceModel(times)


def test_sample_beyond_duration():
    with pytest.raises(ValidationError):
        trace(Scenario(t_on=1.0, duration=10.0), TRUTH, [0.0, 5.0, 10.5])


@pytest.mark.parametrize('values', [
    dict(t_on=5.0, t_off=5.0),
    dict(t_on=-1.0),
    dict(t_on=1.0, t_off=20.0, duration=10.0),
    dict(relax_params=(1.0, -2.0)),
    dict(t_off=float('nan')),
])
def test_invalid_scenario(values):
    with pytest.raises(ValidationError):
        Scenario(**values)


@pytest.mark.slow
def test_long_trace_evaluates_quickly():
    times = np.arange(3000) * 0.1
    start = time.perf_counter()
    trace(Scenario(t_on=20.0, duration=300.0), TRUTH, times)
    assert time.perf_counter() - start < 3.0
