import math

import numpy as np
import pytest

from quantum_thermal_lens import (CountingConfig, ValidationError, accidentals, g_si, klyshko_efficiency, simulate,
                                  step_significance)
from quantum_thermal_lens.counting_simulation import simulate_counts, seed_streams
from tests.scenarios import M_SINGLES, PUMP_ON, SINGLES_LENS, constant_trace

IDEAL = dict(noise_rate_s=0.0)


def test_g_from_rates():
    # 1e4/s singles, 125/s coincidences at 8e7 pulses/s
    trace = constant_trace(5, s_i=10000, s_s=10000, c=125, bin_width=1.0)
    result = g_si(trace, CountingConfig())
    np.testing.assert_allclose(result.g, 100.0)
    assert result.valid.all()


def test_g_windows_drop_partial_block():
    trace = constant_trace(25, s_i=2000, s_s=2000, c=30)
    result = g_si(trace, CountingConfig(), window=10)
    assert len(result) == 2
    np.testing.assert_allclose(result.t, [0.0, 1.0])


def test_g_flags_empty_windows(caplog):
    trace = constant_trace(4, s_i=1000, s_s=1000, c=0)
    result = g_si(trace, CountingConfig())
    assert result.n_invalid == 4
    np.testing.assert_array_equal(result.g, 0.0)
    assert 'flagged invalid' in caplog.text

    silent = constant_trace(2, s_i=0, s_s=1000, c=0)
    assert np.isnan(g_si(silent, CountingConfig()).g).all()


@pytest.mark.parametrize('window', [0, -3, 2.5])
def test_g_invalid_window(window):
    with pytest.raises(ValidationError):
        g_si(constant_trace(4, 1, 1, 1), CountingConfig(), window=window)


@pytest.mark.parametrize('mu_pair', [0.002, 0.005, 0.01])
def test_g_recovers_inverse_pair_probability(mu_pair: float):
    config = CountingConfig(mu_pair=mu_pair, **IDEAL)
    times = np.arange(100) * config.bin_width
    values, errors = [], []
    for stream in seed_streams(21, 200):
        trace = simulate_counts(config, times, 1.0, rng=np.random.default_rng(stream)).trace
        result = g_si(trace, config, window=len(trace))
        values.append(result.g[0])
        errors.append(result.g_err[0])
    values = np.array(values)

    assert abs(values.mean() - 1 / mu_pair) < 3 * values.std(ddof=1) / np.sqrt(values.size)
    assert values.std(ddof=1) == pytest.approx(np.mean(errors), rel=0.20)


def test_multipair_accidentals_add_one():
    config = CountingConfig(mu_pair=0.01, multipair_accidentals=True, **IDEAL)
    trace = simulate_counts(config, np.arange(2000) * config.bin_width, 1.0).trace
    result = g_si(trace, config, window=len(trace))
    assert result.g[0] == pytest.approx(1 / 0.01 + 1, rel=0.01)


def test_singles_lens_moves_g():
    """A weaker lens on the singles mode makes the registered g swing by more than a factor 2"""
    config = CountingConfig(m_singles=M_SINGLES, seed=2)
    trace = simulate(config, PUMP_ON, SINGLES_LENS)
    correlation = g_si(trace, config, window=50)

    assert correlation.valid.all()
    assert correlation.g.max() / correlation.g.min() > 2.2
    # the swing comes from the lens, not from window noise
    assert correlation.g[0] / correlation.g[-1] > 2


def test_accidentals_from_singles():
    config = CountingConfig()
    np.testing.assert_allclose(accidentals(constant_trace(3, 0, 0, 0), config), 0.0)
    np.testing.assert_allclose(accidentals(constant_trace(3, 20000, 20000, 0), config), 50.0)


def test_accidentals_match_multipair_simulation():
    config = CountingConfig(multipair_accidentals=True, **IDEAL)
    simulated = simulate_counts(config, np.arange(2000) * config.bin_width, 1.0)
    excess = (simulated.trace.c - simulated.true_coincidences).astype(float)
    expected = accidentals(simulated.trace, config)
    assert abs(excess.mean() - expected.mean()) < 4 * np.sqrt(expected.mean() / excess.size)


def test_klyshko_from_counts():
    estimate = klyshko_efficiency(constant_trace(10, s_i=20000, s_s=20000, c=1200), t_on=5.0)
    assert estimate.value == pytest.approx(0.06)
    assert estimate.error == pytest.approx(math.sqrt(0.06 * 0.94 / 200000))


def test_klyshko_needs_baseline():
    with pytest.raises(ValidationError):
        klyshko_efficiency(constant_trace(10, 100, 100, 5, t0=10.0), t_on=5.0)


def test_step_significance():
    rng = np.random.default_rng(0)
    values = np.concatenate([rng.normal(0.0, 1.0, 200), rng.normal(1.0, 1.0, 200)])
    assert step_significance(values, 200) > 5
    assert abs(step_significance(rng.normal(0.0, 1.0, 400), 200)) < 5

    with_gaps = values.copy()
    with_gaps[::7] = np.nan
    assert step_significance(with_gaps, 200) > 5


@pytest.mark.parametrize('split', [0, 400, 1])
def test_step_significance_needs_both_sides(split):
    with pytest.raises(ValidationError):
        step_significance(np.ones(400), split)
