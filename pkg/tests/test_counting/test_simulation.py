import numpy as np
import pytest

from quantum_thermal_lens import (CountingConfig, Scenario, SimulationMode, ValidationError, klyshko_efficiency,
                                  simulate, simulate_components, simulate_many)
from quantum_thermal_lens.counting_simulation import simulate_counts, simulate_pulses, seed_streams
from tests.scenarios import PUMP_ON, TRUTH

QUIET = TRUTH.with_values(theta_th=0.0, theta_s=0.0)
SHORT = Scenario(t_on=1.0, duration=2.0)


def _mean_within(values: np.ndarray, expected: float, n_sigma: float = 5.0):
    stderr = np.std(values, ddof=1) / np.sqrt(values.size)
    assert abs(values.mean() - expected) < n_sigma * stderr


def test_mean_coincidences_follow_source_arithmetic():
    config = CountingConfig(mu_pair=0.01, noise_rate_s=0.0)
    times = np.arange(2000) * config.bin_width
    trace = simulate_counts(config, times, 1.0).trace

    # 8e6 pulses x 0.01 x 0.06 x 0.06
    _mean_within(trace.c.astype(float), 288.0)
    _mean_within(trace.s_i.astype(float), 4800.0)


def test_default_operating_point():
    trace = simulate(CountingConfig(), PUMP_ON, TRUTH)
    baseline = trace.select(trace.baseline_mask(PUMP_ON.t_on))

    assert len(baseline) == 400
    assert baseline.c.mean() == pytest.approx(1200.0, abs=3 * np.sqrt(1200.0))
    assert baseline.s_i.mean() == pytest.approx(20000.0, abs=3 * np.sqrt(20000.0))
    assert klyshko_efficiency(trace, PUMP_ON.t_on).value == pytest.approx(0.06, abs=0.002)


def test_lens_drop_shows_in_coincidences():
    trace = simulate(CountingConfig(noise_rate_s=0.0), PUMP_ON, TRUTH)
    before = trace.c[trace.t < PUMP_ON.t_on].mean()
    late = trace.c[trace.t > 300.0].mean()
    assert late < 0.9 * before


def test_flat_without_lens():
    trace = simulate(CountingConfig(noise_rate_s=0.0), PUMP_ON, QUIET)
    before = trace.c[trace.t < PUMP_ON.t_on].astype(float)
    after = trace.c[trace.t >= PUMP_ON.t_on].astype(float)
    stderr = np.sqrt(before.var(ddof=1) / before.size + after.var(ddof=1) / after.size)
    assert abs(after.mean() - before.mean()) < 4 * stderr


def test_reproducible_for_a_seed():
    config = CountingConfig(seed=42)
    first = simulate(config, SHORT, TRUTH)
    assert simulate(config, SHORT, TRUTH) == first
    assert simulate(CountingConfig(seed=43), SHORT, TRUTH) != first


def test_channel_decomposition_adds_up():
    simulated = simulate_components(CountingConfig(seed=3), SHORT, TRUTH)
    trace = simulated.trace
    np.testing.assert_array_equal(trace.c, simulated.true_coincidences + simulated.accidental_coincidences)
    np.testing.assert_array_equal(trace.s_s, simulated.signal_true + simulated.signal_noise)
    assert np.all(trace.c <= trace.s_i)
    assert np.all(simulated.true_coincidences <= simulated.signal_true)


def test_transmission_lowers_klyshko_efficiency():
    config = CountingConfig(seed=8)
    times = np.arange(400) * config.bin_width
    trace = simulate_counts(config, times, 0.5).trace
    assert klyshko_efficiency(trace, t_on=1e3).value == pytest.approx(0.03, abs=0.001)


def test_separate_singles_transmission():
    config = CountingConfig(noise_rate_s=0.0, seed=4)
    times = np.arange(500) * config.bin_width
    simulated = simulate_counts(config, times, t_c=0.5, t_s=1.0)
    _mean_within(simulated.trace.c.astype(float), 600.0)
    _mean_within(simulated.trace.s_s.astype(float), 20000.0)


def test_noise_excess_widens_singles():
    times = np.arange(1000) * 0.1
    plain = simulate_counts(CountingConfig(noise_rate_s=1e6, seed=1), times, 1.0).trace
    excess = simulate_counts(CountingConfig(noise_rate_s=1e6, noise_excess=0.3, seed=1), times, 1.0).trace
    assert np.std(excess.s_s) > 5 * np.std(plain.s_s)


@pytest.mark.parametrize('mode', [SimulationMode.BINS, SimulationMode.PULSES])
def test_pulse_oracle_agrees_with_bin_sampler(mode):
    """Both samplers give matching means and variances at 1e5 pulses per bin"""
    config = CountingConfig(rep_rate=1e6, mu_pair=0.01, noise_rate_s=500.0, seed=17, mode=mode)
    times = np.arange(400) * config.bin_width
    transmission = np.where(times < 20.0, 1.0, 0.7)

    reference = simulate_counts(config, times, transmission, rng=np.random.default_rng(99)).trace
    sampler = simulate_pulses if mode is SimulationMode.PULSES else simulate_counts
    trace = sampler(config, times, transmission).trace

    for channel in ('s_i', 's_s', 'c'):
        ours = getattr(trace, channel).astype(float)
        theirs = getattr(reference, channel).astype(float)
        mean_err = np.sqrt(ours.var(ddof=1) / ours.size + theirs.var(ddof=1) / theirs.size)
        assert abs(ours.mean() - theirs.mean()) < 4 * mean_err, channel
        var_err = np.sqrt(2.0 / (ours.size - 1)) * np.hypot(ours.var(), theirs.var())
        assert abs(ours.var(ddof=1) - theirs.var(ddof=1)) < 4 * var_err, channel


def test_pulse_mode_refuses_high_rates():
    config = CountingConfig(mode=SimulationMode.PULSES)
    with pytest.raises(ValidationError):
        simulate_pulses(config, np.arange(3) * 0.1, 1.0)


def test_negative_transmission_rejected():
    with pytest.raises(ValidationError):
        simulate_counts(CountingConfig(), np.arange(3) * 0.1, -0.1)


@pytest.mark.parametrize('sampler', [simulate_counts, simulate_pulses])
def test_singles_must_cover_coincidences(sampler):
    config = CountingConfig(rep_rate=1e6, eta_i=0.9, noise_rate_s=0.0)
    times = np.arange(3) * config.bin_width
    with pytest.raises(ValidationError, match='singles'):
        sampler(config, times, t_c=1.0, t_s=0.5)
    # the boundary itself is allowed
    assert sampler(config, times, t_c=1.0, t_s=0.9).trace.c.size == 3


def test_seed_sweep_streams():
    config = CountingConfig(seed=5)
    runs = simulate_many(config, SHORT, TRUTH, n_runs=4)
    assert len(runs) == 4
    assert runs[0].trace != runs[1].trace
    again = simulate_many(config, SHORT, TRUTH, n_runs=4, n_jobs=2)
    assert [run.trace for run in again] == [run.trace for run in runs]
    assert len(seed_streams(5, 3)) == 3


def test_seed_sweep_needs_runs():
    with pytest.raises(ValidationError):
        simulate_many(CountingConfig(), SHORT, TRUTH, n_runs=0)


@pytest.mark.parametrize('values', [
    dict(rep_rate=0.0),
    dict(mu_pair=-0.1),
    dict(eta_i=1.5),
    dict(bin_width=0.0),
    dict(noise_rate_s=float('nan')),
    dict(m_singles=0.0),
    dict(seed=-1),
    dict(mode='bursts'),
])
def test_invalid_counting_config(values):
    with pytest.raises(ValueError):
        CountingConfig(**values)
