import math

import numpy as np
import pytest

from quantum_thermal_lens import CountingConfig, ValidationError, denoise, step_significance
from quantum_thermal_lens.counting_simulation import simulate_counts, seed_streams
from tests.scenarios import constant_trace


def test_noiseless_signal_rate_is_unbiased():
    config = CountingConfig(noise_rate_s=0.0)
    times = np.arange(200) * config.bin_width
    signal_rate = config.rep_rate * config.mu_pair * config.eta_s

    biases = []
    for stream in seed_streams(3, 100):
        trace = simulate_counts(config, times, 1.0, rng=np.random.default_rng(stream)).trace
        result = denoise(trace, config, t_on=10.0)
        biases.append(np.mean(result.s_t) / signal_rate - 1)

    assert abs(np.mean(biases)) < 0.01
    assert np.mean(result.s_t) == pytest.approx(np.mean(result.s_s), rel=0.05)
    assert math.isinf(result.snr_ratio)


def test_snr_gain_tracks_intrinsic_correlation():
    """Signal 10x below the background: coincidences improve the SNR by roughly 1/mu"""
    config = CountingConfig(mu_pair=0.005, noise_rate_s=2.4e5, seed=6)
    times = np.arange(10000) * config.bin_width
    trace = simulate_counts(config, times, 1.0).trace

    result = denoise(trace, config, t_on=500.0)

    assert result.snr_singles == pytest.approx(0.1, rel=0.05)
    assert result.snr_ratio == pytest.approx(result.g_baseline.value, rel=0.3)
    assert result.g_baseline.value == pytest.approx(1 / 0.005, rel=0.3)
    assert result.g_registered.value < result.g_baseline.value


def test_denoising_reveals_hidden_step():
    """A 20% transmission step buried in excess background noise"""
    config = CountingConfig(noise_rate_s=3e6, noise_excess=0.3, seed=12)
    times = np.arange(400) * config.bin_width
    transmission = np.where(times < 20.0, 1.0, 0.8)
    trace = simulate_counts(config, times, transmission).trace

    result = denoise(trace, config, t_on=20.0)

    assert abs(step_significance(result.s_s, 200)) < 3
    assert step_significance(result.s_t, 200) < -5


def test_bins_without_idler_counts():
    trace = constant_trace(10, s_i=20000, s_s=21000, c=1200)
    empty = constant_trace(1, s_i=0, s_s=21000, c=0, t0=1.0)
    joined = type(trace)(np.append(trace.t, empty.t), np.append(trace.s_i, empty.s_i),
                         np.append(trace.s_s, empty.s_s), np.append(trace.c, empty.c), trace.bin_width)

    result = denoise(joined, CountingConfig(), t_on=0.5)
    assert np.isfinite(result.s_t[:-1]).all()
    assert np.isnan(result.s_t[-1])


def test_background_above_signal_is_rejected():
    trace = constant_trace(10, s_i=20000, s_s=900, c=1200)
    with pytest.raises(ValidationError):
        denoise(trace, CountingConfig(), t_on=5.0)


def test_denoise_needs_baseline():
    with pytest.raises(ValidationError):
        denoise(constant_trace(10, 20000, 21000, 1200, t0=50.0), CountingConfig(), t_on=40.0)
