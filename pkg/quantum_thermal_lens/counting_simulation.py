"""
Photon-pair counting chain modulated by the lens transmission.

Per bin of width dt with R dt pulses: idler singles at R dt mu eta_i, true
coincidences at R dt mu eta_i eta_s T_c, correlated signal singles at
R dt mu eta_s T_s plus background noise_rate_s dt, and accidental coincidences
at (idler counts x uncorrelated signal counts) / (R dt). Coincidences are
sampled as shared events of both singles channels.
"""
import logging
from dataclasses import dataclass
from typing import Optional, List, NamedTuple, Callable

import numpy as np
from joblib import Parallel, delayed

from .counting_data import CountingConfig, TimeTrace, SimulationMode
from .exceptions import ValidationError
from .lens_model import TraceModel
from .lens_params import LensParams, Scenario
from .radial_quadrature import RadialQuadrature, DEFAULT_RADIAL_QUADRATURE

MAX_PULSES_PER_BIN = 2_000_000
PULSE_BLOCK = 250_000


@dataclass(frozen=True, eq=False)
class SimulatedCounts:
    """A simulated trace together with its ground-truth channel decomposition"""
    trace: TimeTrace
    true_coincidences: np.ndarray
    accidental_coincidences: np.ndarray
    signal_true: np.ndarray
    signal_noise: np.ndarray


class _BinMeans(NamedTuple):
    idler: np.ndarray
    true: np.ndarray
    signal_true: np.ndarray
    noise: np.ndarray
    accidental_noise: np.ndarray
    accidental_pair: np.ndarray


def _noise_factor(config: CountingConfig, n_bins: int, rng: np.random.Generator) -> np.ndarray:
    if config.noise_excess == 0:
        return np.ones(n_bins)
    variance = config.noise_excess ** 2
    return rng.gamma(shape=1.0 / variance, scale=variance, size=n_bins)


def _bin_means(config: CountingConfig, t_c: np.ndarray, t_s: np.ndarray, noise_factor: np.ndarray) -> _BinMeans:
    pulses = config.pulses_per_bin
    idler = np.full(t_c.shape, pulses * config.mu_pair * config.eta_i)
    true = idler * config.eta_s * t_c
    signal_true = pulses * config.mu_pair * config.eta_s * t_s
    noise = config.noise_rate_s * config.bin_width * noise_factor
    accidental_noise = idler * noise / pulses
    if config.multipair_accidentals:
        accidental_pair = idler * signal_true / pulses
    else:
        accidental_pair = np.zeros(t_c.shape)
    return _BinMeans(idler, true, signal_true, noise, accidental_noise, accidental_pair)


def _check_singles_cover_coincidences(means: _BinMeans):
    excess = means.true + means.accidental_pair - means.signal_true
    if np.any(excess > 1e-9 * np.maximum(means.signal_true, 1.0)):
        index = int(np.argmax(excess))
        raise ValidationError(
            f'Coincidence channel exceeds the correlated signal singles in bin {index} '
            f'(mean {means.true[index] + means.accidental_pair[index]:.6g} > {means.signal_true[index]:.6g}); '
            f'eta_i * T_c must not exceed the singles transmission T_s'
        )


def _transmission_arrays(times: np.ndarray, t_c, t_s):
    t_c = np.broadcast_to(np.asarray(t_c, dtype=float), times.shape)
    t_s = t_c if t_s is None else np.broadcast_to(np.asarray(t_s, dtype=float), times.shape)
    if np.any(t_c < 0) or np.any(t_s < 0):
        raise ValidationError('Transmissions must be nonnegative')
    return t_c, t_s


def simulate_counts(config: CountingConfig, times: np.ndarray, t_c, t_s=None,
                    rng: Optional[np.random.Generator] = None) -> SimulatedCounts:
    """
    Bin-level Poisson sampling for given coincidence-channel and singles-channel transmissions.

    t_s defaults to t_c. Coincidences are shared events of both singles channels,
    so every channel keeps its Poisson marginal and the correct covariance.
    """
    times = np.asarray(times, dtype=float)
    t_c, t_s = _transmission_arrays(times, t_c, t_s)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))

    means = _bin_means(config, t_c, t_s, _noise_factor(config, times.size, rng))
    _check_singles_cover_coincidences(means)

    true = rng.poisson(means.true)
    accidental_noise = rng.poisson(means.accidental_noise)
    accidental_pair = rng.poisson(means.accidental_pair)
    idler_rest = rng.poisson(np.maximum(means.idler - means.true - means.accidental_noise
                                        - means.accidental_pair, 0.0))
    signal_rest = rng.poisson(np.maximum(means.signal_true - means.true - means.accidental_pair, 0.0))
    noise_rest = rng.poisson(np.maximum(means.noise - means.accidental_noise, 0.0))

    accidental = accidental_noise + accidental_pair
    signal_true = true + accidental_pair + signal_rest
    signal_noise = accidental_noise + noise_rest
    trace = TimeTrace(
        t=times,
        s_i=true + accidental + idler_rest,
        s_s=signal_true + signal_noise,
        c=true + accidental,
        bin_width=config.bin_width,
    )
    return SimulatedCounts(trace, true, accidental, signal_true, signal_noise)


def simulate_pulses(config: CountingConfig, times: np.ndarray, t_c, t_s=None,
                    rng: Optional[np.random.Generator] = None) -> SimulatedCounts:
    """
    Per-pulse Bernoulli oracle: at most one pair per pulse, every detection drawn explicitly.

    One uniform number decides the signal detection for both the coincidence and
    the singles channel, so each channel gets its own transmission.
    """
    times = np.asarray(times, dtype=float)
    t_c, t_s = _transmission_arrays(times, t_c, t_s)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))

    n_pulses = int(round(config.pulses_per_bin))
    if n_pulses > MAX_PULSES_PER_BIN:
        raise ValidationError(f'Pulse mode needs {n_pulses} pulses per bin, at most {MAX_PULSES_PER_BIN} '
                              f'are supported; lower rep_rate or bin_width')
    noise_factor = _noise_factor(config, times.size, rng)
    _check_singles_cover_coincidences(_bin_means(config, t_c, t_s, noise_factor))

    channels = np.zeros((6, times.size), dtype=np.int64)
    for j in range(times.size):
        noise_probability = config.noise_rate_s * noise_factor[j] / config.rep_rate
        remaining = n_pulses
        while remaining > 0:
            block = min(remaining, PULSE_BLOCK)
            remaining -= block
            u = rng.random((5, block))
            pair = u[0] < config.mu_pair
            idler = pair & (u[1] < config.eta_i)
            signal_coincident = pair & (u[2] < config.eta_s * t_c[j])
            signal_single = pair & (u[2] < config.eta_s * t_s[j])
            noise_click = u[3] < noise_probability
            channels[0, j] += np.count_nonzero(idler)
            channels[1, j] += np.count_nonzero(signal_single)
            channels[2, j] += np.count_nonzero(noise_click)
            channels[3, j] += np.count_nonzero(idler & signal_coincident)
            channels[4, j] += np.count_nonzero(idler & noise_click)
            if config.multipair_accidentals:
                # signal photon of another pair; its click is already part of the singles budget
                other_pair = u[4] < config.mu_pair * config.eta_s * t_s[j]
                channels[5, j] += np.count_nonzero(idler & other_pair)

    s_i, signal_true, signal_noise, true, accidental_noise, accidental_pair = channels
    accidental = accidental_noise + accidental_pair
    trace = TimeTrace(
        t=times,
        s_i=s_i,
        s_s=signal_true + signal_noise,
        c=true + accidental,
        bin_width=config.bin_width,
    )
    return SimulatedCounts(trace, true, accidental, signal_true, signal_noise)


def _sampler(config: CountingConfig) -> Callable[..., SimulatedCounts]:
    if config.mode is SimulationMode.PULSES:
        return simulate_pulses
    return simulate_counts


def channel_transmissions(config: CountingConfig, scenario: Scenario, p: LensParams,
                          quadrature: RadialQuadrature = DEFAULT_RADIAL_QUADRATURE, n_jobs: int = 1):
    """Bin times with the coincidence-channel and singles-channel transmissions"""
    times = config.bin_times(scenario.duration)
    model = TraceModel(times, quadrature=quadrature, n_jobs=n_jobs)
    t_c = model.evaluate(scenario, p)
    if config.m_singles is None or config.m_singles == p.m:
        return times, t_c, t_c
    t_s = model.evaluate(scenario, p.with_values(m=config.m_singles))
    return times, t_c, t_s


def simulate_components(config: CountingConfig, scenario: Scenario, p: LensParams,
                        quadrature: RadialQuadrature = DEFAULT_RADIAL_QUADRATURE) -> SimulatedCounts:
    times, t_c, t_s = channel_transmissions(config, scenario, p, quadrature)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    return _sampler(config)(config, times, t_c, t_s, rng)


def simulate(config: CountingConfig, scenario: Scenario, p: LensParams,
             quadrature: RadialQuadrature = DEFAULT_RADIAL_QUADRATURE) -> TimeTrace:
    """Counting record of one run; bit-reproducible for a fixed config.seed"""
    simulated = simulate_components(config, scenario, p, quadrature)
    log.info('Simulated %d bins (%s mode), mean coincidences %.1f per bin',
             len(simulated.trace), config.mode.value, float(np.mean(simulated.trace.c)) if len(simulated.trace) else 0.0)
    return simulated.trace


def seed_streams(seed: int, n_runs: int) -> List[np.random.SeedSequence]:
    """Independent child streams of one seed, one per run"""
    return np.random.SeedSequence(seed).spawn(n_runs)


def _sample_run(config: CountingConfig, times: np.ndarray, t_c: np.ndarray, t_s: np.ndarray,
                stream: np.random.SeedSequence) -> SimulatedCounts:
    return _sampler(config)(config, times, t_c, t_s, np.random.default_rng(stream))


def simulate_many(config: CountingConfig, scenario: Scenario, p: LensParams, n_runs: int,
                  n_jobs: int = 1, quadrature: RadialQuadrature = DEFAULT_RADIAL_QUADRATURE
                  ) -> List[SimulatedCounts]:
    """
    Seed sweep over n_runs runs sharing one transmission trace.

    Run i draws from the i-th child of SeedSequence(config.seed), whichever worker executes it.
    """
    if n_runs < 1:
        raise ValidationError(f'n_runs must be at least 1, got {n_runs!r}')
    times, t_c, t_s = channel_transmissions(config, scenario, p, quadrature)
    streams = seed_streams(config.seed, n_runs)
    if n_jobs == 1:
        return [_sample_run(config, times, t_c, t_s, stream) for stream in streams]
    return Parallel(n_jobs=n_jobs)(
        delayed(_sample_run)(config, times, t_c, t_s, stream) for stream in streams
    )


log = logging.getLogger(__name__)
