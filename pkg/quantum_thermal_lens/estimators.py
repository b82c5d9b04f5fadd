"""
Estimators on counting records.

The registered cross-correlation is g = C R / (S_i S_s) with rates in counts/s.
With uncorrelated signal-arm noise S_n the coincidence rate reads
C = g S_i S_t / R + S_i S_n / R, which denoise inverts for the true signal S_t.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .counting_data import CountingConfig, TimeTrace
from .exceptions import ValidationError


@dataclass(frozen=True)
class Estimate:
    value: float
    error: float


@dataclass(frozen=True, eq=False)
class CorrelationTrace:
    """Windowed g values; t is the start of each window, invalid windows hold NaN or 0"""
    t: np.ndarray
    g: np.ndarray
    g_err: np.ndarray
    valid: np.ndarray
    window: int

    def __len__(self) -> int:
        return self.t.size

    @property
    def n_invalid(self) -> int:
        return int(np.count_nonzero(~self.valid))


@dataclass(frozen=True, eq=False)
class DenoisedTrace:
    """
    Per-bin estimate of the true signal rate s_t next to the raw singles rate s_s, both in counts/s.

    g_baseline is the noise-corrected correlation from the pre-shutter bins,
    g_registered the plain C R / (S_i S_s) over the same bins. The SNR values
    are signal-to-background ratios over the whole trace.
    """
    t: np.ndarray
    s_t: np.ndarray
    s_t_err: np.ndarray
    s_s: np.ndarray
    noise_rate: float
    g_baseline: Estimate
    g_registered: Estimate
    snr_singles: float
    snr_coincidences: float

    @property
    def snr_ratio(self) -> float:
        if math.isinf(self.snr_singles) and math.isinf(self.snr_coincidences):
            return math.inf
        if self.snr_singles == 0:
            return math.nan
        return self.snr_coincidences / self.snr_singles


def _registered_g(c: float, s_i: float, s_s: float, rep_rate: float, duration: float) -> Estimate:
    if s_i <= 0 or s_s <= 0:
        return Estimate(math.nan, math.nan)
    g = c * rep_rate * duration / (s_i * s_s)
    if c <= 0:
        return Estimate(0.0, math.nan)
    relative = max(1.0 / c - 1.0 / s_i - 1.0 / s_s + 2.0 * c / (s_i * s_s), 0.0)
    return Estimate(g, g * math.sqrt(relative))


def g_si(trace: TimeTrace, config: CountingConfig, window: int = 1) -> CorrelationTrace:
    """
    Registered cross-correlation C R / (S_i S_s) on non-overlapping blocks of `window` bins.

    A trailing partial block is dropped. Errors are one-sigma Poisson errors
    including the correlation between C and both singles channels.
    """
    if int(window) != window or window < 1:
        raise ValidationError(f'window must be a positive integer, got {window!r}')
    window = int(window)
    n_windows = len(trace) // window
    if n_windows == 0:
        log.warning('Trace of %d bins holds no complete window of %d bins', len(trace), window)

    used = n_windows * window

    def blocks(counts: np.ndarray) -> np.ndarray:
        return counts[:used].reshape(n_windows, window).sum(axis=1).astype(float)

    c, s_i, s_s = blocks(trace.c), blocks(trace.s_i), blocks(trace.s_s)
    duration = window * trace.bin_width

    g = np.full(n_windows, np.nan)
    g_err = np.full(n_windows, np.nan)
    for j in range(n_windows):
        estimate = _registered_g(c[j], s_i[j], s_s[j], config.rep_rate, duration)
        g[j], g_err[j] = estimate.value, estimate.error
    valid = (c > 0) & (s_i > 0) & (s_s > 0)

    result = CorrelationTrace(trace.t[:used:window].copy(), g, g_err, valid, window)
    if result.n_invalid:
        log.warning('%d of %d g windows hold a zero channel and are flagged invalid',
                    result.n_invalid, n_windows)
    log.info('Computed g over %d windows of %d bins', n_windows, window)
    return result


def accidentals(trace: TimeTrace, config: CountingConfig) -> np.ndarray:
    """Expected accidental coincidences per bin, S_i S_s / (R dt) in counts"""
    return trace.s_i.astype(float) * trace.s_s.astype(float) / (config.rep_rate * trace.bin_width)


def _baseline(trace: TimeTrace, t_on: float) -> TimeTrace:
    mask = trace.baseline_mask(t_on)
    if not mask.any():
        raise ValidationError(f'No baseline bins before t_on={t_on!r}; the estimate needs pre-shutter data')
    return trace.select(mask)


def klyshko_efficiency(trace: TimeTrace, t_on: float) -> Estimate:
    """
    Heralding efficiency sum(C) / sum(S_i) over the pre-shutter bins with a binomial error.

    It measures detector efficiency times channel transmission.
    """
    baseline = _baseline(trace, t_on)
    heralds = float(baseline.s_i.sum())
    if heralds == 0:
        raise ValidationError('Baseline holds no idler counts')
    value = float(baseline.c.sum()) / heralds
    error = math.sqrt(max(value * (1.0 - value), 0.0) / heralds)
    log.info('Klyshko efficiency %.4f +- %.4f from %d baseline bins', value, error, len(baseline))
    return Estimate(value, error)


def _intrinsic_g(baseline: TimeTrace, rep_rate: float, noise_rate: float) -> Estimate:
    c, s_i, s_s = (float(channel.sum()) for channel in (baseline.c, baseline.s_i, baseline.s_s))
    if s_i == 0 or c == 0:
        raise ValidationError('Baseline holds no coincidences or no idler counts')
    herald_rate = c * rep_rate / s_i
    herald_err = herald_rate * math.sqrt(max(1.0 / c - 1.0 / s_i, 0.0))
    exposure = len(baseline) * baseline.bin_width
    singles_rate = s_s / exposure
    singles_err = math.sqrt(s_s) / exposure

    numerator = herald_rate - noise_rate
    denominator = singles_rate - noise_rate
    if denominator <= 0 or numerator <= 0:
        raise ValidationError(f'Baseline signal rate {singles_rate!r}/s does not exceed the noise rate '
                              f'{noise_rate!r}/s; the correlation cannot be separated from noise')
    value = numerator / denominator
    error = value * math.hypot(herald_err / numerator, singles_err / denominator)
    return Estimate(value, error)


def denoise(trace: TimeTrace, config: CountingConfig, t_on: float) -> DenoisedTrace:
    """
    True signal rate per bin, S_t = (C R / S_i - S_n) / g, with g from the pre-shutter bins.

    S_n is the configured noise_rate_s. Bins without idler counts give NaN.
    """
    baseline = _baseline(trace, t_on)
    noise_rate = config.noise_rate_s
    g_hat = _intrinsic_g(baseline, config.rep_rate, noise_rate)
    g_registered = _registered_g(float(baseline.c.sum()), float(baseline.s_i.sum()), float(baseline.s_s.sum()),
                                 config.rep_rate, len(baseline) * baseline.bin_width)

    c = trace.c.astype(float)
    s_i = trace.s_i.astype(float)
    with np.errstate(divide='ignore', invalid='ignore'):
        herald_rate = np.where(s_i > 0, c * config.rep_rate / s_i, np.nan)
        relative = np.sqrt(np.maximum(1.0 / np.maximum(c, 1.0) - 1.0 / s_i, 0.0))
    s_t = (herald_rate - noise_rate) / g_hat.value
    s_t_err = herald_rate * relative / g_hat.value

    n_bins = len(trace)
    singles_background = noise_rate * trace.bin_width * n_bins
    coincidence_background = float(s_i.sum()) * noise_rate / config.rep_rate
    if noise_rate == 0:
        snr_singles = snr_coincidences = math.inf
    else:
        snr_singles = (float(trace.s_s.sum()) - singles_background) / singles_background
        snr_coincidences = (float(c.sum()) - coincidence_background) / coincidence_background

    result = DenoisedTrace(
        t=trace.t.copy(),
        s_t=s_t,
        s_t_err=s_t_err,
        s_s=trace.s_s / trace.bin_width,
        noise_rate=noise_rate,
        g_baseline=g_hat,
        g_registered=g_registered,
        snr_singles=snr_singles,
        snr_coincidences=snr_coincidences,
    )
    log.info('Denoised %d bins with baseline g %.2f +- %.2f, SNR ratio %.3g',
             n_bins, g_hat.value, g_hat.error, result.snr_ratio)
    return result


def step_significance(values, split_index: int) -> float:
    """
    Two-sample z statistic of the level change at split_index, (mean after - mean before) / stderr.

    Non-finite entries are ignored; each side needs at least two finite values.
    """
    values = np.asarray(values, dtype=float)
    if not 0 < split_index < values.size:
        raise ValidationError(f'split_index {split_index!r} must fall inside a series of {values.size} values')
    before = values[:split_index]
    after = values[split_index:]
    before = before[np.isfinite(before)]
    after = after[np.isfinite(after)]
    if before.size < 2 or after.size < 2:
        raise ValidationError('Each side of the step needs at least two finite values')
    stderr = math.sqrt(before.var(ddof=1) / before.size + after.var(ddof=1) / after.size)
    delta = float(after.mean() - before.mean())
    if stderr == 0:
        return math.copysign(math.inf, delta) if delta else 0.0
    return delta / stderr


log = logging.getLogger(__name__)
