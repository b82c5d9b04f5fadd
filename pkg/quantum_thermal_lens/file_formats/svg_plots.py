"""Self-contained SVG figures; output is byte-stable for equal inputs"""
import logging
import math
from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt
import numpy as np

from ..counting_data import TimeTrace
from ..estimators import CorrelationTrace, DenoisedTrace
from ..lens_params import Scenario

PathLike = Union[str, Path]

plt.rcParams['svg.hashsalt'] = 'quantum-thermal-lens'
plt.rcParams['svg.fonttype'] = 'none'


def _save(fig, path: PathLike):
    try:
        fig.savefig(path, format='svg', metadata={'Date': None})
    except OSError as error:
        raise OSError(error.errno, f'Cannot write plot: {error.strerror or error}', str(path)) from error
    finally:
        plt.close(fig)
    log.info('Wrote %s', path)


def _mark_shutter(ax, scenario: Optional[Scenario]):
    if scenario is None:
        return
    ax.axvline(scenario.t_on, color='tab:red', linestyle='--', linewidth=1.0, label='pump on')
    if scenario.has_relaxation:
        ax.axvline(scenario.t_off, color='tab:green', linestyle='--', linewidth=1.0, label='pump off')


def plot_trace(trace: TimeTrace, path: PathLike, scenario: Optional[Scenario] = None):
    """Coincidences per bin against time with Poisson error bars"""
    fig, ax = plt.subplots(figsize=(8.5, 5.0))
    ax.errorbar(trace.t, trace.c, yerr=np.sqrt(np.maximum(trace.c, 1)), fmt='.', markersize=2,
                elinewidth=0.5, color='tab:blue', label='coincidences')
    _mark_shutter(ax, scenario)
    ax.set_xlabel('Time (s)')
    ax.set_ylabel(f'Coincidences per {trace.bin_width:g} s')
    ax.grid(alpha=0.3, linestyle='--', linewidth=0.5)
    ax.legend(loc='upper right')
    fig.tight_layout()
    _save(fig, path)


def plot_fit_overlay(trace: TimeTrace, model_counts: np.ndarray, path: PathLike,
                     scenario: Optional[Scenario] = None, reduced_chi2: float = math.nan):
    fig, (ax, ax_residual) = plt.subplots(2, 1, figsize=(8.5, 6.5), sharex=True,
                                          gridspec_kw=dict(height_ratios=(3, 1)))
    sigma = np.sqrt(np.maximum(trace.c, 1))
    ax.errorbar(trace.t, trace.c, yerr=sigma, fmt='.', markersize=2, elinewidth=0.5,
                color='tab:blue', label='data')
    ax.plot(trace.t, model_counts, color='black', linewidth=1.2, label=f'model, chi2/dof = {reduced_chi2:.3g}')
    _mark_shutter(ax, scenario)
    ax.set_ylabel(f'Coincidences per {trace.bin_width:g} s')
    ax.grid(alpha=0.3, linestyle='--', linewidth=0.5)
    ax.legend(loc='upper right')

    ax_residual.plot(trace.t, (trace.c - model_counts) / sigma, '.', markersize=2, color='tab:gray')
    ax_residual.axhline(0.0, color='black', linewidth=0.8)
    ax_residual.set_xlabel('Time (s)')
    ax_residual.set_ylabel('Residual (sigma)')
    fig.tight_layout()
    _save(fig, path)


def plot_gsi(correlation: CorrelationTrace, path: PathLike, scenario: Optional[Scenario] = None):
    """Windowed g with error bars; windows flagged invalid are marked on the time axis"""
    fig, ax = plt.subplots(figsize=(8.5, 5.0))
    valid = correlation.valid
    ax.errorbar(correlation.t[valid], correlation.g[valid], yerr=correlation.g_err[valid], fmt='o',
                markersize=3, elinewidth=0.8, color='tab:purple', label=f'g, {correlation.window}-bin windows')
    if not valid.all():
        ax.plot(correlation.t[~valid], np.zeros(np.count_nonzero(~valid)), 'x', color='tab:red',
                label='invalid window')
    _mark_shutter(ax, scenario)
    ax.set_xlabel('Time (s)')
    ax.set_ylabel('g')
    ax.grid(alpha=0.3, linestyle='--', linewidth=0.5)
    ax.legend(loc='upper right')
    fig.tight_layout()
    _save(fig, path)


def plot_denoised(denoised: DenoisedTrace, path: PathLike, scenario: Optional[Scenario] = None):
    fig, (ax_raw, ax_true) = plt.subplots(2, 1, figsize=(8.5, 6.5), sharex=True)
    ax_raw.plot(denoised.t, denoised.s_s, '.', markersize=2, color='tab:gray')
    ax_raw.set_ylabel('Signal singles (1/s)')
    ax_raw.set_title(f'SNR singles {denoised.snr_singles:.3g}, coincidences {denoised.snr_coincidences:.3g}')
    ax_true.errorbar(denoised.t, denoised.s_t, yerr=denoised.s_t_err, fmt='.', markersize=2, elinewidth=0.5,
                     color='tab:blue')
    ax_true.set_ylabel('True signal (1/s)')
    ax_true.set_xlabel('Time (s)')
    for ax in (ax_raw, ax_true):
        _mark_shutter(ax, scenario)
        ax.grid(alpha=0.3, linestyle='--', linewidth=0.5)
    fig.tight_layout()
    _save(fig, path)


log = logging.getLogger(__name__)
