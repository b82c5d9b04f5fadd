"""Recovery and model-selection runs at acceptance scale; minutes of CPU, marked slow"""
import time

import numpy as np
import pytest

from quantum_thermal_lens import LensParams, build_spec, fit, profile_timescales, simulate
from tests.scenarios import FIT_TRUTHS, M_BEAMS, PUMP_ON, coarse_config

FREE = ('theta_th', 'theta_s', 't_th', 't_s', 'k', 'c_r', 'amplitude')
TIGHT = ('theta_th', 'theta_s', 't_th')
LOOSE = ('t_s', 'k', 'c_r')
BIN_WIDTH = 0.5
# about 30000 coincidences per 0.1 s; at 1200 the decay and Soret terms trade off within the noise
EFFICIENCY = 0.3
FIT_SECONDS = 15 * 60

pytestmark = pytest.mark.slow


def _full_fit(p: LensParams, seed: int):
    config = coarse_config(seed=seed, bin_width=BIN_WIDTH, eta_i=EFFICIENCY, eta_s=EFFICIENCY)
    trace = simulate(config, PUMP_ON, p)
    spec = build_spec(trace, PUMP_ON, FREE, dict(m=M_BEAMS))
    return trace, spec, fit(trace, spec, n_jobs=-1)


@pytest.mark.parametrize('p', FIT_TRUTHS)
def test_full_fit_recovers_parameters(p: LensParams):
    for seed in range(5):
        _, _, result = _full_fit(p, seed)
        assert result.converged, (seed, result.message)
        assert result.chi2 <= result.chi2_init
        for name in TIGHT:
            assert result.values[name] == pytest.approx(getattr(p, name), rel=0.10), (seed, name)
        for name in LOOSE:
            assert result.values[name] == pytest.approx(getattr(p, name), rel=0.25), (seed, name)


def test_full_fit_within_time_budget():
    start = time.perf_counter()
    _, _, result = _full_fit(FIT_TRUTHS[0], seed=7)
    elapsed = time.perf_counter() - start

    assert result.n_evals <= 4000
    assert elapsed < FIT_SECONDS, f'{elapsed:.0f} s'


def test_both_timescales_are_needed():
    trace, spec, result = _full_fit(FIT_TRUTHS[0], seed=0)
    profiles = profile_timescales(trace, spec, result, n_jobs=-1)

    assert set(profiles) == {'t_th', 't_s', 'k'}
    for name in ('t_th', 't_s', 'k'):
        profile = profiles[name]
        assert profile.delta_chi2 > 9, name
        center = len(profile.grid) // 2
        assert abs(int(np.argmin(profile.chi2)) - center) <= 1, name


def test_decay_term_not_needed_without_decay():
    p = FIT_TRUTHS[0].with_values(k=0.0, c_r=1.0)
    trace, spec, result = _full_fit(p, seed=1)
    profiles = profile_timescales(trace, spec, result, n_jobs=-1)

    assert abs(profiles['k'].delta_chi2) < 2
