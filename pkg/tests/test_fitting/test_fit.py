import numpy as np
import pytest

from quantum_thermal_lens import FitSpec, TimeTrace, ValidationError, build_spec, fit, simulate
from quantum_thermal_lens.fitting import TraceFitter
from tests.scenarios import BASELINE_COUNTS, M_BEAMS, PUMP_ON, THERMAL_ONLY, TRUTH, coarse_config

THERMAL_FREE = ('theta_th', 't_th', 'amplitude')
THERMAL_FIXED = dict(theta_s=0.0, t_s=60.0, k=0.0, c_r=1.0, m=M_BEAMS)


def _fixed_except(p, free):
    return {name: value for name, value in p.to_dict().items() if name not in free}


def _within_errors(result, truth, n_sigma: float = 4.0):
    for name in result.free:
        error = result.errors[name]
        assert abs(result.values[name] - truth[name]) < n_sigma * error, (name, result.values[name], error)


@pytest.fixture(scope='module')
def thermal_fit(thermal_trace):
    spec = build_spec(thermal_trace, PUMP_ON, THERMAL_FREE, THERMAL_FIXED, max_evals=1500)
    return spec, fit(thermal_trace, spec)


def test_thermal_fit_recovers_truth(thermal_fit):
    spec, result = thermal_fit
    truth = dict(THERMAL_ONLY.to_dict(), amplitude=BASELINE_COUNTS)

    assert result.converged
    assert result.chi2 <= result.chi2_init
    assert result.dof == 340 - 3
    assert 0.8 < result.reduced_chi2 < 1.2
    _within_errors(result, truth)
    assert result.values['t_th'] == pytest.approx(THERMAL_ONLY.t_th, rel=0.1)
    assert result.params.theta_s == 0.0


def test_covariance_is_symmetric_and_positive(thermal_fit):
    _, result = thermal_fit
    covariance = result.covariance
    assert result.covariance_available
    np.testing.assert_array_equal(covariance, covariance.T)
    eigenvalues = np.linalg.eigvalsh(covariance)
    assert eigenvalues.min() > -1e-8 * eigenvalues.max()


def test_result_is_local_minimum(thermal_trace, thermal_fit):
    spec, result = thermal_fit
    fitter = TraceFitter(thermal_trace, spec)
    best = np.array([result.values[name] for name in spec.free])
    u = fitter.to_unit(best)
    chi2 = fitter.unit_chi2(u)
    assert chi2 == pytest.approx(result.chi2, rel=1e-12)

    for i in range(u.size):
        for step in (-1e-3, 1e-3):
            shifted = u.copy()
            shifted[i] = np.clip(shifted[i] + step, 0.0, 1.0)
            assert fitter.unit_chi2(shifted) >= chi2 * (1 - 1e-9)


def test_fit_is_deterministic(thermal_trace, thermal_fit):
    spec, result = thermal_fit
    again = fit(thermal_trace, spec)
    assert again.values == result.values
    assert again.chi2 == result.chi2
    assert again.n_evals == result.n_evals


def test_restarts_keep_the_best_polish(thermal_trace, thermal_fit):
    spec, result = thermal_fit
    restarted = FitSpec(free=spec.free, fixed=spec.fixed, bounds=spec.bounds, init=spec.init, scenario=spec.scenario,
                        max_evals=4000, restarts=({'t_th': 0.2}, {'t_th': 20.0, 'theta_th': 1.0}))
    first = fit(thermal_trace, restarted)

    assert first.converged
    assert first.chi2 <= result.chi2
    assert first.n_evals > result.n_evals
    assert first.values['t_th'] == pytest.approx(result.values['t_th'], rel=1e-3)
    again = fit(thermal_trace, restarted, n_jobs=2)
    assert again.values == first.values
    assert again.n_evals == first.n_evals


def test_amplitudes_with_timescales_fixed(truth_trace):
    free = ('theta_th', 'theta_s', 'amplitude')
    spec = build_spec(truth_trace, PUMP_ON, free, _fixed_except(TRUTH, free), max_evals=800)
    result = fit(truth_trace, spec)

    _within_errors(result, dict(TRUTH.to_dict(), amplitude=BASELINE_COUNTS))


def test_count_scaling_leaves_optimum(thermal_trace, thermal_fit):
    _, result = thermal_fit
    scaled = TimeTrace(thermal_trace.t, thermal_trace.s_i, thermal_trace.s_s, 4 * thermal_trace.c,
                       thermal_trace.bin_width)
    spec = build_spec(scaled, PUMP_ON, THERMAL_FREE, THERMAL_FIXED, max_evals=1500)
    rescaled = fit(scaled, spec)

    assert rescaled.values['theta_th'] == pytest.approx(result.values['theta_th'], rel=1e-4)
    assert rescaled.values['t_th'] == pytest.approx(result.values['t_th'], rel=1e-4)
    assert rescaled.amplitude == pytest.approx(4 * result.amplitude, rel=1e-4)


def test_shifted_trace_moves_onset(thermal_trace):
    free = ('theta_th', 'amplitude', 't_on')
    fixed = dict(THERMAL_FIXED, t_th=THERMAL_ONLY.t_th)
    delta = 1.5

    original = fit(thermal_trace, build_spec(thermal_trace, PUMP_ON, free, fixed, max_evals=1000))
    shifted_trace = thermal_trace.shifted(delta)
    shifted = fit(shifted_trace, build_spec(shifted_trace, PUMP_ON, free, fixed, max_evals=1000))

    assert shifted.values['t_on'] == pytest.approx(original.values['t_on'] + delta, abs=0.05)
    assert shifted.values['theta_th'] == pytest.approx(original.values['theta_th'], rel=0.01)
    assert abs(original.values['t_on'] - PUMP_ON.t_on) < 3 * original.errors['t_on']


def test_reduced_chi2_at_truth_is_near_one():
    fixed = dict(TRUTH.to_dict(), amplitude=BASELINE_COUNTS)
    reduced = []
    for seed in range(5):
        trace = simulate(coarse_config(seed=seed), PUMP_ON, TRUTH)
        spec = FitSpec(free=(), fixed=fixed, bounds={}, init={}, scenario=PUMP_ON)
        result = fit(trace, spec)
        assert result.chi2 == result.chi2_init
        assert result.converged and not result.covariance_available
        reduced.append(result.reduced_chi2)
    assert 0.8 < np.mean(reduced) < 1.2


def test_budget_exhaustion_is_reported(thermal_trace):
    spec = build_spec(thermal_trace, PUMP_ON, THERMAL_FREE, THERMAL_FIXED, max_evals=5)
    result = fit(thermal_trace, spec)

    assert not result.converged
    assert 'budget' in result.message
    assert result.n_evals <= 5 + 2 * len(THERMAL_FREE) + 1
    assert result.chi2 <= result.chi2_init


def test_unconstrained_parameter_has_no_covariance(thermal_trace):
    """t_s moves nothing while theta_s is pinned at zero"""
    free = ('theta_th', 't_s', 'amplitude')
    fixed = dict(THERMAL_FIXED, t_th=THERMAL_ONLY.t_th)
    del fixed['t_s']
    spec = build_spec(thermal_trace, PUMP_ON, free, fixed, max_evals=300)
    result = fit(thermal_trace, spec)

    assert not result.covariance_available
    assert result.errors == {}


def test_trace_too_short(thermal_trace):
    spec = build_spec(thermal_trace, PUMP_ON, THERMAL_FREE, THERMAL_FIXED)
    with pytest.raises(ValidationError):
        fit(thermal_trace.select(np.arange(len(thermal_trace)) < 5), spec)


def test_onset_fit_needs_baseline(thermal_trace):
    free = ('theta_th', 'amplitude', 't_on')
    spec = build_spec(thermal_trace, PUMP_ON, free, dict(THERMAL_FIXED, t_th=2.0))
    with pytest.raises(ValidationError, match='baseline'):
        fit(thermal_trace.select(thermal_trace.t >= 39.0), spec)
