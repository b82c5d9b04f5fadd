"""
Weighted least-squares estimation of the lens parameters from a coincidence trace.

The model of bin j is A T(t_j) with A the baseline amplitude in counts per bin.
Optimization runs in normalized coordinates u in [0, 1] per free parameter,
logarithmic for the characteristic times: a bounded Nelder-Mead stage followed
by a trust-region-reflective polish with finite-difference Jacobians, repeated
from any restart points of the FitSpec.
"""
import logging
import math
from dataclasses import replace
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import optimize

from .counting_data import TimeTrace
from .exceptions import ValidationError, ModelNumericalError
from .fit_data import (FitSpec, FitResult, TimescaleProfile, Weighting, ParameterValues, LENS_FIELDS,
                       LENS_DEFAULTS, LOG_SCALED, REQUIRED, TIMESCALES, default_bounds)
from .lens_model import TraceModel
from .lens_params import LensParams, Scenario
from .radial_quadrature import RadialQuadrature, DEFAULT_RADIAL_QUADRATURE

SIMPLEX_STEP = 0.1
SIMPLEX_XATOL = 1e-6
SIMPLEX_FATOL = 1e-8
POLISH_FTOL = 1e-8
POLISH_XTOL = 1e-9
DIFF_STEP = 1e-6
SINGULAR_RTOL = 1e-10
SIMPLEX_EVALS_PER_PARAM = 60

SMOOTHING_BINS = 5
FAST_WINDOW = (0.04, 0.08)
DEFAULT_C_R = 0.9
ZERO_RATE_CENTER = 1e-3

# polish restarts as fractions of the pump-on span
RESTART_T_S_FRACTIONS = (0.05, 0.2, 0.7)
RESTART_DECAY = ((2.0, 0.75), (8.0, 0.75))


class _BudgetExhausted(Exception):
    pass


class TraceFitter:
    """
    Residuals and optimizer state for one trace and one FitSpec.

    Keeps the phase-grid cache of a TraceModel over the trace timestamps, counts
    model evaluations and remembers the best candidate seen.
    """

    def __init__(self, trace: TimeTrace, spec: FitSpec,
                 quadrature: RadialQuadrature = DEFAULT_RADIAL_QUADRATURE, n_jobs: int = 1):
        self.trace = trace
        self.spec = spec
        end = float(trace.t[-1]) + trace.bin_width if len(trace) else spec.scenario.duration
        self.scenario = spec.scenario
        if end > spec.scenario.duration:
            self.scenario = replace(spec.scenario, duration=end)
        self.model = TraceModel(trace.t, quadrature=quadrature, n_jobs=n_jobs, validate=False)

        self.counts = trace.c.astype(float)
        if spec.weights is Weighting.POISSON:
            self.sigma = np.sqrt(np.maximum(self.counts, 1.0))
        else:
            self.sigma = np.ones(self.counts.shape)

        self.lower = np.array([spec.bounds[name][0] for name in spec.free], dtype=float)
        self.upper = np.array([spec.bounds[name][1] for name in spec.free], dtype=float)
        self.log_scaled = np.array([name in LOG_SCALED for name in spec.free], dtype=bool)

        self.n_evals = 0
        self.budget: Optional[int] = None
        self.best_chi2 = math.inf
        self.best_x: Optional[np.ndarray] = None

    def resolve(self, values: Mapping[str, float]) -> Tuple[LensParams, float, Scenario]:
        lens = dict(LENS_DEFAULTS)
        lens.update((name, values[name]) for name in LENS_FIELDS if name in values)
        p = LensParams(**lens)

        relax = self.scenario.relax_params
        if 't_th_relax' in values or 't_s_relax' in values:
            current = self.scenario.relaxation_times(p)
            relax = (values.get('t_th_relax', current[0]), values.get('t_s_relax', current[1]))
        scenario = replace(self.scenario, t_on=values.get('t_on', self.scenario.t_on), relax_params=relax)
        return p, values['amplitude'], scenario

    def resolved_values(self, values: Mapping[str, float]) -> ParameterValues:
        p, amplitude, scenario = self.resolve(values)
        resolved = p.to_dict()
        resolved['amplitude'] = amplitude
        resolved['t_on'] = scenario.t_on
        if scenario.has_relaxation:
            resolved['t_th_relax'], resolved['t_s_relax'] = scenario.relaxation_times(p)
        return resolved

    def model_counts(self, values: Mapping[str, float]) -> np.ndarray:
        p, amplitude, scenario = self.resolve(values)
        return amplitude * self.model.evaluate(scenario, p)

    def residuals(self, x) -> np.ndarray:
        if self.budget is not None and self.n_evals >= self.budget:
            raise _BudgetExhausted()
        values = self.spec.values(x)
        try:
            model = self.model_counts(values)
        except ModelNumericalError as error:
            raise ModelNumericalError(f'Model evaluation failed at {values!r}',
                                      achieved_tolerance=error.achieved_tolerance) from error
        self.n_evals += 1

        r = (self.counts - model) / self.sigma
        chi2 = float(r @ r)
        if chi2 < self.best_chi2:
            self.best_chi2 = chi2
            self.best_x = np.array(x, dtype=float)
        return r

    def check_resolved(self, values: Mapping[str, float]) -> LensParams:
        """Refined radial rule at the latest rising sample; the residual loop skips it"""
        p, _, scenario = self.resolve(values)
        try:
            self.model.spot_check(scenario, p)
        except ModelNumericalError as error:
            raise ModelNumericalError(f'Lens at {values!r} is not resolved by the radial rule',
                                      achieved_tolerance=error.achieved_tolerance) from error
        return p

    def chi2(self, x) -> float:
        r = self.residuals(x)
        return float(r @ r)

    def to_physical(self, u) -> np.ndarray:
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        linear = self.lower + u * (self.upper - self.lower)
        with np.errstate(divide='ignore', invalid='ignore'):
            logarithmic = self.lower * (self.upper / self.lower) ** u
        return np.where(self.log_scaled, logarithmic, linear)

    def to_unit(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(divide='ignore', invalid='ignore'):
            logarithmic = np.log(x / self.lower) / np.log(self.upper / self.lower)
        linear = (x - self.lower) / (self.upper - self.lower)
        return np.clip(np.where(self.log_scaled, logarithmic, linear), 0.0, 1.0)

    def unit_scale(self, x) -> np.ndarray:
        """dx/du at x"""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide='ignore', invalid='ignore'):
            logarithmic = x * np.log(self.upper / self.lower)
        return np.where(self.log_scaled, logarithmic, self.upper - self.lower)

    def unit_residuals(self, u) -> np.ndarray:
        return self.residuals(self.to_physical(u))

    def unit_chi2(self, u) -> float:
        r = self.unit_residuals(u)
        return float(r @ r)

    def unit_jacobian(self, u) -> np.ndarray:
        """Forward differences in normalized coordinates, stepping inwards at the box edges"""
        u = np.asarray(u, dtype=float)
        base = self.unit_residuals(u)
        jacobian = np.empty((base.size, u.size))
        for i in range(u.size):
            step = DIFF_STEP if u[i] + DIFF_STEP <= 1.0 else -DIFF_STEP
            shifted = u.copy()
            shifted[i] += step
            jacobian[:, i] = (self.unit_residuals(shifted) - base) / step
        return jacobian

    def covariance(self, jacobian: np.ndarray, x: np.ndarray, chi2: float, dof: int) -> Optional[np.ndarray]:
        singular = np.linalg.svd(jacobian, compute_uv=False)
        if singular.size == 0 or singular[0] == 0 or singular[-1] < SINGULAR_RTOL * singular[0]:
            log.warning('Curvature matrix is singular; covariance unavailable')
            return None
        inner = np.linalg.pinv(jacobian.T @ jacobian)
        scale = self.unit_scale(x)
        covariance = scale[:, None] * inner * scale[None, :]
        if self.spec.weights is Weighting.UNIFORM and dof > 0:
            covariance *= chi2 / dof
        return 0.5 * (covariance + covariance.T)

    def _initial_simplex(self, u0: np.ndarray) -> np.ndarray:
        simplex = np.tile(u0, (u0.size + 1, 1))
        for i in range(u0.size):
            step = SIMPLEX_STEP if u0[i] + SIMPLEX_STEP <= 1.0 else -SIMPLEX_STEP
            simplex[i + 1, i] += step
        return simplex

    def _check_preconditions(self):
        spec = self.spec
        if len(self.trace) < 2 * spec.n_free:
            raise ValidationError(f'Trace of {len(self.trace)} bins is too short for {spec.n_free} free parameters')
        if 't_on' in spec.free and not self.trace.baseline_mask(spec.bounds['t_on'][0]).any():
            raise ValidationError('Fitting t_on needs baseline bins before the shutter window')

    def run(self) -> FitResult:
        spec = self.spec
        self._check_preconditions()
        self.budget = spec.max_evals
        x0 = spec.init_vector
        chi2_init = self.chi2(x0)

        converged, message = True, 'No free parameters'
        jacobian = None
        if spec.n_free:
            converged, message, jacobian = self._optimize(x0, chi2_init)
        self.budget = None

        best_x = self.best_x
        dof = len(self.trace) - spec.n_free
        covariance = None
        if spec.n_free:
            if jacobian is None:
                jacobian = self.unit_jacobian(self.to_unit(best_x))
            covariance = self.covariance(jacobian, best_x, self.best_chi2, dof)

        values = self.resolved_values(spec.values(best_x))
        p = self.check_resolved(values)
        result = FitResult(
            params=p,
            values=values,
            free=spec.free,
            chi2=self.best_chi2,
            chi2_init=chi2_init,
            dof=dof,
            covariance=covariance,
            n_evals=self.n_evals,
            converged=converged,
            message=message,
        )
        if not converged:
            log.warning('Fit did not converge after %d evaluations: %s', self.n_evals, message)
        if p.timescales_inverted:
            log.warning('Fitted Soret time t_s=%r is shorter than thermal time t_th=%r', p.t_s, p.t_th)
        log.info('Fit of %r: chi2 %.6g over %d dof after %d evaluations',
                 spec.free, result.chi2, dof, self.n_evals)
        return result

    def _polish(self, start: np.ndarray):
        remaining = self.spec.max_evals - self.n_evals
        if remaining <= 0:
            raise _BudgetExhausted()
        polish = optimize.least_squares(
            self.unit_residuals, start,
            bounds=(0.0, 1.0),
            method='trf',
            ftol=POLISH_FTOL,
            xtol=POLISH_XTOL,
            diff_step=DIFF_STEP,
            max_nfev=remaining,
        )
        log.debug('Polish stage: cost %.6g, status %d (%s)', 2.0 * polish.cost, polish.status, polish.message)
        return polish

    def _restart_point(self, anchor: np.ndarray, point: Mapping[str, float]) -> np.ndarray:
        x = anchor.copy()
        for name, value in point.items():
            x[self.spec.free.index(name)] = value
        return self.to_unit(np.clip(x, self.lower, self.upper))

    def _optimize(self, x0: np.ndarray, chi2_init: float):
        spec = self.spec
        u0 = self.to_unit(x0)
        polishes = []
        exhausted = False
        try:
            if spec.use_simplex:
                simplex_budget = max(spec.n_free + 2, min(spec.max_evals // 2, SIMPLEX_EVALS_PER_PARAM * spec.n_free))
                simplex = optimize.minimize(
                    self.unit_chi2, u0,
                    method='Nelder-Mead',
                    bounds=[(0.0, 1.0)] * spec.n_free,
                    options=dict(
                        initial_simplex=self._initial_simplex(u0),
                        maxfev=simplex_budget,
                        xatol=SIMPLEX_XATOL,
                        fatol=SIMPLEX_FATOL * max(chi2_init, 1.0),
                    ),
                )
                log.debug('Simplex stage: chi2 %.6g after %d evaluations (%s)',
                          simplex.fun, simplex.nfev, simplex.message)

            anchor = np.array(self.best_x, dtype=float)
            polishes.append(self._polish(self.to_unit(anchor)))
            for point in spec.restarts:
                log.debug('Restarting polish from %r', point)
                polishes.append(self._polish(self._restart_point(anchor, point)))
        except _BudgetExhausted:
            exhausted = True

        budget_message = f'Evaluation budget of {spec.max_evals} exhausted'
        if not polishes:
            return False, budget_message, None
        polish = min(polishes, key=lambda candidate: candidate.cost)
        if exhausted and self.best_chi2 < 2.0 * polish.cost * (1.0 - 1e-9):
            # an unfinished polish holds the best candidate
            return False, budget_message, None

        jacobian = None
        if np.allclose(polish.x, self.to_unit(self.best_x), rtol=0.0, atol=1e-12):
            jacobian = polish.jac
        return polish.status > 0, polish.message, jacobian


def residuals(trace: TimeTrace, spec: FitSpec, candidate,
              quadrature: RadialQuadrature = DEFAULT_RADIAL_QUADRATURE) -> np.ndarray:
    """Weighted residuals (c_j - A T(t_j)) / sigma_j for a candidate vector in the order of spec.free"""
    spec.check_in_bounds(candidate)
    fitter = TraceFitter(trace, spec, quadrature)
    r = fitter.residuals(candidate)
    fitter.check_resolved(spec.values(candidate))
    return r


def fit(trace: TimeTrace, spec: FitSpec, quadrature: RadialQuadrature = DEFAULT_RADIAL_QUADRATURE,
        n_jobs: int = -1) -> FitResult:
    """
    Minimize chi2 from spec.init. Deterministic for a given spec.

    The result is the best candidate seen, so its chi2 never exceeds the one at init.
    n_jobs threads share the phase-grid rows; results do not depend on it.
    """
    return TraceFitter(trace, spec, quadrature, n_jobs).run()


def _moving_average(values: np.ndarray, width: int) -> np.ndarray:
    if values.size < width:
        return values.astype(float)
    kernel = np.ones(width) / width
    padded = np.pad(values.astype(float), (width // 2, width - 1 - width // 2), mode='edge')
    return np.convolve(padded, kernel, mode='valid')


def _parabolic_theta(transmission: float, m: float, v_geom: float) -> float:
    """Phase amplitude whose on-axis parabolic lens gives the transmission"""
    transmission = min(max(transmission, 1e-3), 1.0)
    return (math.sqrt(max((1.0 + v_geom ** 2) / transmission - 1.0, 0.0)) - v_geom) / m


def initial_guess(trace: TimeTrace, scenario: Scenario, m: float, v_geom: float = 1.0) -> ParameterValues:
    """
    Starting point from the shape of the pump-on segment.

    The amplitude is the baseline mean, t_th twice the time to half the fast drop,
    t_s the late drop over the late slope, theta from the fast and final levels,
    k one over the pump-on span and c_r 0.9.
    """
    baseline = trace.c[trace.baseline_mask(scenario.t_on)]
    amplitude = float(baseline.mean()) if baseline.size else float(trace.c[:SMOOTHING_BINS].mean())
    amplitude = max(amplitude, 1.0)

    rising = (trace.t >= scenario.t_on) & (trace.t < scenario.t_off)
    tau = trace.t[rising] - scenario.t_on
    guess = dict(amplitude=amplitude, t_on=scenario.t_on, theta_th=0.1, theta_s=0.1, t_th=1.0, t_s=100.0,
                 k=0.0, c_r=DEFAULT_C_R)

    if tau.size >= 2 * SMOOTHING_BINS and tau[-1] > 0:
        y = _moving_average(trace.c[rising], SMOOTHING_BINS) / amplitude
        tau_end = float(tau[-1])
        fast = (tau >= FAST_WINDOW[0] * tau_end) & (tau <= FAST_WINDOW[1] * tau_end)
        y_fast = float(np.median(y[fast])) if fast.any() else float(y[min(SMOOTHING_BINS, y.size - 1)])
        y_end = float(np.mean(y[-SMOOTHING_BINS:]))

        half_level = 1.0 - 0.5 * (1.0 - y_fast)
        below = np.flatnonzero(y <= half_level)
        t_half = float(tau[below[0]]) if below.size else FAST_WINDOW[0] * tau_end
        t_th = 2.0 * max(t_half, trace.bin_width)

        late = tau >= 0.5 * tau_end
        slope = -np.polyfit(tau[late], y[late], 1)[0] if np.count_nonzero(late) >= 2 else 0.0
        late_drop = y_fast - y_end
        if slope > 0 and late_drop > 0:
            t_s = min(max(late_drop / slope, 0.1 * tau_end), 10.0 * tau_end)
        else:
            t_s = 0.25 * tau_end

        theta_th = max(_parabolic_theta(y_fast, m, v_geom), 0.0)
        theta_total = max(_parabolic_theta(y_end, m, v_geom), theta_th)
        guess.update(theta_th=theta_th, theta_s=theta_total - theta_th, t_th=t_th, t_s=t_s, k=1.0 / tau_end)

    if scenario.has_relaxation:
        relax = scenario.relax_params or (guess['t_th'], guess['t_s'])
        guess.update(t_th_relax=relax[0], t_s_relax=relax[1])
    log.debug('Initial guess %r', guess)
    return guess


def restart_points(trace: TimeTrace, scenario: Scenario, free: Iterable[str],
                   bounds: Mapping[str, Tuple[float, float]]) -> Tuple[Dict[str, float], ...]:
    """
    Polish restarts spread over the Soret time and the decay rate.

    Each point sets t_s to a fraction of the pump-on span and, when both decay
    parameters are free, pairs it with each decay rate of RESTART_DECAY.
    """
    free = tuple(free)
    if 't_s' not in free or not len(trace):
        return ()
    span = min(scenario.t_off, float(trace.t[-1])) - scenario.t_on
    if span <= 0:
        return ()
    decays = [{}]
    if 'k' in free and 'c_r' in free:
        decays = [dict(k=rate / span, c_r=c_r) for rate, c_r in RESTART_DECAY]

    points = []
    for fraction in RESTART_T_S_FRACTIONS:
        for decay in decays:
            point = dict(decay, t_s=fraction * span)
            point = {name: min(max(value, bounds[name][0]), bounds[name][1]) for name, value in point.items()}
            if point not in points:
                points.append(point)
    return tuple(points)


def build_spec(trace: TimeTrace,
               scenario: Scenario,
               free: Iterable[str],
               fixed: Mapping[str, float],
               bounds: Optional[Mapping[str, Tuple[float, float]]] = None,
               init: Optional[Mapping[str, float]] = None,
               weights: Weighting = Weighting.POISSON,
               max_evals: int = 4000,
               use_simplex: bool = True,
               multistart: bool = True,
               ) -> FitSpec:
    """
    FitSpec with default bounds and heuristic initial values wherever none are given.

    Heuristic values are clipped into the bounds; required parameters that are
    neither free nor fixed are pinned at their heuristic value. With multistart the
    polish stage also restarts from the points of restart_points.
    """
    free = tuple(free)
    fixed = dict(fixed)
    bounds = dict(bounds or {})
    init = dict(init or {})
    guess = initial_guess(trace, scenario, fixed.get('m', LENS_DEFAULTS['m']), fixed.get('v_geom', 1.0))

    for name in REQUIRED:
        if name not in free and name not in fixed and name in guess:
            fixed[name] = guess[name]

    resolved_bounds = {}
    resolved_init = {}
    for name in free:
        resolved_bounds[name] = bounds.get(name) or default_bounds(name, guess['amplitude'], scenario)
        if name in init:
            resolved_init[name] = init[name]
        else:
            lo, hi = resolved_bounds[name]
            resolved_init[name] = min(max(guess[name], lo), hi)

    return FitSpec(free=free, fixed=fixed, bounds=resolved_bounds, init=resolved_init, scenario=scenario,
                   weights=weights, max_evals=max_evals, use_simplex=use_simplex,
                   restarts=restart_points(trace, scenario, free, resolved_bounds) if multistart else ())


def _profile_chi2(trace: TimeTrace, spec: FitSpec, quadrature: RadialQuadrature) -> float:
    return fit(trace, spec, quadrature, n_jobs=1).chi2


def _removal(spec: FitSpec, name: str, values: Mapping[str, float]) -> FitSpec:
    if name == 't_th':
        return spec.pinned(theta_th=0.0, t_th=values['t_th'])
    if name == 't_s':
        return spec.pinned(theta_s=0.0, t_s=values['t_s'])
    # without decay the residual fraction has no effect
    return spec.pinned(k=0.0, c_r=values['c_r'])


def profile_timescales(trace: TimeTrace,
                       spec: FitSpec,
                       result: FitResult,
                       n_points: int = 7,
                       span_decades: float = 0.5,
                       n_jobs: int = 1,
                       quadrature: RadialQuadrature = DEFAULT_RADIAL_QUADRATURE,
                       ) -> Dict[str, TimescaleProfile]:
    """
    chi2 profiles of the free timescales among t_th, t_s and k around a completed fit.

    Each timescale is held on estimate * 10**linspace(-span, span, n_points) while
    the others are re-optimized from the fit; removing its term gives delta_chi2.
    """
    if n_points < 3 or n_points % 2 == 0:
        raise ValidationError(f'n_points must be odd and at least 3, got {n_points!r}')
    if not span_decades > 0:
        raise ValidationError(f'span_decades must be positive, got {span_decades!r}')

    base = spec.restarted(result.values, use_simplex=False, restarts=())
    names = [name for name in TIMESCALES if name in spec.free]
    grids = {}
    tasks = []
    for name in names:
        lo, hi = spec.bounds[name]
        estimate = result.values[name]
        center = estimate if estimate > 0 else max(lo, ZERO_RATE_CENTER * hi)
        grid = np.clip(center * 10.0 ** np.linspace(-span_decades, span_decades, n_points), lo, hi)
        grids[name] = grid
        tasks.extend(base.pinned(**{name: float(value)}) for value in grid)
        tasks.append(_removal(base, name, result.values))

    chi2_values = Parallel(n_jobs=n_jobs)(delayed(_profile_chi2)(trace, task, quadrature) for task in tasks)

    profiles = {}
    for index, name in enumerate(names):
        chunk = chi2_values[index * (n_points + 1):(index + 1) * (n_points + 1)]
        removed = float(chunk[-1])
        profiles[name] = TimescaleProfile(
            name=name,
            estimate=result.values[name],
            grid=grids[name],
            chi2=np.array(chunk[:-1], dtype=float),
            removed_chi2=removed,
            delta_chi2=removed - result.chi2,
        )
        log.info('Profile of %s: delta chi2 %.3g when removed', name, removed - result.chi2)
    return profiles


log = logging.getLogger(__name__)
