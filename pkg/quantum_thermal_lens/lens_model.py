"""
Time-dependent lens phase and the on-axis signal-beam transmission it produces.

The phase of one term is

    phi(g, t) = amp / t_c * [ c_r I1(t) + exp(-k t) (1 - c_r) I2(t) ]

with f(t') = (1 - exp(-2 m g / s)) / s, s = 1 + 2 t'/t_c, I1 = int_0^t f and
I2 = int_0^t exp(k t') f. The total phase is the thermal term (theta_th, t_th)
plus the Soret term (theta_s, t_s), both sharing k, c_r and m. The normalized
transmission is

    T(t) = (1 + V**2) |int_0^inf exp(-(1 + iV) g - i phi(g, t)) dg|**2
"""
import logging
import math
import threading
from collections import OrderedDict
from typing import Callable, Hashable, Sequence, Tuple

import numpy as np
from scipy import integrate

from .exceptions import ValidationError, ModelNumericalError
from .lens_params import LensParams, Scenario
from .radial_quadrature import (RadialQuadrature, DEFAULT_RADIAL_QUADRATURE, rising_integral, rising_grid,
                                decaying_integral)

ADAPTIVE_RTOL = 1e-9
ADAPTIVE_LIMIT = 200
TIME_TOLERANCE = 1e-9


def _require_finite(**values: float):
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValidationError(f'{name} must be finite, got {value!r}')


def _rate_integrand(t_prime: float, a: float, t_c: float, k: float, t: float) -> float:
    s = 1.0 + 2.0 * t_prime / t_c
    return math.exp(k * (t_prime - t)) * -math.expm1(-a / s) / s


def _adaptive_decaying(a: float, t: float, t_c: float, k: float) -> float:
    result = integrate.quad(_rate_integrand, 0.0, t, args=(a, t_c, k, t),
                            epsabs=0.0, epsrel=ADAPTIVE_RTOL, limit=ADAPTIVE_LIMIT, full_output=1)
    value, abserr = result[0], result[1]
    if len(result) > 3:
        achieved = abserr / abs(value) if value else abserr
        raise ModelNumericalError(f'Adaptive quadrature of the decaying integral did not converge: {result[3]}',
                                  achieved_tolerance=achieved)
    return value


def phase_component(g: float, t: float, amp: float, t_c: float, k: float, c_r: float, m: float) -> float:
    """
    One bracketed term of the lens phase at radial variable g and t seconds after pump onset.

    The c_r integral uses its closed form, the decaying one adaptive quadrature
    with relative tolerance 1e-9.
    """
    _require_finite(g=g, t=t, amp=amp, t_c=t_c, k=k, c_r=c_r, m=m)
    if g < 0 or t < 0:
        raise ValidationError(f'Expected g >= 0 and t >= 0, got g={g!r}, t={t!r}')
    if t_c <= 0 or m <= 0 or k < 0 or not 0 <= c_r <= 1:
        raise ValidationError(f'Invalid term constants t_c={t_c!r}, m={m!r}, k={k!r}, c_r={c_r!r}')
    if t == 0 or g == 0:
        return 0.0

    a = 2.0 * m * g
    closed = 0.5 * t_c * float(rising_integral(a, 2.0 * t / t_c))
    if k == 0 or c_r == 1:
        decaying = closed
    else:
        decaying = _adaptive_decaying(a, t, t_c, k)
    return amp / t_c * (c_r * closed + (1.0 - c_r) * decaying)


def phase_total(g: float, t: float, p: LensParams) -> float:
    return (phase_component(g, t, p.theta_th, p.t_th, p.k, p.c_r, p.m)
            + phase_component(g, t, p.theta_s, p.t_s, p.k, p.c_r, p.m))


def _combine(closed: np.ndarray, decaying: np.ndarray, c_r: float, t_c: float) -> np.ndarray:
    return (c_r * closed + (1.0 - c_r) * decaying) / t_c


def _closed_grid(g_nodes: np.ndarray, times: np.ndarray, t_c: float, m: float, n_jobs: int = 1) -> np.ndarray:
    return rising_grid(2.0 * m * g_nodes, times, t_c, n_jobs)


def unit_phase_grid(g_nodes: np.ndarray, times: np.ndarray, t_c: float, k: float, c_r: float, m: float,
                    n_jobs: int = 1) -> np.ndarray:
    """Phase of one term with unit amplitude on every (g node, sorted time)"""
    closed = _closed_grid(g_nodes, times, t_c, m, n_jobs)
    if k == 0 or c_r == 1:
        return _combine(closed, closed, c_r, t_c)
    decaying = decaying_integral(2.0 * m * g_nodes, times, t_c, k, n_jobs=n_jobs)
    return _combine(closed, decaying, c_r, t_c)


def phase_grid(g_nodes: np.ndarray, times: np.ndarray, p: LensParams, scale: float = 1.0,
               n_jobs: int = 1) -> np.ndarray:
    thermal = unit_phase_grid(g_nodes, times, p.t_th, p.k, p.c_r, p.m, n_jobs)
    soret = unit_phase_grid(g_nodes, times, p.t_s, p.k, p.c_r, p.m, n_jobs)
    return scale * p.theta_th * thermal + scale * p.theta_s * soret


def transmission(phase: np.ndarray, g_nodes: np.ndarray, weights: np.ndarray, v_geom: float) -> np.ndarray:
    """
    Normalized on-axis transmission for every column of a (g, t) phase grid.

    The Gaussian part integrates analytically to 1 / (1 + iV), only the phase
    correction exp(-i phi) - 1 goes through the quadrature.
    """
    gaussian = weights * np.exp(-(1.0 + 1j * v_geom) * g_nodes)
    half_sine = np.sin(0.5 * phase)
    correction = gaussian @ (-2.0 * half_sine ** 2 - 1j * np.sin(phase))
    field = 1.0 / (1.0 + 1j * v_geom) + correction
    return (1.0 + v_geom ** 2) * np.abs(field) ** 2


def _check_agreement(value: float, refined: float, rtol: float, where: str):
    delta = abs(value - refined) / max(abs(refined), np.finfo(float).tiny)
    log.debug('Radial quadrature check at %s: relative delta %.3g', where, delta)
    if delta > rtol:
        raise ModelNumericalError(f'Radial quadrature disagrees with the refined rule at {where}',
                                  achieved_tolerance=delta)


def _validated_single(t: float, p: LensParams, quadrature: RadialQuadrature, scale: float = 1.0) -> float:
    values = []
    for rule in (quadrature, quadrature.refined()):
        g_nodes, weights = rule.nodes(p.v_geom)
        phase = phase_grid(g_nodes, np.array([t]), p, scale)
        values.append(float(transmission(phase, g_nodes, weights, p.v_geom)[0]))
    _check_agreement(values[0], values[1], quadrature.rtol, f't={t!r} s')
    return values[0]


def intensity(t: float, p: LensParams, quadrature: RadialQuadrature = DEFAULT_RADIAL_QUADRATURE) -> float:
    """Normalized signal-beam transmission t seconds after pump onset, T(0) = 1"""
    _require_finite(t=t)
    if t < 0:
        raise ValidationError(f'Expected t >= 0, got {t!r}')
    if t == 0:
        return 1.0
    return _validated_single(t, p, quadrature)


log = logging.getLogger(__name__)


class TraceModel:
    """
    Transmission at a fixed set of sample times for changing parameters.

    Unit-amplitude phase grids are cached per branch, shutter times and
    (t_c, k, m); the amplitudes, c_r and the power scale only recombine cached
    grids. The cache is built under a lock and read-only afterwards.
    """

    def __init__(self,
                 sample_times: Sequence[float],
                 quadrature: RadialQuadrature = DEFAULT_RADIAL_QUADRATURE,
                 n_jobs: int = 1,
                 cache_size: int = 32,
                 validate: bool = True,
                 ):
        times = np.array(sample_times, dtype=float)
        if times.ndim != 1:
            raise ValidationError('Sample times must be one-dimensional')
        if not np.all(np.isfinite(times)):
            raise ValidationError('Sample times must be finite')
        if np.any(np.diff(times) < 0):
            raise ValidationError('Sample times must be sorted in increasing order')
        if times.size and times[0] < 0:
            raise ValidationError(f'Sample times must be nonnegative, got {times[0]!r}')
        times.setflags(write=False)

        self.sample_times = times
        self.quadrature = quadrature
        self.n_jobs = n_jobs
        self.validate = validate
        self.grid_builds = 0
        self._cache_size = cache_size
        self._cache: 'OrderedDict[Hashable, np.ndarray]' = OrderedDict()
        self._lock = threading.Lock()

    def _cached(self, key: Tuple, build: Callable[[], np.ndarray]) -> np.ndarray:
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
            log.debug('Building phase grid %r', key)
            value = build()
            value.setflags(write=False)
            self.grid_builds += 1
            self._cache[key] = value
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
            return value

    def _unit_phase(self, branch: Tuple, times: np.ndarray, g_nodes: np.ndarray,
                    t_c: float, k: float, c_r: float, m: float) -> np.ndarray:
        closed = self._cached(branch + ('closed', t_c, m),
                              lambda: _closed_grid(g_nodes, times, t_c, m, self.n_jobs))
        if k == 0 or c_r == 1:
            return _combine(closed, closed, c_r, t_c)
        decaying = self._cached(branch + ('decaying', t_c, k, m),
                                lambda: decaying_integral(2.0 * m * g_nodes, times, t_c, k, n_jobs=self.n_jobs))
        return _combine(closed, decaying, c_r, t_c)

    def _phase(self, branch: Tuple, times: np.ndarray, g_nodes: np.ndarray,
               p: LensParams, t_th: float, t_s: float, scale: float) -> np.ndarray:
        thermal = self._unit_phase(branch, times, g_nodes, t_th, p.k, p.c_r, p.m)
        soret = self._unit_phase(branch, times, g_nodes, t_s, p.k, p.c_r, p.m)
        return scale * p.theta_th * thermal + scale * p.theta_s * soret

    def evaluate(self, scenario: Scenario, p: LensParams) -> np.ndarray:
        t = self.sample_times
        if t.size and t[-1] > scenario.duration + TIME_TOLERANCE:
            raise ValidationError(f'Sample time {t[-1]!r} lies beyond the trace duration {scenario.duration!r}')

        result = np.ones(t.shape)
        pump_on = (t >= scenario.t_on) & (t < scenario.t_off)
        pump_off = t >= scenario.t_off

        rise_times = t[pump_on] - scenario.t_on
        if pump_off.any():
            rise_times = np.append(rise_times, scenario.t_off - scenario.t_on)
        if rise_times.size == 0:
            return result

        v = p.v_geom
        g_nodes, weights = self.quadrature.nodes(v)
        scale = scenario.power_scale

        rise_branch = ('rise', scenario.t_on, scenario.t_off, v)
        rise_phase = self._phase(rise_branch, rise_times, g_nodes, p, p.t_th, p.t_s, scale)
        n_on = int(pump_on.sum())
        result[pump_on] = transmission(rise_phase[:, :n_on], g_nodes, weights, v)

        if pump_off.any():
            steady = rise_phase[:, -1:]
            t_th_relax, t_s_relax = scenario.relaxation_times(p)
            relax_times = t[pump_off] - scenario.t_off
            relax_branch = ('relax', scenario.t_off, v)
            recovered = self._phase(relax_branch, relax_times, g_nodes, p, t_th_relax, t_s_relax, scale)
            remaining = steady - recovered
            # clamped toward zero: the relaxing phase never changes sign
            remaining = np.where(steady * remaining > 0, remaining, 0.0)
            result[pump_off] = transmission(remaining, g_nodes, weights, v)

        if self.validate:
            self.spot_check(scenario, p)
        return result

    def spot_check(self, scenario: Scenario, p: LensParams):
        """Radial rule against its refined version at the latest rising sample time"""
        t = self.sample_times
        pump_on = t[(t >= scenario.t_on) & (t < scenario.t_off)]
        latest = float(pump_on[-1] - scenario.t_on) if pump_on.size else 0.0
        if (t >= scenario.t_off).any():
            latest = scenario.t_off - scenario.t_on
        if latest > 0:
            _validated_single(latest, p, self.quadrature, scenario.power_scale)


def trace(scenario: Scenario,
          p: LensParams,
          sample_times: Sequence[float],
          quadrature: RadialQuadrature = DEFAULT_RADIAL_QUADRATURE,
          n_jobs: int = 1,
          ) -> np.ndarray:
    """
    Transmission at every sample time of a pump schedule.

    1 before t_on, the rising branch up to t_off, the relaxation branch after it.
    """
    if p.timescales_inverted:
        log.warning('Soret time t_s=%r is shorter than thermal time t_th=%r', p.t_s, p.t_th)
    model = TraceModel(sample_times, quadrature=quadrature, n_jobs=n_jobs)
    values = model.evaluate(scenario, p)
    log.info('Evaluated %d-point trace with %d phase grids', len(values), model.grid_builds)
    return values
