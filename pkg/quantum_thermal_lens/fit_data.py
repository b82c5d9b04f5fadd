import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum as PyEnum
from typing import Dict, Tuple, Optional, Mapping, Any, FrozenSet

import numpy as np

from .exceptions import ValidationError
from .lens_params import LensParams, Scenario

ParameterValues = Dict[str, float]
ParameterBounds = Dict[str, Tuple[float, float]]

LENS_FIELDS: Tuple[str, ...] = tuple(f.name for f in fields(LensParams))
LENS_DEFAULTS: ParameterValues = {
    f.name: f.default for f in fields(LensParams) if isinstance(f.default, float)
}

TIMESCALES = ('t_th', 't_s', 'k')
LOG_SCALED: FrozenSet[str] = frozenset({'t_th', 't_s', 't_th_relax', 't_s_relax'})
FREEABLE: Tuple[str, ...] = (
    'theta_th', 'theta_s', 't_th', 't_s', 'k', 'c_r', 'amplitude', 't_on', 't_th_relax', 't_s_relax',
)
ALWAYS_FIXED = ('m', 'v_geom')
REQUIRED = ('theta_th', 'theta_s', 't_th', 't_s', 'm', 'amplitude')

T_ON_SPAN = 2.0
STATIC_BOUNDS: ParameterBounds = {
    'theta_th': (0.0, 10.0),
    'theta_s': (0.0, 10.0),
    't_th': (0.01, 50.0),
    't_s': (1.0, 1e4),
    'k': (0.0, 1.0),
    'c_r': (0.0, 1.0),
    't_th_relax': (0.01, 50.0),
    't_s_relax': (1.0, 1e4),
}


class Weighting(PyEnum):
    POISSON = 'poisson'
    UNIFORM = 'uniform'

    def __repr__(self):
        return f'{self.__class__.__name__}.{self.name}'


def default_bounds(name: str, amplitude: Optional[float] = None, scenario: Optional[Scenario] = None
                   ) -> Tuple[float, float]:
    """
    Default search box of a free parameter.

    The amplitude box spans a factor 2 around the baseline level, t_on moves at
    most 2 s around the configured shutter time and stays before t_off.
    """
    if name in STATIC_BOUNDS:
        return STATIC_BOUNDS[name]
    if name == 'amplitude':
        if amplitude is None or not amplitude > 0:
            raise ValidationError(f'Default amplitude bounds need a positive baseline level, got {amplitude!r}')
        return 0.5 * amplitude, 2.0 * amplitude
    if name == 't_on':
        if scenario is None:
            raise ValidationError('Default t_on bounds need the configured scenario')
        upper = scenario.t_on + T_ON_SPAN
        if scenario.has_relaxation:
            upper = min(upper, 0.5 * (scenario.t_on + scenario.t_off))
        return max(scenario.t_on - T_ON_SPAN, 0.0), upper
    raise ValidationError(f'{name!r} is not a free fit parameter')


@dataclass(frozen=True)
class FitSpec:
    """
    Which parameters a fit moves, inside which box, from where.

    fixed holds every pinned value (m always); init and bounds hold one entry per
    free name. The candidate vector of an optimizer follows the order of free.
    restarts lists further starting points for the polish stage, each a partial
    assignment of free parameters applied to the simplex optimum.
    """
    free: Tuple[str, ...]
    fixed: Mapping[str, float]
    bounds: Mapping[str, Tuple[float, float]]
    init: Mapping[str, float]
    scenario: Scenario = field(default_factory=Scenario)
    weights: Weighting = Weighting.POISSON
    max_evals: int = 4000
    use_simplex: bool = True
    restarts: Tuple[Mapping[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'free', tuple(self.free))
        object.__setattr__(self, 'fixed', {name: float(value) for name, value in self.fixed.items()})
        object.__setattr__(self, 'bounds', {name: (float(lo), float(hi)) for name, (lo, hi) in self.bounds.items()})
        object.__setattr__(self, 'init', {name: float(value) for name, value in self.init.items()})
        object.__setattr__(self, 'restarts', tuple({name: float(value) for name, value in point.items()}
                                                for point in self.restarts))
        if not isinstance(self.weights, Weighting):
            object.__setattr__(self, 'weights', Weighting(self.weights))

        if len(set(self.free)) != len(self.free):
            raise ValidationError(f'Duplicate free parameters in {self.free!r}')
        unknown = [name for name in self.free if name not in FREEABLE]
        if unknown:
            pinned = [name for name in unknown if name in ALWAYS_FIXED]
            if pinned:
                raise ValidationError(f'{", ".join(pinned)} cannot be free; it is fixed by the beam geometry')
            raise ValidationError(f'Unknown free parameters {unknown!r}')
        unknown = [name for name in self.fixed if name not in FREEABLE + ALWAYS_FIXED]
        if unknown:
            raise ValidationError(f'Unknown fixed parameters {unknown!r}')
        overlap = set(self.free) & set(self.fixed)
        if overlap:
            raise ValidationError(f'Parameters {sorted(overlap)!r} are both free and fixed')
        missing = [name for name in REQUIRED if name not in self.free and name not in self.fixed]
        if missing:
            raise ValidationError(f'Parameters {missing!r} are neither free nor fixed')
        if self.max_evals < 1:
            raise ValidationError(f'max_evals must be positive, got {self.max_evals!r}')
        if not self.scenario.has_relaxation:
            relax = [name for name in self.free if name in ('t_th_relax', 't_s_relax')]
            if relax:
                raise ValidationError(f'{relax!r} need a scenario with a finite t_off')

        for name in self.free:
            if name not in self.bounds or name not in self.init:
                raise ValidationError(f'Free parameter {name!r} needs bounds and an initial value')
            lo, hi = self.bounds[name]
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValidationError(f'Invalid bounds for {name!r}: ({lo!r}, {hi!r})')
            if name in LOG_SCALED and lo <= 0:
                raise ValidationError(f'Lower bound of timescale {name!r} must be positive, got {lo!r}')
            if not lo <= self.init[name] <= hi:
                raise ValidationError(f'Initial {name}={self.init[name]!r} lies outside ({lo!r}, {hi!r})')

        for point in self.restarts:
            if not point:
                raise ValidationError('A restart point must set at least one free parameter')
            for name, value in point.items():
                if name not in self.free:
                    raise ValidationError(f'Restart sets {name!r}, which is not free')
                lo, hi = self.bounds[name]
                if not lo <= value <= hi:
                    raise ValidationError(f'Restart {name}={value!r} lies outside ({lo!r}, {hi!r})')

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def init_vector(self) -> np.ndarray:
        return np.array([self.init[name] for name in self.free], dtype=float)

    def values(self, candidate) -> ParameterValues:
        """Fixed values merged with a candidate vector in the order of free"""
        candidate = np.asarray(candidate, dtype=float).ravel()
        if candidate.size != self.n_free:
            raise ValidationError(f'Candidate has {candidate.size} entries, {self.n_free} parameters are free')
        values = dict(self.fixed)
        values.update(zip(self.free, (float(value) for value in candidate)))
        return values

    def check_in_bounds(self, candidate):
        for name, value in zip(self.free, np.asarray(candidate, dtype=float).ravel()):
            lo, hi = self.bounds[name]
            if not lo <= value <= hi:
                raise ValidationError(f'Candidate {name}={value!r} lies outside ({lo!r}, {hi!r})')

    def pinned(self, **values: float) -> 'FitSpec':
        """Copy with the given parameters moved to fixed, starting from the same point otherwise"""
        free = tuple(name for name in self.free if name not in values)
        fixed = dict(self.fixed)
        fixed.update(values)
        return replace(
            self,
            free=free,
            fixed=fixed,
            bounds={name: self.bounds[name] for name in free},
            init={name: self.init[name] for name in free},
            restarts=tuple(point for point in (
                {name: value for name, value in point.items() if name in free} for point in self.restarts
            ) if point),
        )

    def restarted(self, values: Mapping[str, float], use_simplex: Optional[bool] = None,
                  restarts: Optional[Tuple[Mapping[str, float], ...]] = None) -> 'FitSpec':
        """Copy starting from the given values, clipped to the bounds"""
        init = {}
        for name in self.free:
            lo, hi = self.bounds[name]
            init[name] = min(max(values.get(name, self.init[name]), lo), hi)
        return replace(self, init=init,
                       use_simplex=self.use_simplex if use_simplex is None else use_simplex,
                       restarts=self.restarts if restarts is None else restarts)


@dataclass(frozen=True, eq=False)
class FitResult:
    """
    Outcome of a fit.

    values holds every resolved parameter (free and fixed); errors the one-sigma
    errors of the free ones from the covariance, empty when it is unavailable.
    """
    params: LensParams
    values: ParameterValues
    free: Tuple[str, ...]
    chi2: float
    chi2_init: float
    dof: int
    covariance: Optional[np.ndarray]
    n_evals: int
    converged: bool
    message: str

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else math.nan

    @property
    def covariance_available(self) -> bool:
        return self.covariance is not None

    @property
    def errors(self) -> ParameterValues:
        if self.covariance is None:
            return {}
        return {name: math.sqrt(max(self.covariance[i, i], 0.0)) for i, name in enumerate(self.free)}

    @property
    def amplitude(self) -> float:
        return self.values['amplitude']

    def to_dict(self) -> Dict[str, Any]:
        return {
            'params': self.params.to_dict(),
            'values': dict(self.values),
            'free': list(self.free),
            'errors': self.errors,
            'chi2': self.chi2,
            'chi2_init': self.chi2_init,
            'dof': self.dof,
            'reduced_chi2': self.reduced_chi2,
            'covariance': None if self.covariance is None else self.covariance.tolist(),
            'n_evals': self.n_evals,
            'converged': self.converged,
            'message': self.message,
        }


@dataclass(frozen=True, eq=False)
class TimescaleProfile:
    """
    chi2 with one timescale held at each grid value and the rest re-optimized.

    removed_chi2 is the optimum with that timescale's term removed altogether;
    delta_chi2 its excess over the full fit.
    """
    name: str
    estimate: float
    grid: np.ndarray
    chi2: np.ndarray
    removed_chi2: float
    delta_chi2: float

    @property
    def best_value(self) -> float:
        return float(self.grid[int(np.nanargmin(self.chi2))])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'estimate': self.estimate,
            'grid': self.grid.tolist(),
            'chi2': self.chi2.tolist(),
            'removed_chi2': self.removed_chi2,
            'delta_chi2': self.delta_chi2,
        }
