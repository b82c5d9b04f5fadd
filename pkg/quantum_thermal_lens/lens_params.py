import math
from dataclasses import dataclass, replace, asdict
from typing import Optional, Tuple, Dict

from .exceptions import ValidationError

M_MATCH_TOLERANCE = 1e-12


def _require_finite(owner: str, **values: Optional[float]):
    for name, value in values.items():
        if value is not None and not math.isfinite(value):
            raise ValidationError(f'{owner}.{name} must be finite, got {value!r}')


@dataclass(frozen=True)
class LensParams:
    """
    Parameters of the time-dependent lens phase.

    theta_th/theta_s are the thermal and Soret phase amplitudes, t_th/t_s their
    characteristic times in seconds, k the photochemical decay rate in 1/s
    towards the residual fraction c_r, m = w_s**2 / w_p**2 and v_geom the
    geometry parameter of the on-axis diffraction integral.
    """
    theta_th: float
    theta_s: float
    t_th: float
    t_s: float
    k: float = 0.0
    c_r: float = 1.0
    m: float = 0.61 ** 2 / 0.57 ** 2
    v_geom: float = 1.0

    def __post_init__(self):
        _require_finite('LensParams', **asdict(self))
        if self.t_th <= 0 or self.t_s <= 0:
            raise ValidationError(f'Characteristic times must be positive, got t_th={self.t_th!r}, t_s={self.t_s!r}')
        if self.k < 0:
            raise ValidationError(f'Photochemical rate k must be nonnegative, got {self.k!r}')
        if not 0 <= self.c_r <= 1:
            raise ValidationError(f'Residual fraction c_r must lie in [0, 1], got {self.c_r!r}')
        if self.m <= 0:
            raise ValidationError(f'Beam ratio m must be positive, got {self.m!r}')

    @property
    def timescales_inverted(self) -> bool:
        """Soret term expected much slower than the thermal one"""
        return self.t_s < self.t_th

    def with_values(self, **values: float) -> 'LensParams':
        return replace(self, **values)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class BeamGeometry:
    """Beam radii at the sample, millimeters"""
    w_s: float
    w_p: float

    def __post_init__(self):
        _require_finite('BeamGeometry', w_s=self.w_s, w_p=self.w_p)
        if self.w_s <= 0 or self.w_p <= 0:
            raise ValidationError(f'Beam radii must be positive, got w_s={self.w_s!r}, w_p={self.w_p!r}')

    @property
    def m(self) -> float:
        return self.w_s ** 2 / self.w_p ** 2

    def check_matches(self, m: float):
        if abs(m - self.m) > M_MATCH_TOLERANCE * max(1.0, abs(self.m)):
            raise ValidationError(
                f'm={m!r} does not match beam geometry w_s={self.w_s!r} mm, w_p={self.w_p!r} mm (m={self.m!r})'
            )


@dataclass(frozen=True)
class Scenario:
    """
    Pump shutter schedule on the trace clock, seconds.

    t_off may be math.inf for pump-on-only runs. relax_params, when given, are the
    (t_th, t_s) pair used by the relaxation branch after t_off.
    """
    t_on: float = 40.0
    t_off: float = math.inf
    duration: float = 340.0
    relax_params: Optional[Tuple[float, float]] = None
    power_scale: float = 1.0

    def __post_init__(self):
        _require_finite('Scenario', t_on=self.t_on, duration=self.duration, power_scale=self.power_scale)
        if math.isnan(self.t_off):
            raise ValidationError('Scenario.t_off must not be NaN')
        if not 0 <= self.t_on < self.t_off:
            raise ValidationError(f'Expected 0 <= t_on < t_off, got t_on={self.t_on!r}, t_off={self.t_off!r}')
        if math.isfinite(self.t_off) and self.t_off > self.duration:
            raise ValidationError(f't_off={self.t_off!r} exceeds duration={self.duration!r}')
        if self.t_on >= self.duration:
            raise ValidationError(f't_on={self.t_on!r} must precede the end of the trace ({self.duration!r})')
        if self.power_scale < 0:
            raise ValidationError(f'power_scale must be nonnegative, got {self.power_scale!r}')
        if self.relax_params is not None:
            if len(self.relax_params) != 2:
                raise ValidationError(f'relax_params must be a (t_th, t_s) pair, got {self.relax_params!r}')
            _require_finite('Scenario', t_th_relax=self.relax_params[0], t_s_relax=self.relax_params[1])
            if min(self.relax_params) <= 0:
                raise ValidationError(f'Relaxation times must be positive, got {self.relax_params!r}')
            object.__setattr__(self, 'relax_params', (float(self.relax_params[0]), float(self.relax_params[1])))

    @property
    def has_relaxation(self) -> bool:
        return math.isfinite(self.t_off)

    def relaxation_times(self, p: LensParams) -> Tuple[float, float]:
        if self.relax_params is None:
            return p.t_th, p.t_s
        return self.relax_params
