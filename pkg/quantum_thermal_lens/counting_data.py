import logging
import math
from dataclasses import dataclass, asdict
from enum import Enum as PyEnum
from typing import Optional, Dict, Any

import numpy as np

from .exceptions import ValidationError

TIMESTAMP_TOLERANCE = 1e-9
MU_PAIR_WARNING = 0.05

# 1200 coincidences and 20000 idler singles per 0.1 s bin at 6% efficiency
DEFAULT_MU_PAIR = 1.0 / 24.0


class SimulationMode(PyEnum):
    BINS = 'bins'
    PULSES = 'pulses'

    def __repr__(self):
        return f'{self.__class__.__name__}.{self.name}'


@dataclass(frozen=True)
class CountingConfig:
    """
    Pulsed photon-pair source and detector chain.

    Rates are per second, efficiencies are fractions, bin_width is in seconds.
    noise_rate_s is the uncorrelated signal-arm background; noise_excess the
    relative spread of that background from bin to bin (0 for pure Poisson).
    """
    rep_rate: float = 8e7
    mu_pair: float = DEFAULT_MU_PAIR
    eta_i: float = 0.06
    eta_s: float = 0.06
    noise_rate_s: float = 1e4
    bin_width: float = 0.1
    seed: int = 0
    m_singles: Optional[float] = None
    noise_excess: float = 0.0
    multipair_accidentals: bool = False
    mode: SimulationMode = SimulationMode.BINS

    def __post_init__(self):
        for name in ('rep_rate', 'mu_pair', 'eta_i', 'eta_s', 'noise_rate_s', 'bin_width', 'noise_excess'):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f'CountingConfig.{name} must be finite, got {value!r}')
        if self.rep_rate <= 0:
            raise ValidationError(f'rep_rate must be positive, got {self.rep_rate!r}')
        if self.mu_pair <= 0:
            raise ValidationError(f'mu_pair must be positive, got {self.mu_pair!r}')
        for name in ('eta_i', 'eta_s'):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationError(f'{name} must lie in [0, 1], got {getattr(self, name)!r}')
        if self.bin_width <= 0:
            raise ValidationError(f'bin_width must be positive, got {self.bin_width!r}')
        if self.noise_rate_s < 0 or self.noise_excess < 0:
            raise ValidationError('Noise rate and noise excess must be nonnegative')
        if self.m_singles is not None and not (math.isfinite(self.m_singles) and self.m_singles > 0):
            raise ValidationError(f'm_singles must be positive, got {self.m_singles!r}')
        if not isinstance(self.mode, SimulationMode):
            object.__setattr__(self, 'mode', SimulationMode(self.mode))
        if self.seed < 0:
            raise ValidationError(f'seed must be a nonnegative integer, got {self.seed!r}')
        if self.mu_pair > MU_PAIR_WARNING:
            log.warning('mu_pair=%r exceeds %r: pair statistics leave the low-gain regime',
                        self.mu_pair, MU_PAIR_WARNING)

    @property
    def pulses_per_bin(self) -> float:
        return self.rep_rate * self.bin_width

    def bin_times(self, duration: float) -> np.ndarray:
        n_bins = int(math.floor(duration / self.bin_width + TIMESTAMP_TOLERANCE))
        return np.arange(n_bins) * self.bin_width

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values['mode'] = self.mode.value
        return values


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """Uniformly binned counting record; t holds bin-start timestamps in seconds"""
    t: np.ndarray
    s_i: np.ndarray
    s_s: np.ndarray
    c: np.ndarray
    bin_width: float

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        channels = {}
        for name in ('s_i', 's_s', 'c'):
            raw = np.asarray(getattr(self, name))
            counts = raw.astype(np.int64)
            if raw.shape != t.shape:
                raise ValidationError(f'Channel {name} has {raw.size} bins, timestamps have {t.size}')
            if np.any(counts != raw):
                raise ValidationError(f'Channel {name} holds non-integer counts')
            if np.any(counts < 0):
                raise ValidationError(f'Channel {name} holds negative counts')
            counts.setflags(write=False)
            channels[name] = counts

        if not (math.isfinite(self.bin_width) and self.bin_width > 0):
            raise ValidationError(f'bin_width must be positive, got {self.bin_width!r}')
        if not np.all(np.isfinite(t)):
            raise ValidationError('Timestamps must be finite')
        if t.size > 1:
            expected = t[0] + np.arange(t.size) * self.bin_width
            worst = np.max(np.abs(t - expected))
            if worst > TIMESTAMP_TOLERANCE:
                raise ValidationError(f'Timestamps are not uniform with bin width {self.bin_width!r} '
                                      f'(deviation {worst:.3g} s)')
        t.setflags(write=False)

        object.__setattr__(self, 't', t)
        for name, counts in channels.items():
            object.__setattr__(self, name, counts)

    def __len__(self) -> int:
        return self.t.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeTrace):
            return NotImplemented
        return (self.bin_width == other.bin_width
                and np.array_equal(self.t, other.t)
                and np.array_equal(self.s_i, other.s_i)
                and np.array_equal(self.s_s, other.s_s)
                and np.array_equal(self.c, other.c))

    def baseline_mask(self, t_on: float) -> np.ndarray:
        return self.t < t_on

    def select(self, mask: np.ndarray) -> 'TimeTrace':
        mask = np.asarray(mask, dtype=bool)
        indices = np.flatnonzero(mask)
        if indices.size > 1 and np.any(np.diff(indices) != 1):
            raise ValidationError('A selection of a trace must be contiguous')
        return TimeTrace(self.t[mask], self.s_i[mask], self.s_s[mask], self.c[mask], self.bin_width)

    def shifted(self, delta: float) -> 'TimeTrace':
        return TimeTrace(self.t + delta, self.s_i, self.s_s, self.c, self.bin_width)


log = logging.getLogger(__name__)
