"""
Sectioned key=value run configuration.

    [source]    CountingConfig fields, rates in 1/s, bin_width in s
    [lens]      LensParams fields, t_th/t_s in s, k in 1/s; beam radii w_s, w_p in mm
    [scenario]  t_on, t_off (or inf), duration in s; t_th_relax, t_s_relax in s; power_scale
    [fit]       free, bound_<name> = lo, hi, init_<name>, weights, max_evals, profile,
                profile_points, profile_span, window, n_jobs, multistart
    [output]    directory, plots

Any key can be overridden by an environment variable QTLENS_<SECTION>_<KEY>.
"""
import configparser
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Tuple, Optional, Mapping, Callable, Any, Union

from .counting_data import CountingConfig, SimulationMode, TimeTrace
from .exceptions import ValidationError
from .fit_data import FitSpec, Weighting, FREEABLE, LENS_FIELDS
from .fitting import build_spec
from .lens_params import LensParams, BeamGeometry, Scenario

ENV_PREFIX = 'QTLENS_'
SECTIONS = ('source', 'lens', 'scenario', 'fit', 'output')

DEFAULT_BEAM = BeamGeometry(w_s=0.61, w_p=0.57)
DEFAULT_LENS = dict(theta_th=0.4, theta_s=0.3, t_th=2.0, t_s=60.0, k=0.01, c_r=0.8)
DEFAULT_FREE = ('theta_th', 'theta_s', 't_th', 't_s', 'k', 'c_r', 'amplitude')


@dataclass(frozen=True)
class FitSettings:
    free: Tuple[str, ...] = DEFAULT_FREE
    bounds: Mapping[str, Tuple[float, float]] = field(default_factory=dict)
    init: Mapping[str, float] = field(default_factory=dict)
    weights: Weighting = Weighting.POISSON
    max_evals: int = 4000
    profile: bool = False
    profile_points: int = 7
    profile_span: float = 0.5
    window: int = 10
    n_jobs: int = -1
    multistart: bool = True

    def __post_init__(self):
        unknown = [name for name in tuple(self.free) + tuple(self.bounds) + tuple(self.init) if name not in FREEABLE]
        if unknown:
            raise ValidationError(f'Unknown fit parameters {unknown!r}')
        if self.window < 1:
            raise ValidationError(f'window must be positive, got {self.window!r}')
        if self.n_jobs == 0:
            raise ValidationError('n_jobs must not be 0')


@dataclass(frozen=True)
class OutputSettings:
    directory: Path = Path('.')
    plots: bool = True


@dataclass(frozen=True)
class RunConfig:
    source: CountingConfig = field(default_factory=CountingConfig)
    lens: LensParams = field(default_factory=lambda: LensParams(m=DEFAULT_BEAM.m, **DEFAULT_LENS))
    scenario: Scenario = field(default_factory=Scenario)
    fit: FitSettings = field(default_factory=FitSettings)
    output: OutputSettings = field(default_factory=OutputSettings)
    beam: Optional[BeamGeometry] = DEFAULT_BEAM

    def with_seed(self, seed: int) -> 'RunConfig':
        return replace(self, source=replace(self.source, seed=seed))

    def with_output(self, directory: Union[str, Path]) -> 'RunConfig':
        return replace(self, output=replace(self.output, directory=Path(directory)))

    def fit_spec(self, trace: TimeTrace) -> FitSpec:
        """FitSpec for a trace: configured lens values pin every parameter that is not free"""
        fixed = {name: value for name, value in self.lens.to_dict().items() if name not in self.fit.free}
        return build_spec(trace, self.scenario, self.fit.free, fixed,
                          bounds=self.fit.bounds, init=self.fit.init,
                          weights=self.fit.weights, max_evals=self.fit.max_evals,
                          multistart=self.fit.multistart)


def _float(value: str) -> float:
    try:
        return float(value)
    except ValueError as error:
        raise ValidationError(f'Expected a number, got {value!r}') from error


def _optional_float(value: str) -> Optional[float]:
    if value.strip().lower() in ('', 'none'):
        return None
    return _float(value)


def _int(value: str) -> int:
    try:
        return int(value, 0)
    except ValueError as error:
        raise ValidationError(f'Expected an integer, got {value!r}') from error


def _bool(value: str) -> bool:
    states = configparser.ConfigParser.BOOLEAN_STATES
    if value.strip().lower() not in states:
        raise ValidationError(f'Expected a boolean, got {value!r}')
    return states[value.strip().lower()]


def _names(value: str) -> Tuple[str, ...]:
    return tuple(name.strip() for name in value.split(',') if name.strip())


def _pair(value: str) -> Tuple[float, float]:
    parts = [part.strip() for part in value.split(',')]
    if len(parts) != 2:
        raise ValidationError(f'Expected "lo, hi", got {value!r}')
    return _float(parts[0]), _float(parts[1])


Parsers = Dict[str, Callable[[str], Any]]

SOURCE_KEYS: Parsers = dict(
    rep_rate=_float, mu_pair=_float, eta_i=_float, eta_s=_float, noise_rate_s=_float, bin_width=_float,
    seed=_int, m_singles=_optional_float, noise_excess=_float, multipair_accidentals=_bool,
    mode=SimulationMode,
)
LENS_KEYS: Parsers = dict({name: _float for name in LENS_FIELDS}, w_s=_float, w_p=_float)
SCENARIO_KEYS: Parsers = dict(t_on=_float, t_off=_float, duration=_float, t_th_relax=_float, t_s_relax=_float,
                              power_scale=_float)
FIT_KEYS: Parsers = dict(free=_names, weights=Weighting, max_evals=_int, profile=_bool, profile_points=_int,
                         profile_span=_float, window=_int, n_jobs=_int, multistart=_bool)
OUTPUT_KEYS: Parsers = dict(directory=Path, plots=_bool)


def _parse_section(section: str, raw: Mapping[str, str], parsers: Parsers) -> Dict[str, Any]:
    parsed = {}
    for key, value in raw.items():
        if key not in parsers:
            raise ValidationError(f'Unknown key {key!r} in section [{section}]')
        try:
            parsed[key] = parsers[key](value)
        except ValueError as error:
            raise ValidationError(f'[{section}] {key}: {error}') from error
    return parsed


def _parse_fit(raw: Mapping[str, str]) -> FitSettings:
    plain = {}
    bounds = {}
    init = {}
    for key, value in raw.items():
        if key.startswith('bound_'):
            bounds[key[len('bound_'):]] = _pair(value)
        elif key.startswith('init_'):
            init[key[len('init_'):]] = _float(value)
        else:
            plain[key] = value
    settings = _parse_section('fit', plain, FIT_KEYS)
    return FitSettings(bounds=bounds, init=init, **settings)


def _build_lens(values: Dict[str, float]) -> Tuple[LensParams, Optional[BeamGeometry]]:
    w_s = values.pop('w_s', None)
    w_p = values.pop('w_p', None)
    beam = DEFAULT_BEAM
    if w_s is not None or w_p is not None:
        beam = BeamGeometry(w_s=DEFAULT_BEAM.w_s if w_s is None else w_s,
                            w_p=DEFAULT_BEAM.w_p if w_p is None else w_p)
    if 'm' in values:
        if w_s is not None or w_p is not None:
            beam.check_matches(values['m'])
        else:
            beam = None
    else:
        values['m'] = beam.m
    lens = dict(DEFAULT_LENS)
    lens.update(values)
    return LensParams(**lens), beam


def _build_scenario(values: Dict[str, float]) -> Scenario:
    t_th_relax = values.pop('t_th_relax', None)
    t_s_relax = values.pop('t_s_relax', None)
    if (t_th_relax is None) != (t_s_relax is None):
        raise ValidationError('t_th_relax and t_s_relax must be given together')
    if t_th_relax is not None:
        values['relax_params'] = (t_th_relax, t_s_relax)
    return Scenario(**values)


def environment_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Dict[str, str]]:
    """QTLENS_<SECTION>_<KEY> variables grouped per section; unknown sections are rejected"""
    environ = os.environ if environ is None else environ
    overrides: Dict[str, Dict[str, str]] = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        section, _, key = name[len(ENV_PREFIX):].lower().partition('_')
        if section not in SECTIONS or not key:
            raise ValidationError(f'Environment variable {name} names no known config section and key')
        overrides.setdefault(section, {})[key] = value
    return overrides


def _load_dotenv():
    try:
        import dotenv
        dotenv.load_dotenv()
    except ImportError:
        pass


def parse_config(text: str, environ: Optional[Mapping[str, str]] = None, source: str = '<config>') -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(';',))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as error:
        raise ValidationError(f'Cannot parse {source}: {error}') from error

    raw = {section: dict(parser.items(section)) for section in parser.sections()}
    unknown = [section for section in raw if section not in SECTIONS]
    if unknown:
        raise ValidationError(f'Unknown sections {unknown!r} in {source}')
    for section, values in environment_overrides(environ).items():
        log.debug('Environment overrides for [%s]: %r', section, sorted(values))
        raw.setdefault(section, {}).update(values)

    lens, beam = _build_lens(_parse_section('lens', raw.get('lens', {}), LENS_KEYS))
    config = RunConfig(
        source=CountingConfig(**_parse_section('source', raw.get('source', {}), SOURCE_KEYS)),
        lens=lens,
        scenario=_build_scenario(_parse_section('scenario', raw.get('scenario', {}), SCENARIO_KEYS)),
        fit=_parse_fit(raw.get('fit', {})),
        output=OutputSettings(**_parse_section('output', raw.get('output', {}), OUTPUT_KEYS)),
        beam=beam,
    )
    return config


def load_config(path: Union[str, Path, None], environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Run configuration from a file, or the defaults when path is None.

    Environment overrides apply either way; a .env file is honoured when python-dotenv is installed.
    """
    if environ is None:
        _load_dotenv()
    text = ''
    if path is not None:
        try:
            text = Path(path).read_text(encoding='utf-8')
        except OSError as error:
            raise OSError(error.errno, f'Cannot read config: {error.strerror or error}', str(path)) from error
        except UnicodeDecodeError as error:
            raise ValidationError(f'Config {path} is not UTF-8: {error.reason}') from error
    config = parse_config(text, environ, source=str(path or '<defaults>'))
    log.info('Loaded configuration from %s', path or 'defaults')
    return config


log = logging.getLogger(__name__)
