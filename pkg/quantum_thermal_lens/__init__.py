from .exceptions import ThermalLensError, ValidationError, TraceFormatError, ModelNumericalError
from .lens_params import LensParams, BeamGeometry, Scenario
from .radial_quadrature import RadialQuadrature, DEFAULT_RADIAL_QUADRATURE
from .lens_model import phase_component, phase_total, intensity, trace, TraceModel
from .counting_data import CountingConfig, TimeTrace, SimulationMode
from .counting_simulation import simulate, simulate_components, simulate_many, SimulatedCounts
from .estimators import g_si, accidentals, denoise, klyshko_efficiency, step_significance, Estimate
from .fit_data import FitSpec, FitResult, Weighting, TimescaleProfile
from .fitting import residuals, fit, profile_timescales, initial_guess, build_spec
from .run_config import RunConfig, load_config
