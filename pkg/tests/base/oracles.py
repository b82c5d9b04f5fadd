"""Independent reference computations the model is checked against"""
import numpy as np
from scipy import integrate

from quantum_thermal_lens import LensParams, phase_total

ORACLE_G_MAX = 60.0


def rising_oracle(g: float, t: float, t_c: float, m: float, n_points: int = 100_001) -> float:
    """integral_0^t (1 - exp(-2 m g / s)) / s dt' by the trapezoid rule in u = ln s"""
    u = np.linspace(0.0, np.log1p(2.0 * t / t_c), n_points)
    return 0.5 * t_c * integrate.trapezoid(-np.expm1(-2.0 * m * g * np.exp(-u)), u)


def on_axis_transmission(t: float, p: LensParams) -> float:
    """Adaptive quadrature of the full diffraction integral, no analytic split"""
    v = p.v_geom

    def field(g: float) -> complex:
        return np.exp(-(1.0 + 1j * v) * g - 1j * phase_total(g, t, p))

    options = dict(epsabs=1e-13, epsrel=1e-12, limit=500)
    real, _ = integrate.quad(lambda g: field(g).real, 0.0, ORACLE_G_MAX, **options)
    imag, _ = integrate.quad(lambda g: field(g).imag, 0.0, ORACLE_G_MAX, **options)
    return (1.0 + v ** 2) * (real ** 2 + imag ** 2)
