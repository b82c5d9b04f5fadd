"""
Quadrature rules behind the lens model.

The radial rule integrates over g = r**2 / w_s**2 with composite Gauss-Legendre
panels on [0, g_max]. The time rules evaluate the two integrals of the lens
phase: the c_r integral in closed form through the exponential integral, the
decaying integral with composite Gauss-Legendre panels over the sample segments.
"""
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Tuple

import numpy as np
from joblib import Parallel, delayed, effective_n_jobs
from scipy import special

from .exceptions import ValidationError

MIN_RADIAL_ORDER = 200
NEAR_AXIS_EDGES = (0.0, 0.25, 0.5, 1.0)
MAX_PANEL_WIDTH = 3.0
PANEL_WIDTH_SCALE = 13.0

# below this a = 2 m g the E1 difference cancels; the power series is exact there
SERIES_THRESHOLD = 0.5
SERIES_TERMS = 24

TIME_PANEL_NODES = 6
TIME_PANEL_FRACTION = 0.2
CHUNK_ELEMENTS = 2_000_000


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def map_panels(edges: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights of order n on every [edges[i], edges[i+1]]"""
    xi, wi = gauss_legendre(n)
    lower = edges[:-1, None]
    upper = edges[1:, None]
    nodes = 0.5 * (upper - lower) * xi + 0.5 * (upper + lower)
    weights = 0.5 * (upper - lower) * wi
    return nodes.ravel(), weights.ravel()


@lru_cache(maxsize=64)
def _radial_rule(g_max: float, nodes_per_panel: int, v_geom: float) -> Tuple[np.ndarray, np.ndarray]:
    width = min(MAX_PANEL_WIDTH, PANEL_WIDTH_SCALE / abs(complex(1.0, v_geom)))
    n_uniform = max(1, math.ceil((g_max - NEAR_AXIS_EDGES[-1]) / width))
    edges = np.concatenate([NEAR_AXIS_EDGES[:-1], np.linspace(NEAR_AXIS_EDGES[-1], g_max, n_uniform + 1)])

    n_panels = len(edges) - 1
    nodes_per_panel = max(nodes_per_panel, math.ceil(MIN_RADIAL_ORDER / n_panels))

    nodes, weights = map_panels(edges, nodes_per_panel)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class RadialQuadrature:
    """
    Composite Gauss-Legendre rule for the on-axis diffraction integral.

    Three geometric panels cover g < 1, uniform panels of width
    min(3, 13 / |1 + iV|) cover [1, g_max]; the total order never drops below 200.
    """
    g_max: float = 30.0
    nodes_per_panel: int = 16
    rtol: float = 1e-7

    def __post_init__(self):
        if not self.g_max > NEAR_AXIS_EDGES[-1]:
            raise ValidationError(f'g_max must exceed {NEAR_AXIS_EDGES[-1]}, got {self.g_max!r}')
        if self.nodes_per_panel < 2:
            raise ValidationError(f'nodes_per_panel must be at least 2, got {self.nodes_per_panel!r}')
        if not self.rtol > 0:
            raise ValidationError(f'rtol must be positive, got {self.rtol!r}')

    def nodes(self, v_geom: float) -> Tuple[np.ndarray, np.ndarray]:
        return _radial_rule(float(self.g_max), int(self.nodes_per_panel), float(v_geom))

    def order(self, v_geom: float) -> int:
        return len(self.nodes(v_geom)[0])

    def refined(self) -> 'RadialQuadrature':
        """Same panels, doubled order per panel"""
        return replace(self, nodes_per_panel=2 * self.nodes_per_panel)


DEFAULT_RADIAL_QUADRATURE = RadialQuadrature()


def rising_integral(a, x) -> np.ndarray:
    """
    Closed form of  integral_1^(1+x) (1 - exp(-a/s)) / s ds  for a >= 0, x >= 0.

    Equals ln S - E1(a/S) + E1(a) with S = 1 + x. The power series
    sum (-1)**(n+1) a**n (1 - S**-n) / (n n!) replaces it for small a.
    """
    a, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
    result = np.empty(a.shape)
    small = a < SERIES_THRESHOLD

    large = ~small
    if np.any(large):
        a_large = a[large]
        big_s = 1.0 + x[large]
        result[large] = np.log1p(x[large]) - special.exp1(a_large / big_s) + special.exp1(a_large)

    if np.any(small):
        a_small = a[small]
        log_s = np.log1p(x[small])
        total = np.zeros(a_small.shape)
        power_term = np.ones(a_small.shape)
        for n in range(1, SERIES_TERMS + 1):
            power_term = power_term * a_small / n
            total += (-1) ** (n + 1) * power_term * -np.expm1(-n * log_s) / n
        result[small] = total

    return result


def _row_chunks(a: np.ndarray, row_elements: int, n_jobs: int):
    rows = max(1, CHUNK_ELEMENTS // max(row_elements, 1))
    workers = effective_n_jobs(n_jobs)
    if workers > 1:
        rows = min(rows, max(1, math.ceil(len(a) / workers)))
    return [a[i:i + rows] for i in range(0, len(a), rows)], workers


def _map_rows(function, a: np.ndarray, row_elements: int, n_jobs: int, *args) -> np.ndarray:
    """function(chunk, *args) over row chunks of a, stacked; threads when more than one worker"""
    chunks, workers = _row_chunks(a, row_elements, n_jobs)
    if workers == 1 or len(chunks) == 1:
        parts = [function(chunk, *args) for chunk in chunks]
    else:
        parts = Parallel(n_jobs=n_jobs, prefer='threads')(delayed(function)(chunk, *args) for chunk in chunks)
    return np.vstack(parts)


def _rising_rows(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    return rising_integral(a[:, None], x[None, :])


def rising_grid(a: np.ndarray, times: np.ndarray, t_c: float, n_jobs: int = 1) -> np.ndarray:
    """integral_0^t f(t') dt' for every a (rows) and every time t (columns), closed form"""
    a = np.asarray(a, dtype=float)
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.zeros((a.size, 0))
    return 0.5 * t_c * _map_rows(_rising_rows, a, times.size, n_jobs, 2.0 * times / t_c)


def _time_panels(times: np.ndarray, t_c: float, k: float):
    bounds = np.concatenate([[0.0], times])
    lengths = np.diff(bounds)

    panel_width = TIME_PANEL_FRACTION * (0.5 * t_c + bounds[:-1])
    if k > 0:
        panel_width = np.minimum(panel_width, 1.0 / k)
    n_sub = np.maximum(1, np.ceil(lengths / panel_width)).astype(int)

    segment = np.repeat(np.arange(len(times)), n_sub)
    first_panel = np.cumsum(n_sub) - n_sub
    local = np.arange(len(segment)) - np.repeat(first_panel, n_sub)
    panel_length = lengths[segment] / n_sub[segment]
    panel_start = bounds[segment] + local * panel_length

    xi, wi = gauss_legendre(TIME_PANEL_NODES)
    nodes = panel_start[:, None] + 0.5 * panel_length[:, None] * (xi + 1.0)
    # exponent k (t' - t_end) <= 0 keeps the decay factor bounded for any k t
    weights = 0.5 * panel_length[:, None] * wi * np.exp(k * (nodes - bounds[segment + 1][:, None]))

    return nodes.ravel(), weights.ravel(), first_panel * TIME_PANEL_NODES, np.exp(-k * lengths)


def _decaying_rows(a: np.ndarray, s_nodes: np.ndarray, weights: np.ndarray,
                   starts: np.ndarray, decay: np.ndarray) -> np.ndarray:
    integrand = -np.expm1(-a[:, None] / s_nodes[None, :]) / s_nodes[None, :] * weights[None, :]
    segment_sums = np.add.reduceat(integrand, starts, axis=1)

    result = np.empty_like(segment_sums)
    result[:, 0] = segment_sums[:, 0]
    for j in range(1, segment_sums.shape[1]):
        result[:, j] = decay[j] * result[:, j - 1] + segment_sums[:, j]
    return result


def decaying_integral(a: np.ndarray, times: np.ndarray, t_c: float, k: float, n_jobs: int = 1) -> np.ndarray:
    """
    integral_0^t exp(k (t' - t)) f(t') dt'  with  f = (1 - exp(-a/s)) / s,  s = 1 + 2 t'/t_c,
    for every a (rows) and every sorted time t (columns).
    """
    a = np.asarray(a, dtype=float)
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.zeros((a.size, 0))
    if k == 0:
        return rising_grid(a, times, t_c, n_jobs)

    nodes, weights, starts, decay = _time_panels(times, t_c, k)
    s_nodes = 1.0 + 2.0 * nodes / t_c

    return _map_rows(_decaying_rows, a, len(nodes), n_jobs, s_nodes, weights, starts, decay)
