import json
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from ..estimators import DenoisedTrace
from ..fit_data import FitResult, FitSpec, TimescaleProfile


def jsonable(value: Any) -> Any:
    """Plain JSON value; non-finite floats become the strings "nan", "inf" and "-inf" """
    if isinstance(value, Mapping):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [jsonable(item) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path: Union[str, Path], payload: Mapping[str, Any]):
    text = json.dumps(jsonable(payload), indent=2, sort_keys=True, allow_nan=False)
    try:
        Path(path).write_text(text + '\n', encoding='utf-8')
    except OSError as error:
        raise OSError(error.errno, f'Cannot write report: {error.strerror or error}', str(path)) from error


def fit_report(result: FitResult, spec: FitSpec,
               profiles: Optional[Mapping[str, TimescaleProfile]] = None) -> Dict[str, Any]:
    report = result.to_dict()
    report['bounds'] = {name: list(bounds) for name, bounds in spec.bounds.items()}
    report['init'] = dict(spec.init)
    report['weights'] = spec.weights.value
    report['max_evals'] = spec.max_evals
    report['restarts'] = [dict(point) for point in spec.restarts]
    if profiles is not None:
        report['profiles'] = {name: profile.to_dict() for name, profile in profiles.items()}
    return report


def denoise_report(denoised: DenoisedTrace) -> Dict[str, Any]:
    return {
        'bins': len(denoised.t),
        'noise_rate': denoised.noise_rate,
        'g_baseline': asdict(denoised.g_baseline),
        'g_registered': asdict(denoised.g_registered),
        'snr_singles': denoised.snr_singles,
        'snr_coincidences': denoised.snr_coincidences,
        'snr_ratio': denoised.snr_ratio,
    }
