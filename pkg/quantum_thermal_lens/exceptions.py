from typing import Optional, Union
from pathlib import Path


class ThermalLensError(Exception):
    pass


class ValidationError(ThermalLensError, ValueError):
    """Domain error, violated precondition or invalid configuration value"""


class TraceFormatError(ValidationError):
    def __init__(self, message: str, line_number: Optional[int] = None,
                 path: Union[str, Path, None] = None):
        self.line_number = line_number
        self.path = path
        location = ''
        if path is not None:
            location += f'{path}'
        if line_number is not None:
            location += f':{line_number}'
        super().__init__(f'{location}: {message}' if location else message)


class ModelNumericalError(ThermalLensError, ArithmeticError):
    """Quadrature did not reach the requested tolerance"""

    def __init__(self, message: str, achieved_tolerance: float):
        self.achieved_tolerance = achieved_tolerance
        super().__init__(f'{message} (achieved tolerance {achieved_tolerance:.3g})')
