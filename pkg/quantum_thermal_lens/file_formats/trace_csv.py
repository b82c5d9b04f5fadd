import csv
import math
from pathlib import Path
from typing import Optional, Sequence, Union, List

import numpy as np

from ..counting_data import TimeTrace, TIMESTAMP_TOLERANCE
from ..exceptions import TraceFormatError

TRACE_HEADER = ('t_s', 's_i', 's_s', 'c')

PathLike = Union[str, Path]


def _format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _open_error(error: OSError, action: str, path: PathLike) -> OSError:
    return OSError(error.errno, f'Cannot {action}: {error.strerror or error}', str(path))


def save_table(path: PathLike, header: Sequence[str], columns: Sequence[Sequence]):
    """UTF-8 CSV with a header row, newline-terminated rows and shortest round-trip floats"""
    rows = zip(*columns)
    try:
        with open(path, 'w', encoding='utf-8', newline='') as file:
            writer = csv.writer(file, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([_format_value(value) for value in row])
    except OSError as error:
        raise _open_error(error, 'write', path) from error


def save_trace(trace: TimeTrace, path: PathLike):
    save_table(path, TRACE_HEADER, [trace.t, trace.s_i, trace.s_s, trace.c])


def _parse_count(value: str, name: str, line_number: int, path: PathLike) -> int:
    text = value.strip()
    if text.startswith('-') and text[1:].isdigit():
        raise TraceFormatError(f'Negative count {text!r} in column {name}', line_number, path)
    if not text.isdigit():
        raise TraceFormatError(f'Column {name} expects an integer count, got {value!r}', line_number, path)
    return int(text)


def _parse_time(value: str, line_number: int, path: PathLike) -> float:
    try:
        t = float(value)
    except ValueError as error:
        raise TraceFormatError(f'Column t_s expects seconds, got {value!r}', line_number, path) from error
    if not math.isfinite(t):
        raise TraceFormatError(f'Timestamp {value!r} is not finite', line_number, path)
    return t


def _exact_width(t: np.ndarray) -> float:
    """Shortest decimal width that rebuilds the timestamps to within a few ulps"""
    width = (t[-1] - t[0]) / (t.size - 1)
    steps = np.arange(t.size)
    slack = 4 * np.spacing(np.max(np.abs(t)))
    for digits in range(1, 18):
        candidate = float(f'{width:.{digits}g}')
        if candidate > 0 and np.max(np.abs(t[0] + steps * candidate - t)) <= slack:
            return candidate
    return width


def _check_uniform(t: np.ndarray, bin_width: float, line_numbers: List[int], path: PathLike):
    deviation = np.abs(t - (t[0] + np.arange(t.size) * bin_width))
    if np.max(deviation) <= TIMESTAMP_TOLERANCE:
        return
    # first step unlike the opening one, else the first row off the grid
    step_error = np.abs(np.diff(t) - (t[1] - t[0])) > TIMESTAMP_TOLERANCE
    if np.any(step_error):
        index = int(np.argmax(step_error)) + 1
    else:
        index = int(np.argmax(deviation > TIMESTAMP_TOLERANCE))
    raise TraceFormatError(f'Timestamp {t[index]!r} breaks the uniform bin width {bin_width!r}',
                           line_numbers[index], path)


def load_trace(path: PathLike, bin_width: Optional[float] = None,
               default_bin_width: Optional[float] = None) -> TimeTrace:
    """
    Trace from a `t_s,s_i,s_s,c` CSV file.

    The bin width is `bin_width` when given, otherwise the shortest decimal that
    reproduces the timestamps over the whole file. A single-row file takes
    `default_bin_width`.
    """
    t: List[float] = []
    line_numbers: List[int] = []
    counts: List[List[int]] = []
    try:
        with open(path, 'r', encoding='utf-8', newline='') as file:
            reader = csv.reader(file)
            header = next(reader, None)
            if header is None or tuple(field.strip() for field in header) != TRACE_HEADER:
                raise TraceFormatError(f'Expected header {",".join(TRACE_HEADER)}, got {header!r}', 1, path)
            for row in reader:
                line_number = reader.line_num
                if not row:
                    continue
                if len(row) != len(TRACE_HEADER):
                    raise TraceFormatError(f'Expected {len(TRACE_HEADER)} fields, got {len(row)}', line_number, path)
                t.append(_parse_time(row[0], line_number, path))
                counts.append([_parse_count(value, name, line_number, path)
                               for name, value in zip(TRACE_HEADER[1:], row[1:])])
                line_numbers.append(line_number)
    except OSError as error:
        raise _open_error(error, 'read', path) from error
    except UnicodeDecodeError as error:
        raise TraceFormatError(f'File is not UTF-8: {error.reason}', path=path) from error

    if not t:
        raise TraceFormatError('Trace holds no data rows', path=path)
    times = np.array(t)
    if bin_width is None:
        bin_width = _exact_width(times) if times.size > 1 else default_bin_width
    if bin_width is None:
        raise TraceFormatError('A single-row trace needs an explicit bin width', path=path)
    if times.size > 1:
        if np.any(np.diff(times) <= 0):
            index = int(np.argmax(np.diff(times) <= 0)) + 1
            raise TraceFormatError(f'Timestamp {times[index]!r} does not increase (uniform bin width expected)',
                                   line_numbers[index], path)
        _check_uniform(times, bin_width, line_numbers, path)
    channels = np.array(counts, dtype=np.int64).reshape(len(t), 3)
    return TimeTrace(times, channels[:, 0], channels[:, 1], channels[:, 2], bin_width)
