"""
qtlens simulate|fit|gsi|denoise --config <path> [--trace <path>] [--out <dir>] [--seed <u64>] [--csv-only]

Exit codes: 0 ok, 2 invalid input or configuration, 3 numerical failure or
fit not converged, 4 I/O failure.
"""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .commands import COMMANDS
from .exceptions import ValidationError, ModelNumericalError
from .run_config import load_config

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

MAX_SEED = 2 ** 64


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='qtlens', description='Quantum-illumination thermal lens toolkit')
    parser.add_argument('command', choices=sorted(COMMANDS), help='Workflow to run')
    parser.add_argument('-c', '--config', help='Sectioned key=value configuration file', dest='config',
                        type=Path, default=None)
    parser.add_argument('-t', '--trace', help='Input trace CSV (fit, gsi, denoise)', dest='trace', type=Path)
    parser.add_argument('-o', '--out', help='Output directory, overrides [output] directory', dest='out',
                        type=Path)
    parser.add_argument('-s', '--seed', help='RNG seed, overrides [source] seed', dest='seed', type=int)
    parser.add_argument('--csv-only', help='Skip SVG plots', dest='csv_only', action='store_true')
    parser.add_argument('-v', '--verbose', help='More log output, repeat for debug', dest='verbose',
                        action='count', default=0)
    return parser


def _configure_logging(verbose: int):
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')


def run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < MAX_SEED:
            raise ValidationError(f'--seed must be an unsigned 64-bit integer, got {args.seed!r}')
        config = config.with_seed(args.seed)
    if args.out is not None:
        config = config.with_output(args.out)
    if args.csv_only:
        config = replace(config, output=replace(config.output, plots=False))

    outcome = COMMANDS[args.command].run(config, args.trace)
    for path in outcome.written:
        log.info('Wrote %s', path)
    if not outcome.ok:
        log.error('%s finished without convergence: %s', args.command, outcome.message)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return run(args)
    except ValidationError as error:
        log.error('%s', error)
        return EXIT_VALIDATION
    except ModelNumericalError as error:
        log.error('%s', error)
        return EXIT_NUMERICAL
    except OSError as error:
        log.error('%s', error)
        return EXIT_IO


log = logging.getLogger(__name__)


if __name__ == '__main__':
    sys.exit(main())
