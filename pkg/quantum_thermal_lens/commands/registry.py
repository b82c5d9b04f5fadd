import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

from ..exceptions import ValidationError
from ..run_config import RunConfig


@dataclass
class CommandOutcome:
    written: List[Path] = field(default_factory=list)
    ok: bool = True
    message: str = ''


CommandFunction = Callable[[RunConfig, Optional[Path]], CommandOutcome]


@dataclass(frozen=True)
class Command:
    name: str
    function: CommandFunction
    needs_trace: bool
    help: str

    def run(self, config: RunConfig, trace_path: Optional[Path] = None) -> CommandOutcome:
        if self.needs_trace and trace_path is None:
            raise ValidationError(f'{self.name} needs --trace')
        if not self.needs_trace and trace_path is not None:
            log.warning('%s ignores --trace %s', self.name, trace_path)
        return self.function(config, trace_path)


COMMANDS: Dict[str, Command] = {}


def command(name: str, needs_trace: bool = False):
    """Register a workflow under a CLI command name"""

    def register(function: CommandFunction) -> CommandFunction:
        if name in COMMANDS:
            raise ValueError(f'Command {name!r} is already registered')
        help_text = (function.__doc__ or '').strip().splitlines()[0] if function.__doc__ else ''
        COMMANDS[name] = Command(name, function, needs_trace, help_text)
        return function

    return register


def output_directory(config: RunConfig) -> Path:
    directory = config.output.directory
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as error:
        raise OSError(error.errno, f'Cannot create output directory: {error.strerror or error}',
                      str(directory)) from error
    return directory


log = logging.getLogger(__name__)
