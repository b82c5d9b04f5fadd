from .registry import COMMANDS, Command, CommandOutcome, command
from .workflows import cmd_simulate, cmd_fit, cmd_gsi, cmd_denoise
