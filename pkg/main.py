import argparse
import logging
import sys
from typing import List, Optional

from config import configure_logging, get_settings
from commands import ablate, evaluate, pretrain, synth, train, xval
from dependencies import common_parser
from errors import ConfigError, DDMPError

logger = logging.getLogger("ddmp")

settings = get_settings()

COMMANDS = (synth, pretrain, train, evaluate, xval, ablate)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddmp",
        description="Diffusion-based disambiguation for partial label learning",
    )
    parser.add_argument("--version", action="version", version=f"{settings.app_name} {settings.app_version}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    parent = common_parser()
    for command in COMMANDS:
        command.add_parser(subparsers, parent)
    return parser


def cli_main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns 0 on success, 2 on bad parameters, 1 on runtime failure"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 for --help / --version
        return e.code if isinstance(e.code, int) else EXIT_CONFIG

    # Global error handler
    try:
        configure_logging(args.log_level)
        return args.handler(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DDMPError, OSError) as e:
        logger.debug("command %s failed", args.command, exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(cli_main())
