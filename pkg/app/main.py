"""Application Factory
===================
Builds the ``dmcanc`` command-line parser, initializes logging and optional
Sentry reporting, dispatches to the command groups and maps failures to
stable exit codes:

- 0: success
- 1: unexpected failure
- 2: configuration or input error (names the offending key)
- 3: numerical abort (names node and sample)
"""

import argparse
import sys
from collections.abc import Sequence

import sentry_sdk
import structlog
from rich.console import Console

from app.commands import compensation, run, scene
from app.utils.config import settings
from app.utils.exceptions import EXIT_FAILURE, ConfigurationError, SimulationError
from app.utils.log import configure_logging

logger = structlog.get_logger(__name__)
error_console = Console(stderr=True)


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.PROJECT_NAME,
        description="Distributed multichannel active noise control simulator",
    )
    parser.add_argument(
        "--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default=None
    )
    parser.add_argument("--log-format", choices=["console", "json"], default=None)

    subparsers = parser.add_subparsers(dest="command", required=True)
    run.register(subparsers)
    scene.register(subparsers)
    compensation.register(subparsers)
    return parser


def init_sentry() -> None:
    if settings.SENTRY_DSN and settings.ENVIRONMENT != "development":
        sentry_sdk.init(dsn=str(settings.SENTRY_DSN), environment=settings.ENVIRONMENT)


def main(argv: Sequence[str] | None = None) -> int:
    args = create_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_format)
    init_sentry()

    try:
        return int(args.func(args))
    except SimulationError as e:
        if e.exit_code == EXIT_FAILURE:
            sentry_sdk.capture_exception(e)
        key = f" (key: {e.key})" if isinstance(e, ConfigurationError) and e.key else ""
        error_console.print(f"[bold red]error[/bold red] {e}{key}")
        logger.error("command_failed", command=args.command, code=e.code)
        return e.exit_code
    except Exception as e:
        sentry_sdk.capture_exception(e)
        logger.exception("unexpected_failure", command=args.command)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
