"""Logging Setup
=============
Configures structlog for the CLI. Logs go to stderr so that tables printed
on stdout stay machine-readable; Logfire receives the same events when a
token is configured outside local development.
"""

import logging
import sys
from typing import Any

import logfire
import structlog

from app.utils.config import settings


def configure_logging(level: str | None = None, fmt: str | None = None) -> None:
    level_name = (level or settings.LOG_LEVEL).upper()
    renderer_name = fmt or settings.LOG_FORMAT

    processors: list[Any] = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.TimeStamper(fmt="iso", utc=True),
    ]

    if settings.LOGFIRE_TOKEN and settings.remote_reporting:
        try:
            logfire.configure(
                token=settings.LOGFIRE_TOKEN, service_name=settings.PROJECT_NAME
            )
            processors.append(logfire.StructlogProcessor())
        except Exception as e:
            print(f"Warning: Failed to initialize Logfire: {e}", file=sys.stderr)

    if renderer_name == "json":
        processors.append(structlog.processors.JSONRenderer(sort_keys=True))
    else:
        processors.append(structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty()))

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.getLevelName(level_name)
        ),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
