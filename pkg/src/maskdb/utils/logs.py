"""JSON-lines dump loggers."""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Literal
from typing import Union

Destination = Union[Path, Literal["stdout", "stderr"]]


class DumpLogger(logging.Logger):
    """Logger with a :meth:`json` shortcut emitting one record per line."""

    def json(self, msg, *args, **kwargs) -> None:  # noqa: D102
        logging.Logger._log(  # noqa: W0212
            self, logging.INFO, json.dumps(msg), args, **kwargs
        )


def _make_handler(dst: Destination, filename: str) -> logging.Handler:
    if not isinstance(dst, Path):
        return logging.StreamHandler(getattr(sys, dst))
    if dst.is_dir():
        logfile = dst / filename
    else:
        dst.parent.mkdir(parents=True, exist_ok=True)
        logfile = dst
    return logging.FileHandler(str(logfile))


def make_logger(
    name: str, dst: Destination, filename: str = "transcripts.jsonl"
) -> DumpLogger:
    """Build a logger writing bare messages to `dst`.

    Args:
        name: logger name. Loggers are cached by name, so a second call
            with the same name reuses the existing handlers.
        dst: ``stdout``, ``stderr``, a file, or a directory.
        filename: file created inside `dst` when it is a directory.

    Returns:
        The configured logger.

    """
    logging.setLoggerClass(DumpLogger)
    try:
        logger = logging.getLogger(name)
        logger.setLevel(logging.DEBUG)
        logger.propagate = False
        if not logger.handlers:
            handler = _make_handler(dst, filename)
            handler.setLevel(logging.DEBUG)
            handler.setFormatter(logging.Formatter("%(message)s"))
            logger.addHandler(handler)
    finally:
        logging.setLoggerClass(logging.Logger)
    return logger  # type: ignore[return-value]


def release_logger(logger: logging.Logger) -> None:
    """Close and detach the handlers of a logger from :func:`make_logger`.

    Args:
        logger: the logger. A later :func:`make_logger` call with the
            same name opens its destination again.

    """
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
