"""
Logging configuration for the command line.
"""

import logging
import sys

from app.utils.settings import LOG_FORMAT


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    """
    Send log records to standard error so standard output stays machine-readable.

    Args:
        verbose: Log at DEBUG
        quiet: Log errors only
    """
    level = logging.DEBUG if verbose else logging.ERROR if quiet else logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)
