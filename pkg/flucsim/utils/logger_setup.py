#!/usr/bin/env python

"""
loguru sinks for flucsim.

Only records bound with name "flucsim" are emitted. Long sweeps can
mirror the log into a file next to their outputs:

flucsim.set_log_level("INFO", log_file="runs/sweep/flucsim.log")
"""

import sys
from typing import List, Optional
from loguru import logger
import flucsim


STDERR_FORMAT = (
    "<level>{level: <7}</level> <white>|</white> "
    "<cyan>{file: <14}</cyan> <white>|</white> "
    "<level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <7} | {file: <14} | {message}"

# ids of the sinks installed by set_log_level (0 is loguru's default)
_SINKS: List[int] = [0]


def _is_flucsim(record) -> bool:
    return record["extra"].get("name") == "flucsim"


def colorize() -> bool:
    """True when stderr is a terminal or we run inside IPython."""
    try:
        import IPython
        interactive = bool(IPython.get_ipython())
    except ImportError:
        interactive = False
    return interactive or sys.stderr.isatty()


def set_log_level(log_level: str = "INFO", log_file: Optional[str] = None):
    """Replace the flucsim sinks with a stderr sink at log_level.

    Parameters
    ----------
    log_level: str
        Any loguru level name (TRACE, DEBUG, INFO, ...).
    log_file: str or None
        Also append uncolored records at the same level to this file.
    """
    while _SINKS:
        try:
            logger.remove(_SINKS.pop())
        except ValueError:
            pass
    _SINKS.append(logger.add(
        sink=sys.stderr,
        level=log_level,
        colorize=colorize(),
        format=STDERR_FORMAT,
        filter=_is_flucsim,
    ))
    if log_file:
        _SINKS.append(logger.add(
            sink=log_file,
            level=log_level,
            format=FILE_FORMAT,
            filter=_is_flucsim,
            encoding="utf-8",
        ))
    logger.enable("flucsim")
    logger.bind(name="flucsim").debug(f"flucsim v.{flucsim.__version__} logging at {log_level}")
