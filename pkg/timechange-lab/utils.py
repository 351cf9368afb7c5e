"""
Utility helpers for the time-change lab.

Includes logging setup, check-name normalization and per-path seed derivation.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

import logging
import os
from enum import Enum
from typing import Callable, Type

import numpy as np
from const import LOG_LEVEL_ENV

_LAB_LOGGERS = (
    "driver",
    "config",
    "const",
    "paths",
    "generators",
    "coefficients",
    "timechange",
    "fokkerplanck",
    "harness",
    "pool",
    "registry",
    "report",
    "stats",
    "utils",
)


def setup_logger():
    """Apply the configured level to every lab logger."""

    level = os.getenv(LOG_LEVEL_ENV, "INFO").upper()
    third_party_level = "WARNING"

    logging.getLogger("numpy").setLevel(third_party_level)
    logging.getLogger("scipy").setLevel(third_party_level)
    logging.getLogger("asyncio").setLevel(third_party_level)
    for name in _LAB_LOGGERS:
        logging.getLogger(name).setLevel(level)


def validate_members_resolve(
    enum_class: Type[Enum],
    lookup: Callable[[Enum], object | None],
    logger: logging.Logger = logging.getLogger(__name__)
) -> list[str]:
    """
    Ensures that each member of the enum resolves to a callable through lookup.

    :param enum_class: Enum whose members must be handled.
    :param lookup: Resolver returning the handler or None.
    :param logger: Logger for output.
    :return: List of member values that failed resolution.
    """
    missing = []

    for member in enum_class:
        handler = lookup(member)
        if handler is None or not callable(handler):
            missing.append(member.value)

    if missing:
        logger.warning("No handler registered for: %s", ", ".join(missing))
    else:
        logger.debug("All %s members have handlers.", enum_class.__name__)

    return missing


def normalize_check(name: str) -> str:
    """Normalize a CLI check name such as 'check-fp' to its enum value."""
    name = name.strip().lower()
    if name.startswith("check-"):
        name = name[len("check-"):]
    return name.replace("-", "_")


def derive_seed(master_seed: int, index: int, stream: int = 0) -> int:
    """Return the 64-bit seed of path `index`, independent of execution order."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(index, stream))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def make_generator(seed: int) -> np.random.Generator:
    """Counter-based generator for a single path stream."""
    return np.random.Generator(np.random.Philox(seed))
