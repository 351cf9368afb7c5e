"""
Registry of check handlers.

Stores and manages the handler of every harness check by check name.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

import logging
from typing import Callable, Dict

from const import CheckName

_LOG = logging.getLogger(__name__)

CheckHandler = Callable[..., object]

_check_handlers: Dict[CheckName, CheckHandler] = {}


def get_check(name: CheckName) -> CheckHandler | None:
    """
    Retrieve the handler registered for a check.

    Args:
        name: Check to look up.

    Returns:
        The handler, or None if not registered.
    """
    return _check_handlers.get(CheckName(name))


def register_check(name: CheckName, handler: CheckHandler) -> None:
    """
    Register the handler for a check; the first registration wins.

    Args:
        name: Check the handler implements.
        handler: Callable run by the harness.
    """
    name = CheckName(name)
    if name in _check_handlers:
        _LOG.debug("Handler for '%s' already registered", name.value)
        return
    _check_handlers[name] = handler


def check_handler(name: CheckName) -> Callable[[CheckHandler], CheckHandler]:
    """Decorator form of `register_check`."""

    def _wrap(handler: CheckHandler) -> CheckHandler:
        register_check(name, handler)
        return handler

    return _wrap
