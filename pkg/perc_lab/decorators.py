# perc_lab/decorators.py

import time
import logging
from functools import wraps
from typing import Any, Callable, TypeVar

T = TypeVar("T", bound=Callable[..., Any])


def timed(label: str) -> Callable[[T], T]:
    """
    Decorator that logs how long a call took at DEBUG level.

    :param label: Human-readable name used in the log line.
    """
    def decorator(func: T) -> T:
        @wraps(func)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                logging.debug("%s finished in %.3fs", label, time.perf_counter() - start)
        return wrapper  # type: ignore
    return decorator


def logged_precondition(func: T) -> T:
    """
    Decorator that logs precondition and budget failures before re-raising,
    so failures inside worker processes still leave a trace in the run log.
    """
    from .errors import BudgetExhaustedError, PreconditionError

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (PreconditionError, BudgetExhaustedError) as exc:
            logging.warning("%s rejected: %s", func.__name__, exc)
            raise
    return wrapper  # type: ignore
