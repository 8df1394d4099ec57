import logging
import time
from contextlib import contextmanager
from typing import Iterator

try:
    import structlog
except ImportError:
    structlog = None  # type: ignore


_logger = (
    structlog.get_logger("fbs_workbench")
    if structlog is not None
    else logging.getLogger("fbs_workbench")
)


def log(method: str, *args, **kwargs) -> None:
    """
    Log through structlog when it is installed, and through the standard library otherwise.

    Stages pass their context (stage, scenario, serving_pci, ...) as kwargs. Plain logging has no place for those, so
    without structlog only the message survives.

    :param method: Log method, i.e. "error" or "debug"
    :param args: positional args which will be passed on as-is to the logger
    :param kwargs: context for structlog, dropped otherwise
    :return: None
    """
    if structlog is None:
        kwargs = {}
    getattr(_logger, method)(*args, **kwargs)


@contextmanager
def timed(message: str, **context) -> Iterator[None]:
    """
    Log `message` with the wall time of the block once it finishes without raising
    """
    start = time.perf_counter()
    yield
    log("info", message, elapsed_s=round(time.perf_counter() - start, 3), **context)
