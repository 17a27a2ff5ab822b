"""
Process-wide runtime settings: logging and thread limits
"""

import logging
from contextlib import contextmanager
from typing import Iterator, Optional

from threadpoolctl import threadpool_limits

import src.config.env as env


def configure_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once for the process."""
    logging.basicConfig(
        level=(level or env.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@contextmanager
def thread_limits(threads: int) -> Iterator[int]:
    """
    Limit BLAS threads for the duration of a run.

    Args:
        threads: Thread count; 1 selects the deterministic reference path.

    Yields:
        The thread count, for forwarding to joblib ``n_jobs``.
    """
    with threadpool_limits(limits=threads):
        yield threads
