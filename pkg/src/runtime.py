"""
Process resource helpers
"""

import logging

import psutil

logger = logging.getLogger(__name__)


def memory_mb() -> float:
    """Resident memory of this process in megabytes"""
    try:
        return psutil.Process().memory_info().rss / (1024 * 1024)
    except psutil.Error as e:
        logger.debug(f"Could not read process memory: {e}")
        return 0.0


def default_workers() -> int:
    """Physical core count, falling back to 1"""
    cores = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    return max(1, cores)
