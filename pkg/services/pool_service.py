"""
Pool Service Module - Replication worker pool
Runs independent blocks of Monte Carlo work either inline or on a process
pool. Every block carries its own random stream identifiers, so results do
not depend on how many workers are used.

Tests inject a Mock(spec=ReplicationPool) to avoid spawning processes.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from errors import ConfigurationError

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


class ReplicationPool:
    """
    Ordered map over work blocks.

    Args:
        workers: number of processes; 1 runs every block in the calling process
    """

    def __init__(self, workers: int = 1):
        if int(workers) < 1:
            raise ConfigurationError(f"workers must be a positive integer, got {workers}.")
        self.workers = int(workers)

    def map(self, fn: Callable[[T], R], blocks: Iterable[T], label: Optional[str] = None) -> List[R]:
        """
        Apply fn to every block and return results in block order.

        fn must be a module-level function so it can be pickled.
        """
        blocks = list(blocks)
        if label:
            logger.info("%s: %d blocks on %d worker(s)", label, len(blocks), self.workers)
        if self.workers == 1 or len(blocks) <= 1:
            return [fn(block) for block in blocks]
        with ProcessPoolExecutor(max_workers=min(self.workers, len(blocks))) as executor:
            return list(executor.map(fn, blocks))
