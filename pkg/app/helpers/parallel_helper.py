import logging
from typing import Any, Callable, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from app.config.settings import settings

logger = logging.getLogger(__name__)


class ParallelHelper:
    """Deterministic block-parallel evaluation over phase grids."""

    def __init__(self):
        """Initialize parallel helper."""
        self.default_jobs = settings.THREADS
        self.backend = settings.PARALLEL_BACKEND
        self.block_size = settings.PHASE_BLOCK

    def phase_grid(self, m: int) -> np.ndarray:
        """Equispaced phases j/m, j = 0..m-1."""
        return np.arange(m, dtype=np.float64) / m

    def phase_blocks(self, phases: np.ndarray) -> List[np.ndarray]:
        """
        Split phases into fixed-size blocks.

        The block size never depends on the worker count, so every block is
        evaluated by exactly the same sequence of array operations whatever
        the number of workers.
        """
        size = self.block_size
        return [phases[i:i + size] for i in range(0, len(phases), size)]

    def map_blocks(
        self,
        func: Callable[[np.ndarray], Any],
        blocks: Sequence[np.ndarray],
        n_jobs: Optional[int] = None,
    ) -> List[Any]:
        """
        Evaluate ``func`` on each block, preserving block order.

        Args:
            func: Picklable callable taking one block
            blocks: Blocks from :meth:`phase_blocks`
            n_jobs: Worker count (default from settings)

        Returns:
            List of per-block results in input order
        """
        jobs = n_jobs or self.default_jobs
        if jobs == 1 or len(blocks) == 1 or self.backend == "sequential":
            return [func(block) for block in blocks]

        logger.debug(f"Dispatching {len(blocks)} blocks to {jobs} workers ({self.backend})")
        try:
            return Parallel(n_jobs=jobs, backend=self.backend)(
                delayed(func)(block) for block in blocks
            )
        except Exception as e:
            logger.error(f"Parallel block evaluation failed: {e}")
            raise

    def map_phases(
        self,
        func: Callable[[np.ndarray], np.ndarray],
        phases: np.ndarray,
        n_jobs: Optional[int] = None,
    ) -> np.ndarray:
        """Evaluate a per-phase function block-wise and concatenate along axis 0."""
        results = self.map_blocks(func, self.phase_blocks(phases), n_jobs)
        return np.concatenate(results, axis=0)


def tree_sum(values: np.ndarray) -> np.ndarray:
    """
    Balanced pairwise sum along axis 0.

    The array is zero-padded to a power of two and folded pairwise, so the
    reduction order is a fixed binary tree.
    """
    values = np.asarray(values)
    n = values.shape[0]
    if n == 0:
        return np.zeros(values.shape[1:], dtype=values.dtype)
    size = 1 << (n - 1).bit_length()
    if size != n:
        pad = np.zeros((size - n,) + values.shape[1:], dtype=values.dtype)
        values = np.concatenate([values, pad], axis=0)
    while values.shape[0] > 1:
        values = values[0::2] + values[1::2]
    return values[0]


def tree_mean(values: np.ndarray) -> np.ndarray:
    """Mean along axis 0 through :func:`tree_sum`."""
    values = np.asarray(values)
    return tree_sum(values) / values.shape[0]


# Global parallel helper instance
parallel_helper = ParallelHelper()
