"""
Fibered rotation number of the projective Schrödinger action.

The lift is tracked by keeping each vector in the closed upper half plane
and counting the half turns needed to get it back there; a half turn is
exactly a sign change of the solution sequence.
"""

import logging
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.config.settings import settings
from app.helpers.errors import DomainError
from app.helpers.parallel_helper import parallel_helper, tree_mean
from app.modules.arithmetic import Frequency
from app.modules.cocycle import PotentialSpec
from app.modules.spectrum import IDSTable

logger = logging.getLogger(__name__)


@dataclass
class RotationResult:
    rho: float
    rho_raw: float
    n_used: int
    phase_samples: int
    spread: float
    degenerate_hits: int = 0
    reliable: bool = True

    def row(self, E: float) -> Tuple[float, float, float, float]:
        """CSV row (E, rho, N_from_rho, spread)."""
        return E, self.rho, ids_from_rotation(self.rho), self.spread


def fold_rotation(rho: np.ndarray) -> np.ndarray:
    """Fold into [0, 1/2] by ρ ↦ min(ρ mod 1, 1 - ρ mod 1)."""
    r = np.mod(rho, 1.0)
    return np.minimum(r, 1.0 - r)


def _block_lift(pot: PotentialSpec, E: float, alpha: Frequency, n: int, phases: np.ndarray) -> np.ndarray:
    """Per-phase lifted angle after n steps and degenerate-guard hit count."""
    m = phases.shape[0]
    x = np.ones(m)
    y = np.zeros(m)
    turns = np.zeros(m, dtype=np.int64)
    hits = np.zeros(m, dtype=np.int64)

    tol = settings.ROTATION_DEGENERATE_TOL
    cos_nudge = np.cos(settings.ROTATION_NUDGE)
    sin_nudge = np.sin(settings.ROTATION_NUDGE)
    cadence = settings.RESCALE_CADENCE
    orbit = alpha.orbit(n)

    for block_start in range(0, n, cadence):
        steps = min(cadence, n - block_start)
        sites = (phases[None, :] + orbit[block_start:block_start + steps, None]) % 1.0
        t = E - pot.evaluate(sites)
        for j in range(steps):
            degenerate = np.abs(x) < tol * np.hypot(x, y)
            if degenerate.any():
                hits += degenerate
                x, y = (
                    np.where(degenerate, x * cos_nudge - y * sin_nudge, x),
                    np.where(degenerate, x * sin_nudge + y * cos_nudge, y),
                )
            x, y = t[j] * x - y, x
            flip = y < 0
            turns += flip
            x = np.where(flip, -x, x)
            y = np.where(flip, -y, y)
        norm = np.hypot(x, y)
        x, y = x / norm, y / norm

    angle = turns * np.pi + np.arctan2(y, x)
    return np.stack([angle, hits.astype(np.float64)], axis=1)


def rotation_number(
    pot: PotentialSpec,
    alpha: Frequency,
    E: float,
    n: Optional[int] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> RotationResult:
    """
    Average angular speed of w = (1, 0) under the projective action, folded into [0, 1/2].

    Args:
        pot: Potential
        alpha: Frequency
        E: Real energy
        n: Iterates per phase, >= 1000 (default settings.ROTATION_ITERATES)
        m: Phase samples, >= 16 (default settings.ROTATION_PHASES)

    Returns:
        RotationResult; ``reliable`` is False when the per-phase spread exceeds
        ROTATION_SPREAD_FACTOR/n
    """
    n = n or settings.ROTATION_ITERATES
    m = m or settings.ROTATION_PHASES
    if n < 1000:
        raise ValueError(f"n must be >= 1000, got {n}")
    if m < 16:
        raise ValueError(f"m must be >= 16, got {m}")

    phases = parallel_helper.phase_grid(m)
    out = parallel_helper.map_phases(partial(_block_lift, pot, float(E), alpha, n), phases, n_jobs)
    per_phase = out[:, 0] / (2.0 * np.pi * n)
    hits = int(out[:, 1].sum())

    rho_raw = float(tree_mean(per_phase))
    folded = fold_rotation(per_phase)
    spread = float(folded.max() - folded.min())
    reliable = spread <= settings.ROTATION_SPREAD_FACTOR / n
    if hits:
        logger.debug(f"Degenerate-vector guard fired {hits} times at E={E}")
    if not reliable:
        logger.warning(f"Rotation number at E={E} unreliable: spread {spread:.3g} > {settings.ROTATION_SPREAD_FACTOR}/n")

    return RotationResult(
        rho=float(fold_rotation(rho_raw)),
        rho_raw=rho_raw,
        n_used=n,
        phase_samples=m,
        spread=spread,
        degenerate_hits=hits,
        reliable=reliable,
    )


def ids_from_rotation(rho: float) -> float:
    """N = 1 - 2ρ."""
    if not (0.0 <= rho <= 0.5):
        raise DomainError(f"rho must lie in [0, 1/2], got {rho}")
    return 1.0 - 2.0 * rho


def ids_from_rotation_grid(
    pot: PotentialSpec,
    alpha: Frequency,
    E_grid: Sequence[float],
    n: Optional[int] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> Tuple[IDSTable, List[RotationResult]]:
    """IDS table (method=rotation) plus the per-energy rotation results."""
    n = n or settings.ROTATION_ITERATES
    m = m or settings.ROTATION_PHASES
    E_grid = np.asarray(E_grid, dtype=np.float64)
    results = [rotation_number(pot, alpha, E, n, m, n_jobs) for E in E_grid]
    N = np.array([ids_from_rotation(r.rho) for r in results])
    return IDSTable(E_grid=E_grid, N_values=N, method="rotation", n=n, m=m), results
