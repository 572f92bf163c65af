"""
Truncated operators, the integrated density of states and spectrum proxies.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, model_validator
from scipy.linalg import eigvalsh_tridiagonal

from app.config.settings import settings
from app.helpers.parallel_helper import parallel_helper, tree_sum
from app.modules.arithmetic import Frequency
from app.modules.cocycle import PotentialSpec, log_operator_norm, propagate_phases

logger = logging.getLogger(__name__)


@dataclass
class IDSTable:
    """N(E) on a strictly increasing energy grid."""
    E_grid: np.ndarray
    N_values: np.ndarray
    method: str  # "counting" or "rotation"
    n: int
    m: int

    def rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.E_grid.tolist(), self.N_values.tolist()))

    @property
    def step(self) -> float:
        return float(np.max(np.diff(self.E_grid)))


class SpectrumSource(str, Enum):
    EIGENVALUE_UNION = "eigenvalue-union"
    GROWTH_TEST = "growth-test"


class SpectrumApprox(BaseModel):
    """Finite union of disjoint closed intervals approximating the spectrum."""
    intervals: List[Tuple[float, float]]
    margin: float
    source: SpectrumSource = SpectrumSource.EIGENVALUE_UNION

    @model_validator(mode="after")
    def sorted_and_disjoint(self):
        for a, b in self.intervals:
            if a > b:
                raise ValueError(f"interval [{a}, {b}] is reversed")
        for (_, b), (a, _) in zip(self.intervals, self.intervals[1:]):
            if a <= b:
                raise ValueError("intervals must be sorted with positive gaps")
        return self

    @property
    def bounds(self) -> np.ndarray:
        return np.array(self.intervals, dtype=np.float64).reshape(-1, 2)

    def contains(self, E: np.ndarray) -> np.ndarray:
        E = np.asarray(E, dtype=np.float64)
        b = self.bounds
        return np.any((E[..., None] >= b[:, 0]) & (E[..., None] <= b[:, 1]), axis=-1)

    def measure(self) -> float:
        b = self.bounds
        return float(np.sum(b[:, 1] - b[:, 0]))

    def span(self) -> float:
        b = self.bounds
        return float(b[-1, 1] - b[0, 0])

    def overlap(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """|(lo, hi) ∩ S| for arrays of windows."""
        b = self.bounds
        lo = np.asarray(lo, dtype=np.float64)[..., None]
        hi = np.asarray(hi, dtype=np.float64)[..., None]
        return np.sum(np.clip(np.minimum(b[:, 1], hi) - np.maximum(b[:, 0], lo), 0.0, None), axis=-1)


class HomogeneityProfile(BaseModel):
    """min over E ∈ S of |(E-σ, E+σ) ∩ S|/σ for each σ."""
    sigma_grid: List[float]
    min_ratio: List[float]
    argmin_E: List[float]
    passing: List[bool]
    largest_passing_sigma: Optional[float] = None


def default_energy_grid(
    pot: PotentialSpec,
    points: Optional[int] = None,
    margin: Optional[float] = None,
) -> np.ndarray:
    """Containment interval widened by ``margin`` of its width, split into ``points`` nodes."""
    points = points or settings.ENERGY_GRID_POINTS
    margin = settings.ENERGY_GRID_MARGIN if margin is None else margin
    lo, hi = pot.containment_interval()
    pad = 0.5 * margin * (hi - lo)
    return np.linspace(lo - pad, hi + pad, points)


def truncated_eigenvalues(
    pot: PotentialSpec,
    alpha: Frequency,
    x: float,
    n: int,
    boundary: str = "dirichlet",
) -> np.ndarray:
    """
    Eigenvalues of H restricted to sites 0..n-1 with Dirichlet boundary.

    Diagonal V(x + jα), off-diagonal 1; LAPACK stebz bisection to absolute
    tolerance EIGEN_TOL. Sorted ascending.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if boundary != "dirichlet":
        raise ValueError(f"unsupported boundary condition: {boundary}")

    diag = np.asarray(pot.evaluate((x + alpha.orbit(n)) % 1.0), dtype=np.float64)
    if n == 1:
        return diag.copy()
    return eigvalsh_tridiagonal(diag, np.ones(n - 1), lapack_driver="stebz", tol=settings.EIGEN_TOL)


def sturm_count(diag: np.ndarray, off: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Number of eigenvalues strictly below each E (negative LDLᵀ pivots)."""
    E = np.atleast_1d(np.asarray(E, dtype=np.float64))
    tiny = np.finfo(np.float64).tiny
    q = diag[0] - E
    count = (q < 0).astype(np.int64)
    for i in range(1, len(diag)):
        q = np.where(q == 0.0, -tiny, q)
        q = diag[i] - E - off[i - 1] ** 2 / q
        count += q < 0
    return count


def _block_counts(pot, alpha, E_grid, n, phases) -> np.ndarray:
    return np.stack([
        np.searchsorted(truncated_eigenvalues(pot, alpha, x, n), E_grid, side="right")
        for x in phases
    ])


def ids_counting(
    pot: PotentialSpec,
    alpha: Frequency,
    E_grid: Sequence[float],
    n: Optional[int] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> IDSTable:
    """N(E) = mean over m phases of #{eigenvalues <= E}/n."""
    n = n or settings.IDS_TRUNCATION
    m = m or settings.IDS_PHASES
    if n < 100:
        raise ValueError(f"n must be >= 100, got {n}")
    if m < 8:
        raise ValueError(f"m must be >= 8, got {m}")
    E_grid = np.asarray(E_grid, dtype=np.float64)
    if E_grid.ndim != 1 or np.any(np.diff(E_grid) <= 0):
        raise ValueError("E_grid must be strictly increasing")

    phases = parallel_helper.phase_grid(m)
    counts = parallel_helper.map_phases(partial(_block_counts, pot, alpha, E_grid, n), phases, n_jobs)
    N = tree_sum(counts) / (n * m)
    return IDSTable(E_grid=E_grid, N_values=N, method="counting", n=n, m=m)


def mix_ids(tables: Sequence[IDSTable], weights: Sequence[float]) -> IDSTable:
    """Convex combination of IDS tables on a common grid."""
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
        raise ValueError("weights must be nonnegative and sum to 1")
    grid = tables[0].E_grid
    if any(not np.array_equal(t.E_grid, grid) for t in tables):
        raise ValueError("tables must share one energy grid")
    N = sum(w * t.N_values for w, t in zip(weights, tables))
    return IDSTable(E_grid=grid, N_values=N, method=tables[0].method, n=tables[0].n, m=tables[0].m)


def _merge_intervals(points: np.ndarray, margin: float, lo: float, hi: float) -> List[Tuple[float, float]]:
    """Dilate sorted points by margin, merge overlaps, clip to [lo, hi]."""
    splits = np.flatnonzero(np.diff(points) > 2.0 * margin) + 1
    intervals = []
    for cluster in np.split(points, splits):
        a = max(lo, float(cluster[0]) - margin)
        b = min(hi, float(cluster[-1]) + margin)
        intervals.append((a, b))
    return intervals


def _block_eigenvalues(pot, alpha, n, phases) -> np.ndarray:
    return np.stack([truncated_eigenvalues(pot, alpha, x, n) for x in phases])


def spectrum_approx(
    pot: PotentialSpec,
    alpha: Frequency,
    n: Optional[int] = None,
    m: Optional[int] = None,
    margin: Optional[float] = None,
    n_jobs: Optional[int] = None,
) -> SpectrumApprox:
    """
    Union over phases of truncation eigenvalues, dilated by ``margin`` and merged.

    Default margin is 3/n plus the default energy-grid step.
    """
    n = n or settings.IDS_TRUNCATION
    m = m or settings.IDS_PHASES
    lo, hi = pot.containment_interval()
    if margin is None:
        margin = 3.0 / n + (hi - lo) / (settings.ENERGY_GRID_POINTS - 1)
    if margin <= 0:
        raise ValueError("margin must be positive")
    if margin < 3.0 / n:
        logger.warning(f"margin {margin:.3g} is below the boundary shift 3/n = {3.0 / n:.3g}")

    phases = parallel_helper.phase_grid(m)
    eigs = parallel_helper.map_phases(partial(_block_eigenvalues, pot, alpha, n), phases, n_jobs)
    points = np.sort(eigs.ravel())
    intervals = _merge_intervals(points, margin, lo, hi)
    logger.debug(f"Spectrum proxy: {len(intervals)} intervals, measure {sum(b - a for a, b in intervals):.4f}")
    return SpectrumApprox(intervals=intervals, margin=margin)


def _block_growth(pot, E, alpha, n, phases) -> np.ndarray:
    (a, b, c, d), log_scale = propagate_phases(pot, E, alpha, phases, 0.0, n)
    norms = log_operator_norm(a, b, c, d, log_scale)
    columns = 0.5 * np.log(np.abs(a) ** 2 + np.abs(c) ** 2) + log_scale
    return np.stack([norms, columns], axis=1)


def growth_test(
    pot: PotentialSpec,
    alpha: Frequency,
    E_grid: Sequence[float],
    n: int = 1000,
    m: int = 64,
    tol: float = 0.05,
    n_jobs: Optional[int] = None,
) -> np.ndarray:
    """
    Flag energies whose cocycle looks uniformly hyperbolic.

    E is off-spectrum when the phase-mean growth rate exceeds ``tol`` and
    both the smallest per-phase norm growth and the smallest growth of the
    fixed vector e₁ stay within 10% of that mean.

    Returns:
        Boolean array, True where E is flagged off-spectrum
    """
    phases = parallel_helper.phase_grid(m)
    flags = []
    for E in np.asarray(E_grid, dtype=np.float64):
        rates = parallel_helper.map_phases(partial(_block_growth, pot, float(E), alpha, n), phases, n_jobs) / n
        mean = float(tree_sum(rates[:, 0]) / m)
        uniform = rates[:, 0].min() >= 0.9 * mean and rates[:, 1].min() >= 0.9 * mean
        flags.append(mean > tol and uniform)
    return np.array(flags, dtype=bool)


def spectrum_from_growth_test(
    pot: PotentialSpec,
    alpha: Frequency,
    E_grid: Sequence[float],
    n: int = 1000,
    m: int = 64,
    tol: float = 0.05,
    n_jobs: Optional[int] = None,
) -> SpectrumApprox:
    """Spectrum proxy from the grid energies the growth test does not flag."""
    E_grid = np.asarray(E_grid, dtype=np.float64)
    on = ~growth_test(pot, alpha, E_grid, n, m, tol, n_jobs)
    step = float(np.max(np.diff(E_grid)))
    lo, hi = pot.containment_interval()
    if not on.any():
        logger.warning("Growth test flagged every grid energy as off-spectrum")
        return SpectrumApprox(intervals=[], margin=step, source=SpectrumSource.GROWTH_TEST)
    intervals = _merge_intervals(E_grid[on], 0.5 * step, lo, hi)
    return SpectrumApprox(intervals=intervals, margin=0.5 * step, source=SpectrumSource.GROWTH_TEST)


def default_sigma_grid() -> List[float]:
    return [2.0 ** -k for k in range(10, 1, -1)]


def homogeneity_profile(
    S: SpectrumApprox,
    sigma_grid: Optional[Sequence[float]] = None,
    E_samples: int = 0,
) -> HomogeneityProfile:
    """
    Exact homogeneity ratios of a finite union of intervals.

    E ↦ |(E-σ, E+σ) ∩ S| is piecewise linear with breakpoints at a_i ± σ and
    b_i ± σ, so its minimum over S sits at an interval endpoint or at a
    breakpoint inside S. ``E_samples`` extra equispaced points of S are
    added to the candidate set.
    """
    if not S.intervals:
        raise ValueError("S must be nonempty")
    sigma_grid = sorted(sigma_grid) if sigma_grid is not None else default_sigma_grid()
    if any(s <= 0 for s in sigma_grid):
        raise ValueError("sigma values must be positive")
    if S.span() > 0 and sigma_grid[-1] >= 0.5 * S.span():
        raise ValueError("sigma values must stay below half the span of S")

    ends = S.bounds.ravel()
    extra = np.linspace(ends[0], ends[-1], E_samples) if E_samples > 0 else np.empty(0)

    ratios, argmins, passing = [], [], []
    for sigma in sigma_grid:
        candidates = np.concatenate([ends, ends - sigma, ends + sigma, extra])
        candidates = np.unique(candidates[S.contains(candidates)])
        r = S.overlap(candidates - sigma, candidates + sigma) / sigma
        i = int(np.argmin(r))
        ratios.append(float(r[i]))
        argmins.append(float(candidates[i]))
        passing.append(bool(r[i] >= 0.5))

    largest = None
    for sigma, ok in zip(sigma_grid, passing):
        if not ok:
            break
        largest = sigma

    return HomogeneityProfile(
        sigma_grid=list(sigma_grid),
        min_ratio=ratios,
        argmin_E=argmins,
        passing=passing,
        largest_passing_sigma=largest,
    )


def quantile_energies(
    pot: PotentialSpec,
    alpha: Frequency,
    quantiles: Sequence[float] = (0.1, 0.3, 0.5, 0.7, 0.9),
    n: Optional[int] = None,
    x: float = 0.0,
) -> List[float]:
    """Eigenvalues of one large truncation at the given count quantiles."""
    eig = truncated_eigenvalues(pot, alpha, x, n or settings.IDS_TRUNCATION)
    return [float(eig[int(round(q * (len(eig) - 1)))]) for q in quantiles]
