"""
Averaged Green's function G(z) = ∫ dN(E')/(E' - z) and the quantities built on it.

Two independent routes are provided: phase-averaged resolvents of windowed
operators (``green_avg``) and Stieltjes sums against an IDS table
(``green_from_ids``). The Thouless integral, the normal boundary value of
Re G, the derivative identity and the non-tangential maximal function sit
on top of them.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from app.config.settings import settings
from app.helpers.errors import PoleProximityError
from app.helpers.parallel_helper import parallel_helper, tree_sum
from app.modules.arithmetic import Frequency
from app.modules.cocycle import PotentialSpec
from app.modules.lyapunov import lyapunov
from app.modules.spectrum import IDSTable, SpectrumApprox

logger = logging.getLogger(__name__)

# Cells closer to z than this many widths are integrated exactly.
NEAR_CELLS = 4.0


class GreenMethod(str, Enum):
    RESOLVENT = "resolvent-average"
    BOREL = "borel-of-ids"
    BOUNDARY = "boundary-extrapolation"


@dataclass
class GreenValue:
    z: complex
    value: complex
    method: GreenMethod
    residual: Optional[float] = None
    flagged: bool = False


@dataclass
class MaximalProfile:
    """Discretized non-tangential maximal function and its weak-type statistic."""
    E_grid: np.ndarray
    Gstar: np.ndarray
    sigma_grid: np.ndarray
    weak_type_stat: np.ndarray
    y_min: float
    y_max: float

    @property
    def D(self) -> float:
        return float(self.weak_type_stat.max()) if self.weak_type_stat.size else 0.0

    def rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.E_grid.tolist(), self.Gstar.tolist()))

    def weak_type_rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.sigma_grid.tolist(), self.weak_type_stat.tolist()))


class BoundaryL1Report(BaseModel):
    """Empirical ∫|Re G(E+i0)| over the part of the grid inside the spectrum proxy."""
    integral: float
    measure: float
    n_points: int


def _block_resolvent(
    pot: PotentialSpec,
    alpha: Frequency,
    zs: np.ndarray,
    window: int,
    phases: np.ndarray,
) -> np.ndarray:
    """
    ⟨δ₀, (H_x - z)⁻¹ δ₀⟩ on sites [-w, w] for each phase in the block and each z.

    Both half-lines are folded in by continued-fraction self-energies
    g_j = 1/(V_j - z - g_{j+1}), starting from g = 0 past the window edge.
    """
    orbit = alpha.orbit(window + 1)
    z = zs[None, :]
    right = np.zeros((phases.shape[0], zs.shape[0]), dtype=np.complex128)
    left = np.zeros_like(right)
    for j in range(window, 0, -1):
        v_right = pot.evaluate((phases + orbit[j]) % 1.0)[:, None]
        v_left = pot.evaluate((phases - orbit[j]) % 1.0)[:, None]
        right = 1.0 / (v_right - z - right)
        left = 1.0 / (v_left - z - left)
    v0 = pot.evaluate(phases % 1.0)[:, None]
    return 1.0 / (v0 - z - right - left)


def green_phases(pot: PotentialSpec, im_z: float) -> int:
    """
    Phase count for resolvent averages at height Im z.

    The phase integrand is analytic in a strip of width about Im z / sup|V'|,
    so the trapezoid error decays like exp(-2π·m·Im z / sup|V'|). The count is
    the next power of two above GREEN_PHASE_FACTOR·sup|V'| / Im z, at least
    GREEN_PHASES and at most GREEN_PHASES_MAX.
    """
    if im_z <= 0:
        raise ValueError("Im z must be > 0")
    wanted = max(settings.GREEN_PHASES, math.ceil(settings.GREEN_PHASE_FACTOR * pot.derivative_bound() / im_z))
    m = 1 << (wanted - 1).bit_length()
    if m > settings.GREEN_PHASES_MAX:
        logger.warning(f"Resolvent average at Im z={im_z:.3g} wants {m} phases, capped at {settings.GREEN_PHASES_MAX}")
        m = settings.GREEN_PHASES_MAX
    return m


def green_values(
    pot: PotentialSpec,
    alpha: Frequency,
    zs: Sequence[complex],
    window: Optional[int] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> np.ndarray:
    """
    Phase-averaged resolvent diagonal at many points (vectorized green_avg).

    Window and phase count default to the values for the smallest Im z.
    """
    zs = np.atleast_1d(np.asarray(zs, dtype=np.complex128))
    if np.any(zs.imag <= 0):
        raise ValueError("every z needs Im z > 0")
    window = window or settings.green_window(float(zs.imag.min()))
    if window < settings.GREEN_WINDOW_MIN:
        raise ValueError(f"window must be >= {settings.GREEN_WINDOW_MIN}")
    m = m or green_phases(pot, float(zs.imag.min()))

    phases = parallel_helper.phase_grid(m)
    values = parallel_helper.map_phases(partial(_block_resolvent, pot, alpha, zs, window), phases, n_jobs)
    return tree_sum(values) / m


def green_avg(
    pot: PotentialSpec,
    alpha: Frequency,
    z: complex,
    window: Optional[int] = None,
    m: Optional[int] = None,
    tol: Optional[float] = None,
    n_jobs: Optional[int] = None,
) -> GreenValue:
    """
    ∫ ⟨δ₀, (H_x - z)⁻¹ δ₀⟩ dx over m equispaced phases.

    Args:
        pot: Potential
        alpha: Frequency
        z: Spectral parameter, Im z > 0
        window: Half-width w of the site window (default max(200, ceil(8/Im z)))
        m: Phase samples (default from :func:`green_phases`)
        tol: When given, recompute at 2w and warn if the change exceeds 10·tol

    Returns:
        GreenValue with method=resolvent-average
    """
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("Im z must be > 0")
    window = window or settings.green_window(z.imag)
    value = complex(green_values(pot, alpha, [z], window, m, n_jobs)[0])

    flagged = False
    if tol is not None:
        doubled = complex(green_values(pot, alpha, [z], 2 * window, m, n_jobs)[0])
        if abs(doubled - value) > 10.0 * tol:
            logger.warning(f"Resolvent window {window} too small at z={z}: doubling moved G by {abs(doubled - value):.3g}")
            flagged = True
    return GreenValue(z=z, value=value, method=GreenMethod.RESOLVENT, flagged=flagged)


def _cells(ids: IDSTable) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Left edges, right edges and masses of the IDS grid cells."""
    E = ids.E_grid
    mass = np.diff(ids.N_values)
    outside = ids.N_values[0] + (1.0 - ids.N_values[-1])
    if outside > 1e-6:
        logger.debug(f"IDS grid misses mass {outside:.3g} outside its range")
    return E[:-1], E[1:], mass


def _check_pole(ids: IDSTable, z: complex) -> None:
    if z.imag != 0.0:
        return
    a, b, mass = _cells(ids)
    support = mass > 0
    if not support.any():
        return
    dist = np.maximum(0.0, np.maximum(a[support] - z.real, z.real - b[support]))
    if dist.min() < settings.POLE_CELLS * ids.step:
        raise PoleProximityError(f"real z={z.real} within {settings.POLE_CELLS} cells of the support of dN")


def _cell_sum(ids: IDSTable, z: complex, midpoint_kernel, exact_antiderivative) -> complex:
    """Σ over cells: midpoint rule far from z, exact piecewise-constant integral near z."""
    a, b, mass = _cells(ids)
    mid = 0.5 * (a + b)
    width = b - a
    near = np.abs(mid - z) < NEAR_CELLS * width

    total = np.sum(mass[~near] * midpoint_kernel(mid[~near] - z))
    if near.any():
        density = mass[near] / width[near]
        total += np.sum(density * (exact_antiderivative(b[near] - z) - exact_antiderivative(a[near] - z)))
    return complex(total)


def _log_antiderivative(u: np.ndarray) -> np.ndarray:
    """u·Log(u) - u, continuous at u = 0."""
    u = np.asarray(u, dtype=np.complex128)
    safe = np.where(u == 0, 1.0, u)
    return np.where(u == 0, 0.0, safe * np.log(safe) - safe)


def green_from_ids(ids: IDSTable, z: complex) -> GreenValue:
    """Stieltjes sum of 1/(E' - z) against dN; method=borel-of-ids."""
    z = complex(z)
    if z.imag < 0:
        raise ValueError("Im z must be >= 0")
    _check_pole(ids, z)
    value = _cell_sum(ids, z, lambda u: 1.0 / u, lambda u: np.log(np.asarray(u, dtype=np.complex128)))
    return GreenValue(z=z, value=value, method=GreenMethod.BOREL)


def w_transform(ids: IDSTable, z: complex) -> complex:
    """∫ Log(E' - z) dN(E'); the real part is the Thouless integral."""
    z = complex(z)
    return _cell_sum(ids, z, lambda u: np.log(np.asarray(u, dtype=np.complex128)), _log_antiderivative)


def thouless(ids: IDSTable, z: complex) -> float:
    """∫ ln|E' - z| dN(E')."""
    return float(w_transform(ids, z).real)


def _linear_extrapolant(eps: np.ndarray, values: np.ndarray) -> Tuple[float, float]:
    coeffs = np.polyfit(eps, values, 1)
    fit = np.polyval(coeffs, eps)
    residual = float(np.sqrt(np.mean((values - fit) ** 2)))
    return float(coeffs[1]), residual


def normal_boundary_re_g(
    pot: PotentialSpec,
    alpha: Frequency,
    E: float,
    eps_schedule: Optional[Sequence[float]] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> GreenValue:
    """
    Re G(E + i0) by linear extrapolation of Re G(E + iε) to ε = 0.

    The fit uses the last BOUNDARY_FIT_POINTS points of the schedule. The
    point is flagged, not rejected, when the extrapolant from the previous
    window of points differs by more than max(10·residual, BOUNDARY_FLAG_FLOOR).
    """
    eps = np.array(eps_schedule if eps_schedule is not None else settings.ACCELERATION_SCHEDULE, dtype=np.float64)
    k = settings.BOUNDARY_FIT_POINTS
    if eps.size < k:
        raise ValueError(f"eps_schedule needs at least {k} values")
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("eps_schedule must be strictly decreasing positive values")

    re_g = green_values(pot, alpha, E + 1j * eps, m=m, n_jobs=n_jobs).real
    value, residual = _linear_extrapolant(eps[-k:], re_g[-k:])

    flagged = False
    if eps.size > k:
        previous, _ = _linear_extrapolant(eps[-k - 1:-1], re_g[-k - 1:-1])
        if abs(previous - value) > max(10.0 * residual, settings.BOUNDARY_FLAG_FLOOR):
            logger.warning(f"Re G(E+i0) at E={E} not converged: extrapolants {previous:.6g} vs {value:.6g}")
            flagged = True

    return GreenValue(z=complex(E, 0.0), value=complex(value, 0.0), method=GreenMethod.BOUNDARY,
                      residual=residual, flagged=flagged)


def derivative_identity_residual(
    pot: PotentialSpec,
    alpha: Frequency,
    E: float,
    eps: float,
    dE: float,
    n: Optional[int] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> float:
    """
    |∂L(E+iε)/∂E + Re G(E+iε)| with the derivative by central differences.

    With G(z) = ∫ dN/(E' - z) and L(z) = ∫ ln|E' - z| dN, ∂L/∂E = -Re G.
    ``n`` and ``m`` set the Lyapunov sampling only; the resolvent average
    takes its phase count from :func:`green_phases`.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if dE <= 0 or dE > eps / 10.0:
        raise ValueError("dE must lie in (0, eps/10]")
    L_plus = lyapunov(pot, alpha, complex(E + dE, eps), 0.0, n, m, n_jobs)
    L_minus = lyapunov(pot, alpha, complex(E - dE, eps), 0.0, n, m, n_jobs)
    derivative = (L_plus - L_minus) / (2.0 * dE)
    re_g = green_avg(pot, alpha, complex(E, eps), n_jobs=n_jobs).value.real
    return abs(derivative + re_g)


def _cone_levels(y_min: float, y_max: float, levels: Optional[int]) -> np.ndarray:
    if levels is None:
        levels = max(2, int(np.ceil(np.log2(y_max / y_min))) + 1)
    return np.geomspace(y_min, y_max, levels)


def _window_max(x: np.ndarray, values: np.ndarray, centers: np.ndarray, half_width: float) -> np.ndarray:
    """max of values over x ∈ (c - h, c + h) for each center c (x sorted, centers ⊂ x)."""
    start = np.searchsorted(x, centers - half_width, side="right")
    stop = np.searchsorted(x, centers + half_width, side="left")
    padded = np.append(values, -np.inf)
    idx = np.empty(2 * centers.size, dtype=np.intp)
    idx[0::2] = start
    idx[1::2] = stop
    return np.maximum.reduceat(padded, idx)[0::2]


def maximal_function(
    pot: PotentialSpec,
    alpha: Frequency,
    E_grid: Sequence[float],
    y_min: float,
    y_max: float,
    aspect: int = 4,
    sigma_grid: Optional[Sequence[float]] = None,
    levels: Optional[int] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> MaximalProfile:
    """
    G*(E₀) ≈ max |G(x + iy)| over the cone |x - E₀| < y, y ∈ [y_min, y_max].

    Each log-spaced level y is sampled on a regular x grid with spacing
    2y/(aspect + 1) together with the E_grid points themselves. The
    weak-type statistic is σ^{3/4}·|{E : G*(E) > σ}| with the set measured
    by E_grid cells.
    """
    if y_min <= 0 or y_max < y_min:
        raise ValueError("need 0 < y_min <= y_max")
    if aspect < 1:
        raise ValueError("aspect must be >= 1")
    E_grid = np.asarray(E_grid, dtype=np.float64)
    if E_grid.ndim != 1 or E_grid.size < 2 or np.any(np.diff(E_grid) <= 0):
        raise ValueError("E_grid must be strictly increasing with at least 2 points")

    gstar = np.zeros_like(E_grid)
    for y in _cone_levels(y_min, y_max, levels):
        spacing = 2.0 * y / (aspect + 1)
        sweep = np.arange(E_grid[0] - y, E_grid[-1] + y + spacing, spacing)
        x = np.unique(np.concatenate([sweep, E_grid]))
        g = np.abs(green_values(pot, alpha, x + 1j * y, m=m, n_jobs=n_jobs))
        gstar = np.maximum(gstar, _window_max(x, g, E_grid, y))
        logger.debug(f"Cone level y={y:.3g}: {x.size} points, running max {gstar.max():.4g}")

    if sigma_grid is None:
        top = max(float(gstar.max()), 1e-12)
        sigma_grid = top * 2.0 ** -np.arange(10, -1, -1, dtype=np.float64)
    sigma_grid = np.asarray(sigma_grid, dtype=np.float64)
    cell = np.gradient(E_grid)
    stat = np.array([s ** 0.75 * float(cell[gstar > s].sum()) for s in sigma_grid])

    return MaximalProfile(E_grid=E_grid, Gstar=gstar, sigma_grid=sigma_grid,
                          weak_type_stat=stat, y_min=y_min, y_max=y_max)


def boundary_l1_report(E_grid: Sequence[float], re_g: Sequence[float], S: SpectrumApprox) -> BoundaryL1Report:
    """∫_S |Re G(E+i0)| dE by grid cells; reported, never asserted."""
    E_grid = np.asarray(E_grid, dtype=np.float64)
    re_g = np.asarray(re_g, dtype=np.float64)
    inside = S.contains(E_grid)
    cell = np.gradient(E_grid) if E_grid.size > 1 else np.ones(1)
    return BoundaryL1Report(
        integral=float(np.sum(np.abs(re_g[inside]) * cell[inside])),
        measure=float(np.sum(cell[inside])),
        n_points=int(inside.sum()),
    )
