import logging
from dataclasses import dataclass
from enum import Enum
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Chebyshev
from pydantic import BaseModel

from app.config.settings import settings
from app.helpers.errors import UnclassifiableRegimeError
from app.helpers.parallel_helper import parallel_helper, tree_sum
from app.modules.arithmetic import Frequency
from app.modules.cocycle import PotentialSpec, phase_log_norms

logger = logging.getLogger(__name__)


class RegimeLabel(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"
    HYPERBOLIC = "uniformly-hyperbolic-or-off-spectrum"


@dataclass
class LyapunovProfile:
    """L_ε(E) along a decreasing ε schedule followed by ε = 0."""
    E: complex
    eps_grid: List[float]
    L_values: List[float]
    slope: float
    omega_int: Optional[int]
    omega_residual: float
    healthy: bool = True
    n: int = 0
    m: int = 0

    @property
    def L0(self) -> float:
        return self.L_values[-1]

    def profile_rows(self) -> List[Tuple[float, float, float]]:
        """CSV rows (E, eps, L), including the ε = 0 point."""
        E = complex(self.E).real
        return [(E, eps, L) for eps, L in zip(self.eps_grid + [0.0], self.L_values)]

    def to_dict(self) -> dict:
        E = complex(self.E)
        return {
            "E": [E.real, E.imag],
            "eps_grid": list(self.eps_grid),
            "L_values": list(self.L_values),
            "slope": self.slope,
            "omega_int": self.omega_int,
            "omega_residual": self.omega_residual,
            "healthy": self.healthy,
            "n": self.n,
            "m": self.m,
        }


class SmoothFitReport(BaseModel):
    """Quality of a Chebyshev least-squares fit through sampled values."""
    degree: int
    n_points: int
    max_residual: float
    rms_residual: float


def _check_sampling(n: int, m: int) -> None:
    if n < 100:
        raise ValueError(f"n must be >= 100, got {n}")
    if m < 16 or m & (m - 1):
        raise ValueError(f"m must be a power of two >= 16, got {m}")


def lyapunov(
    pot: PotentialSpec,
    alpha: Frequency,
    E: complex,
    eps_imag: float = 0.0,
    n: Optional[int] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> float:
    """
    Phase-averaged (1/n)·ln‖A_n(x + i·eps_imag)‖ over x_j = j/m.

    Phase blocks are evaluated independently and summed by a fixed binary
    tree, so the value does not depend on the worker count.

    Args:
        pot: Potential
        alpha: Frequency
        E: Energy (complex allowed)
        eps_imag: Imaginary phase shift ε >= 0
        n: Iterates (default settings.DEFAULT_ITERATES)
        m: Phase samples, power of two (default settings.DEFAULT_PHASES)
        n_jobs: Worker count

    Returns:
        L_ε(E)
    """
    n = n or settings.DEFAULT_ITERATES
    m = m or settings.DEFAULT_PHASES
    _check_sampling(n, m)
    if eps_imag < 0:
        raise ValueError("eps_imag must be >= 0")

    phases = parallel_helper.phase_grid(m)
    func = partial(phase_log_norms, pot, E, alpha, eps_imag=eps_imag, n=n)
    values = parallel_helper.map_phases(func, phases, n_jobs)
    return float(tree_sum(values) / (n * m))


def _stacked_log_norms(pot: PotentialSpec, E: complex, alpha: Frequency, n: int, block: np.ndarray) -> np.ndarray:
    return phase_log_norms(pot, E, alpha, block[:, 0], block[:, 1], n)


def lyapunov_profile(
    pot: PotentialSpec,
    alpha: Frequency,
    E: complex,
    eps_values: Sequence[float],
    n: Optional[int] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> List[float]:
    """
    L_ε(E) for several ε in one pass.

    The phase grid is repeated once per ε and every column carries its own
    imaginary shift, so all products advance through the same array
    operations. Each ε is reduced by the same tree as :func:`lyapunov`.
    """
    n = n or settings.DEFAULT_ITERATES
    m = m or settings.DEFAULT_PHASES
    _check_sampling(n, m)
    eps_values = np.asarray(eps_values, dtype=np.float64)
    if np.any(eps_values < 0):
        raise ValueError("eps_imag must be >= 0")

    k = eps_values.size
    stacked = np.column_stack([np.tile(parallel_helper.phase_grid(m), k), np.repeat(eps_values, m)])
    func = partial(_stacked_log_norms, pot, E, alpha, n)
    values = parallel_helper.map_phases(func, stacked, n_jobs)
    sums = tree_sum(values.reshape(k, m).T)
    return [float(s / (n * m)) for s in sums]


def _profile_health(eps_grid: Sequence[float], L_values: Sequence[float]) -> bool:
    """Nondecreasing and convex in ε within CONVEXITY_TOL."""
    tol = settings.CONVEXITY_TOL
    eps = np.array([0.0] + list(eps_grid)[::-1])
    L = np.array([L_values[-1]] + list(L_values[:-1])[::-1])

    healthy = True
    drops = np.flatnonzero(np.diff(L) < -tol)
    if drops.size:
        logger.warning(f"Lyapunov profile decreases in ε at ε={eps[drops[0] + 1]:.4g}")
        healthy = False

    for i in range(1, len(eps) - 1):
        w = (eps[i] - eps[i - 1]) / (eps[i + 1] - eps[i - 1])
        chord = (1.0 - w) * L[i - 1] + w * L[i + 1]
        if L[i] > chord + tol:
            logger.warning(f"Lyapunov profile not convex at ε={eps[i]:.4g} (excess {L[i] - chord:.3g})")
            healthy = False
            break
    return healthy


def acceleration(
    pot: PotentialSpec,
    alpha: Frequency,
    E: float,
    schedule: Optional[Sequence[float]] = None,
    n: Optional[int] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> LyapunovProfile:
    """
    Acceleration ω(E) as the slope of L_ε against 2πε near ε = 0.

    The slope is a least-squares fit over the last ACCELERATION_FIT_POINTS
    points of the profile (the smallest ε values and ε = 0). It snaps to an
    integer when within OMEGA_SNAP_THRESHOLD. The whole schedule and ε = 0
    are evaluated together by :func:`lyapunov_profile`.
    """
    schedule = list(schedule) if schedule is not None else list(settings.ACCELERATION_SCHEDULE)
    fit_points = settings.ACCELERATION_FIT_POINTS
    if len(schedule) < fit_points - 1:
        raise ValueError(f"schedule needs at least {fit_points - 1} values")
    if any(e <= 0 for e in schedule) or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly decreasing positive values")

    n = n or settings.DEFAULT_ITERATES
    m = m or settings.DEFAULT_PHASES

    L_values = lyapunov_profile(pot, alpha, E, schedule + [0.0], n, m, n_jobs)

    eps_all = np.array(schedule + [0.0])
    slope = float(np.polyfit(2.0 * np.pi * eps_all[-fit_points:], np.array(L_values[-fit_points:]), 1)[0])
    nearest = int(round(slope))
    residual = abs(slope - nearest)
    omega_int = nearest if residual <= settings.OMEGA_SNAP_THRESHOLD else None
    if omega_int is None:
        logger.info(f"Acceleration slope {slope:.4f} at E={E} does not snap to an integer")

    healthy = _profile_health(schedule, L_values)
    return LyapunovProfile(
        E=E,
        eps_grid=schedule,
        L_values=L_values,
        slope=slope,
        omega_int=omega_int,
        omega_residual=residual,
        healthy=healthy,
        n=n,
        m=m,
    )


def classify_regime(L0: float, omega: Optional[int], tol: Optional[float] = None) -> RegimeLabel:
    """Regime from the Lyapunov exponent and the (integer) acceleration."""
    if omega is None:
        raise UnclassifiableRegimeError("acceleration did not snap to an integer")
    tol = settings.REGIME_TOL if tol is None else tol
    if L0 <= tol:
        return RegimeLabel.SUBCRITICAL if omega == 0 else RegimeLabel.CRITICAL
    return RegimeLabel.HYPERBOLIC if omega == 0 else RegimeLabel.SUPERCRITICAL


def perturbation_scan(
    pot: PotentialSpec,
    alpha: Frequency,
    E: float,
    eps_values: Sequence[float],
    n: Optional[int] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> List[Tuple[float, float]]:
    """L(E) as the perturbation strength ε of ``pot`` varies."""
    rows = []
    for eps in eps_values:
        scaled = pot.model_copy(update={"epsilon": float(eps)})
        rows.append((float(eps), lyapunov(scaled, alpha, E, 0.0, n, m, n_jobs)))
    return rows


def smooth_fit_report(E: Sequence[float], values: Sequence[float], degree: Optional[int] = None) -> SmoothFitReport:
    """Chebyshev fit through on-spectrum samples; reported, never asserted."""
    degree = degree or settings.SMOOTH_FIT_DEGREE
    E = np.asarray(E, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if E.size <= degree:
        raise ValueError(f"need more than {degree} points for a degree-{degree} fit")
    fit = Chebyshev.fit(E, values, degree)
    residuals = values - fit(E)
    return SmoothFitReport(
        degree=degree,
        n_points=int(E.size),
        max_residual=float(np.max(np.abs(residuals))),
        rms_residual=float(np.sqrt(np.mean(residuals ** 2))),
    )
