"""
Cross-module reports: the AMO regime table, identity residual tables and
difference quotients of N on Θ-selected energies.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from app.config.settings import settings
from app.helpers.errors import UnclassifiableRegimeError
from app.modules.arithmetic import Frequency, theta_membership
from app.modules.cocycle import PotentialSpec
from app.modules.green import derivative_identity_residual, thouless
from app.modules.lyapunov import acceleration, classify_regime, lyapunov
from app.modules.rotation import ids_from_rotation, rotation_number
from app.modules.spectrum import default_energy_grid, ids_counting, quantile_energies

logger = logging.getLogger(__name__)

REGIME_QUANTILES = (0.1, 0.3, 0.5, 0.7, 0.9)


def default_identity_tolerances(pot: PotentialSpec) -> Dict[str, float]:
    """Residual tolerances; the IDS relation is held tighter for the free Laplacian."""
    free = pot.lam == 0.0 and (pot.epsilon == 0.0 or not pot.v)
    return {
        "ids-rotation": settings.IDS_ROTATION_TOL_FREE if free else settings.IDS_ROTATION_TOL,
        "thouless": settings.THOULESS_TOL,
        "derivative": settings.DERIVATIVE_TOL,
    }


class RegimeRow(BaseModel):
    lam: float
    E_sample: float
    L: float
    omega: Optional[int]
    regime: str
    healthy: bool = True
    omega_residual: float = 0.0

    def row(self):
        return self.lam, self.E_sample, self.L, self.omega, self.regime


class IdentityRow(BaseModel):
    """Worst residual of one identity over its test points."""
    identity: str
    points: int
    worst_point: float
    max_residual: float
    tolerance: float
    passed: bool

    def row(self):
        return self.identity, self.points, self.worst_point, self.max_residual, self.tolerance, self.passed


class ThetaQuotientRow(BaseModel):
    E: float
    rho: float
    N: float
    member: bool


class ThetaQuotientReport(BaseModel):
    gamma: float
    tau: float
    k_max: int
    selected_E: List[float]
    max_quotient: Optional[float]
    unfiltered_max_quotient: Optional[float]
    rows: List[ThetaQuotientRow]


def regime_table(
    lambdas: Sequence[float],
    alpha: Frequency,
    epsilon: float = 0.0,
    v: Sequence = (),
    quantiles: Sequence[float] = REGIME_QUANTILES,
    n: Optional[int] = None,
    m: Optional[int] = None,
    schedule: Optional[Sequence[float]] = None,
    truncation: Optional[int] = None,
    tol: Optional[float] = None,
    n_jobs: Optional[int] = None,
) -> List[RegimeRow]:
    """L, ω and the regime label at quantile-sampled spectrum energies for each coupling."""
    rows = []
    for lam in lambdas:
        pot = PotentialSpec.amo(lam, epsilon, v)
        for E in quantile_energies(pot, alpha, quantiles, truncation):
            profile = acceleration(pot, alpha, E, schedule, n, m, n_jobs)
            try:
                regime = classify_regime(profile.L0, profile.omega_int, tol).value
            except UnclassifiableRegimeError:
                regime = "unclassifiable"
            rows.append(RegimeRow(
                lam=lam, E_sample=E, L=profile.L0, omega=profile.omega_int,
                regime=regime, healthy=profile.healthy, omega_residual=profile.omega_residual,
            ))
            logger.info(f"λ={lam} E={E:.5f}: L={profile.L0:.5f} ω={profile.omega_int} → {regime}")
    return rows


def _worst(identity: str, points: np.ndarray, residuals: np.ndarray, tolerance: float) -> IdentityRow:
    i = int(np.argmax(residuals))
    return IdentityRow(
        identity=identity,
        points=int(points.size),
        worst_point=float(points[i]),
        max_residual=float(residuals[i]),
        tolerance=tolerance,
        passed=bool(residuals[i] <= tolerance),
    )


def identity_residuals(
    pot: PotentialSpec,
    alpha: Frequency,
    n: Optional[int] = None,
    m: Optional[int] = None,
    rotation_n: Optional[int] = None,
    rotation_m: Optional[int] = None,
    ids_n: Optional[int] = None,
    ids_m: Optional[int] = None,
    eps: float = 0.1,
    tolerances: Optional[Dict[str, float]] = None,
    n_jobs: Optional[int] = None,
) -> List[IdentityRow]:
    """
    Residual table for N = 1 - 2ρ, the Thouless formula and ∂L/∂E = -Re G.

    Test points: 50 energies in [-2.5, 2.5] for the IDS relation, 20 real
    z in [-3, 3] for Thouless, 20 energies in [-4, 4] at height ``eps`` for
    the derivative identity.
    """
    tolerances = {**default_identity_tolerances(pot), **(tolerances or {})}
    rows = []

    grid = np.linspace(-2.5, 2.5, 50)
    counting = ids_counting(pot, alpha, grid, ids_n, ids_m, n_jobs)
    from_rho = np.array([ids_from_rotation(rotation_number(pot, alpha, E, rotation_n, rotation_m, n_jobs).rho)
                         for E in grid])
    rows.append(_worst("ids-rotation", grid, np.abs(counting.N_values - from_rho), tolerances["ids-rotation"]))

    fine = default_energy_grid(pot, points=4001)
    table = ids_counting(pot, alpha, fine, ids_n, ids_m, n_jobs)
    zs = np.linspace(-3.0, 3.0, 20)
    thouless_res = np.array([abs(thouless(table, z) - lyapunov(pot, alpha, z, 0.0, n, m, n_jobs)) for z in zs])
    rows.append(_worst("thouless", zs, thouless_res, tolerances["thouless"]))

    energies = np.linspace(-4.0, 4.0, 20)
    deriv = np.array([derivative_identity_residual(pot, alpha, E, eps, eps / 10.0, n, m, n_jobs) for E in energies])
    rows.append(_worst("derivative", energies, deriv, tolerances["derivative"]))

    for row in rows:
        log = logger.info if row.passed else logger.warning
        log(f"Identity {row.identity}: max residual {row.max_residual:.3g} (tolerance {row.tolerance})")
    return rows


def _max_quotient(E: np.ndarray, N: np.ndarray) -> Optional[float]:
    if E.size < 2:
        return None
    return float(np.max(np.abs(np.diff(N)) / np.diff(E)))


def theta_lipschitz_probe(
    pot: PotentialSpec,
    alpha: Frequency,
    E_grid: Sequence[float],
    gamma: Optional[float] = None,
    tau: Optional[float] = None,
    k_max: Optional[int] = None,
    n: Optional[int] = None,
    m: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> ThetaQuotientReport:
    """
    Max adjacent difference quotient of N = 1 - 2ρ over energies with ρ(E) ∈ Θ.

    Energies whose rotation number passes the Θ membership test are kept;
    the unfiltered quotient over the whole grid is reported alongside.
    """
    gamma = settings.THETA_GAMMA if gamma is None else gamma
    tau = settings.THETA_TAU if tau is None else tau
    k_max = settings.THETA_K_MAX if k_max is None else k_max
    E_grid = np.asarray(E_grid, dtype=np.float64)

    rows = []
    for E in E_grid:
        rho = rotation_number(pot, alpha, E, n, m, n_jobs).rho
        member = theta_membership(rho, alpha, gamma, tau, k_max).member
        rows.append(ThetaQuotientRow(E=float(E), rho=rho, N=ids_from_rotation(rho), member=member))

    N = np.array([r.N for r in rows])
    selected = np.array([r.member for r in rows], dtype=bool)
    if not selected.any():
        logger.warning(f"No grid energy has ρ in Θ(γ={gamma}, τ={tau}, k_max={k_max})")
    elif selected.sum() < 2:
        logger.warning("Only one selected energy; no difference quotient available")

    return ThetaQuotientReport(
        gamma=gamma,
        tau=tau,
        k_max=k_max,
        selected_E=E_grid[selected].tolist(),
        max_quotient=_max_quotient(E_grid[selected], N[selected]),
        unfiltered_max_quotient=_max_quotient(E_grid, N),
        rows=rows,
    )
