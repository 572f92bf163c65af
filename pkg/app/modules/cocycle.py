"""
Schrödinger cocycles over a rotation and their renormalized products.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt

from app.config.settings import settings
from app.helpers.errors import OverflowGuardError
from app.modules.arithmetic import Frequency

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

ArrayLike = Union[float, complex, np.ndarray]


class HarmonicTerm(BaseModel):
    """One Fourier mode c·cos(2πkx) + s·sin(2πkx) of the perturbation v."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    k: PositiveInt
    cos: float = 0.0
    sin: float = 0.0


class PotentialSpec(BaseModel):
    """V(x) = 2λ·cos(2πx) + ε·v(x) with v a trigonometric polynomial."""
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    lam: float = Field(0.0, alias="lambda")
    epsilon: float = 0.0
    v: Tuple[HarmonicTerm, ...] = ()

    @classmethod
    def free(cls) -> "PotentialSpec":
        """V ≡ 0 (free Laplacian)."""
        return cls(lam=0.0, epsilon=0.0)

    @classmethod
    def amo(cls, lam: float, epsilon: float = 0.0, v: List[HarmonicTerm] = ()) -> "PotentialSpec":
        return cls(lam=lam, epsilon=epsilon, v=tuple(v))

    @classmethod
    def from_samples(
        cls,
        lam: float,
        epsilon: float,
        samples: np.ndarray,
        max_harmonic: int,
    ) -> Tuple["PotentialSpec", float]:
        """
        Truncate a sampled perturbation v to a trigonometric polynomial.

        Args:
            lam: AMO coupling
            epsilon: Perturbation strength
            samples: v(j/N) for j = 0..N-1
            max_harmonic: Highest harmonic kept

        Returns:
            (PotentialSpec, ℓ¹ bound of the discarded harmonics)
        """
        samples = np.asarray(samples, dtype=np.float64)
        n = samples.size
        if n < 2 * max_harmonic + 1:
            raise ValueError(f"need at least {2 * max_harmonic + 1} samples for max_harmonic={max_harmonic}")

        coeffs = np.fft.rfft(samples) / n
        if abs(coeffs[0]) > 1e-12:
            logger.warning(f"Dropping mean {coeffs[0].real:.3g} of v (shifts the energy axis)")

        cos_c = 2.0 * coeffs.real
        sin_c = -2.0 * coeffs.imag
        if n % 2 == 0:
            cos_c[-1] /= 2.0
            sin_c[-1] = 0.0

        terms = [
            HarmonicTerm(k=k, cos=float(cos_c[k]), sin=float(sin_c[k]))
            for k in range(1, min(max_harmonic, len(coeffs) - 1) + 1)
            if cos_c[k] != 0.0 or sin_c[k] != 0.0
        ]
        tail = float(np.sum(np.abs(cos_c[max_harmonic + 1:]) + np.abs(sin_c[max_harmonic + 1:])))
        logger.debug(f"Truncated v to {len(terms)} harmonics, tail bound {tail:.3g}")
        return cls(lam=lam, epsilon=epsilon, v=tuple(terms)), tail

    def evaluate(self, x: ArrayLike) -> ArrayLike:
        """V at real or complex x (exact analytic extension)."""
        x = np.asarray(x)
        out = 2.0 * self.lam * np.cos(TWO_PI * x)
        if self.epsilon != 0.0:
            for term in self.v:
                arg = TWO_PI * term.k * x
                out = out + self.epsilon * (term.cos * np.cos(arg) + term.sin * np.sin(arg))
        return out

    def evaluate_shifted(self, x: np.ndarray, shift: ArrayLike) -> np.ndarray:
        """
        V(x + i·shift) for real x, built from real cos/sin of x.

        ``shift`` broadcasts against the last axis of ``x``.
        """
        x = np.asarray(x, dtype=np.float64)
        shift = np.asarray(shift, dtype=np.float64)
        out = _shifted_mode(1, 2.0 * self.lam, 0.0, x, shift)
        if self.epsilon != 0.0:
            for term in self.v:
                out = out + self.epsilon * _shifted_mode(term.k, term.cos, term.sin, x, shift)
        return out

    def derivative_bound(self) -> float:
        """Bound on sup |V'| over the real line."""
        total = 2.0 * abs(self.lam)
        for term in self.v:
            total += abs(self.epsilon) * term.k * (abs(term.cos) + abs(term.sin))
        return float(TWO_PI * total)

    def analytic_norm(self, h: float) -> float:
        """Bound on sup |V| over the strip |Im x| <= h."""
        total = 2.0 * abs(self.lam) * np.exp(TWO_PI * h)
        for term in self.v:
            total += abs(self.epsilon) * (abs(term.cos) + abs(term.sin)) * np.exp(TWO_PI * term.k * h)
        return float(total)

    def sup_bound(self) -> float:
        return self.analytic_norm(0.0)

    def containment_interval(self) -> Tuple[float, float]:
        """[-2 - ‖V‖∞, 2 + ‖V‖∞], which contains the spectrum for every phase."""
        bound = 2.0 + self.sup_bound()
        return -bound, bound

    def is_even(self) -> bool:
        """True when V(-x) = V(x), i.e. no sine terms are active."""
        return self.epsilon == 0.0 or all(term.sin == 0.0 for term in self.v)


def _shifted_mode(k: int, c: float, s: float, x: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """c·cos(2πk(x+iy)) + s·sin(2πk(x+iy)) with y = shift."""
    arg = TWO_PI * k * x
    cos, sin = np.cos(arg), np.sin(arg)
    ch, sh = np.cosh(TWO_PI * k * shift), np.sinh(TWO_PI * k * shift)
    return (c * cos + s * sin) * ch + 1j * (s * cos - c * sin) * sh


@dataclass
class CocyclePoint:
    """Renormalized product: true product = matrix · exp(log_scale)."""
    matrix: np.ndarray
    log_scale: float

    def unscaled(self) -> np.ndarray:
        return self.matrix * np.exp(self.log_scale)

    def log_norm(self) -> float:
        """ln of the operator norm of the true product."""
        m = self.matrix
        return float(log_operator_norm(m[0, 0], m[0, 1], m[1, 0], m[1, 1], self.log_scale))

    def determinant_defect(self) -> float:
        """Relative deviation of the unscaled determinant from 1."""
        det = np.linalg.det(self.matrix.astype(np.complex128))
        return float(abs(det * np.exp(2.0 * self.log_scale) - 1.0))


def log_operator_norm(a, b, c, d, log_scale):
    """
    ln‖[[a, b], [c, d]]‖₂ + log_scale, elementwise.

    Uses σ_max² = (F + sqrt(F² - 4|det|²))/2 with F the squared Frobenius norm.
    """
    fro = np.abs(a) ** 2 + np.abs(b) ** 2 + np.abs(c) ** 2 + np.abs(d) ** 2
    det = np.abs(a * d - b * c)
    disc = np.sqrt(np.maximum(fro * fro - 4.0 * det * det, 0.0))
    return 0.5 * np.log(0.5 * (fro + disc)) + log_scale


def schrodinger_matrix(pot: PotentialSpec, E: complex, x: complex) -> np.ndarray:
    """S_E^V(x) = [[E - V(x), -1], [1, 0]]."""
    return np.array([[E - pot.evaluate(x), -1.0], [1.0, 0.0]], dtype=np.complex128)


def _is_real_problem(E: complex, eps_imag: np.ndarray) -> bool:
    return complex(E).imag == 0.0 and not np.any(eps_imag)


def propagate_phases(
    pot: PotentialSpec,
    E: complex,
    alpha: Frequency,
    phases: np.ndarray,
    eps_imag: Union[float, np.ndarray],
    n: int,
    start: int = 0,
) -> Tuple[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]:
    """
    Products A(x+(n-1)α)···A(x) for many phases x at once.

    Entries are renormalized every RESCALE_CADENCE steps, and earlier if the
    accumulated growth bound Σ ln(|E - V| + 2) since the last rescale would
    exceed OVERFLOW_LOG_BUDGET. The returned entries are rescaled once more
    after the final step, so each column has unit Frobenius norm.

    Args:
        pot: Potential
        E: Energy (complex allowed)
        alpha: Frequency
        phases: Real phases x0, shape (m,)
        eps_imag: Imaginary phase shift, scalar or one per phase
        n: Number of factors
        start: Orbit offset (product starts at x0 + start·α)

    Returns:
        ((a, b, c, d), log_scale), each of shape (m,)
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    phases = np.asarray(phases, dtype=np.float64)
    m = phases.shape[0]
    shifts = np.broadcast_to(np.asarray(eps_imag, dtype=np.float64), (m,))
    real = _is_real_problem(E, shifts)
    dtype = np.float64 if real else np.complex128
    energy = complex(E).real if real else complex(E)

    a = np.ones(m, dtype=dtype)
    b = np.zeros(m, dtype=dtype)
    c = np.zeros(m, dtype=dtype)
    d = np.ones(m, dtype=dtype)
    log_scale = np.zeros(m, dtype=np.float64)
    if n == 0:
        return (a, b, c, d), log_scale

    cadence = settings.RESCALE_CADENCE
    budget = settings.OVERFLOW_LOG_BUDGET
    orbit = alpha.orbit(n, start)
    since_rescale = 0.0

    def rescale():
        nonlocal a, b, c, d, log_scale
        norm = np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2 + np.abs(c) ** 2 + np.abs(d) ** 2)
        if not np.all(np.isfinite(norm)) or np.any(norm == 0.0):
            raise OverflowGuardError(f"non-finite product entries at E={E}, eps_imag<={shifts.max():.4g}")
        a, b, c, d = a / norm, b / norm, c / norm, d / norm
        log_scale = log_scale + np.log(norm)

    for block_start in range(0, n, cadence):
        steps = min(cadence, n - block_start)
        x = (phases[None, :] + orbit[block_start:block_start + steps, None]) % 1.0
        t = energy - (pot.evaluate(x) if real else pot.evaluate_shifted(x, shifts))
        growth = np.log(np.abs(t).max(axis=1) + 2.0)

        for j in range(steps):
            if since_rescale + growth[j] > budget:
                rescale()
                since_rescale = 0.0
            tj = t[j]
            a, b, c, d = tj * a - c, tj * b - d, a, b
            since_rescale += growth[j]

        rescale()
        since_rescale = 0.0

    return (a, b, c, d), log_scale


def phase_log_norms(
    pot: PotentialSpec,
    E: complex,
    alpha: Frequency,
    phases: np.ndarray,
    eps_imag: Union[float, np.ndarray],
    n: int,
) -> np.ndarray:
    """ln‖A_n(x + i·eps_imag)‖ for each phase x."""
    (a, b, c, d), log_scale = propagate_phases(pot, E, alpha, phases, eps_imag, n)
    return log_operator_norm(a, b, c, d, log_scale)


def transfer_product(
    pot: PotentialSpec,
    E: complex,
    alpha: Frequency,
    x0: float,
    eps_imag: float,
    n: int,
) -> CocyclePoint:
    """Renormalized product of n Schrödinger matrices along x0 + jα + i·eps_imag."""
    if eps_imag < 0:
        raise ValueError("eps_imag must be >= 0")
    (a, b, c, d), log_scale = propagate_phases(pot, E, alpha, np.array([x0]), eps_imag, n)
    matrix = np.array([[a[0], b[0]], [c[0], d[0]]])
    return CocyclePoint(matrix=matrix, log_scale=float(log_scale[0]))
