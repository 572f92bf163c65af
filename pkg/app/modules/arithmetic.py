"""
Continued fractions and Diophantine diagnostics for the frequency.

Frequencies are held at extended precision (mpmath) and every quantity of
the form k·alpha mod 1 is evaluated by exact integer arithmetic on a
fixed-point image of alpha, so long orbits never drift.
"""

import logging
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from mpmath import mp, mpf
from pydantic import BaseModel, ConfigDict, PositiveInt, model_validator

from app.config.settings import settings
from app.helpers.errors import InsufficientDepthError, PrecisionExhaustedError

logger = logging.getLogger(__name__)

RealLike = Union[str, float, int, Fraction, mpf]

BETA_TAIL = 5


def _to_mpf(x: RealLike) -> mpf:
    """Convert to mpf at the current working precision."""
    if isinstance(x, Fraction):
        return mpf(x.numerator) / x.denominator
    return mpf(x)


def _convergents(quotients: Sequence[int]) -> Tuple[Tuple[int, int], ...]:
    """Convergents p_k/q_k of [0; a_1, a_2, ...] by the three-term recurrence."""
    p_prev, p = 1, 0
    q_prev, q = 0, 1
    out = []
    for a in quotients:
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        out.append((p, q))
    return tuple(out)


def _fixed_point(value: mpf, bits: int) -> int:
    return int(mp.floor(value * mpf(2) ** bits))


@lru_cache(maxsize=64)
def _orbit_cached(fixed_point: int, bits: int, start: int, n: int) -> np.ndarray:
    mod = 1 << bits
    ks = np.arange(start, start + n, dtype=np.int64).astype(object)
    frac = ((ks * fixed_point) % mod).astype(np.float64) * 2.0 ** -bits
    frac[frac >= 1.0] -= 1.0
    frac.flags.writeable = False
    return frac


@dataclass(frozen=True)
class Frequency:
    """Irrational frequency alpha in (0, 1) with its continued-fraction data."""
    value: mpf
    quotients: Tuple[int, ...]
    convergents: Tuple[Tuple[int, int], ...]
    rational_detected: bool
    fixed_point: int
    bits: int

    @classmethod
    def build(cls, value: mpf, quotients: Sequence[int], rational_detected: bool = False) -> "Frequency":
        """Assemble a Frequency from a value and its partial quotients."""
        bits = settings.FIXED_POINT_BITS
        with mp.workdps(settings.MPMATH_DPS):
            fixed = _fixed_point(mpf(value), bits)
        return cls(
            value=mpf(value),
            quotients=tuple(int(a) for a in quotients),
            convergents=_convergents(quotients),
            rational_detected=rational_detected,
            fixed_point=fixed,
            bits=bits,
        )

    @classmethod
    def from_decimal(cls, text: str, depth: Optional[int] = None) -> "Frequency":
        """
        Ingest a decimal literal.

        The literal is read as the intended irrational known to half a unit in
        its last place. Without ``depth`` the expansion runs as far as the
        digits certify; with ``depth`` running out of digits is an error.
        """
        dec = Decimal(text.strip())
        sign, digits, exponent = dec.as_tuple()
        if len(digits) < 30:
            logger.warning(f"Frequency literal has only {len(digits)} significant digits")
        uncertainty = Fraction(1, 2) * Fraction(10) ** exponent
        return continued_fraction(
            text.strip(),
            depth if depth is not None else 10_000,
            uncertainty=uncertainty,
            strict=depth is not None,
        )

    @classmethod
    def from_quotients(cls, quotients: Sequence[int], tail: str = "golden") -> "Frequency":
        """
        Build alpha = [0; a_1, ..., a_d, tail] from exact partial quotients.

        ``tail="golden"`` completes the expansion with all ones, so the value is
        irrational and the stored quotients are exact. ``tail="none"`` gives the
        finite (rational) continued fraction.
        """
        if not quotients or any(int(a) < 1 for a in quotients):
            raise ValueError("quotients must be a non-empty list of positive integers")
        with mp.workdps(settings.MPMATH_DPS):
            if tail == "golden":
                t = (1 + mp.sqrt(5)) / 2
                for a in reversed(quotients):
                    t = a + 1 / t
                value = 1 / t
                rational = False
            elif tail == "none":
                t = mpf(quotients[-1])
                for a in reversed(quotients[:-1]):
                    t = a + 1 / t
                value = 1 / t
                rational = True
            else:
                raise ValueError(f"Unknown tail: {tail}")
            return cls.build(value, quotients, rational_detected=rational)

    @classmethod
    def golden_mean(cls, depth: int = 40) -> "Frequency":
        """(sqrt(5) - 1)/2 with ``depth`` stored quotients."""
        return cls.from_quotients([1] * depth)

    def __float__(self) -> float:
        return float(self.value)

    def to_literal(self) -> dict:
        with mp.workdps(settings.MPMATH_DPS):
            return {"decimal": mp.nstr(self.value, 40, strip_zeros=False)}

    def orbit(self, n: int, start: int = 0) -> np.ndarray:
        """Fractional parts of k·alpha for k = start .. start+n-1 (read-only, cached)."""
        return _orbit_cached(self.fixed_point, self.bits, start, n)

    def dist_to_integer(self, ks: np.ndarray, shift: Optional[RealLike] = None) -> np.ndarray:
        """
        Distance to the nearest integer of ``shift + k·alpha`` for each k.

        Args:
            ks: Integer array
            shift: Optional real offset (e.g. 2·theta)

        Returns:
            float64 array of ‖shift + k·alpha‖ in [0, 1/2]
        """
        mod = 1 << self.bits
        offset = 0
        if shift is not None:
            with mp.workdps(settings.MPMATH_DPS):
                offset = _fixed_point(_to_mpf(shift), self.bits) % mod
        ks_obj = np.asarray(ks, dtype=np.int64).astype(object)
        r = (ks_obj * self.fixed_point + offset) % mod
        d = np.minimum(r, mod - r)
        return d.astype(np.float64) * 2.0 ** -self.bits


def continued_fraction(
    x: RealLike,
    depth: int,
    uncertainty: RealLike = 0,
    strict: bool = True,
) -> Frequency:
    """
    Expand x in (0, 1) into partial quotients.

    The remainder's error is tracked as (input uncertainty + working
    precision)·(q_k + q_{k-1})². A remainder that vanishes within working
    precision ends the expansion with ``rational_detected``; a quotient the
    error interval cannot pin down raises PrecisionExhaustedError (or stops
    quietly when ``strict`` is False).

    Args:
        x: Real number as str, float, int, Fraction or mpf
        depth: Maximum number of quotients
        uncertainty: Absolute uncertainty of x (0 for exact inputs)
        strict: Raise instead of truncating when digits run out

    Returns:
        Frequency with at most ``depth`` quotients
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")

    with mp.workdps(settings.MPMATH_DPS):
        value = _to_mpf(x)
        if not (0 < value < 1):
            raise ValueError(f"x must lie in (0, 1), got {mp.nstr(value, 10)}")

        eps_w = mpf(10) ** (-(settings.MPMATH_DPS - 10))
        delta = _to_mpf(uncertainty)
        quotients: List[int] = []
        q_prev, q = 0, 1
        r = value
        rational = False

        while len(quotients) < depth:
            growth = (q + q_prev) ** 2
            if r == 0 or r <= eps_w * growth:
                rational = True
                break
            delta_r = (delta + eps_w) * growth
            if r <= 2 * delta_r:
                if strict:
                    raise PrecisionExhaustedError(
                        f"remainder {mp.nstr(r, 5)} below its uncertainty after {len(quotients)} quotients"
                    )
                break

            y = 1 / r
            delta_y = delta_r / (r * (r - delta_r))
            nearest = int(mp.nint(y))
            if delta == 0 and abs(y - nearest) <= delta_y:
                quotients.append(nearest)
                rational = True
                break

            lo = int(mp.floor(y - delta_y))
            hi = int(mp.floor(y + delta_y))
            if lo != hi:
                if strict:
                    raise PrecisionExhaustedError(
                        f"quotient {len(quotients) + 1} ambiguous between {lo} and {hi}"
                    )
                break

            quotients.append(lo)
            q_prev, q = q, lo * q + q_prev
            r = y - lo

        if not quotients:
            raise PrecisionExhaustedError("no partial quotient could be certified")
        if rational:
            logger.debug(f"Expansion terminated as rational after {len(quotients)} quotients")
        return Frequency.build(value, quotients, rational_detected=rational)


class FrequencyLiteral(BaseModel):
    """Frequency as it appears in config files."""
    model_config = ConfigDict(extra="forbid")

    decimal: Optional[str] = None
    quotients: Optional[List[PositiveInt]] = None
    depth: Optional[PositiveInt] = None

    @model_validator(mode="after")
    def exactly_one_form(self):
        if (self.decimal is None) == (self.quotients is None):
            raise ValueError("give exactly one of 'decimal' or 'quotients'")
        return self

    def to_frequency(self) -> Frequency:
        if self.quotients is not None:
            return Frequency.from_quotients(self.quotients)
        return Frequency.from_decimal(self.decimal, self.depth)


class DiophantineKind(str, Enum):
    SDC = "SDC"
    NOT_SDC = "not-SDC-within-range"
    RATIONAL = "rational-detected"


class DiophantineReport(BaseModel):
    """Outcome of a strong Diophantine scan over 1 <= |k| <= k_max."""
    kind: DiophantineKind
    kappa: float
    tau: float
    worst_k: int
    worst_margin: float
    k_max: int

    @property
    def best_kappa(self) -> float:
        """Largest kappa the scanned range supports."""
        return self.worst_margin


class BetaReport(BaseModel):
    """Estimate of the exponential Liouville exponent beta(alpha)."""
    tail: float
    overall: float
    argmax_n: int
    depth: int


class ThetaReport(BaseModel):
    """Membership of a phase in the set where ‖2θ + kα‖ >= γ/(|k|+1)^τ for |k| <= k_max."""
    member: bool
    witness_k: int
    witness_norm: float
    witness_bound: float
    k_max: int


def sdc_check(alpha: Frequency, kappa: float, tau: float, k_max: int) -> DiophantineReport:
    """
    Scan dist(k·alpha, Z) >= kappa / (|k|·max(1, ln|k|^tau)) for 1 <= k <= k_max.

    Negative k give the same distances, so only k > 0 is scanned.

    Returns:
        Report with the minimizing k and the margin |k|·max(1, ln|k|^tau)·dist(k·alpha, Z)
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if tau <= 1:
        raise ValueError("tau must exceed 1")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")

    if alpha.rational_detected:
        _, q_last = alpha.convergents[-1]
        return DiophantineReport(
            kind=DiophantineKind.RATIONAL, kappa=kappa, tau=tau,
            worst_k=q_last, worst_margin=0.0, k_max=k_max,
        )

    ks = np.arange(1, k_max + 1, dtype=np.int64)
    dist = alpha.dist_to_integer(ks)
    weight = np.maximum(1.0, np.log(ks.astype(np.float64)) ** tau)
    margins = ks * weight * dist
    i = int(np.argmin(margins))
    worst = float(margins[i])

    kind = DiophantineKind.SDC if worst >= kappa else DiophantineKind.NOT_SDC
    logger.debug(f"SDC scan k_max={k_max}: worst margin {worst:.6g} at k={ks[i]}")
    return DiophantineReport(
        kind=kind, kappa=kappa, tau=tau,
        worst_k=int(ks[i]), worst_margin=worst, k_max=k_max,
    )


def beta_exponent(alpha: Frequency) -> BetaReport:
    """
    Estimate beta = limsup -ln‖kα‖/k along the denominators q_n.

    Uses ‖q_n α‖ ≍ 1/q_{n+1}, i.e. ln(q_{n+1})/q_n; the tail value (last
    five convergents) is the headline estimate.
    """
    if alpha.rational_detected:
        raise InsufficientDepthError("beta is undefined for a rational frequency")
    qs = [q for _, q in alpha.convergents]
    if len(qs) < 3:
        raise InsufficientDepthError(f"need at least 3 convergents, have {len(qs)}")

    values = np.array([np.log(float(qs[i + 1])) / qs[i] for i in range(len(qs) - 1)])
    argmax = int(np.argmax(values))
    return BetaReport(
        tail=float(values[-BETA_TAIL:].max()),
        overall=float(values[argmax]),
        argmax_n=argmax + 1,
        depth=len(qs),
    )


def theta_membership(
    theta: RealLike,
    alpha: Frequency,
    gamma: float,
    tau: float,
    k_max: int,
) -> ThetaReport:
    """
    Test ‖2θ + kα‖ >= γ/(|k|+1)^τ for |k| <= k_max.

    Wavenumbers are scanned in order 0, -1, 1, -2, 2, ...; on failure the
    witness is the first violating k, otherwise the k closest to violation.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")

    mags = np.repeat(np.arange(1, k_max + 1, dtype=np.int64), 2)
    signs = np.tile(np.array([-1, 1], dtype=np.int64), k_max)
    ks = np.concatenate([np.zeros(1, dtype=np.int64), mags * signs])

    with mp.workdps(settings.MPMATH_DPS):
        shift = 2 * _to_mpf(theta)
    norms = alpha.dist_to_integer(ks, shift=shift)
    bounds = gamma / (np.abs(ks) + 1.0) ** tau
    violations = np.flatnonzero(norms < bounds)

    if violations.size:
        i = int(violations[0])
        member = False
    else:
        i = int(np.argmin(norms / bounds))
        member = True

    return ThetaReport(
        member=member,
        witness_k=int(ks[i]),
        witness_norm=float(norms[i]),
        witness_bound=float(bounds[i]),
        k_max=k_max,
    )
