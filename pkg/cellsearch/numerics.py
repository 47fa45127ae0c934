"""
Series, quadrature and extended precision machinery shared by the analytic engine.
"""

import enum
import logging
import math
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import mpmath
import numpy as np
import pydantic as pd
from scipy import special

from . import errors
from .model import Scenario

logger = logging.getLogger(__name__)

DEFAULT_J_CAPS = {
    Scenario.NOISE_LIMITED: 1500,
    Scenario.INTERFERENCE_LIMITED: 100,
    Scenario.GENERAL: 100,
}

# certificate acceptance: error bound relative to the value
CERTIFICATE_REL_TOLERANCE = 1e-12
# bits lost by the extended precision inputs (quadrature, incomplete beta) before summation
INPUT_BITS_LOST = 12


class Transform(str, enum.Enum):
    """
    Substitution mapping the semi-infinite H-integral range onto a finite interval.
    """

    ATTENUATION = 'attenuation'  # x = Gamma / r^alpha
    INVERSE_RADIUS = 'inverse-radius'  # u = 1 / r


class QuadratureSpec(pd.BaseModel):
    """
    Double precision quadrature controls.

    :param rel_tolerance: relative error target
    :param abs_tolerance: absolute error target
    :param max_subdivisions: adaptive subdivision limit
    :param transform: finite-interval substitution for the H-integral
    """

    rel_tolerance: float = pd.Field(1e-9, gt=0)
    abs_tolerance: float = pd.Field(1e-12, gt=0)
    max_subdivisions: int = pd.Field(200, ge=1)
    transform: Transform = Transform.ATTENUATION

    class Config:
        frozen = True

    def tightened(self, factor: float = 0.5) -> 'QuadratureSpec':
        return QuadratureSpec(
            rel_tolerance=self.rel_tolerance * factor,
            abs_tolerance=self.abs_tolerance * factor,
            max_subdivisions=self.max_subdivisions * 2,
            transform=self.transform,
        )


DEFAULT_QUADRATURE = QuadratureSpec()


class Truncation(pd.BaseModel):
    """
    Series truncation and extended precision controls.

    :param j_cap: number of series terms summed at most (`j = 0 .. j_cap - 1`), scenario default if missing
    :param abs_tolerance: a term below it (and not above its predecessor) ends the series
    :param fit_margin: divergence is suspected when the fitted tail slope is at least `-1 - fit_margin`
    :param j_precision_cap: largest `j` evaluated by alternating sums, Monte Carlo beyond
    :param precision_scale: working precision bits per unit of `j`
    :param min_precision_bits: working precision floor
    :param guard_bits: extra working precision bits
    :param fallback_samples: topology samples per Monte Carlo fallback term
    """

    j_cap: Optional[int] = pd.Field(None, ge=1)
    abs_tolerance: float = pd.Field(1e-10, gt=0)
    fit_margin: float = pd.Field(0.05, ge=0)
    j_precision_cap: int = pd.Field(500, ge=1)
    precision_scale: float = pd.Field(1.5, gt=0)
    min_precision_bits: int = pd.Field(64, ge=53)
    guard_bits: int = pd.Field(24, ge=0)
    fallback_samples: int = pd.Field(20_000, ge=100)

    class Config:
        frozen = True

    def cap_for(self, scenario: Scenario) -> int:
        return self.j_cap if self.j_cap is not None else DEFAULT_J_CAPS[scenario]

    def precision_bits(self, j: int) -> int:
        """
        Working precision for an alternating binomial sum of order `j`.
        """

        base = max(self.min_precision_bits, math.ceil(self.precision_scale * j))
        needed = math.ceil(log2_max_binomial(j)) + 53

        return max(base, needed) + self.guard_bits

    @property
    def abs_floor(self) -> float:
        return self.abs_tolerance * 1e-2

    def doubled_precision(self) -> 'Truncation':
        return self.copy(update={
            'precision_scale': self.precision_scale * 2,
            'min_precision_bits': self.min_precision_bits * 2,
        })


DEFAULT_TRUNCATION = Truncation()


class SeriesStatus(str, enum.Enum):
    CONVERGED = 'converged'
    TRUNCATED_AT_CAP = 'truncated-at-cap'
    DIVERGENCE_SUSPECTED = 'divergence-suspected'


class SeriesResult(pd.BaseModel):
    """
    Truncated infinite series with convergence diagnostics.

    :param value: partial sum
    :param terms_used: number of summed terms
    :param last_term: last summed term
    :param status: convergence status
    :param tail_exponent_estimate: fitted `beta` in `term ~ c j^-beta` over the last decade of terms
    :param error_estimate: accumulated certificate and Monte Carlo error of the partial sum
    """

    value: float
    terms_used: int = pd.Field(..., ge=0)
    last_term: float
    status: SeriesStatus
    tail_exponent_estimate: Optional[float] = None
    error_estimate: float = 0.0

    class Config:
        frozen = True

    @pd.root_validator(skip_on_failure=True)
    def check_divergence_has_fit(cls, values: dict) -> dict:
        if values['status'] is SeriesStatus.DIVERGENCE_SUSPECTED and values['tail_exponent_estimate'] is None:
            raise ValueError("divergence requires a tail exponent estimate")

        return values

    @property
    def is_converged(self) -> bool:
        return self.status is SeriesStatus.CONVERGED


class SeriesTerm(NamedTuple):
    value: float
    error: float = 0.0


def log2_max_binomial(j: int) -> float:
    """
    `log2` of the central binomial coefficient, evaluated in log space.
    """

    if j <= 1:
        return 0.0

    k = j // 2
    return float((special.gammaln(j + 1) - special.gammaln(k + 1) - special.gammaln(j - k + 1)) / math.log(2))


def binomial_row(j: int) -> List[int]:
    """
    Exact binomial coefficients `C(j, 0) .. C(j, j)`.
    """

    row = [1]
    for k in range(j):
        row.append(row[-1] * (j - k) // (k + 1))

    return row


def alternating_binomial_sum(values: Sequence[mpmath.mpf], j: int, bits: int) -> Tuple[mpmath.mpf, mpmath.mpf]:
    """
    Evaluates `sum_k (-1)^k C(j, k) values[k]` at the current mpmath precision.

    :param values: `values[k]` for `k = 0 .. j`, computed at `bits` precision
    :param j: order
    :param bits: precision the values were computed with
    :return: sum and its absolute error bound
    """

    if len(values) < j + 1:
        raise ValueError(f"{j + 1} values required, got {len(values)}")

    terms = []
    max_term = mpmath.mpf(0)
    for k, coefficient in enumerate(binomial_row(j)):
        term = coefficient * values[k]
        terms.append(-term if k % 2 else term)
        max_term = max(max_term, abs(term))

    total = mpmath.fsum(terms)
    error = max_term * (j + 1) * mpmath.ldexp(1, -(bits - INPUT_BITS_LOST))

    return total, error


def certify(value: mpmath.mpf, error: mpmath.mpf, j: int, bits: int, abs_floor: float) -> float:
    """
    Checks the stability certificate of an alternating sum and clamps it to `[0, 1]`.

    :raises errors.PrecisionExceededError: if the error bound exceeds both the relative target and the floor
    """

    if error > max(abs(value) * CERTIFICATE_REL_TOLERANCE, abs_floor):
        raise errors.PrecisionExceededError(
            j, bits, f"error bound {mpmath.nstr(error, 3)} exceeds value {mpmath.nstr(value, 3)}",
        )

    return min(max(float(value), 0.0), 1.0)


def fit_tail_slope(terms: Sequence[float]) -> Optional[float]:
    """
    Least-squares slope of `log term` versus `log j` over the last decade of terms.
    """

    n = len(terms)
    start = max(1, n // 10)
    js = np.arange(start, n, dtype=float)
    values = np.asarray(terms[start:], dtype=float)

    mask = values > 0
    if np.count_nonzero(mask) < 5:
        return None

    slope, _ = np.polyfit(np.log(js[mask]), np.log(values[mask]), 1)
    return float(slope)


def accumulate_series(terms: Iterable[SeriesTerm], cap: int, truncation: Truncation) -> SeriesResult:
    """
    Sums a non-increasing non-negative series until convergence or the cap.

    :param terms: series terms starting from `j = 0`
    :param cap: maximum number of terms
    :param truncation: truncation controls
    :return: partial sum with diagnostics
    """

    history: List[float] = []
    errors_: List[float] = []
    status = SeriesStatus.TRUNCATED_AT_CAP
    previous = SeriesTerm(math.inf, 0.0)

    for j, term in enumerate(terms):
        if j >= cap:
            break

        slack = 2.0 * (term.error + previous.error) + 1e-9 * term.value + 1e-15
        if term.value > previous.value + slack:
            raise errors.NumericalError(
                f"series term {j} = {term.value!r} exceeds its predecessor {previous.value!r}",
            )

        value = min(term.value, previous.value)
        history.append(value)
        errors_.append(term.error)

        if value <= truncation.abs_tolerance and value <= previous.value:
            status = SeriesStatus.CONVERGED
            break

        previous = SeriesTerm(value, term.error)

    total = math.fsum(history)
    last_term = history[-1] if history else 0.0
    tail_exponent = None

    if status is not SeriesStatus.CONVERGED:
        if (slope := fit_tail_slope(history)) is not None:
            tail_exponent = -slope
            if slope >= -1.0 - truncation.fit_margin:
                status = SeriesStatus.DIVERGENCE_SUSPECTED

    logger.debug("series of %d terms: %s, sum %r", len(history), status.value, total)

    return SeriesResult(
        value=total,
        terms_used=len(history),
        last_term=last_term,
        status=status,
        tail_exponent_estimate=tail_exponent,
        error_estimate=math.fsum(errors_),
    )
