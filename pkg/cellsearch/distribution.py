"""
Distribution of the conditional mean cell search delay over the random distance to the nearest BS.
"""

import bisect
import logging
import math
import pathlib
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pydantic as pd
from scipy import interpolate

from . import analytic, errors, geometry
from .model import NetworkConfig, PathLossModel, delays_from_cycles
from .numerics import DEFAULT_QUADRATURE, DEFAULT_TRUNCATION, QuadratureSpec, Truncation

logger = logging.getLogger(__name__)

MIN_SAMPLES = 10_000
DEFAULT_PERCENTILES = (95.0, 50.0, 10.0)
AUDIT_POINTS = 50
AUDIT_TOLERANCE = 1e-3
BOOTSTRAP_RESAMPLES = 200
CURVATURE_THRESHOLD = 1.0
LOG_FLOOR = -690.0  # log(L - 1) of L = 1


class ConditionalValue(NamedTuple):
    cycles: float
    censored: bool


Evaluator = Callable[[float], ConditionalValue]


def conditional_evaluator(
        cfg: NetworkConfig,
        plm: PathLossModel,
        truncation: Truncation = DEFAULT_TRUNCATION,
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> Evaluator:
    """
    `r0 -> L(r0)`: the untruncated closed form for one beam, the series otherwise.
    A series that did not converge yields its partial sum marked as censored.
    """

    def evaluate(r0: float) -> ConditionalValue:
        if cfg.m_beams == 1 and math.isfinite(value := analytic.cond_mean_cycles_single_beam(r0, cfg, plm)):
            return ConditionalValue(value, False)

        result = analytic.cond_mean_cycles_given_r0(r0, cfg, plm, truncation, spec)
        return ConditionalValue(max(result.value, 1.0), not result.is_converged)

    return evaluate


def _log_excess(cycles: float) -> float:
    return math.log(cycles - 1.0) if cycles > 1.0 else LOG_FLOOR


class ConditionalGrid:
    """
    `L(r0)` tabulated on an adaptive grid and interpolated monotonically in `(log r0, log(L - 1))`.

    :param evaluate: exact evaluator
    :param r_lo: smallest radius to cover
    :param r_hi: largest radius to cover
    :param initial_points: log-spaced starting grid size
    :param max_points: refinement budget
    :param max_step: largest allowed jump of `log(L - 1)` between neighbours
    """

    def __init__(
            self,
            evaluate: Evaluator,
            r_lo: float,
            r_hi: float,
            initial_points: int = 17,
            max_points: int = 160,
            max_step: float = 0.2,
    ):
        if not 0 < r_lo <= r_hi:
            raise errors.DomainError(f"invalid grid range [{r_lo}, {r_hi}]")

        self._evaluate = evaluate
        self.radii: List[float] = []
        self.values: List[ConditionalValue] = []

        r_hi = max(r_hi, r_lo * (1 + 1e-9))
        for r in np.geomspace(r_lo, r_hi, initial_points):
            self._add(float(r))

        self._refine(max_points, max_step)
        self.censoring_radius = self._locate_censoring()
        self._interpolator = interpolate.PchipInterpolator(
            np.log(self.radii), [_log_excess(v.cycles) for v in self.values], extrapolate=True,
        )
        logger.debug("conditional grid of %d points, censoring from %r", len(self.radii), self.censoring_radius)

    def _add(self, r: float) -> ConditionalValue:
        value = self._evaluate(r)
        index = bisect.bisect(self.radii, r)
        self.radii.insert(index, r)
        self.values.insert(index, value)
        return value

    def _refine(self, max_points: int, max_step: float) -> None:
        while len(self.radii) < max_points:
            ys = [_log_excess(v.cycles) for v in self.values]
            coarse = [
                i for i in range(len(ys) - 1)
                if abs(ys[i + 1] - ys[i]) > max_step
                and LOG_FLOOR not in (ys[i], ys[i + 1])
                and not (self.values[i].censored or self.values[i + 1].censored)
                and self.radii[i + 1] > self.radii[i] * (1 + 1e-6)
            ]
            if not coarse:
                return

            for i in reversed(coarse[:max_points - len(self.radii)]):
                self._add(math.sqrt(self.radii[i] * self.radii[i + 1]))

        logger.warning("conditional grid refinement budget of %d points exhausted", max_points)

    def _locate_censoring(self, steps: int = 8) -> float:
        first = next((i for i, v in enumerate(self.values) if v.censored), None)
        if first is None:
            return math.inf
        if first == 0:
            return self.radii[0]

        lo, hi = self.radii[first - 1], self.radii[first]
        for _ in range(steps):
            mid = math.sqrt(lo * hi)
            if self._add(mid).censored:
                hi = mid
            else:
                lo = mid

        return hi

    def cycles(self, r: Union[float, np.ndarray]) -> np.ndarray:
        """
        Interpolated conditional mean cycle count, never below 1.
        """

        r = np.clip(np.asarray(r, dtype=float), self.radii[0], self.radii[-1])
        return 1.0 + np.exp(self._interpolator(np.log(r)))

    def censored(self, r: Union[float, np.ndarray]) -> np.ndarray:
        return np.asarray(r, dtype=float) >= self.censoring_radius

    def audit(self, radii: Sequence[float]) -> float:
        """
        Largest relative deviation of the interpolation from direct evaluation over non-censored radii.
        """

        worst = 0.0
        for r in radii:
            if self.censored(r):
                continue
            if (exact := self._evaluate(float(r))).censored:
                continue
            worst = max(worst, abs(float(self.cycles(r)) - exact.cycles) / exact.cycles)

        return worst


class TailFit(pd.BaseModel):
    """
    Log-log least-squares fit of the CCDF tail.

    :param slope: fitted slope of `log P(D >= t)` against `log t`
    :param intercept: fitted intercept
    :param fit_range: delays bounding the fitted decade
    :param r_squared: coefficient of determination
    :param ci: bootstrap 95% interval of the slope
    :param curved: the tail is not a straight line on log-log axes
    :param points: delays inside the fitted range
    """

    slope: float
    intercept: float
    fit_range: Tuple[float, float]
    r_squared: float
    ci: Tuple[float, float]
    curved: bool
    points: int

    class Config:
        frozen = True


class DelayDistribution(pd.BaseModel):
    """
    Sample of conditional mean delays, censored values sorted above all others.

    :param sorted_delays: delays in seconds, censored values are lower bounds
    :param censored: censoring flags aligned with `sorted_delays`
    :param sorted_cycles: conditional mean cycle counts aligned with `sorted_delays`
    :param ccdf_grid: `(t, P(D >= t))` pairs
    :param quantiles: percentile to delay, `inf`-free; censored quantiles are left out
    :param tail_fit: tail fit if enough tail mass
    :param audit_max_rel_error: interpolation audit result
    """

    sorted_delays: np.ndarray
    censored: np.ndarray
    sorted_cycles: np.ndarray
    ccdf_grid: List[Tuple[float, float]]
    quantiles: Dict[float, float]
    tail_fit: Optional[TailFit] = None
    audit_max_rel_error: float = 0.0

    class Config:
        frozen = True
        arbitrary_types_allowed = True

    @property
    def censored_count(self) -> int:
        return int(np.count_nonzero(self.censored))

    @property
    def size(self) -> int:
        return len(self.sorted_delays)


def _sorted_sample(delays: np.ndarray, censored: np.ndarray, cycles: np.ndarray) -> Tuple[np.ndarray, ...]:
    order = np.lexsort((delays, censored))
    arrays = (delays[order], censored[order], cycles[order])
    for array in arrays:
        array.setflags(write=False)

    return arrays


def _ccdf_counts(finite: np.ndarray, t: np.ndarray, censored_count: int) -> np.ndarray:
    # P(D >= t) numerators, censored values counted above every t
    return len(finite) - np.searchsorted(finite, t, side='left') + censored_count


def ccdf_at(dist: DelayDistribution, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Empirical `P(D >= t)`.
    """

    finite = dist.sorted_delays[:dist.size - dist.censored_count]
    result = _ccdf_counts(finite, np.asarray(t, dtype=float), dist.censored_count) / dist.size

    return float(result) if np.ndim(result) == 0 else result


def ccdf_grid(delays: np.ndarray, censored_count: int, points: int = 200) -> List[Tuple[float, float]]:
    n = len(delays) + censored_count
    if not len(delays):
        return []

    lo, hi = float(delays[0]), float(delays[-1])
    ts = np.unique(np.concatenate((np.geomspace(lo, hi, points), [hi]))) if lo > 0 else np.unique(delays)
    values = _ccdf_counts(delays, ts, censored_count) / n

    return [(float(t), float(p)) for t, p in zip(ts, values)]


def quantile_delay(dist: DelayDistribution, percentile: float) -> float:
    """
    Delay of the `percentile`-th percentile user, where higher percentiles are better placed users:
    the 95th percentile user is among the best 5% and the 10th percentile user among the worst 10%.

    :raises errors.IndeterminateQuantileError: the quantile falls into the censored mass
    """

    if not 0 < percentile < 100:
        raise errors.DomainError(f"percentile must be in (0, 100), got {percentile!r}")

    n = dist.size
    level = 1.0 - percentile / 100.0
    index = min(max(math.ceil(round(level * n, 9)) - 1, 0), n - 1)

    if dist.censored[index]:
        raise errors.IndeterminateQuantileError(percentile, float(dist.sorted_delays[index]))

    return float(dist.sorted_delays[index])


def _fit_line(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    r_squared = 1.0 - float(np.sum(residual ** 2) / total) if total > 0 else 1.0

    return float(slope), float(intercept), r_squared


def fit_tail(
        delays: np.ndarray,
        censored_count: int = 0,
        rng: Optional[np.random.Generator] = None,
        min_points: int = 100,
        top_count: int = 50,
        grid_points: int = 30,
        resamples: int = BOOTSTRAP_RESAMPLES,
) -> TailFit:
    """
    Fits `log P(D >= t)` against `log t` over the top decade of non-censored delays.

    The decade ends where `top_count` delays remain above; the slope interval is a multinomial
    bootstrap of the counts between grid points.

    :param delays: sorted non-censored delays
    :param censored_count: number of censored delays, all above the fitted range
    :raises errors.FitUnavailableError: fewer than `min_points` delays inside the decade
    """

    rng = rng if rng is not None else np.random.default_rng(0)
    n_finite = len(delays)
    if n_finite < max(min_points, top_count + 1):
        raise errors.FitUnavailableError(f"{n_finite} delays are too few for a tail fit", n_finite)

    t_hi = float(delays[n_finite - top_count])
    t_lo = t_hi / 10.0
    points = int(np.count_nonzero((delays >= t_lo) & (delays <= t_hi)))
    if not t_lo > 0 or points < min_points:
        raise errors.FitUnavailableError(f"{points} delays in the tail decade, {min_points} required", points)

    n = n_finite + censored_count
    ts = np.geomspace(t_lo, t_hi, grid_points)
    x = np.log(ts)
    counts = _ccdf_counts(delays, ts, censored_count)
    slope, intercept, r_squared = _fit_line(x, np.log(counts / n))

    quadratic = np.polyfit(x - x.mean(), np.log(counts / n), 2)[0]
    curved = abs(quadratic) * (x[-1] - x[0]) ** 2 > CURVATURE_THRESHOLD

    # bins: below each grid point, between grid points, above the last one
    bins = np.concatenate(([n - counts[0]], counts[:-1] - counts[1:], [counts[-1]]))
    slopes = []
    for resample in rng.multinomial(n, bins / n, size=resamples):
        above = np.cumsum(resample[::-1])[::-1][1:]
        if np.all(above > 0):
            slopes.append(_fit_line(x, np.log(above / n))[0])
    ci = (float(np.percentile(slopes, 2.5)), float(np.percentile(slopes, 97.5))) if slopes else (slope, slope)

    return TailFit(
        slope=slope,
        intercept=intercept,
        fit_range=(t_lo, t_hi),
        r_squared=r_squared,
        ci=ci,
        curved=bool(curved),
        points=points,
    )


def tail_exponent(dist: DelayDistribution, rng: Optional[np.random.Generator] = None) -> TailFit:
    finite = dist.sorted_delays[:dist.size - dist.censored_count]
    return fit_tail(finite, dist.censored_count, rng)


def distribution_from_delays(
        delays: Sequence[float],
        censored: Optional[Sequence[bool]] = None,
        cycles: Optional[Sequence[float]] = None,
        percentiles: Sequence[float] = DEFAULT_PERCENTILES,
        rng: Optional[np.random.Generator] = None,
        audit_max_rel_error: float = 0.0,
) -> DelayDistribution:
    """
    Assembles a distribution from a delay sample.
    """

    delays = np.asarray(delays, dtype=float)
    censored = np.zeros(len(delays), dtype=bool) if censored is None else np.asarray(censored, dtype=bool)
    cycles = np.full(len(delays), np.nan) if cycles is None else np.asarray(cycles, dtype=float)
    if not len(delays):
        raise errors.DomainError("empty delay sample")

    sorted_delays, sorted_censored, sorted_cycles = _sorted_sample(delays, censored, cycles)
    censored_count = int(np.count_nonzero(sorted_censored))
    finite = sorted_delays[:len(sorted_delays) - censored_count]

    try:
        tail_fit: Optional[TailFit] = fit_tail(finite, censored_count, rng)
    except errors.FitUnavailableError as e:
        logger.info("tail fit unavailable: %s", e)
        tail_fit = None

    dist = DelayDistribution(
        sorted_delays=sorted_delays,
        censored=sorted_censored,
        sorted_cycles=sorted_cycles,
        ccdf_grid=ccdf_grid(finite, censored_count),
        quantiles={},
        tail_fit=tail_fit,
        audit_max_rel_error=audit_max_rel_error,
    )

    quantiles = {}
    for percentile in percentiles:
        try:
            quantiles[percentile] = quantile_delay(dist, percentile)
        except errors.IndeterminateQuantileError as e:
            logger.info("quantile %s", e)

    return dist.copy(update={'quantiles': quantiles})


def build_delay_distribution(
        cfg: NetworkConfig,
        plm: PathLossModel,
        n_samples: int,
        truncation: Truncation = DEFAULT_TRUNCATION,
        rng: Optional[np.random.Generator] = None,
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
        percentiles: Sequence[float] = DEFAULT_PERCENTILES,
        evaluate: Optional[Evaluator] = None,
) -> DelayDistribution:
    """
    Draws nearest BS distances and converts their conditional mean cycle counts into delays.

    :param cfg: network configuration
    :param plm: path loss model
    :param n_samples: number of distance draws
    :param truncation: series truncation of the conditional means
    :param rng: random stream for the draws, the audit and the bootstrap
    :param spec: quadrature controls
    :param percentiles: quantiles to tabulate
    :param evaluate: conditional mean evaluator, :py:func:`conditional_evaluator` if missing
    :return: delay distribution
    """

    if n_samples < MIN_SAMPLES:
        raise errors.DomainError(f"at least {MIN_SAMPLES} samples required, got {n_samples}")

    rng = rng if rng is not None else np.random.default_rng(0)
    evaluate = evaluate or conditional_evaluator(cfg, plm, truncation, spec)

    r0 = geometry.sample_r0(cfg.lambda_bs, rng, size=n_samples)
    grid = ConditionalGrid(evaluate, float(np.min(r0)), float(np.max(r0)))

    audit_radii = rng.choice(r0, size=min(AUDIT_POINTS, n_samples), replace=False)
    audit_error = grid.audit(audit_radii)
    if audit_error > AUDIT_TOLERANCE:
        logger.warning("interpolation audit error %.3g exceeds %.3g", audit_error, AUDIT_TOLERANCE)

    cycles = grid.cycles(r0)
    censored = grid.censored(r0)
    if (count := int(np.count_nonzero(censored))) > 0:
        logger.warning("%d of %d conditional means censored at the series cap", count, n_samples)

    return distribution_from_delays(
        delays_from_cycles(cfg, cycles),
        censored,
        cycles,
        percentiles,
        rng,
        audit_error,
    )


def mean_cycles_sample(dist: DelayDistribution) -> Tuple[float, float]:
    """
    Sample mean of the conditional mean cycle count and its standard error.
    """

    cycles = dist.sorted_cycles
    return float(np.mean(cycles)), float(np.std(cycles, ddof=1) / math.sqrt(len(cycles)))


def write_ccdf(path: Union[str, pathlib.Path], dist: DelayDistribution, manifest: Optional[str] = None) -> None:
    with open(path, 'w') as stream:
        if manifest is not None:
            stream.write(f"# manifest: {manifest}\n")
        stream.write(f"# samples={dist.size} censored={dist.censored_count}\n")
        stream.write("t_seconds\tccdf\n")
        np.savetxt(stream, np.array(dist.ccdf_grid).reshape(-1, 2), delimiter='\t', fmt='%.10g')


def quantile_rows(dist: DelayDistribution, percentiles: Sequence[float]) -> List[Tuple[float, str]]:
    """
    `(percentile, delay)` rows, censored quantiles rendered as `> lower_bound`.
    """

    rows = []
    for percentile in percentiles:
        try:
            rows.append((percentile, repr(quantile_delay(dist, percentile))))
        except errors.IndeterminateQuantileError as e:
            rows.append((percentile, e.display))

    return rows


def write_quantiles(
        path: Union[str, pathlib.Path],
        dist: DelayDistribution,
        percentiles: Sequence[float],
        manifest: Optional[str] = None,
) -> None:
    with open(path, 'w') as stream:
        if manifest is not None:
            stream.write(f"# manifest: {manifest}\n")
        stream.write("percentile\tdelay_seconds_or_censored\n")
        for percentile, delay in quantile_rows(dist, percentiles):
            stream.write(f"{percentile!r}\t{delay}\n")
