"""
Analytic evaluation of the cell search cycle count.

The per-cycle detection probability `F` of the nearest BS of a sector is random through the network
realization. Its moments `E[F^k]` have closed forms or one-dimensional integrals, and the quantities of
interest are alternating binomial transforms of them:

* `A_j = E[(1 - F)^j] = sum_k (-1)^k C(j, k) E[F^k]` (non-detection of a sector within `j` cycles),
* `E[L] = sum_j A_j^M` over the `M` independent sectors,
* the same transforms conditioned on the distance to the nearest BS.

Alternating transforms cancel catastrophically, so they are evaluated with mpmath at a working precision
growing with `j` and checked against a stability certificate.
"""

import abc
import enum
import functools
import logging
import math
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
from scipy import integrate

from . import errors, geometry
from .geometry import Topology
from .model import NetworkConfig, PathLossModel, Scenario, noise_exponent, path_loss
from .numerics import DEFAULT_QUADRATURE, DEFAULT_TRUNCATION, QuadratureSpec, SeriesResult, SeriesTerm, Transform
from .numerics import Truncation, accumulate_series, alternating_binomial_sum, certify

logger = logging.getLogger(__name__)

FALLBACK_SEED = 0x5EED


class PhaseVerdict(str, enum.Enum):
    FINITE_MEAN = 'finite-mean'
    INFINITE_MEAN = 'infinite-mean'
    UNDETERMINED_BAND = 'undetermined-band'


class Method(str, enum.Enum):
    """
    Evaluation route of the alternating transforms.
    """

    AUTO = 'auto'
    CLOSED_FORM = 'closed-form'  # H-integral moments, interference limited single slope only
    QUADRATURE = 'quadrature'  # moments by quadrature against the nearest-in-sector law
    POWER = 'power'  # (1 - exp(-s))^j directly, noise limited only


def resolve_method(cfg: NetworkConfig, plm: PathLossModel, method: Method = Method.AUTO) -> Method:
    if method is Method.AUTO:
        if cfg.scenario is Scenario.NOISE_LIMITED:
            return Method.POWER
        if cfg.scenario is Scenario.INTERFERENCE_LIMITED and plm.is_single_slope:
            return Method.CLOSED_FORM
        return Method.QUADRATURE

    if method is Method.POWER and cfg.scenario is not Scenario.NOISE_LIMITED:
        raise errors.UnsupportedScenarioError("the power form requires a noise limited scenario")
    if method is Method.CLOSED_FORM and not (
            cfg.scenario is Scenario.INTERFERENCE_LIMITED and plm.is_single_slope
    ):
        raise errors.UnsupportedScenarioError("the closed form requires an interference limited single slope model")

    return method


# ---------------------------------------------------------------------------------------------------------------------
# per-topology evaluation
# ---------------------------------------------------------------------------------------------------------------------

def sector_detection_probabilities(topology: Topology, cfg: NetworkConfig, plm: PathLossModel) -> List[float]:
    """
    Rayleigh detection probability of the nearest BS of every sector, `0` for empty sectors.
    """

    m_beams = cfg.m_beams
    nearest = geometry.nearest_per_sector(topology, m_beams)
    far_field = geometry.sector_attenuations(topology, cfg, plm, nearest)
    sectors = geometry.sector_indices(topology.points, m_beams) if len(topology) else np.empty(0, dtype=int)
    losses = path_loss(plm, topology.distances)

    probabilities = []
    for i, entry in enumerate(nearest):
        if entry is None:
            probabilities.append(0.0)
            continue

        l0 = losses[entry.index]
        if l0 == 0:
            probabilities.append(1.0)
            continue

        log_p = -noise_exponent(cfg, plm, entry.distance) - far_field[i]
        if cfg.has_interference:
            others = (sectors == i + 1)
            others[entry.index] = False
            log_p -= float(np.sum(np.log1p(cfg.sinr_threshold * l0 / losses[others])))

        probabilities.append(math.exp(log_p))

    return probabilities


def detection_probability_given_topology(
        topology: Topology,
        sector: geometry.SectorIndex,
        cfg: NetworkConfig,
        plm: PathLossModel,
) -> float:
    """
    Probability that the nearest BS of a sector is detected in one cycle given the BS positions.

    :param topology: BS positions
    :param sector: 1-based sector index
    :param cfg: network configuration
    :param plm: path loss model
    :return: detection probability, `0` for an empty sector
    """

    if not 1 <= sector <= cfg.m_beams:
        raise errors.DomainError(f"sector {sector} is out of range 1..{cfg.m_beams}")

    return sector_detection_probabilities(topology, cfg, plm)[sector - 1]


def cycle_success_probability(topology: Topology, cfg: NetworkConfig, plm: PathLossModel) -> float:
    """
    `1 - prod_i (1 - p_i)`: probability that at least one sector is detected in a cycle.
    """

    probabilities = np.asarray(sector_detection_probabilities(topology, cfg, plm))
    if np.any(probabilities >= 1.0):
        return 1.0

    return float(-np.expm1(np.sum(np.log1p(-probabilities))))


def mean_cycles_given_topology(topology: Topology, cfg: NetworkConfig, plm: PathLossModel) -> float:
    """
    Mean number of cycles until success in a fixed network, `inf` if no sector can be detected.
    """

    success = cycle_success_probability(topology, cfg, plm)
    if success <= 0.0:
        logger.info("no detectable sector in a topology of %d BSs", len(topology))
        return math.inf

    return 1.0 / success


# ---------------------------------------------------------------------------------------------------------------------
# interference integrals
# ---------------------------------------------------------------------------------------------------------------------

def _phi_ratio(k: int, t: float) -> float:
    # (1 - (1 + t)^-k) / t, equal to k at t = 0 where the endpoint weighted quadrature samples it
    if t == 0.0:
        return float(k)

    return -math.expm1(-k * math.log1p(t)) / t


def h_integral(k: int, alpha: float, gamma: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """
    `H(k, alpha, gamma) = int_1^inf (1 - (1 + gamma / r^alpha)^-k) r dr` by adaptive quadrature
    with an algebraic endpoint weight on a finite interval.

    :raises errors.DivergentIntegralError: for `alpha <= 2` and `k >= 1`
    """

    if k < 0:
        raise errors.DomainError(f"k must be non-negative, got {k}")
    if not gamma > 0:
        raise errors.DomainError(f"gamma must be positive, got {gamma!r}")
    if k == 0:
        return 0.0
    if alpha <= 2:
        raise errors.DivergentIntegralError(f"H-integral diverges for alpha={alpha} <= 2")

    options = dict(epsabs=spec.abs_tolerance, epsrel=spec.rel_tolerance, limit=spec.max_subdivisions)

    if spec.transform is Transform.ATTENUATION:
        # x = gamma r^-alpha: H = gamma^delta / alpha * int_0^gamma (phi(x) / x) x^-delta dx
        delta = 2.0 / alpha
        value, _ = integrate.quad(
            lambda x: _phi_ratio(k, x),
            0.0, gamma, weight='alg', wvar=(-delta, 0.0), **options,
        )
        return gamma ** delta / alpha * value

    elif spec.transform is Transform.INVERSE_RADIUS:
        # u = 1 / r: H = int_0^1 (phi(gamma u^alpha) / u^alpha) u^(alpha - 3) du
        value, _ = integrate.quad(
            lambda u: gamma * _phi_ratio(k, gamma * u ** alpha),
            0.0, 1.0, weight='alg', wvar=(alpha - 3.0, 0.0), **options,
        )
        return value

    else:
        raise AssertionError("unreachable")


def _segment_antiderivative(x: mpmath.mpf, k: int, delta: mpmath.mpf) -> mpmath.mpf:
    # integral of (1 - (1 + t)^-k) t^(-delta - 1) over (0, x], 0 < delta < 1
    if x == 0:
        return mpmath.mpf(0)

    head = -(1 - (1 + x) ** -k) * x ** -delta / delta
    tail = k / delta * mpmath.betainc(1 - delta, k + delta, 0, x / (1 + x))

    return head + tail


def _power_segment_integral(k: int, scale: mpmath.mpf, alpha: float, r_lo: float, r_hi: float) -> mpmath.mpf:
    # int_{r_lo}^{r_hi} (1 - (1 + scale r^-alpha)^-k) r dr
    if k == 0 or scale == 0:
        return mpmath.mpf(0)

    r_lo_mp = mpmath.mpf(r_lo)
    if alpha <= 2:
        if math.isinf(r_hi):
            return mpmath.inf
        return mpmath.quad(lambda r: (1 - (1 + scale * r ** -alpha) ** -k) * r, [r_lo_mp, r_hi])

    alpha_mp = mpmath.mpf(alpha)
    delta = 2 / alpha_mp
    x_lo = scale * r_lo_mp ** -alpha_mp
    x_hi = mpmath.mpf(0) if math.isinf(r_hi) else scale * mpmath.mpf(r_hi) ** -alpha_mp

    return scale ** delta / alpha_mp * (
        _segment_antiderivative(x_lo, k, delta) - _segment_antiderivative(x_hi, k, delta)
    )


def _path_loss_mp(plm: PathLossModel, r: mpmath.mpf) -> mpmath.mpf:
    if r < plm.r_critical:
        return plm.c_los * r ** mpmath.mpf(plm.alpha_los)
    else:
        return plm.c_nlos * r ** mpmath.mpf(plm.alpha_nlos)


def _interference_integral_mp(k: int, r1: mpmath.mpf, gamma: float, plm: PathLossModel) -> mpmath.mpf:
    l1 = _path_loss_mp(plm, r1)

    return mpmath.fsum(
        _power_segment_integral(k, gamma * l1 / segment.c, segment.alpha, segment.r_lo, segment.r_hi)
        for segment in plm.segments(float(r1))
    )


def interference_integral(k: int, r1: float, cfg: NetworkConfig, plm: PathLossModel) -> float:
    """
    `int_{r1}^inf (1 - (1 + Gamma l(r1) / l(r))^-k) r dr` for a dual-slope path loss.
    """

    if r1 < 0:
        raise errors.DomainError(f"distance must be non-negative, got {r1!r}")

    with mpmath.workdps(30):
        return float(_interference_integral_mp(k, mpmath.mpf(r1), cfg.sinr_threshold, plm))


@functools.lru_cache(maxsize=16384)
def h_integral_exact(k: int, alpha: float, gamma: float, bits: int = 53) -> mpmath.mpf:
    """
    `H(k, alpha, gamma)` in closed form through the incomplete beta function at `bits` precision.
    """

    if k == 0:
        return mpmath.mpf(0)
    if alpha <= 2:
        raise errors.DivergentIntegralError(f"H-integral diverges for alpha={alpha} <= 2")

    with mpmath.workprec(bits):
        gamma_mp = mpmath.mpf(gamma)
        delta = 2 / mpmath.mpf(alpha)
        incomplete = mpmath.betainc(1 - delta, k + delta, 0, gamma_mp / (1 + gamma_mp))
        value = (k * gamma_mp ** delta * incomplete - (1 - (1 + gamma_mp) ** -k)) / 2

    return +value


# ---------------------------------------------------------------------------------------------------------------------
# detection probability moments
# ---------------------------------------------------------------------------------------------------------------------

class DetectionKernel(abc.ABC):
    """
    Moments of the per-cycle detection probability `F` of the nearest BS of one sector.
    All methods evaluate at the current mpmath precision.
    """

    def __init__(self, cfg: NetworkConfig, plm: PathLossModel):
        self.cfg = cfg
        self.plm = plm
        self.density = mpmath.mpf(cfg.lambda_bs) * mpmath.pi / cfg.m_beams  # u = density * r^2
        self._cache: Dict[Tuple[str, int, float, int], mpmath.mpf] = {}

    def _cached(self, kind: str, k: int, r: float, compute: Callable[[], mpmath.mpf]) -> mpmath.mpf:
        key = (kind, k, r, mpmath.mp.prec)
        if (value := self._cache.get(key)) is None:
            value = self._cache[key] = compute()
        return value

    def reduced_distance(self, r: float) -> mpmath.mpf:
        return self.density * mpmath.mpf(r) ** 2

    @abc.abstractmethod
    def conditional_moment(self, k: int, r: float) -> mpmath.mpf:
        """
        `E[F^k | R = r]` where `R` is the distance to the nearest BS of the sector.
        """

    @abc.abstractmethod
    def moment(self, k: int) -> mpmath.mpf:
        """
        `E[F^k]`.
        """

    @abc.abstractmethod
    def tail_moment(self, k: int, r0: float) -> mpmath.mpf:
        """
        `E[F^k; R > r0] / P(R > r0)`.
        """


class ClosedFormKernel(DetectionKernel):
    """
    Interference limited single slope path loss: `E[F^k | R = r] = exp(-2 u H_k)` with `u = lambda pi r^2 / M`,
    which makes the unconditioned moments `1 / (1 + 2 H_k)` independent of the intensity.
    """

    def h(self, k: int) -> mpmath.mpf:
        return h_integral_exact(k, self.plm.alpha_nlos, self.cfg.sinr_threshold, mpmath.mp.prec)

    def conditional_moment(self, k: int, r: float) -> mpmath.mpf:
        return mpmath.exp(-2 * self.reduced_distance(r) * self.h(k))

    def moment(self, k: int) -> mpmath.mpf:
        return 1 / (1 + 2 * self.h(k))

    def tail_moment(self, k: int, r0: float) -> mpmath.mpf:
        return self.conditional_moment(k, r0) * self.moment(k)


class QuadratureKernel(DetectionKernel):
    """
    Any scenario and path loss: conditional moments from the noise exponent and the interference integral,
    unconditioned moments by tanh-sinh quadrature against the nearest-in-sector law split at the critical radius.
    """

    def _conditional_moment(self, k: int, r: float) -> mpmath.mpf:
        r_mp = mpmath.mpf(r)
        exponent = mpmath.mpf(0)

        if self.cfg.has_noise:
            scale = mpmath.mpf(self.cfg.noise_power) * self.cfg.sinr_threshold / (self.cfg.power_tx * self.cfg.m_beams)
            exponent += k * scale * _path_loss_mp(self.plm, r_mp)

        if self.cfg.has_interference and k > 0:
            integral = _interference_integral_mp(k, r_mp, self.cfg.sinr_threshold, self.plm)
            if mpmath.isinf(integral):
                return mpmath.mpf(0)
            exponent += 2 * self.density * integral

        return mpmath.exp(-exponent)

    def conditional_moment(self, k: int, r: float) -> mpmath.mpf:
        return self._cached('conditional', k, r, functools.partial(self._conditional_moment, k, r))

    def _distance(self, u: mpmath.mpf) -> float:
        return float(mpmath.sqrt(u / self.density))

    def _moment_from(self, k: int, u0: mpmath.mpf) -> mpmath.mpf:
        u_critical = self.reduced_distance(self.plm.r_critical)
        points = [mpmath.mpf(0)]
        if u_critical > u0:
            points.append(u_critical - u0)
        points.append(mpmath.inf)

        return mpmath.quad(
            lambda t: self._conditional_moment(k, mpmath.sqrt((u0 + t) / self.density)) * mpmath.exp(-t),
            points,
        )

    def moment(self, k: int) -> mpmath.mpf:
        if k == 0:
            return mpmath.mpf(1)
        return self._cached('moment', k, 0.0, functools.partial(self._moment_from, k, mpmath.mpf(0)))

    def tail_moment(self, k: int, r0: float) -> mpmath.mpf:
        if k == 0:
            return mpmath.mpf(1)
        return self._cached('tail', k, r0, functools.partial(self._moment_from, k, self.reduced_distance(r0)))


def build_kernel(cfg: NetworkConfig, plm: PathLossModel, method: Method = Method.AUTO) -> DetectionKernel:
    method = resolve_method(cfg, plm, method)
    if method is Method.CLOSED_FORM:
        return ClosedFormKernel(cfg, plm)
    elif method in (Method.QUADRATURE, Method.POWER):
        return QuadratureKernel(cfg, plm)
    else:
        raise AssertionError("unreachable")


def _certified_transform(
        moments: Sequence[mpmath.mpf], j: int, bits: int, truncation: Truncation,
) -> Tuple[float, float]:
    total, error = alternating_binomial_sum(moments, j, bits)
    return certify(total, error, j, bits, truncation.abs_floor), float(error)


# ---------------------------------------------------------------------------------------------------------------------
# noise limited power forms
# ---------------------------------------------------------------------------------------------------------------------

def noise_limited_tail_integrals(
        cfg: NetworkConfig,
        plm: PathLossModel,
        r0: float,
        n_terms: int,
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> Tuple[np.ndarray, float]:
    """
    `E[(1 - F)^j | R > r0]` for `j = 0 .. n_terms - 1` in the noise limited scenario, where
    `1 - F = 1 - exp(-s(R))`. With `r0 = 0` these are the `A_j`.

    :return: values and the quadrature error estimate
    """

    lambda_pi = cfg.lambda_bs * math.pi / cfg.m_beams
    u0 = lambda_pi * r0 ** 2
    js = np.arange(n_terms, dtype=float)

    def integrand(t: float) -> np.ndarray:
        r = math.sqrt((u0 + t) / lambda_pi)
        s = noise_exponent(cfg, plm, r)
        with np.errstate(divide='ignore', invalid='ignore'):
            powers = np.exp(js * math.log(-math.expm1(-s))) if s > 0 else np.zeros(n_terms)
        powers[0] = 1.0
        return powers * math.exp(-t)

    options = dict(
        epsabs=spec.abs_tolerance, epsrel=spec.rel_tolerance, norm='max', limit=spec.max_subdivisions,
    )

    pieces = [0.0]
    if (t_critical := lambda_pi * plm.r_critical ** 2 - u0) > 0:
        pieces.append(t_critical)
    pieces.append(math.inf)

    total = np.zeros(n_terms)
    error = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        value, err = integrate.quad_vec(integrand, lo, hi, **options)
        total += value
        error += err

    return np.clip(total, 0.0, 1.0), error


def mean_cycles_noise_limited(
        cfg: NetworkConfig,
        plm: PathLossModel,
        truncation: Truncation = DEFAULT_TRUNCATION,
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> SeriesResult:
    """
    `sum_j A_j^M` with `A_j = E[(1 - exp(-s(R)))^j]` evaluated directly, no alternating sum involved.
    """

    if cfg.scenario is not Scenario.NOISE_LIMITED:
        raise errors.UnsupportedScenarioError(f"noise limited scenario required, got {cfg.scenario.value}")

    cap = truncation.cap_for(cfg.scenario)
    a_values, error = noise_limited_tail_integrals(cfg, plm, 0.0, cap, spec)
    m_beams = cfg.m_beams

    terms = (
        SeriesTerm(a ** m_beams, m_beams * a ** (m_beams - 1) * error)
        for a in a_values
    )
    result = accumulate_series(terms, cap, truncation)
    logger.info("noise limited mean cycles M=%d: %s after %d terms", m_beams, result.status.value, result.terms_used)

    return result


# ---------------------------------------------------------------------------------------------------------------------
# unconditioned series
# ---------------------------------------------------------------------------------------------------------------------

def detection_probability_samples(
        cfg: NetworkConfig,
        plm: PathLossModel,
        samples: int,
        rng: np.random.Generator,
) -> np.ndarray:
    """
    Draws of the per-cycle detection probability of the nearest BS of one sector over PPP realizations.
    """

    m_beams = cfg.m_beams
    wedge = cfg.lambda_bs * math.pi / m_beams
    window = geometry.default_window_radius(cfg.lambda_bs, m_beams)
    r1 = geometry.sample_nearest_in_sector_distance(cfg.lambda_bs, m_beams, rng, size=samples)

    result = np.empty(samples)
    for i, r in enumerate(r1):
        radius = max(window, 2 * r)
        l1 = path_loss(plm, r)
        log_p = -noise_exponent(cfg, plm, r)

        if cfg.has_interference and l1 > 0:
            count = rng.poisson(wedge * (radius ** 2 - r ** 2))
            others = np.sqrt(radius ** 2 - (radius ** 2 - r ** 2) * rng.random(count))
            log_p -= float(np.sum(np.log1p(cfg.sinr_threshold * l1 / path_loss(plm, others))))
            log_p -= geometry.far_field_attenuation(l1, cfg, plm, radius)

        result[i] = math.exp(log_p)

    return result


def a_j_monte_carlo(
        j: int,
        cfg: NetworkConfig,
        plm: PathLossModel,
        samples: int = 100_000,
        rng: Optional[np.random.Generator] = None,
) -> Tuple[float, float]:
    """
    Monte Carlo estimate of `A_j = E[(1 - F)^j]` over topologies.

    :return: estimate and its standard error
    """

    rng = rng if rng is not None else np.random.default_rng(FALLBACK_SEED)
    values = (1.0 - detection_probability_samples(cfg, plm, samples, rng)) ** j

    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(samples))


def _a_terms(
        cfg: NetworkConfig,
        plm: PathLossModel,
        cap: int,
        truncation: Truncation,
        spec: QuadratureSpec,
        method: Method,
) -> Iterator[SeriesTerm]:
    # yields A_j with its error for j = 0 .. cap - 1
    if method is Method.POWER:
        values, error = noise_limited_tail_integrals(cfg, plm, 0.0, cap, spec)
        yield from (SeriesTerm(float(value), error) for value in values)
        return

    kernel = build_kernel(cfg, plm, method)
    exact_cap = min(cap - 1, truncation.j_precision_cap)
    precision = truncation
    bits = precision.precision_bits(exact_cap)
    moments: List[mpmath.mpf] = []
    fallback: Optional[np.ndarray] = None

    def exact_term(j: int) -> Optional[SeriesTerm]:
        # one retry at doubled working precision before giving up on the alternating sum
        nonlocal precision, bits, moments
        while True:
            try:
                with mpmath.workprec(bits):
                    while len(moments) <= j:
                        moments.append(kernel.moment(len(moments)))
                    value, error = _certified_transform(moments, j, bits, precision)
                return SeriesTerm(value, error)
            except errors.PrecisionExceededError as e:
                if precision is not truncation:
                    logger.warning("alternating sum failed (%s), switching to Monte Carlo", e)
                    return None

                precision = truncation.doubled_precision()
                bits = precision.precision_bits(exact_cap)
                moments = []
                logger.info("alternating sum failed (%s), retrying at %d bits", e, bits)

    for j in range(cap):
        if fallback is None and j <= exact_cap:
            if (term := exact_term(j)) is not None:
                yield term
                continue

        if fallback is None:
            logger.warning("Monte Carlo estimate of A_j from j=%d on, %d samples", j, truncation.fallback_samples)
            fallback = 1.0 - detection_probability_samples(
                cfg, plm, truncation.fallback_samples, np.random.default_rng(FALLBACK_SEED),
            )

        values = fallback ** j
        yield SeriesTerm(float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(len(values))))


def a_j(
        j: int,
        cfg: NetworkConfig,
        plm: PathLossModel,
        truncation: Truncation = DEFAULT_TRUNCATION,
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
        method: Method = Method.AUTO,
) -> float:
    """
    `A_j = E[(1 - F)^j]`, the probability that a sector is not detected within `j` cycles.

    :raises errors.PrecisionExceededError: if `j` exceeds the precision budget of the alternating sum;
        :py:func:`a_j_monte_carlo` is the fallback
    """

    if j < 0:
        raise errors.DomainError(f"j must be non-negative, got {j}")
    if j == 0:
        return 1.0

    method = resolve_method(cfg, plm, method)
    if method is Method.POWER:
        values, _ = noise_limited_tail_integrals(cfg, plm, 0.0, j + 1, spec)
        return float(values[j])

    if j > truncation.j_precision_cap:
        raise errors.PrecisionExceededError(j, truncation.precision_bits(j), "beyond the precision cap")

    kernel = build_kernel(cfg, plm, method)
    bits = truncation.precision_bits(j)
    with mpmath.workprec(bits):
        moments = [kernel.moment(k) for k in range(j + 1)]
        value, _ = _certified_transform(moments, j, bits, truncation)

    return value


def mean_cycles(
        cfg: NetworkConfig,
        plm: PathLossModel,
        truncation: Truncation = DEFAULT_TRUNCATION,
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
        method: Method = Method.AUTO,
) -> SeriesResult:
    """
    Mean number of cycles `E[L] = sum_j A_j^M` truncated at convergence or at the cap.
    """

    method = resolve_method(cfg, plm, method)
    if method is Method.POWER:
        return mean_cycles_noise_limited(cfg, plm, truncation, spec)

    cap = truncation.cap_for(cfg.scenario)
    m_beams = cfg.m_beams
    terms = (
        SeriesTerm(a.value ** m_beams, m_beams * a.value ** (m_beams - 1) * a.error)
        for a in _a_terms(cfg, plm, cap, truncation, spec, method)
    )
    result = accumulate_series(terms, cap, truncation)
    logger.info(
        "mean cycles M=%d (%s): %s after %d terms", m_beams, method.value, result.status.value, result.terms_used,
    )

    return result


def lower_bound_mean_cycles(
        cfg: NetworkConfig,
        plm: PathLossModel,
        truncation: Truncation = DEFAULT_TRUNCATION,
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """
    Jensen lower bound `1 / (1 - A_1^M)`.

    :raises errors.DegenerateConfigError: if no sector can ever be detected (`A_1 = 1`)
    """

    a1 = a_j(1, cfg, plm, truncation, spec)
    if a1 >= 1.0:
        raise errors.DegenerateConfigError("A_1 = 1: sectors are never detected")

    return 1.0 / (1.0 - a1 ** cfg.m_beams)


def interference_beam_threshold(cfg: NetworkConfig, plm: PathLossModel) -> float:
    """
    `2 Gamma / (alpha - 2)`: beam counts above it give a finite mean in an interference limited network.
    """

    if plm.alpha_nlos <= 2:
        return math.inf

    return 2 * cfg.sinr_threshold / (plm.alpha_nlos - 2)


def upper_bound_mean_cycles_interference(cfg: NetworkConfig, plm: PathLossModel) -> float:
    """
    `M (alpha - 2) / (M (alpha - 2) - 2 Gamma)` or `inf` when `M <= 2 Gamma / (alpha - 2)`.

    :raises errors.DivergentIntegralError: for `alpha <= 2`, where the mean diverges for every `M`
    """

    if cfg.scenario is not Scenario.INTERFERENCE_LIMITED:
        raise errors.UnsupportedScenarioError(f"interference limited scenario required, got {cfg.scenario.value}")
    if not plm.is_single_slope:
        raise errors.UnsupportedScenarioError("the bound requires a single slope path loss")

    alpha = plm.alpha_nlos
    if alpha <= 2:
        raise errors.DivergentIntegralError(f"mean cycle count diverges for alpha={alpha} <= 2")

    if cfg.m_beams <= interference_beam_threshold(cfg, plm):
        return math.inf

    excess = cfg.m_beams * (alpha - 2)
    return excess / (excess - 2 * cfg.sinr_threshold)


def critical_density_product(cfg: NetworkConfig, plm: PathLossModel) -> float:
    """
    `Gamma C_N W / (P pi)`: the value of `lambda M` where a noise limited network with `alpha_N = 2` switches
    between infinite and finite mean.
    """

    return cfg.sinr_threshold * plm.c_nlos * cfg.noise_power / (cfg.power_tx * math.pi)


def phase_classifier(cfg: NetworkConfig, plm: PathLossModel, rel_tolerance: float = 1e-12) -> PhaseVerdict:
    """
    Classifies the mean cycle count as finite, infinite or inside the band the criteria leave open.
    """

    alpha = plm.alpha_nlos

    if cfg.scenario is Scenario.NOISE_LIMITED:
        if alpha > 2 + rel_tolerance:
            return PhaseVerdict.INFINITE_MEAN

        product = cfg.lambda_bs * cfg.m_beams
        critical = critical_density_product(cfg, plm)
        if math.isclose(product, critical, rel_tol=rel_tolerance):
            return PhaseVerdict.UNDETERMINED_BAND
        return PhaseVerdict.FINITE_MEAN if product > critical else PhaseVerdict.INFINITE_MEAN

    elif cfg.scenario is Scenario.INTERFERENCE_LIMITED:
        if alpha <= 2 + rel_tolerance:
            return PhaseVerdict.INFINITE_MEAN
        if alpha > 2 + 2 * cfg.sinr_threshold:
            return PhaseVerdict.FINITE_MEAN
        if cfg.m_beams == 1:
            return PhaseVerdict.INFINITE_MEAN
        if cfg.m_beams > interference_beam_threshold(cfg, plm):
            return PhaseVerdict.FINITE_MEAN
        return PhaseVerdict.UNDETERMINED_BAND

    else:
        raise errors.UnsupportedScenarioError("classification requires a noise or interference limited scenario")


# ---------------------------------------------------------------------------------------------------------------------
# conditional series
# ---------------------------------------------------------------------------------------------------------------------

def f_j_sector(
        r: float,
        j: int,
        cfg: NetworkConfig,
        plm: PathLossModel,
        truncation: Truncation = DEFAULT_TRUNCATION,
        method: Method = Method.AUTO,
) -> float:
    """
    Probability that the nearest BS of a sector at distance `r` is not detected within `j` cycles,
    `sum_k (-1)^k C(j, k) E[F^k | R = r]`; `f_0 = 1`.
    """

    if r < 0:
        raise errors.DomainError(f"distance must be non-negative, got {r!r}")
    if j < 0:
        raise errors.DomainError(f"j must be non-negative, got {j}")
    if j == 0:
        return 1.0

    method = resolve_method(cfg, plm, method)
    if method is Method.POWER:
        return float((-math.expm1(-noise_exponent(cfg, plm, r))) ** j)

    if j > truncation.j_precision_cap:
        raise errors.PrecisionExceededError(j, truncation.precision_bits(j), "beyond the precision cap")

    kernel = build_kernel(cfg, plm, method)
    bits = truncation.precision_bits(j)
    with mpmath.workprec(bits):
        moments = [kernel.conditional_moment(k, r) for k in range(j + 1)]
        value, _ = _certified_transform(moments, j, bits, truncation)

    return value


def detection_within(
        r: float,
        j: int,
        cfg: NetworkConfig,
        plm: PathLossModel,
        truncation: Truncation = DEFAULT_TRUNCATION,
        method: Method = Method.AUTO,
) -> float:
    """
    Probability that the nearest BS of a sector at distance `r` is detected within `j` cycles.
    """

    return 1.0 - f_j_sector(r, j, cfg, plm, truncation, method)


def _log_miss(cfg: NetworkConfig, plm: PathLossModel, r: float) -> float:
    # log(1 - exp(-s(r))), the per-cycle miss log-probability against noise alone
    s = noise_exponent(cfg, plm, r)
    return math.log(-math.expm1(-s)) if s > 0 else -math.inf


def _conditional_terms(
        kernel: DetectionKernel,
        sources: Sequence[Tuple[str, float, int]],
        cap: int,
        truncation: Truncation,
) -> Iterator[SeriesTerm]:
    # yields prod over (kind, r, power) of transform_j(kind, r)^power; kind is conditional or tail
    if cap - 1 > truncation.j_precision_cap:
        raise errors.PrecisionExceededError(cap - 1, truncation.precision_bits(cap - 1), "beyond the precision cap")

    bits = truncation.precision_bits(cap - 1)
    moments: Dict[Tuple[str, float], List[mpmath.mpf]] = {(kind, r): [] for kind, r, _ in sources}

    for j in range(cap):
        product, error = 1.0, 0.0
        with mpmath.workprec(bits):
            for kind, r, power in sources:
                values = moments[(kind, r)]
                while len(values) <= j:
                    k = len(values)
                    if kind == 'conditional':
                        values.append(kernel.conditional_moment(k, r))
                    else:
                        values.append(kernel.tail_moment(k, r))
                value, err = _certified_transform(values, j, bits, truncation)
                product *= value ** power
                error += power * err

        yield SeriesTerm(product, error)


def cond_mean_cycles_given_all_sectors(
        distances: Sequence[float],
        cfg: NetworkConfig,
        plm: PathLossModel,
        truncation: Truncation = DEFAULT_TRUNCATION,
        method: Method = Method.AUTO,
) -> SeriesResult:
    """
    `E[L | R_1 .. R_M] = sum_j prod_i f_j(R_i)` given the nearest BS distance of every sector.
    """

    if len(distances) != cfg.m_beams:
        raise errors.DomainError(f"{cfg.m_beams} distances required, got {len(distances)}")
    if any(not r > 0 for r in distances):
        raise errors.DomainError("sector distances must be positive")

    cap = truncation.cap_for(cfg.scenario)
    method = resolve_method(cfg, plm, method)

    if method is Method.POWER:
        log_miss = math.fsum(_log_miss(cfg, plm, r) for r in distances)
        terms: Iterator[SeriesTerm] = (SeriesTerm(math.exp(j * log_miss) if j else 1.0) for j in range(cap))
    else:
        multiplicity: Dict[float, int] = {}
        for r in distances:
            multiplicity[r] = multiplicity.get(r, 0) + 1
        sources = [('conditional', r, power) for r, power in sorted(multiplicity.items())]
        terms = _conditional_terms(build_kernel(cfg, plm, method), sources, cap, truncation)

    return accumulate_series(terms, cap, truncation)


def cond_mean_cycles_given_r0(
        r0: float,
        cfg: NetworkConfig,
        plm: PathLossModel,
        truncation: Truncation = DEFAULT_TRUNCATION,
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
        method: Method = Method.AUTO,
) -> SeriesResult:
    """
    `L(r0) = E[L | R_0 = r0]` given the distance to the nearest BS overall:
    `sum_j f_j(r0) * E[f_j(R) | R > r0]^(M - 1)`.
    """

    if not r0 > 0:
        raise errors.DomainError(f"nearest distance must be positive, got {r0!r}")

    cap = truncation.cap_for(cfg.scenario)
    method = resolve_method(cfg, plm, method)
    m_beams = cfg.m_beams

    if method is Method.POWER:
        log_miss = _log_miss(cfg, plm, r0)
        if m_beams > 1:
            tails, tail_error = noise_limited_tail_integrals(cfg, plm, r0, cap, spec)
        else:
            tails, tail_error = np.ones(cap), 0.0

        def power_terms() -> Iterator[SeriesTerm]:
            for j in range(cap):
                own = math.exp(j * log_miss) if j else 1.0
                others = float(tails[j]) ** (m_beams - 1)
                yield SeriesTerm(own * others, own * (m_beams - 1) * tail_error)

        return accumulate_series(power_terms(), cap, truncation)

    sources = [('conditional', r0, 1)]
    if m_beams > 1:
        sources.append(('tail', r0, m_beams - 1))

    terms = _conditional_terms(build_kernel(cfg, plm, method), sources, cap, truncation)
    return accumulate_series(terms, cap, truncation)


def cond_mean_cycles_single_beam(r0: float, cfg: NetworkConfig, plm: PathLossModel) -> float:
    """
    Untruncated `E[L | R_0 = r0] = E[1 / F | R_0 = r0]` of a single beam network:
    `exp(s(r0) + 2 pi lambda Gamma l(r0) int_{r0}^inf r / l(r) dr)`, `inf` where the integral diverges.
    """

    if cfg.m_beams != 1:
        raise errors.DomainError(f"single beam required, got M={cfg.m_beams}")
    if not r0 > 0:
        raise errors.DomainError(f"nearest distance must be positive, got {r0!r}")

    exponent = noise_exponent(cfg, plm, r0)

    if cfg.has_interference:
        integral = 0.0
        for segment in plm.segments(r0):
            a = segment.alpha
            if math.isinf(segment.r_hi):
                if a <= 2:
                    return math.inf
                integral += segment.r_lo ** (2 - a) / ((a - 2) * segment.c)
            elif a == 2:
                integral += math.log(segment.r_hi / segment.r_lo) / segment.c
            else:
                integral += (segment.r_hi ** (2 - a) - segment.r_lo ** (2 - a)) / ((2 - a) * segment.c)

        exponent += 2 * math.pi * cfg.lambda_bs * cfg.sinr_threshold * path_loss(plm, r0) * integral

    try:
        return math.exp(exponent)
    except OverflowError:
        return math.inf
