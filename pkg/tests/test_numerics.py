import math

import mpmath
import pytest

from cellsearch import errors
from cellsearch.model import Scenario
from cellsearch.numerics import SeriesStatus, SeriesTerm, Truncation, accumulate_series, alternating_binomial_sum
from cellsearch.numerics import binomial_row, certify, fit_tail_slope, log2_max_binomial


def test_binomial_row():
    assert binomial_row(0) == [1]
    assert binomial_row(5) == [1, 5, 10, 10, 5, 1]
    assert sum(binomial_row(40)) == 2 ** 40


def test_log2_max_binomial():
    assert log2_max_binomial(1) == 0.0
    assert log2_max_binomial(10) == pytest.approx(math.log2(252))
    assert log2_max_binomial(1000) == pytest.approx(math.log2(math.comb(1000, 500)), rel=1e-12)


def test_precision_bits():
    truncation = Truncation()

    assert truncation.precision_bits(0) == 64 + 24
    assert truncation.precision_bits(200) >= math.log2(math.comb(200, 100)) + 53 + 24
    assert truncation.precision_bits(400) >= 600
    assert truncation.doubled_precision().precision_bits(400) > truncation.precision_bits(400)


def test_default_caps():
    truncation = Truncation()
    assert truncation.cap_for(Scenario.NOISE_LIMITED) == 1500
    assert truncation.cap_for(Scenario.INTERFERENCE_LIMITED) == 100
    assert Truncation(j_cap=7).cap_for(Scenario.NOISE_LIMITED) == 7


@pytest.mark.parametrize('j', [1, 10, 60, 200])
def test_alternating_sum_of_powers(j):
    # sum_k (-1)^k C(j, k) x^k = (1 - x)^j
    x = mpmath.mpf(3) / 4
    bits = Truncation().precision_bits(j)

    with mpmath.workprec(bits):
        values = [x ** k for k in range(j + 1)]
        total, error = alternating_binomial_sum(values, j, bits)
        expected = (1 - x) ** j
        assert abs(total - expected) <= error
        assert certify(total, error, j, bits, 1e-12) == pytest.approx(float(expected), rel=1e-9, abs=float(error))


def test_alternating_sum_requires_values():
    with pytest.raises(ValueError):
        alternating_binomial_sum([mpmath.mpf(1)], 3, 64)


def test_double_precision_fails_certificate():
    j, bits = 200, 53
    with mpmath.workprec(bits):
        values = [mpmath.mpf(3) / 4 ** k for k in range(j + 1)]
        total, error = alternating_binomial_sum(values, j, bits)

        with pytest.raises(errors.PrecisionExceededError) as e:
            certify(total, error, j, bits, 1e-12)

    assert e.value.j == j


def test_fit_tail_slope():
    terms = [float(j) ** -0.5 if j else 1.0 for j in range(200)]
    assert fit_tail_slope(terms) == pytest.approx(-0.5, abs=1e-9)
    assert fit_tail_slope([1.0, 0.5]) is None


def test_converged_series():
    truncation = Truncation(abs_tolerance=1e-12)
    terms = (SeriesTerm(0.5 ** j) for j in range(1000))

    result = accumulate_series(terms, 1000, truncation)

    assert result.status is SeriesStatus.CONVERGED
    assert result.is_converged
    assert result.value == pytest.approx(2.0, abs=1e-11)
    assert result.terms_used < 60


def test_slowly_decaying_series_is_divergent():
    terms = (SeriesTerm(1.0 / (1 + j) ** 0.7) for j in range(100))

    result = accumulate_series(terms, 100, Truncation())

    assert result.status is SeriesStatus.DIVERGENCE_SUSPECTED
    assert result.terms_used == 100
    assert result.tail_exponent_estimate == pytest.approx(0.7, abs=0.05)


def test_fast_tail_is_truncated_not_divergent():
    terms = (SeriesTerm(1.0 / (1 + j) ** 3) for j in range(100))

    result = accumulate_series(terms, 100, Truncation(abs_tolerance=1e-12))

    assert result.status is SeriesStatus.TRUNCATED_AT_CAP
    assert result.tail_exponent_estimate == pytest.approx(3.0, abs=0.2)


def test_increasing_term_is_numerical_error():
    terms = [SeriesTerm(1.0), SeriesTerm(0.5), SeriesTerm(0.75)]

    with pytest.raises(errors.NumericalError):
        accumulate_series(terms, 10, Truncation())


def test_partial_sum_of_capped_series():
    # E[min(L, J)] of a geometric L with success probability 1/2
    cap = 5
    result = accumulate_series((SeriesTerm(0.5 ** j) for j in range(100)), cap, Truncation())

    assert result.terms_used == cap
    assert result.value == pytest.approx((1 - 0.5 ** cap) / 0.5)
