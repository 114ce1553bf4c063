"""Tests for log_beta, the regularized incomplete beta, and Beta sampling."""

import logging
import math

import mpmath
import numpy as np
import pytest
import scipy.special
import scipy.stats

from warpmix import (
    DomainError,
    NonConvergenceError,
    RngStream,
    beta_sample,
    incomplete_beta_reg,
    log_beta,
)

from _support import ks_statistic

mpmath.mp.dps = 50


def mp_log_beta(a, b):
    return float(mpmath.log(mpmath.beta(mpmath.mpf(a), mpmath.mpf(b))))


# ---------------------------------------------------------------- log_beta


def test_log_beta_one_one_is_zero():
    assert log_beta(1.0, 1.0) == 0.0


@pytest.mark.parametrize(
    "a,b,expected",
    [
        (2.0, 2.0, math.log(1.0 / 6.0)),
        (0.5, 0.5, math.log(math.pi)),
        (3.0, 4.0, math.log(1.0 / 60.0)),  # B(3,4) = 2!3!/6!
    ],
)
def test_log_beta_closed_forms(a, b, expected):
    assert log_beta(a, b) == pytest.approx(expected, rel=1e-14)


def test_log_beta_against_high_precision():
    shapes = [1e-4, 1e-3, 0.05, 0.5, 1.0, 2.0, 7.3, 19.0, 21.0, 150.0, 1e3, 1e5, 1e6]
    for a in shapes:
        for b in shapes:
            got = log_beta(a, b)
            want = mp_log_beta(a, b)
            if want == 0.0:
                assert abs(got) < 1e-12
            else:
                assert abs(got - want) <= 1e-12 * abs(want), (a, b, got, want)


def test_log_beta_symmetric_in_arguments():
    for a, b in [(0.3, 7.0), (1e-3, 1e4), (2.0, 5.5), (40.0, 41.0)]:
        assert log_beta(a, b) == log_beta(b, a)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
def test_log_beta_rejects_bad_shapes(bad):
    with pytest.raises(DomainError):
        log_beta(bad, 1.0)
    with pytest.raises(DomainError):
        log_beta(1.0, bad)


def test_log_beta_clamps_tiny_shapes(caplog):
    # shapes below 1e-4 are pulled up to the boundary and logged
    with caplog.at_level(logging.DEBUG, logger="warpmix.numerics"):
        clamped = log_beta(1e-7, 2.0)
    assert clamped == log_beta(1e-4, 2.0)
    assert any("clamp" in rec.message for rec in caplog.records)


def test_log_beta_clamps_huge_shapes():
    assert log_beta(1e9, 3.0) == log_beta(1e6, 3.0)


# ---------------------------------------------------- incomplete_beta_reg


@pytest.mark.parametrize(
    "x,a,b,expected",
    [
        (0.3, 1.0, 1.0, 0.3),
        (0.25, 2.0, 2.0, 0.15625),
        (0.75, 2.0, 2.0, 0.84375),
    ],
)
def test_incbeta_known_values(x, a, b, expected):
    assert incomplete_beta_reg(x, a, b) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("tau", [0.3, 1.0, 2.0, 7.0, 1e3, 1e6])
def test_incbeta_half_at_symmetric_shapes(tau):
    assert incomplete_beta_reg(0.5, tau, tau) == 0.5


@pytest.mark.parametrize("tau", [1e-3, 0.2, 1.0, 2.0, 7.0, 1e3])
def test_incbeta_exact_endpoints(tau):
    assert incomplete_beta_reg(0.0, tau, tau) == 0.0
    assert incomplete_beta_reg(1.0, tau, tau) == 1.0


def test_incbeta_cubic_closed_form():
    # I_x(2,2) integrates the density 6t(1-t) to 3x^2 - 2x^3
    for x in np.linspace(0.0, 1.0, 101):
        want = 3.0 * x**2 - 2.0 * x**3
        assert incomplete_beta_reg(float(x), 2.0, 2.0) == pytest.approx(want, abs=1e-13)


def test_incbeta_against_scipy_wide_grid():
    shapes = [1e-3, 0.05, 0.2, 1.0, 2.0, 7.0, 40.0, 1e3, 1e5]
    xs = np.linspace(0.0, 1.0, 41)
    for a in shapes:
        for b in shapes:
            for x in xs:
                got = incomplete_beta_reg(float(x), a, b)
                want = scipy.special.betainc(a, b, float(x))
                assert abs(got - want) <= 1e-10, (x, a, b, got, want)


def test_incbeta_against_scipy_sharp_transition():
    # large symmetric shapes concentrate all mass near 0.5
    for tau in (1e3, 1e4, 1e5):
        sigma = math.sqrt(1.0 / (8.0 * tau))
        for x in np.linspace(0.5 - 6 * sigma, 0.5 + 6 * sigma, 81):
            got = incomplete_beta_reg(float(x), tau, tau)
            want = scipy.special.betainc(tau, tau, float(x))
            assert abs(got - want) <= 1e-10, (x, tau, got, want)


def test_incbeta_symmetry_relation():
    shapes = [0.02, 0.5, 1.0, 2.5, 40.0, 1e3]
    xs = np.linspace(0.0, 1.0, 201)
    for a in shapes:
        for b in shapes:
            for x in xs:
                lhs = incomplete_beta_reg(float(x), a, b)
                rhs = 1.0 - incomplete_beta_reg(float(1.0 - x), b, a)
                assert abs(lhs - rhs) <= 1e-12


@pytest.mark.parametrize("a,b", [(0.2, 0.2), (1.0, 3.0), (7.0, 7.0), (500.0, 2.0)])
def test_incbeta_monotone_in_x(a, b):
    xs = np.linspace(0.0, 1.0, 401)
    vals = [incomplete_beta_reg(float(x), a, b) for x in xs]
    diffs = np.diff(vals)
    assert np.all(diffs >= -1e-15)
    assert vals[0] == 0.0 and vals[-1] == 1.0


def test_incbeta_rejects_bad_inputs():
    for bad_x in (-0.1, 1.1, math.nan):
        with pytest.raises(DomainError):
            incomplete_beta_reg(bad_x, 1.0, 1.0)
    for bad_shape in (0.0, -2.0, math.inf, math.nan):
        with pytest.raises(DomainError):
            incomplete_beta_reg(0.5, bad_shape, 1.0)
        with pytest.raises(DomainError):
            incomplete_beta_reg(0.5, 1.0, bad_shape)


def test_incbeta_reports_nonconvergence():
    # the continued fraction stalls just off the symmetry point at the
    # largest allowed shapes; the error carries the offending arguments
    with pytest.raises(NonConvergenceError) as info:
        incomplete_beta_reg(0.49999, 1e6, 1e6)
    assert info.value.x == 0.49999
    assert info.value.a == 1e6 and info.value.b == 1e6


def test_incbeta_output_clamped_to_unit_interval():
    rng = np.random.default_rng(7)
    for _ in range(500):
        x = float(rng.uniform())
        a = float(10.0 ** rng.uniform(-3, 4))
        b = float(10.0 ** rng.uniform(-3, 4))
        v = incomplete_beta_reg(x, a, b)
        assert 0.0 <= v <= 1.0


# ------------------------------------------------------------ beta_sample


def test_beta_sample_deterministic_per_seed():
    a = [beta_sample(0.5, RngStream(123)) for _ in range(1)]
    b = [beta_sample(0.5, RngStream(123)) for _ in range(1)]
    assert a == b
    stream = RngStream(123)
    seq1 = [beta_sample(0.5, stream) for _ in range(50)]
    stream = RngStream(123)
    seq2 = [beta_sample(0.5, stream) for _ in range(50)]
    assert seq1 == seq2


def test_beta_sample_advances_state():
    stream = RngStream(5)
    draws = [beta_sample(2.0, stream) for _ in range(100)]
    assert len(set(draws)) > 90  # repeats would mean a frozen state


@pytest.mark.parametrize("alpha", [-1.0, 0.0])
def test_beta_sample_rejects_nonpositive_alpha(alpha):
    with pytest.raises(DomainError):
        beta_sample(alpha, RngStream(0))


def test_beta_sample_uniform_at_alpha_one():
    stream = RngStream(2024)
    draws = np.array([beta_sample(1.0, stream) for _ in range(100_000)])
    assert ks_statistic(draws, lambda x: x) < 0.01


@pytest.mark.parametrize("alpha", [0.2, 0.5, 1.0, 2.0, 7.0])
def test_beta_sample_matches_analytic_cdf(alpha):
    stream = RngStream(31_337)
    draws = np.array([beta_sample(alpha, stream) for _ in range(100_000)])
    assert np.all(draws >= 0.0) and np.all(draws <= 1.0)
    stat = ks_statistic(draws, lambda x: scipy.stats.beta.cdf(x, alpha, alpha))
    assert stat < 0.01, (alpha, stat)


def test_beta_sample_cdf_self_consistency():
    # the sampler and our own CDF describe the same distribution
    stream = RngStream(99)
    draws = np.array([beta_sample(0.2, stream) for _ in range(100_000)])
    stat = ks_statistic(
        draws, lambda xs: np.array([incomplete_beta_reg(float(x), 0.2, 0.2) for x in xs])
    )
    assert stat < 0.01


def test_beta_sample_mean_near_half():
    for alpha in (0.2, 1.0, 5.0):
        stream = RngStream(7 + int(alpha * 10))
        mean = np.mean([beta_sample(alpha, stream) for _ in range(100_000)])
        assert abs(mean - 0.5) < 0.01


def test_beta_sample_tiny_alpha_saturates_cleanly():
    # at alpha = 1e-4 nearly all mass sits at the endpoints; draws must
    # stay inside [0, 1] and split roughly evenly
    stream = RngStream(11)
    draws = np.array([beta_sample(1e-4, stream) for _ in range(2_000)])
    assert np.all(np.isfinite(draws))
    assert np.all((draws >= 0.0) & (draws <= 1.0))
    near_one = np.mean(draws > 0.5)
    assert 0.4 < near_one < 0.6
