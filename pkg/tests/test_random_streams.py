import numpy as np
import pytest
from scipy import integrate, stats

from preprocess.errors import InvalidParameter
from mcmc.random_streams import PURPOSE_CHAIN, PURPOSE_POPULATION, RngStream, draw_standard, \
    draw_truncated_beta


def test_same_key_same_sequence():
    a = RngStream(7, chain=1, replicate=3)
    b = RngStream(7, chain=1, replicate=3)
    assert np.array_equal(a.normal(size=20), b.normal(size=20))


@pytest.mark.parametrize("other", [dict(chain=2), dict(replicate=4), dict(purpose=PURPOSE_POPULATION)])
def test_distinct_keys_differ(other):
    key = dict(chain=1, replicate=3, purpose=PURPOSE_CHAIN)
    a = RngStream(7, **key)
    key.update(other)
    b = RngStream(7, **key)
    assert not np.array_equal(a.uniform(size=10), b.uniform(size=10))


def test_gamma_is_shape_rate():
    draws = RngStream(1).gamma(3.0, 2.0, size=200000)
    assert draws.mean() == pytest.approx(1.5, rel=0.01)


def test_draw_standard_scalar_and_vector():
    s = RngStream(2)
    assert isinstance(draw_standard(s, "beta", 2.0, 3.0), float)
    assert isinstance(draw_standard(s, "bernoulli", 0.3), int)
    assert draw_standard(s, "normal", 0.0, 1.0, size=5).shape == (5,)


@pytest.mark.parametrize("dist, params", [("gamma", (0.0, 1.0)), ("gamma", (1.0, -1.0)),
                                          ("beta", (0.0, 2.0)), ("normal", (0.0, -1.0)),
                                          ("bernoulli", (1.5,)), ("uniform", (1.0, 1.0)),
                                          ("cauchy", (0.0, 1.0))])
def test_draw_standard_rejects_bad_parameters(dist, params):
    with pytest.raises(InvalidParameter):
        draw_standard(RngStream(0), dist, *params)


def test_truncated_beta_matches_conditional_law():
    a, b, lower = 3.0, 5.0, 0.5
    x = draw_truncated_beta(RngStream(3), a, b, lower, size=20000)
    assert np.all((x > lower) & (x < 1.0))
    dist = stats.beta(a, b)

    def cdf(t):
        return (dist.cdf(t) - dist.cdf(lower)) / dist.sf(lower)

    assert stats.kstest(x, cdf).pvalue > 0.001


def test_truncated_beta_far_tail_stays_in_support():
    # virtually no Beta(1, 5000) mass above 1/2
    x = draw_truncated_beta(RngStream(4), 1.0, 5000.0, 0.5, size=1000)
    assert np.all((x > 0.5) & (x < 1.0))
    assert np.all(np.isfinite(x))


def test_truncated_beta_without_truncation_is_plain_beta():
    x = draw_truncated_beta(RngStream(5), 2.0, 2.0, 0.0, size=20000)
    assert stats.kstest(x, stats.beta(2.0, 2.0).cdf).pvalue > 0.001


def test_truncated_beta_underflowing_tail_keeps_both_factors():
    # the Beta(2000, 6000) mass above 1/2 is below the smallest double; both x^(a-1) and
    # (1-x)^(b-1) shape the conditional law there
    a, b, lower = 2000.0, 6000.0, 0.5
    assert stats.beta(a, b).sf(lower) == 0.0
    x = draw_truncated_beta(RngStream(6), a, b, lower, size=20000)
    assert np.all((x > lower) & (x < 1.0))

    t = np.linspace(0.0, 0.006, 60001)
    log_f = (a - 1.0) * np.log1p(t / lower) + (b - 1.0) * np.log1p(-t / (1.0 - lower))
    mass = integrate.cumulative_trapezoid(np.exp(log_f), t, initial=0.0)
    mass /= mass[-1]

    def cdf(s):
        return np.interp(s - lower, t, mass)

    assert stats.kstest(x, cdf).pvalue > 0.001
    # dropping x^(a-1) would put the mean excess near 0.5 / b
    assert np.mean(x - lower) == pytest.approx(integrate.trapezoid(1.0 - mass, t), rel=0.03)
