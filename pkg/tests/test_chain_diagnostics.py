import numpy as np
import pytest

from mcmc.chain_diagnostics import effective_sample_size, split_rhat


def _ar1(phi, n, chains, seed):
    rng = np.random.default_rng(seed)
    out = np.empty((chains, n))
    for c in range(chains):
        x = rng.normal()
        for t in range(n):
            x = phi * x + np.sqrt(1.0 - phi ** 2) * rng.normal()
            out[c, t] = x
    return out


def test_rhat_of_independent_chains_is_near_one():
    chains = np.random.default_rng(1).normal(size=(4, 2000))
    assert split_rhat(chains) == pytest.approx(1.0, abs=0.01)


def test_rhat_flags_chains_in_different_places():
    rng = np.random.default_rng(2)
    chains = rng.normal(size=(2, 1000)) + np.array([[0.0], [3.0]])
    assert split_rhat(chains) > 1.5


def test_rhat_flags_a_trend_within_one_chain():
    chains = np.linspace(0.0, 10.0, 1000)[None, :] + np.random.default_rng(3).normal(size=(1, 1000))
    assert split_rhat(chains) > 1.5


def test_rhat_undefined_cases():
    assert np.isnan(split_rhat(np.ones((2, 100))))
    assert np.isnan(split_rhat(np.arange(3.0)[None, :]))


def test_ess_of_white_noise():
    chains = np.random.default_rng(4).normal(size=(2, 4000))
    assert effective_sample_size(chains) == pytest.approx(8000, rel=0.15)


def test_ess_of_autocorrelated_chain():
    phi = 0.9
    chains = _ar1(phi, 20000, 2, seed=5)
    expected = 40000 * (1.0 - phi) / (1.0 + phi)
    assert effective_sample_size(chains) == pytest.approx(expected, rel=0.25)


def test_ess_undefined_cases():
    assert np.isnan(effective_sample_size(np.ones((2, 100))))
    assert np.isnan(effective_sample_size(np.arange(3.0)[None, :]))
