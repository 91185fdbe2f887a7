import math

import numpy as np
import pytest

from errors import DomainError
from measures import (branch_pushforward_cdf, check_gamma_invariance, check_pushforward_identity,
                      check_tau_invariance, gauss_mean, gauss_measure_interval, ks_critical,
                      lebesgue_digit_prob, sample_density, sample_gauss)
from rscc_core import p_kernel
from streams import stream
from transfer_operator import GridFunction, gauss_cdf


class _ZeroRng:
    def random(self, size=None):
        return np.zeros(size)


def test_gauss_measure_interval():
    assert gauss_measure_interval(0.0, 1.0) == pytest.approx(1.0, rel=1e-15)
    assert gauss_measure_interval(0.3, 0.3) == 0.0
    assert gauss_measure_interval(0.0, 0.5) == pytest.approx(math.log(1.5) / math.log(2.0))
    with pytest.raises(DomainError):
        gauss_measure_interval(0.6, 0.2)


def test_sample_gauss_mean_and_distribution():
    x = sample_gauss(stream(3, 'test_gauss'), 200_000)
    assert x.min() >= 0.0 and x.max() < 1.0
    sigma = 0.2875
    assert abs(x.mean() - gauss_mean()) < 4 * sigma / math.sqrt(x.size)
    assert np.mean(x < 0.5) == pytest.approx(gauss_cdf(0.5), abs=0.005)


def test_sample_gauss_at_zero_uniform():
    assert sample_gauss(_ZeroRng(), 3).tolist() == [0.0, 0.0, 0.0]


def test_lebesgue_digit_prob_is_kernel_at_zero():
    i = np.arange(1, 1_000_001, dtype=np.float64)
    np.testing.assert_array_equal(lebesgue_digit_prob(i), p_kernel(0.0, i))
    assert lebesgue_digit_prob(1) == 0.5
    with pytest.raises(DomainError):
        lebesgue_digit_prob(0)


def test_ks_critical():
    assert ks_critical(10_000, 0.05) == pytest.approx(0.01358)
    assert ks_critical(10_000) == pytest.approx(0.01628)
    with pytest.raises(DomainError):
        ks_critical(100, 0.1)


@pytest.mark.parametrize('ubound', [0.05, 0.1, 0.25, 1 / 3, 0.37, 0.5, 0.8, 1.0])
def test_gamma_invariance(ubound):
    result = check_gamma_invariance(ubound)
    assert result.est_error < 1e-8
    assert result.value == pytest.approx(gauss_cdf(ubound), abs=1e-8)


def test_gamma_invariance_pieces():
    assert check_gamma_invariance(1.0).pieces == 1
    assert check_gamma_invariance(0.4).pieces == 2
    with pytest.raises(DomainError):
        check_gamma_invariance(0.0)


def test_tau_invariance():
    d = check_tau_invariance(20_000, seed=1)
    assert 0.0 < d < 1.5 * ks_critical(20_000, 0.01)
    assert check_tau_invariance(20_000, seed=1, workers=3) == d
    with pytest.raises(DomainError):
        check_tau_invariance(5_000, seed=1)


@pytest.mark.parametrize('y', [0.0, 0.1, 0.5, 0.9, 1.0])
def test_branch_pushforward_is_gauss(y):
    assert branch_pushforward_cdf(y) == pytest.approx(gauss_cdf(y), abs=1e-12)


def test_sample_density_uniform_and_linear():
    ones = GridFunction(np.ones(65))
    x = sample_density(ones, stream(5, 'test_density'), 100_000)
    assert x.min() >= 0.0 and x.max() <= 1.0
    assert np.mean(x < 0.3) == pytest.approx(0.3, abs=0.006)

    ramp = GridFunction.from_callable(lambda t: 2 * t, 64)
    y = sample_density(ramp, stream(6, 'test_density'), 100_000)
    assert np.mean(y < 0.5) == pytest.approx(0.25, abs=0.006)
    assert sample_density(ones, _ZeroRng(), 4).tolist() == [0.0] * 4


@pytest.mark.parametrize('n', [0, 1, 3])
def test_pushforward_identity_lebesgue(n):
    mc, quad = check_pushforward_identity(GridFunction(np.ones(1025)), n, 0.4, 200_000, 1024, seed=11)
    assert abs(mc - quad) < 5e-3
    if n == 0:
        assert quad == pytest.approx(0.4, abs=1e-12)


def test_pushforward_identity_linear_density():
    ramp = GridFunction.from_callable(lambda t: 2 * t, 1024)
    mc0, quad0 = check_pushforward_identity(ramp, 0, 0.5, 200_000, 1024, seed=12)
    assert quad0 == pytest.approx(0.25, abs=1e-6)
    assert abs(mc0 - quad0) < 5e-3
    mc2, quad2 = check_pushforward_identity(ramp, 2, 0.5, 200_000, 1024, seed=12)
    assert abs(mc2 - quad2) < 5e-3


def test_pushforward_identity_preconditions():
    ones = GridFunction(np.ones(65))
    with pytest.raises(DomainError):
        check_pushforward_identity(GridFunction(np.full(65, 2.0)), 1, 0.4, 1000, 64)
    with pytest.raises(DomainError):
        check_pushforward_identity(ones, 6, 0.4, 1000, 64)
    with pytest.raises(DomainError):
        check_pushforward_identity(ones, 1, 1.4, 1000, 64)
    negative = GridFunction(np.concatenate(([-0.1], np.full(64, 1.0))))
    with pytest.raises(DomainError):
        check_pushforward_identity(negative, 1, 0.4, 1000, 64)
