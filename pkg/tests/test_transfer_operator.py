import math

import numpy as np
import pytest

import transfer_operator
from errors import DomainError, GridResolutionError
from transfer_operator import (DistributionFunction, GridFunction, apply_U, density_step, density_to_f,
                               f_to_density, gauss_cdf, gauss_cdf_grid, gk_iterate, gk_step, gk_theta,
                               integrate_gauss_weight, iterate_U, lipschitz_norm, spectral_gap_estimate,
                               u_infinity)

LOG2 = math.log(2.0)
I_MAX = 10_000


def _line(N, a=1.0, b=0.0):
    return GridFunction.from_callable(lambda x: a * x + b, N)


def test_grid_function_evaluates_nodes_exactly():
    f = GridFunction.from_callable(np.sin, 64)
    np.testing.assert_array_equal(f(f.nodes), f.values)
    assert f(0.5 / 64) == pytest.approx((f.values[0] + f.values[1]) / 2)


def test_grid_function_rejects_non_finite_values():
    with pytest.raises(DomainError):
        GridFunction([0.0, np.inf, 1.0])


def test_distribution_function_invariants():
    with pytest.raises(DomainError):
        DistributionFunction([0.0, 0.6, 0.4, 1.0])
    with pytest.raises(DomainError):
        DistributionFunction([0.1, 0.5, 1.0])
    F = gauss_cdf_grid(128)
    assert F.values[0] == 0.0 and F.values[-1] == 1.0


def test_apply_U_preserves_constants():
    for N in (64, 512):
        out = apply_U(GridFunction(np.full(N + 1, 3.0)), I_MAX)
        assert np.abs(out.values - 3.0).max() < 1e-12


def test_apply_U_identity_at_zero():
    out = apply_U(_line(512), I_MAX)
    assert out.values[0] == pytest.approx(math.pi ** 2 / 6 - 1, abs=1e-7)


def test_apply_U_tail_weight():
    N, I = 4096, 1000
    values = np.ones(N + 1)
    values[0] = 0.0
    out = apply_U(GridFunction(values), I)
    x = out.nodes
    np.testing.assert_allclose(1.0 - out.values, (x + 1) / (x + I + 1), atol=1e-12)
    assert 1.0 - out.values[0] < 1e-3


def test_apply_U_linearity_and_positivity():
    rng = np.random.default_rng(4)
    N = 256
    for _ in range(5):
        f = GridFunction(rng.random(N + 1))
        g = GridFunction(rng.random(N + 1) - 0.5)
        a, b = rng.uniform(-2, 2, size=2)
        lhs = apply_U(a * f + b * g, I_MAX)
        rhs = a * apply_U(f, I_MAX) + b * apply_U(g, I_MAX)
        assert np.abs(lhs.values - rhs.values).max() < 1e-12
        assert apply_U(f, I_MAX).values.min() >= -1e-14


def test_apply_U_preserves_gauss_mean():
    rng = np.random.default_rng(20)
    N = 4096
    for _ in range(20):
        c0 = rng.uniform(0.5, 1.5)
        amps = rng.uniform(-0.05, 0.05, size=3) / np.arange(1, 4) ** 2
        f = GridFunction.from_callable(
            lambda x: c0 + sum(a * np.cos((k + 1) * np.pi * x) for k, a in enumerate(amps)), N)
        assert abs(u_infinity(apply_U(f, I_MAX)) - u_infinity(f)) < 1e-8


def test_u_infinity_examples():
    assert u_infinity(GridFunction(np.full(33, 2.5))) == pytest.approx(2.5, abs=1e-13)
    assert u_infinity(_line(100, 1.0, 1.0)) == pytest.approx(1 / LOG2, rel=1e-12)
    ones = GridFunction(np.ones(101))
    assert u_infinity(density_to_f(ones)) == pytest.approx(1 / LOG2, rel=1e-12)


def test_integrate_gauss_weight_partial_cells():
    ones = GridFunction(np.ones(11))
    assert integrate_gauss_weight(ones, 0.13, 0.77) == pytest.approx(math.log(1.77 / 1.13), rel=1e-13)
    line = _line(10)
    # ∫ x/(x+1) = x - log(1+x)
    expected = (0.77 - math.log1p(0.77)) - (0.13 - math.log1p(0.13))
    assert integrate_gauss_weight(line, 0.13, 0.77) == pytest.approx(expected, rel=1e-12)
    assert integrate_gauss_weight(line, 0.4, 0.4) == 0.0
    with pytest.raises(DomainError):
        integrate_gauss_weight(line, 0.6, 0.4)


def test_lipschitz_norm():
    assert lipschitz_norm(_line(50)) == pytest.approx(2.0)
    assert lipschitz_norm(GridFunction(np.full(9, -3.0))) == 3.0


def test_iterate_U_constant_start_stops_immediately():
    table = iterate_U(GridFunction(np.ones(257)), 10, I_MAX)
    assert len(table) == 1
    assert table.rows[0].sup_error < 1e-13
    assert table.rows[0].ratio is None


def test_iterate_U_errors_decrease_geometrically():
    table = iterate_U(_line(1024, 1.0, 1.0), 30, I_MAX, reference='running')
    errors = [e for e in table.errors() if e > 1e-12]
    assert all(b < a for a, b in zip(errors, errors[1:]))
    ratios = table.window_ratios(1e-10, 1e-3)
    assert len(ratios) >= 3
    assert np.median(ratios) == pytest.approx(0.3037, abs=0.005)
    assert all(row.lip_error >= row.sup_error for row in table.rows)


def test_iterate_U_rejects_bad_arguments():
    with pytest.raises(DomainError):
        iterate_U(_line(64), 0, I_MAX)
    with pytest.raises(DomainError):
        iterate_U(_line(64), 3, I_MAX, reference='other')
    with pytest.raises(DomainError):
        apply_U(_line(64), 5)


def test_gk_step_from_lebesgue():
    F0 = DistributionFunction.from_callable(lambda x: x, 512)
    F1 = gk_step(F0, I_MAX)
    assert F1.values[-1] == 1.0
    assert F1(0.5) == pytest.approx(2 - 2 * math.log(2), abs=1e-10)
    assert F1.clamp < 1e-12


def test_gk_step_fixes_gauss_cdf():
    G = gauss_cdf_grid(1024)
    assert np.abs(gk_step(G, I_MAX).values - G.values).max() < 1e-5


def test_gk_step_flags_large_clamp(monkeypatch):
    monkeypatch.setitem(transfer_operator.TRANSFER_CONFIG, 'clamp_limit', -1.0)
    with pytest.raises(GridResolutionError):
        gk_step(gauss_cdf_grid(64), I_MAX)


def test_gk_step_requires_distribution():
    with pytest.raises(DomainError):
        gk_step(_line(64), I_MAX)


def test_gk_step_commutes_with_density_step():
    N = 1024
    F = DistributionFunction.from_callable(lambda x: x * x, N)
    F1 = gk_step(F, I_MAX)
    derivative = np.gradient(F1.values, 1.0 / N)
    density = density_step(GridFunction.from_callable(lambda x: 2 * x, N), I_MAX)
    interior = slice(5, N - 4)
    assert np.abs(derivative[interior] - density.values[interior]).max() < 1e-2


def test_gk_iterate_converges_from_several_starts():
    N = 1024
    starts = [lambda x: x, lambda x: x * x, lambda x: np.minimum(2 * x, 1.0)]
    for start in starts:
        table = gk_iterate(DistributionFunction.from_callable(start, N), 15, I_MAX)
        assert table.final_error < 2e-5
        errors = table.errors()
        assert errors[-1] < errors[0] * 1e-3
        assert errors[3] < errors[0]


def test_gk_iterate_reports_steps():
    seen = []
    gk_iterate(DistributionFunction.from_callable(lambda x: x, 128), 3, I_MAX,
               on_step=lambda n, F: seen.append((n, F.N)))
    assert seen == [(1, 128), (2, 128), (3, 128)]


def test_gk_theta_of_limit_is_zero():
    assert gk_theta(gauss_cdf_grid(256), 5, 0.3037) == pytest.approx(0.0, abs=1e-9)


def test_density_transforms():
    ones = GridFunction(np.ones(65))
    f = density_to_f(ones)
    np.testing.assert_allclose(f.values, f.nodes + 1)
    zero = GridFunction(np.zeros(65))
    assert np.all(density_to_f(zero).values == 0.0)
    assert np.all(f_to_density(zero).values == 0.0)
    np.testing.assert_allclose(f_to_density(f).values, 1.0, rtol=1e-15)
    g = GridFunction.from_callable(np.cos, 65)
    np.testing.assert_allclose(f_to_density(density_to_f(g)).values, g.values, rtol=1e-15, atol=1e-15)


def test_density_step_at_zero():
    out = density_step(GridFunction(np.ones(513)), I_MAX)
    assert out.values[0] == pytest.approx(math.pi ** 2 / 6, abs=1e-7)


def test_spectral_gap_estimate():
    q = spectral_gap_estimate(1024, I_MAX, 30)
    assert 0.0 < q < 1.0
    assert q == pytest.approx(0.3037, abs=0.005)


def test_spectral_gap_estimate_preconditions():
    with pytest.raises(DomainError):
        spectral_gap_estimate(512, I_MAX, 30)
    with pytest.raises(GridResolutionError):
        spectral_gap_estimate(1024, I_MAX, 3)


@pytest.mark.slow
def test_gauss_kuzmin_acceptance_grid():
    N = 4096
    table = gk_iterate(DistributionFunction.from_callable(lambda x: x, N), 25, I_MAX)
    assert min(table.errors()) < 5e-7
    ratios = table.window_ratios(1e-5, 1e-2)
    assert len(ratios) >= 2
    assert 0.28 <= np.median(ratios) <= 0.33
    assert np.abs(gk_step(gauss_cdf_grid(N), I_MAX).values - gauss_cdf(gauss_cdf_grid(N).nodes)).max() < 5e-7


@pytest.mark.slow
def test_spectral_gap_grid_refinement():
    coarse = spectral_gap_estimate(2048, I_MAX, 30)
    fine = spectral_gap_estimate(4096, I_MAX, 30)
    assert abs(fine - coarse) < 0.01
    assert fine == pytest.approx(0.3037, abs=0.005)
