from __future__ import annotations

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from reduced_pca.errors import ConvergenceError, DomainError, SubcriticalError, UnsupportedParameterError
from reduced_pca.model import SpectralLaw
from reduced_pca.mp_law import (
    d_transform,
    d_transform_derivative,
    d_transform_inverse,
    ks_distance,
    mp_density,
    mp_distribution,
    mp_upper_edge,
    solve_general_mp,
    standard_mp_density,
    standard_mp_edge,
    standard_mp_stieltjes,
)
from reduced_pca.simulate import gen_ar1_variances, tile_variances

# Two-atom law {1, 3} (equal weights), gamma = 0.5.  Frozen from a 30-digit
# sympy computation: the edge is the real root of the numerator of dz/dv on
# (-1/3, 0); the x = 10 values come from nsolve on z(v) = 10.
TWO_ATOM = SpectralLaw((1.0, 3.0), (0.5, 0.5))
TWO_ATOM_EDGE = 7.0712721624207620400
TWO_ATOM_D_EDGE = 0.47217556018482194561
TWO_ATOM_M10 = -0.13357818623718371977
TWO_ATOM_D10 = 0.15600475231067055052


@pytest.fixture(scope="module")
def std_half():
    return solve_general_mp(SpectralLaw.point_mass(), 0.5)


# ---------------------------------------------------------------- standard MP


def test_standard_density_zero_outside_and_at_edge():
    assert standard_mp_density(0.01, 0.5) == 0.0
    assert standard_mp_density(5.0, 0.5) == 0.0
    assert standard_mp_density(standard_mp_edge(0.25), 0.25) == 0.0


def test_standard_density_value():
    # normalised density: sqrt((g+ - x)(x - g-)) / (2 pi gamma x)
    gp, gm = (1 + math.sqrt(0.5)) ** 2, (1 - math.sqrt(0.5)) ** 2
    expected = math.sqrt((gp - 1.5) * (1.5 - gm)) / (2 * math.pi * 0.5 * 1.5)
    assert standard_mp_density(1.5, 0.5) == pytest.approx(expected, rel=1e-14)
    assert standard_mp_density(1.5, 0.5) == pytest.approx(0.300105, abs=1e-6)


@pytest.mark.parametrize("gamma", [0.1, 0.25, 0.5, 0.9])
def test_standard_density_integrates_to_one(gamma):
    gm, gp = (1 - math.sqrt(gamma)) ** 2, (1 + math.sqrt(gamma)) ** 2
    total, _ = quad(standard_mp_density, gm, gp, args=(gamma,), limit=200)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_standard_density_rejects_gamma_ge_one():
    with pytest.raises(UnsupportedParameterError):
        standard_mp_density(1.0, 1.0)
    with pytest.raises(UnsupportedParameterError):
        standard_mp_density(1.0, 2.0)


def test_standard_stieltjes_examples():
    assert standard_mp_stieltjes(3.75, 0.5) == pytest.approx(-0.4, abs=1e-14)
    assert standard_mp_stieltjes(4.0, 1.0) == pytest.approx(-0.5, abs=1e-14)
    x = 1e6
    assert standard_mp_stieltjes(x, 0.5) == pytest.approx(-1 / x, rel=0.01)
    with pytest.raises(DomainError):
        standard_mp_stieltjes(2.0, 0.5)


@pytest.mark.parametrize("x", [3.0, 3.75, 6.0, 20.0])
def test_standard_stieltjes_against_quadrature(x):
    gamma = 0.5
    gm, gp = (1 - math.sqrt(gamma)) ** 2, (1 + math.sqrt(gamma)) ** 2
    integral, _ = quad(lambda t: standard_mp_density(t, gamma) / (t - x), gm, gp, limit=200)
    assert standard_mp_stieltjes(x, gamma) == pytest.approx(integral, abs=1e-8)


@given(st.floats(0.05, 4.0), st.floats(1.0001, 100.0))
def test_standard_stieltjes_quadratic_identity(gamma, factor):
    x = standard_mp_edge(gamma) * factor
    m = standard_mp_stieltjes(x, gamma)
    assert abs(gamma * x * m * m + (x + gamma - 1) * m + 1) < 1e-10
    assert m < 0


# ------------------------------------------------------------- general solver


@pytest.mark.parametrize("gamma", [0.3, 0.5, 1.0, 2.0])
def test_point_mass_matches_standard(gamma):
    sol = solve_general_mp(SpectralLaw.point_mass(), gamma)
    assert sol.edge_sq == pytest.approx(standard_mp_edge(gamma), abs=1e-10)
    expected = np.array([standard_mp_stieltjes(x, gamma) for x in sol.grid])
    np.testing.assert_allclose(sol.m_hat, expected, rtol=0, atol=1e-12)
    assert sol.d_edge == pytest.approx(1 / math.sqrt(gamma), rel=1e-8)


@pytest.mark.parametrize("c", [0.25, 2.0, 7.5])
def test_point_mass_scaling(c):
    gamma = 0.5
    sol = solve_general_mp(SpectralLaw.point_mass(c), gamma, n_points=300)
    expected = np.array([standard_mp_stieltjes(x / c, gamma) / c for x in sol.grid])
    np.testing.assert_allclose(sol.m_hat, expected, rtol=0, atol=1e-6)
    assert sol.edge_sq == pytest.approx(c * standard_mp_edge(gamma), abs=1e-4)


def test_solution_invariants(std_half):
    sol = solve_general_mp(TWO_ATOM, 0.5)
    for s in (std_half, sol):
        assert np.all(np.diff(s.d_hat) < 0)
        assert np.all(s.m_hat < 0)
        np.testing.assert_allclose(s.m_under_hat, s.gamma * s.m_hat + (s.gamma - 1) / s.grid, atol=1e-10)
        assert np.all(s.grid > s.edge_sq)


def test_two_atom_frozen_values():
    sol = solve_general_mp(TWO_ATOM, 0.5)
    assert sol.edge_sq == pytest.approx(TWO_ATOM_EDGE, rel=1e-12)
    assert sol.d_edge == pytest.approx(TWO_ATOM_D_EDGE, rel=1e-10)
    m, _, d, _ = sol.transforms(10.0)
    assert m[0] == pytest.approx(TWO_ATOM_M10, rel=1e-12)
    assert d[0] == pytest.approx(TWO_ATOM_D10, rel=1e-12)
    assert mp_upper_edge(TWO_ATOM, 0.5) == pytest.approx(TWO_ATOM_EDGE, rel=1e-12)


def test_stieltjes_equation_residual():
    # the defining equation written for m itself, not the companion transform
    sol = solve_general_mp(TWO_ATOM, 0.5, n_points=50)
    t = np.array(TWO_ATOM.atoms)
    w = np.array(TWO_ATOM.weights)
    g = 0.5
    for x, m in zip(sol.grid, sol.m_hat):
        rhs = np.sum(w / (t * (1 - g - g * x * m) - x))
        assert abs(m - rhs) < 1e-12


def test_two_atom_large_matrix_oracle():
    rng = np.random.default_rng(11)
    p, n = 1000, 2000
    sd = np.sqrt(tile_variances(TWO_ATOM, p))
    x = rng.standard_normal((n, p)) * sd
    ev = np.linalg.eigvalsh(x.T @ x / n)
    sol = solve_general_mp(TWO_ATOM, p / n)
    assert ev[-1] == pytest.approx(sol.edge_sq, rel=0.02)
    for pt in (10.0, 15.0):
        m_emp = np.mean(1.0 / (ev - pt))
        assert sol.transforms(pt)[0][0] == pytest.approx(m_emp, rel=5e-3)


def test_derivative_matches_finite_difference():
    sol = solve_general_mp(TWO_ATOM, 0.5)
    for x in (7.5, 10.0, 40.0):
        h = 1e-5 * x
        fd = (d_transform(x + h, sol) - d_transform(x - h, sol)) / (2 * h)
        assert d_transform_derivative(x, sol) == pytest.approx(fd, rel=1e-6)


def test_solver_errors():
    with pytest.raises(DomainError):
        solve_general_mp(SpectralLaw.point_mass(), 0.0)
    with pytest.raises(ValueError):
        solve_general_mp(SpectralLaw.point_mass(), 0.5, n_points=0)
    with pytest.raises(ValueError):
        solve_general_mp(SpectralLaw.point_mass(), 0.5, method="magic")
    with pytest.raises(DomainError):
        solve_general_mp(SpectralLaw.point_mass(0.0), 0.5)


def test_convergence_error_carries_residual():
    err = ConvergenceError("stuck", 0.25)
    assert err.residual == 0.25 and "2.500e-01" in str(err)


def test_schedule_method_agrees_with_branch():
    a = solve_general_mp(TWO_ATOM, 0.5, n_points=100)
    b = solve_general_mp(TWO_ATOM, 0.5, n_points=100, method="schedule")
    np.testing.assert_allclose(a.m_hat, b.m_hat, atol=1e-12)


# ------------------------------------------------------------- D-transform


def test_d_transform_examples(std_half):
    assert d_transform(3.75, std_half) == pytest.approx(0.5, abs=1e-8)
    sol1 = solve_general_mp(SpectralLaw.point_mass(), 1.0)
    assert d_transform(4.0 * (1 + 1e-12), sol1) == pytest.approx(1.0, abs=1e-5)
    assert d_transform(1e8, std_half) < 1e-7
    with pytest.raises(DomainError):
        d_transform(std_half.edge_sq, std_half)


def test_d_transform_inverse_examples(std_half):
    assert d_transform_inverse(0.5, std_half) == pytest.approx(3.75, abs=1e-10)
    assert d_transform_inverse(float(std_half.d_hat[-1]), std_half) == pytest.approx(std_half.grid[-1], rel=1e-12)
    edge = d_transform_inverse(1 / math.sqrt(0.5), std_half)
    assert edge == pytest.approx(std_half.edge_sq, abs=1e-3)
    with pytest.raises(SubcriticalError):
        d_transform_inverse(2.0, std_half)
    # beyond the grid on the right
    assert d_transform_inverse(1e-4, std_half) > std_half.grid[-1]


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-4, 0.99))
def test_d_transform_round_trip(frac):
    sol = solve_general_mp(TWO_ATOM, 0.5, n_points=400)
    x = d_transform_inverse(frac * sol.d_edge, sol)
    assert d_transform(x, sol) == pytest.approx(frac * sol.d_edge, rel=1e-9)
    for xg in sol.grid[10:-10:37]:
        assert d_transform_inverse(d_transform(xg, sol), sol) == pytest.approx(xg, rel=1e-6)


SUPERCRITICAL = [(g, l) for g in (0.25, 0.5, 1.0) for l in (1.0, 2.0, 5.0) if l > math.sqrt(g)]


@pytest.mark.parametrize("gamma,ell", SUPERCRITICAL)
def test_d_transform_spike_identity(gamma, ell):
    sol = solve_general_mp(SpectralLaw.point_mass(), gamma)
    x = (1 + ell) * (1 + gamma / ell)
    assert d_transform(x, sol) == pytest.approx(1 / ell, abs=1e-8)


# ------------------------------------------------------------- density / CDF


def test_density_matches_standard():
    xs = np.linspace(0.2, 2.8, 27)
    dens = mp_density(SpectralLaw.point_mass(), 0.5, xs)
    expected = [standard_mp_density(x, 0.5) for x in xs]
    np.testing.assert_allclose(dens, expected, atol=1e-5)


def test_distribution_atom_for_gamma_above_one():
    dist = mp_distribution(SpectralLaw.point_mass(), 2.0, n_points=800)
    assert dist.atom_at_zero == pytest.approx(0.5)
    assert float(dist.cdf(-1.0)) == 0.0
    assert float(dist.cdf(1e-300)) == pytest.approx(0.5, abs=1e-6)
    assert float(dist.cdf(100.0)) == 1.0


@pytest.mark.parametrize(
    "law_factory",
    [lambda p: SpectralLaw.point_mass(), lambda p: gen_ar1_variances(0.5, p), lambda p: TWO_ATOM],
    ids=["white", "ar1", "two_atom"],
)
def test_bulk_ks_monte_carlo(law_factory):
    p, n = 1000, 2000
    law = law_factory(p)
    rng = np.random.default_rng(3)
    x = rng.standard_normal((n, p)) * np.sqrt(tile_variances(law, p))
    ev = np.linalg.eigvalsh(x.T @ x / n)
    dist = mp_distribution(law, p / n, n_points=1500)
    assert ks_distance(ev, dist) < 0.05


def test_ks_handles_zero_eigenvalues():
    p, n = 400, 200
    rng = np.random.default_rng(5)
    x = rng.standard_normal((n, p))
    ev = np.linalg.eigvalsh(x.T @ x / n)
    dist = mp_distribution(SpectralLaw.point_mass(), p / n, n_points=1500)
    assert ks_distance(ev, dist) < 0.05


def test_solver_speed():
    start = time.perf_counter()
    for gamma in (0.3, 0.5, 1.0, 2.0):
        solve_general_mp(SpectralLaw.point_mass(), gamma)
    assert time.perf_counter() - start < 10.0
