from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egspec.baselines import exact_spectrum
from egspec.generators import SemicircleSpec, erdos_renyi, semicircle_moments
from egspec.graph import NORMALIZED, from_edges, make_operator
from egspec.moments import (CHEBYSHEV, POWER, MomentVector, ProbeConfig, basis_convert,
                            basis_values, exact_moments, shifted_chebyshev_coefficients,
                            ste_moments)


def test_isolated_nodes_exact_for_any_probe():
    op = make_operator(from_edges(50, [], []))
    for dist in ("gaussian", "rademacher"):
        mv = ste_moments(op, ProbeConfig(d=7, distribution=dist, seed=11), 12, POWER)
        np.testing.assert_allclose(mv.values, 0.5 ** np.arange(1, 13), rtol=1e-14)


def test_er100_within_five_standard_errors(er_small):
    op = make_operator(er_small)
    exact = exact_moments(exact_spectrum(op), 20, CHEBYSHEV)
    mv = ste_moments(op, ProbeConfig(d=100, seed=0), 20, CHEBYSHEV)
    err = np.abs(mv.values - exact.values)
    assert err.max() <= 0.03
    assert np.all(err <= 5 * mv.standard_error + 1e-12)


def test_deterministic(er_small):
    op = make_operator(er_small)
    a = ste_moments(op, ProbeConfig(d=20, seed=5), 10)
    b = ste_moments(op, ProbeConfig(d=20, seed=5), 10)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.estimator_variance, b.estimator_variance)


def test_probe_subsets_regenerate():
    full = ProbeConfig(d=8, seed=3).probes(30)
    head = ProbeConfig(d=3, seed=3).probes(30)
    np.testing.assert_array_equal(full[:, :3], head)


def test_chebyshev_matches_converted_power(er_small):
    op = make_operator(er_small)
    cfg = ProbeConfig(d=10, seed=2)
    cheb = ste_moments(op, cfg, 15, CHEBYSHEV)
    power = ste_moments(op, cfg, 15, POWER)
    # same probes, so only rounding separates them; the conversion amplifies
    # it by roughly 5.8**m
    np.testing.assert_allclose(basis_convert(power, CHEBYSHEV).values, cheb.values, atol=1e-6)


def test_dimension_normalization_is_unbiased():
    g = erdos_renyi(60, 0.2, seed=1)
    op = make_operator(g)
    exact = exact_moments(exact_spectrum(op), 4, POWER).values
    mv = ste_moments(op, ProbeConfig(d=4000, seed=1, normalization="dimension"), 4, POWER)
    assert np.all(np.abs(mv.values - exact) <= 5 * mv.standard_error)


def test_gaussian_and_rademacher_agree():
    op = make_operator(erdos_renyi(80, 0.1, seed=4))
    g = ste_moments(op, ProbeConfig(d=2000, seed=1), 6)
    r = ste_moments(op, ProbeConfig(d=2000, seed=1, distribution="rademacher"), 6)
    se = np.hypot(g.standard_error, r.standard_error)
    assert np.all(np.abs(g.values - r.values) <= 5 * se)


def test_errors():
    op = make_operator(from_edges(3, [0], [1]))
    with pytest.raises(ValueError):
        ste_moments(op, ProbeConfig(d=2), 0)
    with pytest.raises(ValueError):
        ste_moments(make_operator(from_edges(3, [0], [1]), NORMALIZED), ProbeConfig(d=2), 3)
    with pytest.raises(ValueError):
        ProbeConfig(d=0)


class _Atoms:
    def __init__(self, atoms, weights):
        self.atoms, self.weights = np.asarray(atoms), np.asarray(weights)


def test_exact_moment_examples():
    np.testing.assert_allclose(exact_moments(_Atoms([0.5], [1.0]), 6, POWER).values,
                               0.5 ** np.arange(1, 7))
    np.testing.assert_allclose(exact_moments(_Atoms([0.0, 1.0], [0.5, 0.5]), 6, POWER).values,
                               0.5)
    grid = (np.arange(101) + 0.5) / 101
    mv = exact_moments(_Atoms(grid, np.full(101, 1 / 101)), 2, POWER)
    np.testing.assert_allclose(mv.values, [0.5, 1 / 3], atol=1e-3)
    with pytest.raises(ValueError):
        exact_moments(_Atoms([0.2, 0.3], [0.5, 0.6]), 2)


def test_point_mass_chebyshev_pattern():
    mv = MomentVector(POWER, 0.5 ** np.arange(1, 9))
    np.testing.assert_allclose(basis_convert(mv, CHEBYSHEV).values,
                               [0, -1, 0, 1, 0, -1, 0, 1], atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_roundtrip_conversion(m, seed):
    rng = np.random.default_rng(seed)
    atoms = rng.random(5)
    w = rng.random(5)
    mv = exact_moments(_Atoms(atoms, w / w.sum()), m, POWER)
    back = basis_convert(basis_convert(mv, CHEBYSHEV), POWER)
    np.testing.assert_allclose(back.values, mv.values, atol=1e-10)


def test_conversion_cap():
    with pytest.raises(ValueError):
        basis_convert(MomentVector(POWER, np.full(121, 0.1)), CHEBYSHEV)
    with pytest.raises(ValueError):
        shifted_chebyshev_coefficients(121)


def test_chebyshev_coefficients_exact():
    table = shifted_chebyshev_coefficients(60)
    x = Fraction(3, 7)
    # T_k(2x - 1) by the recurrence in exact arithmetic
    t = 2 * x - 1
    prev, cur = Fraction(1), t
    for k in range(1, 60):
        assert sum(c * x ** j for j, c in enumerate(table[k])) == cur
        prev, cur = cur, 2 * t * cur - prev


def test_semicircle_chebyshev_monte_carlo():
    mv = semicircle_moments(SemicircleSpec(0.5, 0.5), 12, CHEBYSHEV)
    rng = np.random.default_rng(0)
    # semicircle on [0, 1] is Beta(3/2, 3/2)
    x = rng.beta(1.5, 1.5, 200_000)
    phi = basis_values(CHEBYSHEV, x, 12)[0]
    mean, se = phi.mean(axis=1), phi.std(axis=1) / np.sqrt(x.size)
    assert np.all(np.abs(mean - mv.values) <= 3 * se + 1e-12)


def test_basis_derivatives_finite_difference():
    x = np.linspace(0.05, 0.95, 7)
    h = 1e-5
    for basis in (POWER, CHEBYSHEV):
        v = basis_values(basis, x, 8, derivatives=2)
        up, dn = basis_values(basis, x + h, 8)[0], basis_values(basis, x - h, 8)[0]
        np.testing.assert_allclose(v[1], (up - dn) / (2 * h), rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(v[2], (up - 2 * v[0] + dn) / h ** 2, rtol=1e-3, atol=1e-2)


def test_json_roundtrip(er_small):
    mv = ste_moments(make_operator(er_small), ProbeConfig(d=5, seed=9), 4)
    back = MomentVector.from_json(mv.to_json())
    np.testing.assert_array_equal(back.values, mv.values)
    np.testing.assert_array_equal(back.estimator_variance, mv.estimator_variance)
    assert (back.basis, back.probes_used, back.seed) == (mv.basis, 5, 9)
    assert set(mv.to_dict()) == {"basis", "m", "d", "seed", "values", "variance"}
