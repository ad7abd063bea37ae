import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial.hermite_e import hermegauss

from egspec.baselines import (DiracSpectrum, UnsupportedKernelError, dirac_divergence_pathology,
                              exact_spectrum, lanczos, lanczos_spectrum, smooth,
                              smoothed_moment_bias)
from egspec.generators import erdos_renyi
from egspec.graph import make_operator
from egspec.moments import ProbeConfig

# Gauss-Hermite (probabilists') rule, exact for polynomials of degree < 120
HX, HW = hermegauss(60)
HW = HW / HW.sum()


def convolved_moment(dirac, sigma, m):
    """m-th moment of the Gaussian-smoothed mixture, integrated over the real line."""
    x = dirac.atoms[:, None] + sigma * HX[None, :]
    return float(dirac.weights @ (x ** m @ HW))


def random_dirac(rng, k=None, low=0.0):
    k = k or int(rng.integers(1, 12))
    return DiracSpectrum(rng.uniform(low, 1.0, k), rng.dirichlet(np.ones(k)))


@pytest.fixture(scope="module")
def op50():
    return make_operator(erdos_renyi(50, 0.2, seed=1))


def test_dirac_validation():
    d = DiracSpectrum([0.7, 0.1, 0.4], [0.2, 0.5, 0.3])
    np.testing.assert_array_equal(d.atoms, [0.1, 0.4, 0.7])
    np.testing.assert_array_equal(d.weights, [0.5, 0.3, 0.2])
    with pytest.raises(ValueError):
        DiracSpectrum([0.1, 0.2], [0.5, 0.6])
    with pytest.raises(ValueError):
        DiracSpectrum([0.1, 0.2], [1.2, -0.2])


def test_lanczos_full_run_recovers_eigenvalues(op50):
    exact = np.linalg.eigvalsh(op50.to_dense())
    v = np.random.default_rng(0).standard_normal(50)
    a, b = lanczos(op50, v, 50)
    assert a.size == 50
    from scipy.linalg import eigh_tridiagonal
    np.testing.assert_allclose(eigh_tridiagonal(a, b, eigvals_only=True), exact, atol=1e-8)


def test_lanczos_weights_sum_to_one(op50):
    for steps in (1, 5, 20, 50):
        spec = lanczos_spectrum(op50, steps, ProbeConfig(d=3, seed=2))
        assert abs(spec.weights.sum() - 1.0) <= 1e-12
        assert np.all(np.diff(spec.atoms) >= 0)


@pytest.mark.parametrize("steps", [4, 10])
def test_lanczos_moment_identity(op50, steps):
    cfg = ProbeConfig(d=1, seed=4)
    v = cfg.probes(50)[:, 0]
    v = v / np.linalg.norm(v)
    spec = lanczos_spectrum(op50, steps, cfg)
    w = v.copy()
    for k in range(1, 2 * steps):
        w = op50 @ w
        np.testing.assert_allclose(spec.moment(k), v @ w, atol=1e-12, rtol=1e-9)


def test_lanczos_breakdown_truncates():
    # a vector in a 2-dimensional invariant subspace stops after two steps
    op = make_operator(erdos_renyi(6, 0.0, seed=0))
    v = np.zeros(6)
    v[0] = 1.0
    a, b = lanczos(op, v, 5)
    assert a.size == 1 and b.size == 0
    with pytest.raises(ValueError):
        lanczos(op, v, 7)


def test_smooth_single_atom_is_gaussian():
    s = smooth(DiracSpectrum([0.5], [1.0]), "gaussian", 0.1)
    x = np.linspace(-0.5, 1.5, 41)
    pdf = np.exp(-0.5 * ((x - 0.5) / 0.1) ** 2) / (0.1 * math.sqrt(2 * math.pi))
    np.testing.assert_allclose(s(x), pdf, rtol=1e-13)


def test_narrow_kernel_integrates_to_one():
    s = smooth(DiracSpectrum([0.3, 0.6], [0.5, 0.5]), "gaussian", 1e-6)
    x = np.linspace(0.0, 1.0, 2_000_001)
    assert abs(np.trapezoid(s(x), x) - 1.0) <= 1e-3


def test_smooth_rejects_bad_bandwidth():
    d = DiracSpectrum([0.5], [1.0])
    for sigma in (0.0, -1.0):
        with pytest.raises(ValueError):
            smooth(d, "gaussian", sigma)
    with pytest.raises(ValueError):
        smooth(d, "box", 0.1)


def test_cauchy_smoothing_is_nonnegative():
    s = smooth(DiracSpectrum([0.2, 0.9], [0.4, 0.6]), "cauchy", 0.05)
    assert np.all(s(np.linspace(-3, 3, 601)) >= 0)


def test_bias_examples():
    rng = np.random.default_rng(7)
    for _ in range(5):
        d = random_dirac(rng)
        assert smoothed_moment_bias(d, "gaussian", 0.07, 2) == pytest.approx(0.07 ** 2, rel=1e-14)
        assert smoothed_moment_bias(d, "gaussian", 0.07, 1) == 0.0
    half = DiracSpectrum([0.5], [1.0])
    assert smoothed_moment_bias(half, "gaussian", 0.1, 4) == pytest.approx(0.0153, abs=1e-15)
    assert abs(convolved_moment(half, 0.1, 4) - 0.5 ** 4 - 0.0153) <= 1e-10


def test_bias_rejects_cauchy():
    with pytest.raises(UnsupportedKernelError):
        smoothed_moment_bias(DiracSpectrum([0.5], [1.0]), "cauchy", 0.1, 4)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), sigma=st.sampled_from([0.01, 0.05, 0.1, 0.3]),
       m=st.integers(1, 10))
def test_bias_matches_convolution(seed, sigma, m):
    d = random_dirac(np.random.default_rng(seed))
    bias = smoothed_moment_bias(d, "gaussian", sigma, m)
    assert bias >= 0
    assert abs(convolved_moment(d, sigma, m) - d.moment(m) - bias) <= 1e-8


def test_bias_grows_with_order():
    # fails: for atoms near 0.3, sigma^2 * C(m, 2) * lambda^(m - 2) decays in m,
    # so bias(4) < bias(2) = sigma^2 whenever all atoms sit below ~0.4
    rng = np.random.default_rng(11)
    for _ in range(20):
        d = random_dirac(rng, low=0.3)
        bias = [smoothed_moment_bias(d, "gaussian", 0.1, m) for m in range(2, 21)]
        assert min(bias) > 0
        assert all(bias[i + 2] >= bias[i] for i in range(len(bias) - 2))


@pytest.mark.parametrize("atom", [0.3, 0.6, 1.0])
def test_relative_bias_grows_with_order(atom):
    d = DiracSpectrum([atom], [1.0])
    rel = [smoothed_moment_bias(d, "gaussian", 0.1, m) / d.moment(m) for m in range(1, 21)]
    assert np.all(np.diff(rel) >= 0)


def test_pathology_identical_and_singular():
    p = DiracSpectrum([0.1, 0.5], [0.5, 0.5])
    assert dirac_divergence_pathology(p, p) == 0.0
    q = DiracSpectrum([0.1, 0.6], [0.5, 0.5])
    assert dirac_divergence_pathology(p, q) == math.inf
    r = DiracSpectrum([0.1, 0.5, 0.9], [0.25, 0.25, 0.5])
    assert dirac_divergence_pathology(p, r) == pytest.approx(math.log(2.0))


def test_pathology_between_er_graphs():
    p = exact_spectrum(make_operator(erdos_renyi(100, 0.3, seed=0)))
    q = exact_spectrum(make_operator(erdos_renyi(100, 0.3, seed=1)))
    assert dirac_divergence_pathology(p, q) == math.inf


def test_lanczos_smoothing_pipeline_is_a_density(op50):
    spec = lanczos_spectrum(op50, 20, ProbeConfig(d=10, seed=0))
    x, p = smooth(spec, "gaussian", 1e-2).on_grid(1001)
    assert np.all(p >= 0)
    assert abs(np.trapezoid(p, x) - 1.0) <= 1e-12


def test_csv_export():
    d = DiracSpectrum([0.25, 0.75], [0.5, 0.5])
    lines = d.to_csv().splitlines()
    assert lines[0] == "lambda,weight" and len(lines) == 3
    text = smooth(d, "gaussian", 0.1).to_csv(points=11)
    assert text.splitlines()[0] == "lambda,p" and len(text.splitlines()) == 12


def test_lanczos_smoothed_moments_carry_the_bias(op50):
    spec = lanczos_spectrum(op50, 12, ProbeConfig(d=5, seed=3))
    for m in range(1, 11):
        shift = convolved_moment(spec, 0.05, m) - spec.moment(m)
        assert abs(shift - smoothed_moment_bias(spec, "gaussian", 0.05, m)) <= 1e-8


def test_full_lanczos_recovers_histogram_mass():
    op = make_operator(erdos_renyi(200, 0.05, seed=0))
    ev = exact_spectrum(op).atoms
    s = smooth(lanczos_spectrum(op, 200, ProbeConfig(d=100, seed=0)), "gaussian", 1e-3)
    edges = np.linspace(0.0, 1.0, 51)
    exact = np.histogram(ev, edges)[0] / ev.size
    # mass per bin from the smoothed mixture in closed form
    from scipy.special import ndtr
    cdf = ndtr((edges[:, None] - s.base.atoms[None, :]) / s.sigma) @ s.base.weights
    mass = np.diff(cdf)
    assert np.abs(mass - exact).max() <= 0.05
