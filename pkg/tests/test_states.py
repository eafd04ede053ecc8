import numpy as np
import pytest
from hypothesis import given, strategies as st

from kvnlab.errors import BadWeights, GridMismatch, MemoryGuard
from kvnlab.grid import integrate, make_grid
from kvnlab.states import (Amplitude, LiouvilleDistribution, StateOperator, convex_mix, diagnostics,
                           expectation, gaussian_state, marginal_gaussian, marginal_operator,
                           modulus_squared, overlap_trace, partial_trace, product_state,
                           pure_state_operator, random_state, superpose)
from kvnlab.tilde_ops import position


def _check_operator(rho: StateOperator):
    d = diagnostics(rho)
    assert d["hermiticity"] <= 1e-10
    assert abs(d["trace"] - 1) <= 1e-8
    assert d.get("min_eigenvalue", 0.0) >= -1e-8


def test_gaussian_density(grid128):
    g = grid128
    chi = gaussian_state(g, 0.5, -1.0, 1.0, 0.8)
    rho_l = modulus_squared(chi)
    analytic = (np.exp(-(g.Q - 0.5) ** 2 / 2) / np.sqrt(2 * np.pi)
                * np.exp(-(g.P + 1) ** 2 / (2 * 0.64)) / np.sqrt(2 * np.pi * 0.64))
    np.testing.assert_allclose(rho_l.values, analytic, atol=1e-10)
    assert abs(rho_l.mass - 1) <= 1e-8


def test_global_phase_leaves_density_unchanged(grid64):
    chi = gaussian_state(grid64, 1.0, 0.0)
    rotated = chi.with_values(np.exp(0.7j) * chi.values)
    np.testing.assert_allclose(modulus_squared(chi).values, modulus_squared(rotated).values,
                               rtol=1e-14, atol=1e-300)


def test_separated_lobes_carry_half_the_mass(grid128):
    g = grid128
    a, b = gaussian_state(g, -3.0, 0.0, 0.6, 0.6), gaussian_state(g, 3.0, 0.0, 0.6, 0.6)
    rho_l = modulus_squared(superpose([(1, a), (1, b)]))
    left = np.where(g.Q < 0, rho_l.values, 0.0)
    right = np.where(g.Q > 0, rho_l.values, 0.0)
    assert integrate(left, g) == pytest.approx(0.5, abs=1e-6)
    assert integrate(right, g) == pytest.approx(0.5, abs=1e-6)


def _covariance(rho_l, g):
    mq = integrate(rho_l * g.Q, g)
    mp = integrate(rho_l * g.P, g)
    return integrate(rho_l * (g.Q - mq) * (g.P - mp), g)


def test_product_state_has_no_covariance(grid128):
    g = grid128
    chi = product_state(marginal_gaussian(g, 1, 1.0, 0.9), marginal_gaussian(g, 2, -0.5, 1.3))
    np.testing.assert_allclose(chi.values, np.outer(marginal_gaussian(g, 1, 1.0, 0.9).values,
                                                    marginal_gaussian(g, 2, -0.5, 1.3).values))
    assert abs(_covariance(modulus_squared(chi).values, g)) <= 1e-8


def test_correlated_superposition_has_covariance(grid128):
    g = grid128
    chi = superpose([(1, gaussian_state(g, -2, -2, 0.7, 0.7)), (1, gaussian_state(g, 2, 2, 0.7, 0.7))])
    # two lobes at +-(2, 2): covariance 4 up to the small lobe interference term
    assert _covariance(modulus_squared(chi).values, g) == pytest.approx(4.0, abs=2e-3)


def test_product_grid_mismatch(grid32, grid64):
    with pytest.raises(GridMismatch):
        product_state(marginal_gaussian(grid32, 1), marginal_gaussian(grid64, 2))


def test_negative_density_rejected(grid32):
    v = np.zeros(grid32.shape)
    v[0, 0] = -1e-3
    with pytest.raises(ValueError):
        LiouvilleDistribution(v, grid32)
    v[0, 0] = -1e-14
    assert LiouvilleDistribution(v, grid32).values.min() == 0.0


def test_non_finite_amplitude_rejected(grid32):
    v = np.zeros(grid32.shape, dtype=complex)
    v[1, 1] = np.nan
    with pytest.raises(ValueError):
        Amplitude(v, grid32)


def test_pure_operator_properties(grid32, rng):
    chi = random_state(grid32, rng)
    rho = pure_state_operator(chi)
    _check_operator(rho)
    assert abs(rho.purity - 1) <= 1e-6
    np.testing.assert_allclose(rho.diagonal, modulus_squared(chi).values, atol=1e-10)


def test_orthogonal_pure_states(grid32):
    g = grid32
    a = product_state(marginal_gaussian(g, 1, 0.0, 0.8), marginal_gaussian(g, 2, 0.0, 0.8))
    odd = marginal_gaussian(g, 1, 0.0, 0.8)
    odd = type(odd)(odd.values * g.q, g, 1).normalized()
    b = product_state(odd, marginal_gaussian(g, 2, 0.0, 0.8))
    ra, rb = pure_state_operator(a), pure_state_operator(b)
    assert abs(overlap_trace(ra, rb)) <= 1e-8
    mix = convex_mix([(0.5, ra), (0.5, rb)])
    _check_operator(mix)
    assert mix.purity == pytest.approx(0.5, abs=1e-6)
    np.testing.assert_allclose(mix.diagonal, 0.5 * (ra.diagonal + rb.diagonal), atol=1e-14)


def test_single_state_mix_is_identity(grid32, rng):
    rho = pure_state_operator(random_state(grid32, rng))
    np.testing.assert_array_equal(convex_mix([(1.0, rho)]).matrix, rho.matrix)


@pytest.mark.parametrize("weights", [[0.6, 0.6], [-0.1, 1.1], []])
def test_bad_weights(grid32, rng, weights):
    rho = pure_state_operator(random_state(grid32, rng))
    with pytest.raises(BadWeights):
        convex_mix([(w, rho) for w in weights])


def test_memory_guard(grid128):
    with pytest.raises(MemoryGuard):
        pure_state_operator(gaussian_state(grid128))


def test_expectation_examples(grid64):
    g = grid64
    chi = gaussian_state(g, 0.0, 0.3, 1.5, 1.0)
    rho = pure_state_operator(chi)
    assert expectation(rho, np.ones(g.shape)) == pytest.approx(1.0, abs=1e-10)
    # the periodic lattice has an unpaired node at q_min, so symmetry is tested on a narrower state
    assert abs(expectation(pure_state_operator(gaussian_state(g, sigma_q=1.0)), position(g))) <= 1e-8
    assert expectation(rho, g.Q ** 2).real == pytest.approx(2.25, abs=1e-4)
    assert abs(expectation(rho, g.Q ** 2).imag) <= 1e-8


def test_expectation_matches_density_integral(grid32, rng):
    g = grid32
    chi = random_state(g, rng)
    rho = pure_state_operator(chi)
    R = np.cos(g.Q) * np.sin(0.5 * g.P) + g.P
    direct = integrate(modulus_squared(chi).values * R, g)
    assert expectation(rho, R).real == pytest.approx(direct, abs=1e-6)
    assert expectation(chi, R).real == pytest.approx(direct, abs=1e-6)


def test_partial_trace_of_product_is_pure(grid32):
    g = grid32
    m1, m2 = marginal_gaussian(g, 1, 0.5, 0.9), marginal_gaussian(g, 2, -0.5, 1.1)
    rho = pure_state_operator(product_state(m1, m2))
    r1, r2 = partial_trace(rho, 1), partial_trace(rho, 2)
    for r, m in ((r1, m1), (r2, m2)):
        assert abs(r.purity - 1) <= 1e-6
        assert abs(r.trace - 1) <= 1e-8
        np.testing.assert_allclose(r.matrix, marginal_operator(m).matrix, atol=1e-10)


def _gauss_overlap(a, b, sigma):
    return np.exp(-(a - b) ** 2 / (8 * sigma ** 2))


def test_partial_trace_purity_against_gram_oracle():
    # two product terms with overlapping factors; the reduced purity follows from
    # the 2x2 Gram matrices of analytic Gaussian overlaps
    g = make_grid(64, 64, (-8, 8), (-8, 8))
    s = 0.8
    qa, pa = (-0.6, 0.7), (0.4, -0.9)
    chi = superpose([(1 / np.sqrt(2), product_state(marginal_gaussian(g, 1, qa[i], s),
                                                    marginal_gaussian(g, 2, pa[i], s)))
                     for i in range(2)])
    c = np.array([1, 1]) / np.sqrt(2)
    A = np.array([[_gauss_overlap(qa[i], qa[j], s) for j in range(2)] for i in range(2)])
    B = np.array([[_gauss_overlap(pa[i], pa[j], s) for j in range(2)] for i in range(2)])
    norm2 = np.sum(np.outer(c, c) * A * B)
    M = np.outer(c, c) * B.T / norm2
    expected = np.trace(M @ A @ M @ A)
    rho = pure_state_operator(chi)
    for which in (1, 2):
        r = partial_trace(rho, which)
        d = diagnostics(r)
        assert d["hermiticity"] <= 1e-10 and d["min_eigenvalue"] >= -1e-8
        assert abs(r.trace - 1) <= 1e-8
        assert r.purity == pytest.approx(expected, abs=1e-8)
    assert expected < 0.99


@given(seed_a=st.integers(0, 10 ** 6), seed_b=st.integers(0, 10 ** 6))
def test_overlap_trace_bounds(seed_a, seed_b):
    g = make_grid(16, 16, (-6, 6), (-6, 6))
    ra = pure_state_operator(random_state(g, np.random.default_rng(seed_a)))
    rb = pure_state_operator(random_state(g, np.random.default_rng(seed_b)))
    t = overlap_trace(ra, rb)
    assert -1e-12 <= t <= 1 + 1e-8


@given(re=st.floats(-5, 5), im=st.floats(-5, 5), seed=st.integers(0, 10 ** 6))
def test_density_invariant_under_scalar(re, im, seed):
    c = complex(re, im)
    if abs(c) < 1e-3:
        return
    g = make_grid(16, 16, (-6, 6), (-6, 6))
    chi = random_state(g, np.random.default_rng(seed))
    scaled = Amplitude(c * chi.values, g).normalized()
    np.testing.assert_allclose(modulus_squared(scaled).values, modulus_squared(chi).values, atol=1e-12)


@given(seed=st.integers(0, 10 ** 6))
def test_partial_traces_are_valid_states(seed):
    g = make_grid(16, 16, (-6, 6), (-6, 6))
    rng = np.random.default_rng(seed)
    rho = convex_mix([(0.3, pure_state_operator(random_state(g, rng))),
                      (0.7, pure_state_operator(random_state(g, rng)))])
    for which in (1, 2):
        d = diagnostics(partial_trace(rho, which))
        assert d["hermiticity"] <= 1e-10
        assert abs(d["trace"] - 1) <= 1e-8
        assert d["min_eigenvalue"] >= -1e-8
        assert d["purity"] <= 1 + 1e-8
