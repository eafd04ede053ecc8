import numpy as np
import pytest
from hypothesis import given, strategies as st

from kvnlab.grid import make_grid, poisson_bracket, random_band_limited, spectral_derivative
from kvnlab.states import Amplitude, expectation, gaussian_state, random_state
from kvnlab.tilde_ops import (PhaseSpaceFunction, TildeOperator, apply_tilde, commutator_apply,
                              constant, hermiticity_defect, make_tilde, momentum, named_generator,
                              poisson, position, tilde_of_function, verify_canonical_algebra,
                              windowed)


@pytest.fixture
def chi(grid64, rng):
    return random_state(grid64, rng)


def test_momentum_tilde_is_q_derivative(grid64, chi):
    g = grid64
    out = make_tilde(momentum(g)).apply(chi.values)
    np.testing.assert_allclose(out, -1j * g.hbar * spectral_derivative(chi.values, g, "q"), atol=1e-14)


def test_position_tilde_is_p_derivative(grid64, chi):
    g = grid64
    out = make_tilde(position(g)).apply(chi.values)
    np.testing.assert_allclose(out, 1j * g.hbar * spectral_derivative(chi.values, g, "p"), atol=1e-14)


def test_constant_tilde_vanishes(grid64, chi):
    assert np.abs(make_tilde(constant(grid64, 3.5)).apply(chi.values)).max() == 0.0


def test_plane_wave_eigenvalue():
    g = make_grid(64, 64, (-8, 8), (-8, 8), hbar=0.7)
    k = g.kq[3]
    wave = np.exp(1j * k * g.Q) * np.exp(-g.P ** 2 / 2)
    out = make_tilde(momentum(g)).apply(wave)
    np.testing.assert_allclose(out, g.hbar * k * wave, atol=1e-12)


def test_rotation_generator_annihilates_symmetric_gaussian(grid128):
    g = grid128
    H = named_generator(g, "H_harmonic")
    chi = gaussian_state(g, 0, 0, 0.7, 0.7)
    assert np.abs(make_tilde(H).apply(chi.values)).max() <= 1e-8


def test_pure_gauge_operator(grid64, chi):
    g = grid64
    alpha = 0.3 * np.cos(g.Q) + 0.1
    T = make_tilde(constant(g, 0.0), alpha)
    np.testing.assert_allclose(T.apply(chi.values), alpha * chi.values, atol=1e-15)


def test_commutator_examples(grid128, rng):
    g = grid128
    chi = random_state(g, rng)
    tr = g.trust_region
    q, p = position(g), momentum(g)
    pt, qt = make_tilde(p), make_tilde(q)
    c = commutator_apply(q, pt, chi)
    np.testing.assert_allclose(c[tr], 1j * g.hbar * chi.values[tr], atol=1e-8)
    c = commutator_apply(qt, p, chi)
    np.testing.assert_allclose(c[tr], 1j * g.hbar * chi.values[tr], atol=1e-8)
    assert np.abs(commutator_apply(q, p, chi)).max() <= 1e-14
    assert np.abs(commutator_apply(qt, pt, chi)).max() <= 1e-10


def test_function_of_generator(grid64, rng):
    g = grid64
    chi = random_band_limited(g, rng, complex_valued=True)
    q = position(g)
    T = tilde_of_function(lambda x: x ** 2, q)
    expected = 2 * g.Q * (1j * g.hbar * spectral_derivative(chi, g, "p"))
    assert np.abs(T.apply(chi) - expected).max() <= 1e-8
    ident = tilde_of_function(lambda x: x, q)
    np.testing.assert_allclose(ident.apply(chi), make_tilde(q).apply(chi), atol=1e-14)
    zero = tilde_of_function(lambda x: 0 * x + 4, q)
    assert np.abs(zero.apply(chi)).max() == 0.0


def test_canonical_algebra_coordinates(grid64, chi):
    g = grid64
    q, p = position(g), momentum(g)
    rep = verify_canonical_algebra(q, p, chi)
    assert rep.worst <= 1e-8
    assert np.abs(make_tilde(poisson(q, p)).apply(chi.values)).max() == 0.0
    assert verify_canonical_algebra(q, q, chi).product_residual <= 1e-8


def test_canonical_algebra_windowed_quadratics(grid128, rng):
    g = grid128
    chi = random_state(g, rng)
    rep = verify_canonical_algebra(named_generator(g, "q2"), named_generator(g, "p2"), chi)
    assert rep.worst <= 1e-6


def test_hermiticity_defect_smooth_generator(grid64, rng):
    g = grid64
    G = PhaseSpaceFunction(random_band_limited(g, rng, modes=3), g, "G")
    a, b = random_state(g, rng), random_state(g, rng)
    assert abs(hermiticity_defect(make_tilde(G), a, b)) <= 1e-8


def test_hermiticity_defect_at_the_seam(grid64):
    # a sawtooth generator and states reaching the seam; the defect is reported only
    g = grid64
    a = gaussian_state(g, 7.0, 0.5, 1.0, 1.0)
    b = gaussian_state(g, 6.5, -7.0, 1.0, 1.0, kick_q=0.5)
    d = hermiticity_defect(make_tilde(position(g) * momentum(g)), a, b)
    assert np.isfinite(d) and abs(d) > 1e-7


def test_hermiticity_defect_real_state_is_imaginary(grid64, rng):
    g = grid64
    real = Amplitude(random_state(g, rng).values.real, g).normalized()
    for G in (position(g), named_generator(g, "q2"), position(g) * momentum(g)):
        d = hermiticity_defect(make_tilde(G), real, real)
        assert abs(d.real) <= 1e-10


def test_gauge_covariance_of_multiplicative_expectation(grid64, chi):
    g = grid64
    R = np.sin(g.Q) * g.P
    before = expectation(chi, R)
    shifted = make_tilde(constant(g, 0.0), 0.4 * g.Q - 0.2 * g.P)
    phased = chi.with_values(np.exp(-1j * shifted.gauge) * chi.values)
    assert abs(expectation(phased, R) - before) <= 1e-10


@given(seed=st.integers(0, 10 ** 6))
def test_poisson_commutator_map(seed):
    g = make_grid(64, 64, (-8, 8), (-8, 8))
    rng = np.random.default_rng(seed)
    u = random_band_limited(g, rng, modes=2)
    v = PhaseSpaceFunction(random_band_limited(g, rng, modes=2), g, "v")
    chi = random_state(g, rng).values
    tv = make_tilde(v)
    lhs = (u * tv.apply(chi) - tv.apply(u * chi)) / (1j * g.hbar)
    rhs = poisson_bracket(u, v.values, g) * chi
    assert np.abs(lhs - rhs)[g.trust_region].max() <= 1e-7


@given(a=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       b=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       seed=st.integers(0, 10 ** 6))
def test_linearity(a, b, seed):
    g = make_grid(32, 32, (-8, 8), (-8, 8))
    rng = np.random.default_rng(seed)
    x1, x2 = random_state(g, rng).values, random_state(g, rng).values
    T = make_tilde(windowed(g, lambda q, p: q * p, "qp"), 0.1 * np.cos(g.P))
    lhs = apply_tilde(T, a * x1 + b * x2)
    rhs = a * apply_tilde(T, x1) + b * apply_tilde(T, x2)
    scale = 1 + abs(a) + abs(b)
    assert np.abs(lhs - rhs).max() <= 1e-12 * scale * np.abs(apply_tilde(T, x1)).max() * 10


def test_tilde_operator_algebra_helpers(grid32, rng):
    g = grid32
    chi = random_state(g, rng).values
    q, p = make_tilde(position(g)), make_tilde(momentum(g))
    s = q + p.scaled(2.0)
    np.testing.assert_allclose(s.apply(chi), q.apply(chi) + 2 * p.apply(chi), atol=1e-13)
    f = np.cos(g.Q)
    np.testing.assert_allclose(q.times_field(f).apply(chi), f * q.apply(chi), atol=1e-14)
    assert isinstance(s, TildeOperator)
