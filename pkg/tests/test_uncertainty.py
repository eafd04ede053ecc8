import numpy as np
import pytest
from hypothesis import given, strategies as st

from kvnlab.errors import MaskViolation
from kvnlab.grid import make_grid
from kvnlab.propagator import HamiltonianSpec, canonical_transform
from kvnlab.states import (MarginalAmplitude, convex_mix, gaussian_state, marginal_cat,
                           marginal_gaussian, product_state, pure_state_operator, random_state)
from kvnlab.tilde_ops import make_tilde, momentum, named_generator, poisson, position
from kvnlab.uncertainty import robertson, stddev, tau_liouvillian_report, tilde_tilde_bound


@pytest.fixture(scope="module")
def wide():
    return make_grid(256, 128, (-20, 20), (-8, 8))


def test_stddev_examples(wide):
    g = wide
    chi = gaussian_state(g, 0.5, 0.0, 1.5, 1.0)
    assert stddev(chi, position(g)) == pytest.approx(1.5, abs=1e-4)
    assert stddev(chi, make_tilde(momentum(g))) == pytest.approx(g.hbar / 3.0, abs=1e-4)
    assert stddev(chi, np.ones(g.shape)) <= 1e-12


def test_stddev_nan_for_non_hermitian(grid64, rng):
    g = grid64
    chi = random_state(g, rng)
    assert np.isnan(stddev(chi, 1j * g.Q))


def test_robertson_examples(wide):
    g = wide
    chi = gaussian_state(g, 0.0, 0.3, 1.5, 0.8)
    q, p, pt = position(g), momentum(g), make_tilde(momentum(g))
    rep = robertson(chi, q, pt)
    assert rep.product == pytest.approx(g.hbar / 2, abs=1e-4)
    assert rep.bound == pytest.approx(g.hbar / 2, abs=1e-8)
    assert abs(rep.slack) <= 1e-4
    assert robertson(chi, q, p).bound <= 1e-15


def test_robertson_phase_space_and_tilde(grid128, rng):
    g = grid128
    chi = random_state(g, rng)
    u = named_generator(g, "q2")
    v = momentum(g)
    rep = robertson(chi, u, make_tilde(v))
    from kvnlab.grid import inner

    expected = 0.5 * g.hbar * abs(inner(chi.values, poisson(u, v).values * chi.values, g))
    assert rep.bound == pytest.approx(expected, rel=1e-8)
    assert rep.slack >= -1e-6


def test_tilde_tilde_examples(grid128, rng):
    g = grid128
    chi = random_state(g, rng)
    q, p = position(g), momentum(g)
    assert tilde_tilde_bound(chi, q, p).bound == 0.0
    assert tilde_tilde_bound(chi, q, q).bound == 0.0
    state = gaussian_state(g, 0.0, 0.0, 0.6, 0.6, kick_p=0.7)
    rep = tilde_tilde_bound(state, named_generator(g, "q2"), momentum(g))
    from kvnlab.grid import inner

    two_qt = make_tilde(position(g)).scaled(2.0)
    expected = 0.5 * g.hbar * abs(inner(state.values, two_qt.apply(state.values), g))
    assert expected == pytest.approx(0.7, abs=1e-6)
    assert rep.bound == pytest.approx(expected, abs=1e-8)
    assert rep.slack >= -1e-6


def test_tau_report(grid128):
    g = grid128
    chi = gaussian_state(g, 0.0, 3.0, 1.0, 0.3)
    rep = tau_liouvillian_report(chi, HamiltonianSpec.free(), p_cut=1.0)
    assert rep.bound == pytest.approx(g.hbar / 2, abs=1e-3)
    assert rep.slack >= -1e-4
    assert rep.notes["mass_in_mask"] >= 0.999


def test_tau_report_broad_state(grid128):
    g = grid128
    narrow = tau_liouvillian_report(gaussian_state(g, 0.0, 3.0, 0.5, 0.3), HamiltonianSpec.free())
    broad = tau_liouvillian_report(gaussian_state(g, 0.0, 3.0, 1.6, 0.3), HamiltonianSpec.free())
    assert broad.sigma_a > narrow.sigma_a
    assert broad.sigma_b < narrow.sigma_b
    assert broad.product >= g.hbar / 2 - 1e-4


def test_tau_mask_violation(grid128):
    with pytest.raises(MaskViolation):
        tau_liouvillian_report(gaussian_state(grid128, 0.0, 0.0, 1.0, 1.0), HamiltonianSpec.free())
    with pytest.raises(ValueError):
        tau_liouvillian_report(gaussian_state(grid128, 0.0, 3.0, 1.0, 0.3), HamiltonianSpec.harmonic())


@pytest.mark.parametrize("sigma", [0.8, 1.2, 1.5])
def test_gaussian_in_q_product_states_saturate(wide, sigma):
    g = wide
    chi = product_state(marginal_gaussian(g, 1, 0.7, sigma),
                        marginal_cat(g, 2, 3.0, 0.6))
    rep = robertson(chi, position(g), make_tilde(momentum(g)))
    assert abs(rep.slack) / rep.bound <= 1e-3


def test_non_gaussian_q_profiles_do_not_saturate(wide):
    g = wide
    cat = product_state(marginal_cat(g, 1, 3.0, 0.8), marginal_gaussian(g, 2))
    excited = MarginalAmplitude(g.q * marginal_gaussian(g, 1, 0.0, 1.0).values, g, 1).normalized()
    for chi in (cat, product_state(excited, marginal_gaussian(g, 2))):
        rep = robertson(chi, position(g), make_tilde(momentum(g)))
        assert rep.slack / rep.bound > 1e-3


def test_amplitude_and_trace_paths_agree(grid32, rng):
    g = grid32
    chi = random_state(g, rng)
    rho = pure_state_operator(chi)
    for A in (position(g), make_tilde(momentum(g)), make_tilde(named_generator(g, "p2")), g.Q * g.P):
        assert stddev(chi, A) == pytest.approx(stddev(rho, A), abs=1e-8)


def test_mixed_state_relation(grid32, rng):
    g = grid32
    rho = convex_mix([(0.5, pure_state_operator(random_state(g, rng))),
                      (0.5, pure_state_operator(random_state(g, rng)))])
    rep = robertson(rho, position(g), make_tilde(momentum(g)))
    assert rep.bound == pytest.approx(g.hbar / 2, abs=1e-6)
    assert rep.slack >= -1e-6


def test_translation_invariance(grid128, rng):
    g = grid128
    chi = random_state(g, rng)
    moved = canonical_transform(chi, momentum(g), 8 * g.dq)
    a = robertson(chi, position(g), make_tilde(momentum(g)))
    b = robertson(moved, position(g), make_tilde(momentum(g)))
    assert abs(a.sigma_a - b.sigma_a) <= 1e-8
    assert abs(a.sigma_b - b.sigma_b) <= 1e-8
    assert abs(a.bound - b.bound) <= 1e-8


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_relation_holds_for_random_states(seed):
    g = make_grid(64, 64, (-8, 8), (-8, 8))
    chi = random_state(g, np.random.default_rng(seed))
    rep = robertson(chi, position(g), make_tilde(momentum(g)))
    assert rep.slack >= -1e-6
    assert rep.to_dict()["slack"] == rep.slack
