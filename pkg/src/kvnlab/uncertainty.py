"""Standard deviations and Robertson-type bounds for phase-space and tilde variables.

Variances use ``||(A - <A>) chi||^2``, so a tilde operator is applied once
and never squared. For state operators the same quantity is
``Tr(A rho A^dagger) - <A>^2``, which also needs only single applications.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MaskViolation
from .grid import inner
from .propagator import HamiltonianSpec, dynamical_time, liouvillian
from .states import Amplitude, StateOperator
from .tilde_ops import apply_operator, commutator_apply, make_tilde, poisson

HERMITICITY_TOL = 1e-6


@dataclass
class UncertaintyReport:
    sigma_a: float
    sigma_b: float
    bound: float
    label: str = ""
    notes: dict = field(default_factory=dict)

    @property
    def product(self) -> float:
        return self.sigma_a * self.sigma_b

    @property
    def slack(self) -> float:
        return self.product - self.bound

    def to_dict(self) -> dict:
        return {"label": self.label, "sigma_a": self.sigma_a, "sigma_b": self.sigma_b,
                "bound": self.bound, "slack": self.slack, **self.notes}


def _columns(rho: StateOperator) -> np.ndarray:
    g = rho.grid
    return np.ascontiguousarray(rho.matrix.T).reshape(g.size, *g.shape)


def _mean(state, apply) -> complex:
    """``<X>`` where ``apply`` maps amplitude arrays (batched) to ``X`` applied."""
    if isinstance(state, Amplitude):
        return inner(state.values, apply(state.values), state.grid)
    g = state.grid
    r = apply(_columns(state)).reshape(g.size, g.size)
    return complex(np.trace(r) * g.cell)


def stddev(state, A) -> float:
    """``sqrt(<(A - <A>)^2>)`` by the apply-once route.

    Returns NaN when ``A`` is visibly non-Hermitian on the state
    (``|Im <A>| > 1e-6``), since the variance is then meaningless.
    """
    grid = state.grid

    def app(x):
        return apply_operator(A, x, grid)

    mean = _mean(state, app)
    if abs(mean.imag) > HERMITICITY_TOL:
        return float("nan")
    mu = mean.real
    if isinstance(state, Amplitude):
        d = app(state.values) - mu * state.values
        return float(np.sqrt(max(inner(d, d, grid).real, 0.0)))
    # Tr(A rho A^dagger) with A applied to columns, then to columns of (A rho)^dagger
    a_rho = app(_columns(state)).reshape(grid.size, grid.size).T
    second = app(np.ascontiguousarray(a_rho.conj()).reshape(grid.size, *grid.shape))
    second = complex(np.trace(second.reshape(grid.size, grid.size)) * grid.cell).real
    tr = state.trace.real
    var = second - 2 * mu * mu + mu * mu * tr
    return float(np.sqrt(max(var, 0.0)))


def commutator_mean(state, A, B) -> complex:
    grid = state.grid
    return _mean(state, lambda x: commutator_apply(A, B, x, grid))


def robertson(state, A, B, label: str = "") -> UncertaintyReport:
    """``sigma_A sigma_B`` against ``|<[A, B]>|/2``."""
    bound = 0.5 * abs(commutator_mean(state, A, B))
    return UncertaintyReport(stddev(state, A), stddev(state, B), float(bound), label)


def tilde_tilde_bound(state, u, v, label: str = "") -> UncertaintyReport:
    """``sigma_u~ sigma_v~`` against ``(hbar/2)|<tilde({u,v})>|`` (canonical gauge)."""
    tu, tv = make_tilde(u), make_tilde(v)
    w = make_tilde(poisson(u, v))
    grid = state.grid
    mean = _mean(state, lambda x: w.apply(x))
    bound = 0.5 * grid.hbar * abs(mean)
    return UncertaintyReport(stddev(state, tu), stddev(state, tv), float(bound),
                             label or f"tilde({u.label}), tilde({v.label})")


def tau_liouvillian_report(state, H: HamiltonianSpec, p_cut: float = 1.0,
                           min_mass: float = 0.999) -> UncertaintyReport:
    """Robertson report for the dynamical time ``tau = m q / p`` and ``H~``.

    ``tau`` is only defined on ``|p| > p_cut`` (set to zero elsewhere); the
    report records that mask and the state's mass inside it.
    """
    grid = state.grid
    tau, mask = dynamical_time(grid, H, p_cut)
    if isinstance(state, Amplitude):
        density = np.abs(state.values) ** 2
    else:
        density = state.diagonal
    mass = float(density[mask].sum() * grid.cell)
    if mass < min_mass:
        raise MaskViolation(f"only {mass:.6f} of the mass lies in |p| > {p_cut}")
    rep = robertson(state, tau, liouvillian(H, grid), "tau, tilde(H)")
    rep.notes = {"p_cut": p_cut, "mass_in_mask": mass, "tau_domain": "masked |p| > p_cut"}
    return rep
