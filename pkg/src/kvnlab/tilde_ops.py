"""Tilde-variables: generators of canonical transformations on amplitudes.

A tilde operator built from a real phase-space function ``u`` acts as

    u~ chi = i hbar (du/dq dchi/dp - du/dp dchi/dq) + alpha_u chi

with spectral derivatives of ``chi``. The gradient of ``u`` is taken from
the function itself when it is known in closed form (coordinates, separable
Hamiltonians) and spectrally otherwise, which requires ``u`` to be smooth and
periodic; :func:`windowed` produces such fields from polynomial generators.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import sympy

from .errors import GridMismatch
from .grid import PhaseGrid, gradient, inner, spectral_derivative


@dataclass(eq=False)
class PhaseSpaceFunction:
    """Real field ``u(q, p)`` with an optional closed-form gradient."""

    values: np.ndarray
    grid: PhaseGrid
    label: str = ""
    grad: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        v = np.asarray(self.grid.check(self.values))
        if np.iscomplexobj(v):
            if np.abs(v.imag).max() > 0:
                raise ValueError(f"phase-space function {self.label!r} must be real")
            v = v.real
        if not np.all(np.isfinite(v)):
            raise ValueError(f"phase-space function {self.label!r} has non-finite samples")
        self.values = np.broadcast_to(v.astype(float), self.grid.shape)
        if self.grad is not None:
            self.grad = tuple(np.broadcast_to(np.asarray(g, dtype=float), self.grid.shape)
                              for g in self.grad)

    def gradient(self) -> tuple[np.ndarray, np.ndarray]:
        if self.grad is not None:
            return self.grad
        return gradient(np.ascontiguousarray(self.values), self.grid)

    def _coerce(self, other):
        if isinstance(other, PhaseSpaceFunction):
            if other.grid != self.grid:
                raise GridMismatch("phase-space functions live on different grids")
            return other
        c = float(other)
        return constant(self.grid, c)

    def __add__(self, other):
        o = self._coerce(other)
        grad = None
        if self.grad is not None and o.grad is not None:
            grad = (self.grad[0] + o.grad[0], self.grad[1] + o.grad[1])
        return PhaseSpaceFunction(self.values + o.values, self.grid,
                                  f"({self.label}+{o.label})", grad)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __mul__(self, other):
        o = self._coerce(other)
        grad = None
        if self.grad is not None and o.grad is not None:
            grad = (self.grad[0] * o.values + self.values * o.grad[0],
                    self.grad[1] * o.values + self.values * o.grad[1])
        return PhaseSpaceFunction(self.values * o.values, self.grid,
                                  f"{self.label}*{o.label}", grad)

    __rmul__ = __mul__


def constant(grid: PhaseGrid, c: float) -> PhaseSpaceFunction:
    z = np.zeros(grid.shape)
    return PhaseSpaceFunction(np.full(grid.shape, float(c)), grid, repr(c), (z, z))


def position(grid: PhaseGrid) -> PhaseSpaceFunction:
    """The coordinate ``q`` with its exact unit gradient (sawtooth values)."""
    return PhaseSpaceFunction(grid.Q, grid, "q", (np.ones(grid.shape), np.zeros(grid.shape)))


def momentum(grid: PhaseGrid) -> PhaseSpaceFunction:
    return PhaseSpaceFunction(grid.P, grid, "p", (np.zeros(grid.shape), np.ones(grid.shape)))


def windowed(grid: PhaseGrid, f, label: str = "", axes: str | None = None) -> PhaseSpaceFunction:
    """Multiply ``f(Q, P)`` (or a sampled array) by the seam window.

    Only axes along which ``f`` varies are windowed unless ``axes`` is given,
    so products of windowed generators stay resolvable on the grid.
    """
    vals = np.asarray(f(grid.Q, grid.P) if callable(f) else f, dtype=float)
    vals = np.broadcast_to(vals, grid.shape)
    if axes is None:
        axes = ""
        if np.ptp(vals, axis=0).max() > 0:
            axes += "q"
        if np.ptp(vals, axis=1).max() > 0:
            axes += "p"
    return PhaseSpaceFunction(vals * grid.window(axes), grid, label or "windowed")


def named_generator(grid: PhaseGrid, name: str, m: float = 1.0, omega: float = 1.0) -> PhaseSpaceFunction:
    """Generators addressable by name from scenario files."""
    if name == "q":
        return position(grid)
    if name == "p":
        return momentum(grid)
    if name == "q_windowed":
        return windowed(grid, lambda q, p: q, "q_w")
    if name == "p_windowed":
        return windowed(grid, lambda q, p: p, "p_w")
    if name == "q2":
        return windowed(grid, lambda q, p: q ** 2, "q^2")
    if name == "p2":
        return windowed(grid, lambda q, p: p ** 2, "p^2")
    if name in ("H_free", "H_harmonic"):
        from .propagator import HamiltonianSpec

        spec = HamiltonianSpec.free(m) if name == "H_free" else HamiltonianSpec.harmonic(m, omega)
        return spec.as_function(grid)
    raise ValueError(f"unknown generator name {name!r}")


@dataclass(eq=False)
class TildeOperator:
    """``i hbar (g_q d/dp - g_p d/dq) + gauge`` on amplitudes of ``grid``.

    ``g_q, g_p`` are the gradient fields of the generating function.
    """

    g_q: np.ndarray
    g_p: np.ndarray
    gauge: np.ndarray
    grid: PhaseGrid
    label: str = ""

    def __post_init__(self):
        for name in ("g_q", "g_p", "gauge"):
            arr = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, np.broadcast_to(arr, self.grid.shape))

    def apply(self, chi: np.ndarray) -> np.ndarray:
        g = self.grid
        chi = g.check(chi)
        out = np.zeros(np.broadcast_shapes(chi.shape, g.shape), dtype=complex)
        if np.any(self.g_q):
            out += 1j * g.hbar * self.g_q * spectral_derivative(chi, g, "p")
        if np.any(self.g_p):
            out -= 1j * g.hbar * self.g_p * spectral_derivative(chi, g, "q")
        if np.any(self.gauge):
            out += self.gauge * chi
        return out

    __call__ = apply

    def __add__(self, other: "TildeOperator") -> "TildeOperator":
        return TildeOperator(self.g_q + other.g_q, self.g_p + other.g_p,
                             self.gauge + other.gauge, self.grid, f"{self.label}+{other.label}")

    def scaled(self, c: float) -> "TildeOperator":
        return TildeOperator(c * self.g_q, c * self.g_p, c * self.gauge, self.grid, f"{c}*{self.label}")

    def times_field(self, f: np.ndarray) -> "TildeOperator":
        """Left multiplication by the real field ``f``: ``f u~``."""
        return TildeOperator(f * self.g_q, f * self.g_p, f * self.gauge, self.grid, f"f*{self.label}")


def canonical_gauge(u: PhaseSpaceFunction, alpha_q=0.0, alpha_p=0.0) -> np.ndarray:
    """``alpha_u = du/dq alpha_q + du/dp alpha_p`` (canonical representation)."""
    uq, up = u.gradient()
    return uq * alpha_q + up * alpha_p


def make_tilde(u: PhaseSpaceFunction, alpha=None) -> TildeOperator:
    uq, up = u.gradient()
    gauge = np.zeros(u.grid.shape) if alpha is None else np.asarray(alpha, dtype=float)
    return TildeOperator(uq, up, gauge, u.grid, f"tilde({u.label})")


OperatorHandle = Union[TildeOperator, PhaseSpaceFunction, np.ndarray, float, complex]


def multiplier(R, grid: PhaseGrid):
    """Field by which a multiplicative handle acts, or None for tilde operators."""
    if isinstance(R, TildeOperator):
        return None
    if isinstance(R, PhaseSpaceFunction):
        return R.values
    if np.isscalar(R):
        return np.full(grid.shape, R)
    R = np.asarray(R)
    if R.shape != grid.shape:
        raise GridMismatch(f"multiplicative operator has shape {R.shape}, grid is {grid.shape}")
    return R


def apply_operator(R: OperatorHandle, chi, grid: PhaseGrid | None = None) -> np.ndarray:
    values = getattr(chi, "values", chi)
    grid = grid if grid is not None else chi.grid
    if isinstance(R, TildeOperator):
        return R.apply(values)
    return multiplier(R, grid) * grid.check(values)


def apply_tilde(T: TildeOperator, chi) -> np.ndarray:
    return T.apply(getattr(chi, "values", chi))


def commutator_apply(A: OperatorHandle, B: OperatorHandle, chi, grid: PhaseGrid | None = None) -> np.ndarray:
    """``(AB - BA) chi``."""
    grid = grid if grid is not None else chi.grid
    values = getattr(chi, "values", chi)
    return (apply_operator(A, apply_operator(B, values, grid), grid)
            - apply_operator(B, apply_operator(A, values, grid), grid))


def _derivative_callable(f: Callable, derivative: Callable | None):
    if derivative is not None:
        return derivative
    x = sympy.Symbol("x", real=True)
    return sympy.lambdify(x, sympy.diff(f(x), x), "numpy")


def tilde_of_function(f: Callable, u: PhaseSpaceFunction, derivative: Callable | None = None,
                      alpha_u=None) -> TildeOperator:
    """``tilde(f(u)) = f'(u) u~`` in the canonical representation.

    ``f`` must accept a sympy symbol (e.g. ``lambda x: x**2``) unless its
    ``derivative`` is supplied explicitly.
    """
    fp = _derivative_callable(f, derivative)
    slope = np.broadcast_to(np.asarray(fp(u.values), dtype=float), u.grid.shape)
    return make_tilde(u, alpha_u).times_field(slope)


def poisson(u: PhaseSpaceFunction, v: PhaseSpaceFunction) -> PhaseSpaceFunction:
    """``{u, v}`` from the operands' gradients; its own gradient is spectral."""
    uq, up = u.gradient()
    vq, vp = v.gradient()
    vals = uq * vp - up * vq
    grad = None
    if np.ptp(vals) == 0:
        z = np.zeros(u.grid.shape)
        grad = (z, z)
    return PhaseSpaceFunction(vals, u.grid, f"{{{u.label},{v.label}}}", grad)


@dataclass
class CanonicalAlgebraReport:
    sum_residual: float
    product_residual: float
    bracket_residual: float

    @property
    def worst(self) -> float:
        return max(self.sum_residual, self.product_residual, self.bracket_residual)


def verify_canonical_algebra(u: PhaseSpaceFunction, v: PhaseSpaceFunction, chi,
                             region: np.ndarray | None = None) -> CanonicalAlgebraReport:
    """Max residuals of the canonical-representation rules on ``region``.

    Checks ``tilde(u+v) = u~ + v~``, ``tilde(uv) = u v~ + v u~`` and
    ``tilde({u,v}) = [u~, v~]/(i hbar)`` applied to ``chi``, all with zero gauge.
    """
    grid = u.grid
    region = grid.trust_region if region is None else region
    x = getattr(chi, "values", chi)
    tu, tv = make_tilde(u), make_tilde(v)
    tux, tvx = tu.apply(x), tv.apply(x)

    def worst(a):
        return float(np.abs(a)[region].max())

    r_sum = worst(make_tilde(u + v).apply(x) - (tux + tvx))
    r_prod = worst(make_tilde(u * v).apply(x) - (u.values * tvx + v.values * tux))
    comm = (tu.apply(tvx) - tv.apply(tux)) / (1j * grid.hbar)
    r_br = worst(make_tilde(poisson(u, v)).apply(x) - comm)
    return CanonicalAlgebraReport(r_sum, r_prod, r_br)


def hermiticity_defect(T: TildeOperator, chi_a, chi_b) -> complex:
    """``<a|T b> - <T a|b>``; zero when ``T`` is Hermitian on this pair."""
    a = getattr(chi_a, "values", chi_a)
    b = getattr(chi_b, "values", chi_b)
    return inner(a, T.apply(b), T.grid) - inner(T.apply(a), b, T.grid)
