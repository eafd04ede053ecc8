"""Time evolution of amplitudes and state operators, plus a characteristics oracle.

The KvN propagator ``exp(-(i/hbar) dt H~)`` for separable ``H = K(p) + U(q)``
is Strang-split into exact spectral advections: along q with velocity
``K'(p)`` (diagonal in Fourier-q) and along p with velocity ``-U'(q)``
(diagonal in Fourier-p). The oracle never touches Fourier space: it follows
Hamilton's equations backwards from every node with a fourth-order
symplectic integrator and interpolates the initial density there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
import sympy
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates

from .errors import MemoryGuard, StabilityBudgetExceeded, TrajectoryEscape
from .grid import PhaseGrid, fft_workers, spectral_diff
from .states import Amplitude, LiouvilleDistribution, StateOperator, DENSE_CAP
from .tilde_ops import PhaseSpaceFunction, TildeOperator

BUDGET_FRACTION = 0.25

# Yoshida's fourth-order composition of the leapfrog map.
_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = -(2.0 ** (1.0 / 3.0)) * _W1
_DRIFT = (_W1 / 2, (_W0 + _W1) / 2, (_W0 + _W1) / 2, _W1 / 2)
_KICK = (_W1, _W0, _W1, 0.0)


@dataclass(eq=False)
class HamiltonianSpec:
    """Separable Hamiltonian ``K(p) + U(q)``.

    ``kind`` is ``"free"`` (``p^2/2m``), ``"harmonic"``
    (``p^2/2m + m w^2 q^2/2``) or ``"custom"``, where ``kinetic`` and
    ``potential`` are tabulated on the grid axes (scalars mean constants).
    Custom slopes default to spectral derivatives, so tabulations must be
    windowed-periodic unless ``kinetic_slope``/``potential_slope`` are given.
    """

    kind: str
    m: float = 1.0
    omega: float = 1.0
    kinetic: np.ndarray | float | None = None
    potential: np.ndarray | float | None = None
    kinetic_slope: np.ndarray | float | None = None
    potential_slope: np.ndarray | float | None = None

    def __post_init__(self):
        if self.kind not in ("free", "harmonic", "custom"):
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}")
        if not (self.m > 0 and self.omega > 0):
            raise ValueError("m and omega must be positive")

    @classmethod
    def free(cls, m: float = 1.0) -> "HamiltonianSpec":
        return cls("free", m=m)

    @classmethod
    def harmonic(cls, m: float = 1.0, omega: float = 1.0) -> "HamiltonianSpec":
        return cls("harmonic", m=m, omega=omega)

    @classmethod
    def custom(cls, kinetic=0.0, potential=0.0, kinetic_slope=None, potential_slope=None) -> "HamiltonianSpec":
        return cls("custom", kinetic=kinetic, potential=potential,
                   kinetic_slope=kinetic_slope, potential_slope=potential_slope)

    @classmethod
    def zero(cls) -> "HamiltonianSpec":
        return cls.custom(0.0, 0.0)

    def to_dict(self) -> dict:
        if self.kind == "custom":
            def enc(x):
                return None if x is None else np.asarray(x, dtype=float).tolist()
            return {"kind": "custom", "kinetic": enc(self.kinetic), "potential": enc(self.potential),
                    "kinetic_slope": enc(self.kinetic_slope), "potential_slope": enc(self.potential_slope)}
        return {"kind": self.kind, "m": self.m, "omega": self.omega}

    @classmethod
    def from_dict(cls, d: dict) -> "HamiltonianSpec":
        kind = d.get("kind", "free")
        if kind == "zero":
            return cls.zero()
        if kind == "custom":
            def dec(x):
                if x is None:
                    return None
                return float(x) if np.isscalar(x) else np.asarray(x, dtype=float)
            return cls.custom(dec(d.get("kinetic", 0.0)), dec(d.get("potential", 0.0)),
                              dec(d.get("kinetic_slope")), dec(d.get("potential_slope")))
        return cls(kind, m=float(d.get("m", 1.0)), omega=float(d.get("omega", 1.0)))

    def _tab(self, x, n):
        return np.broadcast_to(np.asarray(0.0 if x is None else x, dtype=float), (n,))

    def kinetic_values(self, grid: PhaseGrid) -> np.ndarray:
        if self.kind == "custom":
            return self._tab(self.kinetic, grid.n_p)
        return grid.p ** 2 / (2 * self.m)

    def potential_values(self, grid: PhaseGrid) -> np.ndarray:
        if self.kind == "free":
            return np.zeros(grid.n_q)
        if self.kind == "harmonic":
            return 0.5 * self.m * self.omega ** 2 * grid.q ** 2
        return self._tab(self.potential, grid.n_q)

    def slopes(self, grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray]:
        """``(U'(q) on the q axis, K'(p) on the p axis)``."""
        if self.kind == "custom":
            if self.potential_slope is not None:
                du = self._tab(self.potential_slope, grid.n_q)
            else:
                du = spectral_diff(np.array(self.potential_values(grid)), 0, grid.dq)
            if self.kinetic_slope is not None:
                dk = self._tab(self.kinetic_slope, grid.n_p)
            else:
                dk = spectral_diff(np.array(self.kinetic_values(grid)), 0, grid.dp)
            return np.array(du, dtype=float), np.array(dk, dtype=float)
        dk = grid.p / self.m
        du = np.zeros(grid.n_q) if self.kind == "free" else self.m * self.omega ** 2 * grid.q
        return du, dk

    def values(self, grid: PhaseGrid) -> np.ndarray:
        return self.potential_values(grid)[:, None] + self.kinetic_values(grid)[None, :]

    def as_function(self, grid: PhaseGrid) -> PhaseSpaceFunction:
        du, dk = self.slopes(grid)
        return PhaseSpaceFunction(self.values(grid), grid, f"H_{self.kind}",
                                  (np.broadcast_to(du[:, None], grid.shape),
                                   np.broadcast_to(dk[None, :], grid.shape)))

    def characteristic_time(self, grid: PhaseGrid) -> float:
        if self.kind == "harmonic":
            return 2 * math.pi / self.omega
        du, dk = self.slopes(grid)
        vq = np.abs(dk).max() / grid.length_q
        vp = np.abs(du).max() / grid.length_p
        rate = max(vq, vp)
        return 1.0 / rate if rate > 0 else math.inf

    def tilde_symbol(self):
        """Weyl symbol of the Liouvillian on the doubled phase space.

        Returns a sympy expression in ``(q, pt, qt, p)``: ``pt K'(p) + U'(q) qt``.
        Only polynomial kinds are representable.
        """
        q, pt, qt, p = doubled_symbols()
        if self.kind == "free":
            return pt * p / self.m
        if self.kind == "harmonic":
            return pt * p / self.m + self.m * self.omega ** 2 * q * qt
        du, dk = (np.asarray(0.0 if s is None else s) for s in (self.potential_slope, self.kinetic_slope))
        pot_const = self.potential is None or np.ndim(self.potential) == 0
        kin_const = self.kinetic is None or np.ndim(self.kinetic) == 0
        if pot_const and kin_const and du.ndim == 0 and dk.ndim == 0:
            return sympy.Float(float(dk)) * pt + sympy.Float(float(du)) * qt
        from .errors import NonPolynomial

        raise NonPolynomial("tabulated Hamiltonians have no polynomial Weyl symbol")


def doubled_symbols():
    return sympy.symbols("q pt qt p", real=True)


def liouvillian(H: HamiltonianSpec, grid: PhaseGrid, alpha=None) -> TildeOperator:
    """``H~ = i hbar {H, .} + alpha_H`` with closed-form slopes (``alpha`` default 0)."""
    du, dk = H.slopes(grid)
    gauge = np.zeros(grid.shape) if alpha is None else np.asarray(alpha, dtype=float)
    return TildeOperator(du[:, None], dk[None, :], gauge, grid, f"tilde(H_{H.kind})")


# -- split-operator core ------------------------------------------------------

def _check_budget(grid: PhaseGrid, du, dk, tau_q, tau_p):
    shift_q = float(np.abs(dk).max(initial=0.0)) * abs(tau_q)
    shift_p = float(np.abs(du).max(initial=0.0)) * abs(tau_p)
    if shift_q > BUDGET_FRACTION * grid.length_q or shift_p > BUDGET_FRACTION * grid.length_p:
        raise StabilityBudgetExceeded(
            f"sub-step displacement (q: {shift_q:.3g}, p: {shift_p:.3g}) exceeds "
            f"{BUDGET_FRACTION} of the domain ({grid.length_q:.3g}, {grid.length_p:.3g})")


class _Split:
    """Precomputed advection phases for one step size."""

    def __init__(self, grid: PhaseGrid, du, dk, dt, gauge=None):
        self.grid = grid
        _check_budget(grid, du, dk, dt / 2, dt)
        self.drift_half = np.exp(-1j * grid.kq[:, None] * dk[None, :] * (dt / 2))
        self.drift_full = self.drift_half ** 2
        self.kick = np.exp(1j * du[:, None] * grid.kp[None, :] * dt)
        self.do_kick = bool(np.any(du))
        self.do_drift = bool(np.any(dk))
        self.phase_half = None
        if gauge is not None and np.any(gauge):
            self.phase_half = np.exp(-0.5j * dt * np.asarray(gauge) / grid.hbar)

    def _drift(self, x, mult):
        if not self.do_drift:
            return x
        w = fft_workers()
        return sfft.ifft(sfft.fft(x, axis=-2, workers=w) * mult, axis=-2, workers=w)

    def _kick(self, x):
        if not self.do_kick:
            return x
        w = fft_workers()
        return sfft.ifft(sfft.fft(x, axis=-1, workers=w) * self.kick, axis=-1, workers=w)

    def run(self, x: np.ndarray, steps: int, callback=None) -> np.ndarray:
        if self.phase_half is not None:
            # gauge phase half-steps wrap each transport step
            for n in range(steps):
                x = self.phase_half * x
                x = self._drift(x, self.drift_half)
                x = self._kick(x)
                x = self._drift(x, self.drift_half)
                x = self.phase_half * x
                if callback is not None:
                    callback(n + 1, x)
            return x
        if callback is not None:
            for n in range(steps):
                x = self._drift(self._kick(self._drift(x, self.drift_half)), self.drift_half)
                callback(n + 1, x)
            return x
        if steps == 0:
            return x
        # merge adjacent half drifts
        x = self._drift(x, self.drift_half)
        for n in range(steps):
            x = self._kick(x)
            x = self._drift(x, self.drift_full if n < steps - 1 else self.drift_half)
        return x


def kvn_evolve(chi: Amplitude, H: HamiltonianSpec, dt: float, steps: int, alpha=None,
               callback=None) -> Amplitude:
    """Advance ``chi`` by ``steps`` Strang steps of size ``dt``.

    ``callback(step, values)`` is invoked after each step when given.
    """
    du, dk = H.slopes(chi.grid)
    split = _Split(chi.grid, du, dk, dt, alpha)
    out = split.run(chi.values, int(steps), callback)
    return Amplitude(out, chi.grid, chi.time + steps * dt)


def evolve_values(values: np.ndarray, grid: PhaseGrid, H: HamiltonianSpec, dt: float, steps: int) -> np.ndarray:
    """Batch form of :func:`kvn_evolve` over leading axes of ``values``."""
    du, dk = H.slopes(grid)
    return _Split(grid, du, dk, dt).run(np.asarray(values, dtype=complex), int(steps))


def _separable_slopes(G: PhaseSpaceFunction):
    gq, gp = G.gradient()
    if np.ptp(gq, axis=1).max() == 0 and np.ptp(gp, axis=0).max() == 0:
        return np.array(gq[:, 0]), np.array(gp[0, :])
    return None


def _required_steps(grid, du, dk, gamma):
    need_q = np.abs(dk).max(initial=0.0) * abs(gamma) / 2 / (BUDGET_FRACTION * grid.length_q)
    need_p = np.abs(du).max(initial=0.0) * abs(gamma) / (BUDGET_FRACTION * grid.length_p)
    return max(1, math.ceil(max(need_q, need_p) * (1 + 1e-12)))


def canonical_transform(chi: Amplitude, G, gamma: float, steps: int | None = None) -> Amplitude:
    """``exp(-(i/hbar) gamma G~) chi`` with zero gauge, i.e. ``exp(gamma {G,.}) chi``.

    Separable generators (including every linear one, and any
    HamiltonianSpec) use exact split advection; ``steps=None`` picks the
    fewest steps that respect the stability budget. Other generators are
    integrated with classical RK4 on spectral derivatives.
    """
    grid = chi.grid
    if isinstance(G, HamiltonianSpec):
        G = G.as_function(grid)
    sep = _separable_slopes(G)
    if sep is not None:
        du, dk = sep
        if steps is None:
            steps = _required_steps(grid, du, dk, gamma)
        split = _Split(grid, du, dk, gamma / steps)
        return Amplitude(split.run(chi.values, steps), grid, chi.time)
    return Amplitude(_rk4_transport(chi.values, G, gamma, steps), grid, chi.time)


def _rk4_transport(x, G: PhaseSpaceFunction, gamma, steps):
    grid = G.grid
    gq, gp = G.gradient()
    rate = np.abs(gq).max() * np.abs(grid.kp).max() + np.abs(gp).max() * np.abs(grid.kq).max()
    limit = 2.5
    if steps is None:
        steps = max(1, math.ceil(abs(gamma) * rate / limit * 4))
    h = gamma / steps
    if abs(h) * rate > limit:
        raise StabilityBudgetExceeded(f"RK4 step {h:.3g} too large for generator rate {rate:.3g}")

    def f(y):
        return gq * spectral_diff(y, -1, grid.dp) - gp * spectral_diff(y, -2, grid.dq)

    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


# -- characteristics oracle ---------------------------------------------------

def _slope_interpolants(H: HamiltonianSpec, grid: PhaseGrid):
    if H.kind == "free":
        return (lambda q: np.zeros_like(q)), (lambda p: p / H.m)
    if H.kind == "harmonic":
        return (lambda q: H.m * H.omega ** 2 * q), (lambda p: p / H.m)
    du, dk = H.slopes(grid)

    def periodic_spline(x0, length, y):
        xs = np.append(x0, x0[-1] + (x0[1] - x0[0]))
        ys = np.append(y, y[0])
        spline = CubicSpline(xs, ys, bc_type="periodic")
        return lambda x: spline(x0[0] + np.mod(x - x0[0], length))

    return periodic_spline(grid.q, grid.length_q, du), periodic_spline(grid.p, grid.length_p, dk)


def hamilton_flow(q, p, H: HamiltonianSpec, grid: PhaseGrid, t: float, h_max: float):
    """Integrate Hamilton's equations for time ``t`` (may be negative)."""
    dU, dK = _slope_interpolants(H, grid)
    n = max(1, math.ceil(abs(t) / h_max - 1e-12)) if t != 0 else 0
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    if n == 0:
        return q, p
    h = t / n
    for _ in range(n):
        for c, d in zip(_DRIFT, _KICK):
            q = q + c * h * dK(p)
            if d:
                p = p - d * h * dU(q)
    return q, p


def _inside(grid, q, p):
    return (q >= grid.q_min) & (q < grid.q_max) & (p >= grid.p_min) & (p < grid.p_max)


def characteristics_evolve(rho0: LiouvilleDistribution, H: HamiltonianSpec, t: float,
                           dt: float | None = None, escape_tol: float = 1e-6) -> LiouvilleDistribution:
    """``rho(x, t) = rho0(Phi_{-t}(x))`` by backward trajectories and cubic interpolation.

    Raises TrajectoryEscape when forward trajectories leaving the box carry
    more than ``escape_tol`` of the initial mass.
    """
    grid = rho0.grid
    h_max = min(abs(dt) if dt else abs(t) or 1.0, H.characteristic_time(grid) / 200)
    support = rho0.values > 0
    fq, fp = hamilton_flow(grid.Q[support], grid.P[support], H, grid, t, h_max)
    out = ~_inside(grid, fq, fp)
    mass = rho0.values.sum()
    lost = rho0.values[support][out].sum() / mass if mass > 0 else 0.0
    if lost > escape_tol:
        raise TrajectoryEscape(f"trajectories carrying {lost:.2e} of the mass leave the box")
    bq, bp = hamilton_flow(grid.Q, grid.P, H, grid, -t, h_max)
    coords = np.stack([(bq - grid.q_min) / grid.dq, (bp - grid.p_min) / grid.dp])
    vals = map_coordinates(rho0.values, coords, order=3, mode="grid-wrap")
    vals = np.where(_inside(grid, bq, bp), vals, 0.0)
    vals = np.clip(vals, 0.0, None)
    return LiouvilleDistribution(vals, grid, rho0.time + t)


# -- state operators ----------------------------------------------------------

def _on_columns(mat: np.ndarray, grid: PhaseGrid, fn) -> np.ndarray:
    n = grid.size
    cols = np.ascontiguousarray(mat.T).reshape(n, *grid.shape)
    return fn(cols).reshape(n, n).T


def evolve_state_operator(rho: StateOperator, H: HamiltonianSpec, dt: float, steps: int,
                          cap: int | None = None) -> StateOperator:
    """``U rho U^dagger`` with the split-operator propagator ``U``."""
    grid = rho.grid
    if grid.size > (DENSE_CAP if cap is None else cap):
        raise MemoryGuard(f"state operator on {grid.size} points exceeds the dense cap")

    def U(batch):
        return evolve_values(batch, grid, H, dt, steps)

    u_rho = _on_columns(rho.matrix, grid, U)
    out = _on_columns(u_rho.conj().T, grid, U).conj().T
    return StateOperator(out, grid, rho.time + steps * dt)


def dynamical_time(grid: PhaseGrid, H: HamiltonianSpec, p_cut: float):
    """``tau = m q / p`` for the free particle on ``|p| > p_cut`` (zero elsewhere).

    Returns ``(tau_field, mask)``. No smooth global ``tau`` exists for bounded
    orbits, so other Hamiltonians are rejected.
    """
    if H.kind != "free":
        raise ValueError("dynamical time is only provided for the free particle")
    mask = np.broadcast_to(np.abs(grid.p)[None, :] > p_cut, grid.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(mask, H.m * grid.Q / grid.P, 0.0)
    return tau, mask
