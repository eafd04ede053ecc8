"""Probability amplitudes, Liouville distributions and state operators.

Dense operators are stored as kernels on the flattened ``(q, p)`` grid:
``matrix[i, j] = <x_i| rho |x_j>`` for Dirac-normalised grid kets, so every
trace carries a factor ``dq*dp`` per contraction (``Tr rho = sum(diag)*dq*dp``).
Flattening is row-major, ``i = j_q * n_p + j_p``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadWeights, GridMismatch, MemoryGuard
from .grid import PhaseGrid, inner, integrate, random_band_limited

DENSE_CAP = 4096
EIGEN_CHECK_CAP = 1024
CLAMP_TOL = 1e-12


@dataclass(eq=False)
class Amplitude:
    values: np.ndarray
    grid: PhaseGrid
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.grid.check(self.values), dtype=complex)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("amplitude contains non-finite entries")

    @property
    def norm(self) -> float:
        return float(np.sqrt(integrate(np.abs(self.values) ** 2, self.grid)))

    def normalized(self) -> "Amplitude":
        return Amplitude(self.values / self.norm, self.grid, self.time)

    def with_values(self, values, time=None) -> "Amplitude":
        return Amplitude(values, self.grid, self.time if time is None else time)


@dataclass(eq=False)
class LiouvilleDistribution:
    values: np.ndarray
    grid: PhaseGrid
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.grid.check(self.values), dtype=float)
        if v.min(initial=0.0) < -CLAMP_TOL * max(1.0, float(np.abs(v).max(initial=0.0))):
            raise ValueError(f"Liouville distribution has negative value {v.min():.3e}")
        self.values = np.clip(v, 0.0, None)

    @property
    def mass(self) -> float:
        return float(integrate(self.values, self.grid))


@dataclass(eq=False)
class MarginalAmplitude:
    """Amplitude on one factor space: over q (``which=1``) or p (``which=2``)."""

    values: np.ndarray
    grid: PhaseGrid
    which: int

    def __post_init__(self):
        if self.which not in (1, 2):
            raise ValueError("which must be 1 (q space) or 2 (p space)")
        self.values = np.asarray(self.values, dtype=complex)
        n = self.grid.n_q if self.which == 1 else self.grid.n_p
        if self.values.shape != (n,):
            raise GridMismatch(f"marginal amplitude needs shape ({n},), got {self.values.shape}")

    @property
    def coords(self) -> np.ndarray:
        return self.grid.q if self.which == 1 else self.grid.p

    @property
    def spacing(self) -> float:
        return self.grid.dq if self.which == 1 else self.grid.dp

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.spacing))

    def normalized(self) -> "MarginalAmplitude":
        return MarginalAmplitude(self.values / self.norm, self.grid, self.which)


@dataclass(eq=False)
class StateOperator:
    matrix: np.ndarray
    grid: PhaseGrid
    time: float = 0.0

    def __post_init__(self):
        n = self.grid.size
        if self.matrix.shape != (n, n):
            raise GridMismatch(f"state operator must be {n}x{n}, got {self.matrix.shape}")

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix) * self.grid.cell)

    @property
    def purity(self) -> float:
        # Tr rho^2 = sum_ij rho_ij rho_ji cell^2; rho is Hermitian
        return float(np.sum(np.abs(self.matrix) ** 2).real * self.grid.cell ** 2)

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).real.reshape(self.grid.shape)

    def tensor(self) -> np.ndarray:
        g = self.grid
        return self.matrix.reshape(g.n_q, g.n_p, g.n_q, g.n_p)


@dataclass(eq=False)
class ReducedStateOperator:
    """Kernel on the q basis (``which=1``) or the p basis (``which=2``)."""

    matrix: np.ndarray
    grid: PhaseGrid
    which: int

    @property
    def spacing(self) -> float:
        return self.grid.dq if self.which == 1 else self.grid.dp

    @property
    def coords(self) -> np.ndarray:
        return self.grid.q if self.which == 1 else self.grid.p

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix) * self.spacing)

    @property
    def purity(self) -> float:
        return float(np.sum(np.abs(self.matrix) ** 2) * self.spacing ** 2)


# -- constructors -----------------------------------------------------------

def gaussian_profile(x, center=0.0, sigma=1.0, kick=0.0, hbar=1.0):
    """Normalised Gaussian amplitude whose modulus squared has std ``sigma``.

    ``kick`` adds the plane-wave phase ``exp(i*kick*(x - center)/hbar)``.
    """
    x = np.asarray(x, dtype=float)
    return ((2 * np.pi * sigma ** 2) ** -0.25
            * np.exp(-((x - center) ** 2) / (4 * sigma ** 2) + 1j * kick * (x - center) / hbar))


def marginal_gaussian(grid: PhaseGrid, which: int, center=0.0, sigma=1.0, kick=0.0) -> MarginalAmplitude:
    x = grid.q if which == 1 else grid.p
    return MarginalAmplitude(gaussian_profile(x, center, sigma, kick, grid.hbar), grid, which).normalized()


def marginal_cat(grid: PhaseGrid, which: int, separation: float, sigma: float,
                 center=0.0, relative_phase=0.0) -> MarginalAmplitude:
    """Equal-weight superposition of two Gaussians ``separation`` apart."""
    x = grid.q if which == 1 else grid.p
    a = gaussian_profile(x, center - separation / 2, sigma)
    b = gaussian_profile(x, center + separation / 2, sigma)
    return MarginalAmplitude(a + np.exp(1j * relative_phase) * b, grid, which).normalized()


def product_state(chi1: MarginalAmplitude, chi2: MarginalAmplitude, time: float = 0.0) -> Amplitude:
    if chi1.grid != chi2.grid:
        raise GridMismatch("marginal amplitudes live on different grids")
    if (chi1.which, chi2.which) != (1, 2):
        raise ValueError("product_state expects a q-space factor then a p-space factor")
    return Amplitude(np.outer(chi1.values, chi2.values), chi1.grid, time)


def gaussian_state(grid: PhaseGrid, q0=0.0, p0=0.0, sigma_q=1.0, sigma_p=1.0,
                   kick_q=0.0, kick_p=0.0) -> Amplitude:
    return product_state(marginal_gaussian(grid, 1, q0, sigma_q, kick_q),
                         marginal_gaussian(grid, 2, p0, sigma_p, kick_p))


def superpose(terms) -> Amplitude:
    """Normalised ``sum c_n chi_n`` for ``terms = [(c_n, chi_n), ...]``."""
    terms = list(terms)
    grid = terms[0][1].grid
    total = np.zeros(grid.shape, dtype=complex)
    for c, chi in terms:
        if chi.grid != grid:
            raise GridMismatch("superposed amplitudes live on different grids")
        total = total + c * chi.values
    return Amplitude(total, grid).normalized()


def random_state(grid: PhaseGrid, rng: np.random.Generator, width=0.7, spread=1.5,
                 modes: int = 3) -> Amplitude:
    """Gaussian-enveloped random trigonometric polynomial, normalised.

    With the defaults on a [-8, 8] box the envelope leaves less than 1e-9 of
    amplitude at the seam, while the polynomial factor (decay exponent 2)
    makes the state generic.
    """
    q0, p0 = rng.uniform(-spread, spread, size=2)
    env = np.exp(-((grid.Q - q0) ** 2 + (grid.P - p0) ** 2) / (4 * width ** 2))
    poly = 1.0 + random_band_limited(grid, rng, modes=modes, decay=2.0, complex_valued=True)
    return Amplitude(env * poly, grid).normalized()


def normalize(chi: Amplitude) -> Amplitude:
    return chi.normalized()


def modulus_squared(chi: Amplitude) -> LiouvilleDistribution:
    return LiouvilleDistribution(np.abs(chi.values) ** 2, chi.grid, chi.time)


def _guard(grid: PhaseGrid, cap: int | None):
    cap = DENSE_CAP if cap is None else cap
    if grid.size > cap:
        raise MemoryGuard(f"dense operator on {grid.size} points exceeds cap {cap}")


def pure_state_operator(chi: Amplitude, cap: int | None = None) -> StateOperator:
    _guard(chi.grid, cap)
    v = chi.values.ravel()
    return StateOperator(np.outer(v, v.conj()), chi.grid, chi.time)


def convex_mix(states) -> StateOperator:
    states = list(states)
    if not states:
        raise BadWeights("convex_mix needs at least one state")
    w = np.array([s[0] for s in states], dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
        raise BadWeights(f"weights must be nonnegative and sum to 1, got {w.tolist()}")
    grid = states[0][1].grid
    mat = np.zeros_like(states[0][1].matrix)
    for wi, rho in states:
        if rho.grid != grid:
            raise GridMismatch("mixed state operators live on different grids")
        mat = mat + wi * rho.matrix
    return StateOperator(mat, grid, states[0][1].time)


def overlap_trace(rho_a: StateOperator, rho_b: StateOperator) -> float:
    """``Tr(rho_a rho_b)`` in continuum normalisation."""
    return float(np.sum(rho_a.matrix * rho_b.matrix.T).real * rho_a.grid.cell ** 2)


def expectation(state, R) -> complex:
    """``<R>`` for an Amplitude (``<chi|R chi>``) or StateOperator (``Tr rho R``).

    ``R`` is a multiplicative field (array or PhaseSpaceFunction), a
    TildeOperator, or any handle accepted by ``tilde_ops.apply_operator``.
    """
    from .tilde_ops import apply_operator, multiplier

    if isinstance(state, Amplitude):
        return inner(state.values, apply_operator(R, state.values, state.grid), state.grid)
    grid = state.grid
    m = multiplier(R, grid)
    if m is not None:
        return complex(np.sum(np.diag(state.matrix) * m.ravel()) * grid.cell)
    cols = state.matrix.T.reshape(grid.size, *grid.shape)
    r_rho = apply_operator(R, cols, grid).reshape(grid.size, grid.size)
    return complex(np.trace(r_rho) * grid.cell)


def partial_trace(rho: StateOperator, which: int) -> ReducedStateOperator:
    """Reduced operator on space ``which`` (1: keep q, trace out p; 2: keep p)."""
    t = rho.tensor()
    g = rho.grid
    if which == 1:
        return ReducedStateOperator(np.einsum("anbn->ab", t) * g.dp, g, 1)
    if which == 2:
        return ReducedStateOperator(np.einsum("jajb->ab", t) * g.dq, g, 2)
    raise ValueError("which must be 1 or 2")


def marginal_operator(chi: MarginalAmplitude) -> ReducedStateOperator:
    return ReducedStateOperator(np.outer(chi.values, chi.values.conj()), chi.grid, chi.which)


def diagnostics(rho, eigen_cap: int = EIGEN_CHECK_CAP) -> dict:
    """Hermiticity, trace, purity and (for small N) smallest eigenvalue."""
    m = rho.matrix
    w = rho.grid.cell if isinstance(rho, StateOperator) else rho.spacing
    out = {
        "hermiticity": float(np.abs(m - m.conj().T).max()),
        "trace": rho.trace.real,
        "purity": rho.purity,
    }
    if m.shape[0] <= eigen_cap:
        out["min_eigenvalue"] = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() * w)
    return out
