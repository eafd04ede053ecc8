"""Wigner representation on the doubled phase space ``(q, p~, q~, p)``.

The discrete transform keeps the centres on the phase-space lattice and uses
even offsets ``q' = 2 m dq`` (``p' = 2 r dp``), so the half-offset kernel
elements ``<q - q'/2, p - p'/2| rho |q + q'/2, p + p'/2>`` are plain matrix
entries. Offsets whose endpoints fall outside the box are zero, not wrapped.
The conjugate lattices are ``p~_l = pi hbar l / L_q`` and
``q~_k = pi hbar k / L_p`` for ``l, k`` in ``[-N/2, N/2)``. With these
choices the marginal and normalisation identities hold to roundoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product as iproduct

import numpy as np
import scipy.fft as sfft
import sympy

from .errors import GridMismatch, MemoryGuard, NonPolynomial
from .grid import PhaseGrid, fft_workers, spectral_diff
from .propagator import HamiltonianSpec, doubled_symbols, kvn_evolve
from .states import Amplitude, LiouvilleDistribution, ReducedStateOperator, StateOperator

DEFAULT_CAP = 1024      # 32 x 32 phase space
LARGE_CAP = 4096        # 64 x 64, behind allow_large
NEGATIVE_THRESHOLD = 1e-3


def conjugate_axis(n: int, length: float, hbar: float) -> np.ndarray:
    """Ascending conjugate lattice ``pi hbar l / L`` for ``l in [-n/2, n/2)``."""
    return np.pi * hbar * np.arange(-n // 2, n // 2) / length


@dataclass(eq=False)
class WignerField:
    """Real 4D field indexed ``(q, p~, q~, p)``."""

    values: np.ndarray
    grid: PhaseGrid
    imag_residue: float = 0.0

    def __post_init__(self):
        g = self.grid
        expected = (g.n_q, g.n_q, g.n_p, g.n_p)
        if self.values.shape != expected:
            raise GridMismatch(f"Wigner field must have shape {expected}, got {self.values.shape}")

    @property
    def pt(self) -> np.ndarray:
        return conjugate_axis(self.grid.n_q, self.grid.length_q, self.grid.hbar)

    @property
    def qt(self) -> np.ndarray:
        return conjugate_axis(self.grid.n_p, self.grid.length_p, self.grid.hbar)

    @property
    def dpt(self) -> float:
        return np.pi * self.grid.hbar / self.grid.length_q

    @property
    def dqt(self) -> float:
        return np.pi * self.grid.hbar / self.grid.length_p

    @property
    def volume(self) -> float:
        return self.grid.cell * self.dpt * self.dqt

    def coordinates(self):
        """Broadcastable ``(q, p~, q~, p)`` coordinate arrays."""
        g = self.grid
        return (g.q[:, None, None, None], self.pt[None, :, None, None],
                self.qt[None, None, :, None], g.p[None, None, None, :])

    def integral(self) -> float:
        return float(self.values.sum() * self.volume)

    def axis_names(self):
        return ("q", "pt", "qt", "p")

    def axis_ranges(self):
        return [(self.grid.q, self.grid.dq), (self.pt, self.dpt), (self.qt, self.dqt), (self.grid.p, self.grid.dp)]


@dataclass(eq=False)
class PartialWignerField:
    """Real 2D field over ``(q, p~)`` (``which=1``) or ``(q~, p)`` (``which=2``)."""

    values: np.ndarray
    grid: PhaseGrid
    which: int

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.grid
        if self.which == 1:
            return g.q, conjugate_axis(g.n_q, g.length_q, g.hbar)
        return conjugate_axis(g.n_p, g.length_p, g.hbar), g.p

    @property
    def cell(self) -> float:
        g = self.grid
        if self.which == 1:
            return g.dq * np.pi * g.hbar / g.length_q
        return g.dp * np.pi * g.hbar / g.length_p

    def integral(self) -> float:
        return float(self.values.sum() * self.cell)


def _offset_indices(n: int):
    """Index arrays for ``(centre, offset)``: ``i-m``, ``i+m`` and validity."""
    i = np.arange(n)[:, None]
    m = np.fft.ifftshift(np.arange(-n // 2, n // 2))[None, :]
    lo, hi = i - m, i + m
    valid = (lo >= 0) & (lo < n) & (hi >= 0) & (hi < n)
    return np.clip(lo, 0, n - 1), np.clip(hi, 0, n - 1), valid


def _transform_offsets(kernel: np.ndarray, hbar: float, grid: PhaseGrid) -> WignerField:
    """``kernel[j, m, n, r]`` (offsets in FFT order) to the Wigner field."""
    w = fft_workers()
    nq, np_ = grid.n_q, grid.n_p
    # p~ phase exp(+2 pi i l m / N): inverse DFT times N; q~ phase exp(-2 pi i k r / N): forward DFT
    f = sfft.ifft(kernel, axis=1, workers=w) * nq
    f = sfft.fft(f, axis=3, workers=w)
    f = np.fft.fftshift(f, axes=(1, 3))
    f = np.transpose(f, (0, 1, 3, 2))
    pref = (2 * grid.dq) * (2 * grid.dp) / (2 * np.pi * hbar) ** 2
    f *= pref
    scale = max(float(np.abs(f.real).max()), 1e-300)
    return WignerField(np.ascontiguousarray(f.real), grid, float(np.abs(f.imag).max() / scale))


def _check_cap(grid: PhaseGrid, allow_large: bool):
    cap = LARGE_CAP if allow_large else DEFAULT_CAP
    if grid.size > cap:
        raise MemoryGuard(f"Wigner field on {grid.size} phase-space points exceeds cap {cap}"
                          + ("" if allow_large else " (pass allow_large for up to 4096)"))


def wigner_transform(state, allow_large: bool = False) -> WignerField:
    """Doubled-phase-space Wigner function of a StateOperator or pure Amplitude."""
    grid = state.grid
    _check_cap(grid, allow_large)
    qlo, qhi, qv = _offset_indices(grid.n_q)
    plo, phi, pv = _offset_indices(grid.n_p)
    A, C = qlo[:, :, None, None], qhi[:, :, None, None]
    B, D = plo[None, None, :, :], phi[None, None, :, :]
    mask = qv[:, :, None, None] & pv[None, None, :, :]
    if isinstance(state, Amplitude):
        chi = state.values
        kernel = chi[A, B] * np.conj(chi[C, D])
    elif isinstance(state, StateOperator):
        kernel = state.tensor()[A, B, C, D]
    else:
        raise TypeError("wigner_transform expects an Amplitude or a StateOperator")
    kernel = np.where(mask, kernel, 0.0)
    return _transform_offsets(kernel, grid.hbar, grid)


def qp_marginal(W: WignerField) -> LiouvilleDistribution:
    """Integrate out ``p~`` and ``q~``; recovers the Liouville distribution."""
    rho = W.values.sum(axis=(1, 2)) * W.dpt * W.dqt
    scale = max(float(np.abs(rho).max()), 1e-300)
    return LiouvilleDistribution(np.where(rho < 0, np.where(rho > -1e-13 * scale, 0.0, rho), rho), W.grid)


def partial_wigner(reduced: ReducedStateOperator, which: int | None = None) -> PartialWignerField:
    """1D Wigner transform of a reduced operator on q (``which=1``) or p (``which=2``)."""
    which = reduced.which if which is None else which
    if which != reduced.which:
        raise ValueError("reduced operator lives on the other factor space")
    g = reduced.grid
    n = reduced.matrix.shape[0]
    lo, hi, valid = _offset_indices(n)
    kernel = np.where(valid, reduced.matrix[lo, hi], 0.0)
    w = fft_workers()
    if which == 1:
        f = sfft.ifft(kernel, axis=1, workers=w) * n
        f = np.fft.fftshift(f, axes=1) * (2 * g.dq) / (2 * np.pi * g.hbar)
        return PartialWignerField(np.ascontiguousarray(f.real), g, 1)
    f = sfft.fft(kernel, axis=1, workers=w)
    f = np.fft.fftshift(f, axes=1) * (2 * g.dp) / (2 * np.pi * g.hbar)
    return PartialWignerField(np.ascontiguousarray(f.real.T), g, 2)


def integrate_to_partial(W: WignerField, which: int) -> PartialWignerField:
    """Partial field obtained from the full one by integrating the other pair."""
    if which == 1:
        return PartialWignerField(W.values.sum(axis=(2, 3)) * W.dqt * W.grid.dp, W.grid, 1)
    return PartialWignerField(W.values.sum(axis=(0, 1)) * W.grid.dq * W.dpt, W.grid, 2)


def negativity_volume(F) -> float:
    """``integral (|W| - W)/2``; zero exactly when the field is nonnegative."""
    cell = F.volume if isinstance(F, WignerField) else F.cell
    return float(np.sum(np.abs(F.values) - F.values) / 2 * cell)


def is_negative(F, threshold: float = NEGATIVE_THRESHOLD) -> bool:
    return bool(F.values.min() < -threshold * F.values.max())


def overlap_identity_check(chi: Amplitude, chi2: Amplitude) -> tuple[float, float]:
    """``(|<chi'|chi>|^2 / (2 pi hbar)^2, integral W W')``."""
    g = chi.grid
    lhs = abs(np.vdot(chi2.values, chi.values) * g.cell) ** 2 / (2 * np.pi * g.hbar) ** 2
    Wa, Wb = wigner_transform(chi), wigner_transform(chi2)
    rhs = float(np.sum(Wa.values * Wb.values) * Wa.volume)
    return float(lhs), rhs


def purity_integral(W: WignerField) -> float:
    """``integral W^2``, bounded by ``1/(2 pi hbar)^2``."""
    return float(np.sum(W.values ** 2) * W.volume)


def expectation_integral(W: WignerField, symbol) -> float:
    """``integral W R_W`` for a symbol given as a sympy expression or an array."""
    return float(np.sum(W.values * evaluate_symbol(symbol, W)).real * W.volume)


# -- star product -------------------------------------------------------------

_SYMS = doubled_symbols()


def _as_poly(f):
    if isinstance(f, (int, float, complex)):
        return sympy.sympify(f)
    if isinstance(f, sympy.Expr):
        if not f.free_symbols <= set(_SYMS):
            raise NonPolynomial(f"unexpected symbols {f.free_symbols - set(_SYMS)}")
        if not f.is_polynomial(*_SYMS):
            raise NonPolynomial(f"{f} is not a polynomial in (q, pt, qt, p)")
        return f
    return None


def _degree(f) -> int:
    return 0 if f.is_number else sympy.Poly(f, *_SYMS).total_degree()


def _terms(order: int):
    """``(n1, n2, n3, n4, coefficient)`` of the bidirectional exponential series.

    The coefficient is the exact rational ``(i/2)^n (-1)^(n2+n4) / (n1! n2! n3! n4!)``
    as a sympy number; ``hbar^n`` is applied by the caller.
    """
    for n in range(order + 1):
        for ns in iproduct(range(n + 1), repeat=4):
            if sum(ns) != n:
                continue
            n1, n2, n3, n4 = ns
            denom = (math.factorial(n1) * math.factorial(n2)
                     * math.factorial(n3) * math.factorial(n4))
            yield n1, n2, n3, n4, (sympy.I / 2) ** n * (-1) ** (n2 + n4) / denom


def star_product(f, g, order: int | None = None, hbar: float = 1.0):
    """Doubled Moyal product ``f * g``, truncated at ``order``.

    Pairings are ``q <-> p~`` and ``q~ <-> p``:
    ``f exp((i hbar/2)(<dq ->dpt - <dpt ->dq + <dqt ->dp - <dp ->dqt)) g``.
    Polynomials are sympy expressions in ``doubled_symbols()``; the default
    order is the smaller total degree, which makes the series exact. If
    ``f`` is a WignerField and ``g`` a polynomial, the result is an array,
    with spectral derivatives of the field.
    """
    pf, pg = _as_poly(f), _as_poly(g)
    if pf is not None and pg is not None:
        if order is None:
            order = min(_degree(pf), _degree(pg))
        q, pt, qt, p = _SYMS
        total = sympy.Integer(0)
        for n1, n2, n3, n4, c in _terms(order):
            df = sympy.diff(pf, q, n1, pt, n2, qt, n3, p, n4) if (n1 or n2 or n3 or n4) else pf
            if df == 0:
                continue
            dg = sympy.diff(pg, pt, n1, q, n2, p, n3, qt, n4) if (n1 or n2 or n3 or n4) else pg
            if dg == 0:
                continue
            n = n1 + n2 + n3 + n4
            total += c * sympy.nsimplify(hbar) ** n * df * dg
        return sympy.expand(total)
    if isinstance(f, WignerField) and pg is not None:
        return _field_star(f, pg, order, hbar, left=True)
    if isinstance(g, WignerField) and pf is not None:
        return _field_star(g, pf, order, hbar, left=False)
    raise NonPolynomial("star_product needs polynomial operands (or a Wigner field and a polynomial)")


def evaluate_symbol(expr, W: WignerField) -> np.ndarray:
    if not isinstance(expr, sympy.Expr):
        return np.broadcast_to(np.asarray(expr), W.values.shape)
    fn = sympy.lambdify(_SYMS, expr, "numpy")
    return np.broadcast_to(np.asarray(fn(*W.coordinates()), dtype=complex), W.values.shape)


def _field_derivative(W: WignerField, counts) -> np.ndarray:
    out = W.values.astype(complex)
    spacings = (W.grid.dq, W.dpt, W.dqt, W.grid.dp)
    for axis, (k, h) in enumerate(zip(counts, spacings)):
        if k:
            out = spectral_diff(out, axis, h, k)
    return out


def _field_star(W: WignerField, poly, order, hbar, left: bool) -> np.ndarray:
    """``W * poly`` (``left``) or ``poly * W`` with the field differentiated spectrally."""
    if order is None:
        order = _degree(poly)
    q, pt, qt, p = _SYMS
    total = np.zeros(W.values.shape, dtype=complex)
    for n1, n2, n3, n4, c in _terms(order):
        if left:
            field_counts, poly_ds = (n1, n2, n3, n4), (pt, n1, q, n2, p, n3, qt, n4)
        else:
            field_counts, poly_ds = (n2, n1, n4, n3), (q, n1, pt, n2, qt, n3, p, n4)
        dpoly = sympy.diff(poly, *poly_ds) if any(field_counts) else poly
        if dpoly == 0:
            continue
        n = n1 + n2 + n3 + n4
        total += complex(c) * hbar ** n * _field_derivative(W, field_counts) * evaluate_symbol(dpoly, W)
    return total


def moyal_residual(chi: Amplitude, H: HamiltonianSpec, dt: float, order: int | None = None,
                   region: np.ndarray | None = None, allow_large: bool = False) -> float:
    """Max-norm of ``dW/dt + (W * H~_W - H~_W * W)/(i hbar)`` on the trust region.

    ``dW/dt`` is the central difference of single split steps ``+dt`` and ``-dt``.
    """
    grid = chi.grid
    symbol = H.tilde_symbol()
    Wp = wigner_transform(kvn_evolve(chi, H, dt, 1), allow_large)
    Wm = wigner_transform(kvn_evolve(chi, H, -dt, 1), allow_large)
    W0 = wigner_transform(chi, allow_large)
    dWdt = (Wp.values - Wm.values) / (2 * dt)
    bracket = (star_product(W0, symbol, order, grid.hbar)
               - star_product(symbol, W0, order, grid.hbar)) / (1j * grid.hbar)
    res = np.abs(dWdt + bracket)
    region = grid.trust_region if region is None else region
    return float(res.transpose(0, 3, 1, 2)[region].max())
