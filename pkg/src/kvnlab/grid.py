"""Periodic phase-space grid, Fourier-spectral derivatives and quadrature.

Fields are plain numpy arrays whose two trailing axes are ``(q, p)``; any
leading axes are treated as a batch, so the same kernels act on a single
amplitude or on every column of a dense state operator at once.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft
from scipy.special import erf

from .errors import GridMismatch, InvalidDimension, InvalidRange

AXES = {"q": -2, "p": -1}


def fft_workers() -> int:
    """Worker count for scipy.fft, capped by the ``KVN_THREADS`` variable."""
    try:
        return max(1, int(os.environ.get("KVN_THREADS", "1")))
    except ValueError:
        return 1


def _axis_index(axis) -> int:
    if isinstance(axis, str):
        try:
            return AXES[axis]
        except KeyError:
            raise ValueError(f"axis must be 'q' or 'p', got {axis!r}") from None
    return int(axis)


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform periodic sampling of ``[q_min, q_max) x [p_min, p_max)``.

    Sample ``j`` sits at ``q_min + j*dq``; the point ``q_max`` is identified
    with ``q_min``.
    """

    n_q: int
    n_p: int
    q_min: float
    q_max: float
    p_min: float
    p_max: float
    hbar: float = 1.0

    def __post_init__(self):
        for n in (self.n_q, self.n_p):
            if not isinstance(n, (int, np.integer)) or n < 8 or not _is_pow2(int(n)):
                raise InvalidDimension(f"grid counts must be powers of two >= 8, got {n}")
        if not (np.isfinite(self.q_min) and np.isfinite(self.q_max) and self.q_max > self.q_min):
            raise InvalidRange(f"empty or reversed q range [{self.q_min}, {self.q_max}]")
        if not (np.isfinite(self.p_min) and np.isfinite(self.p_max) and self.p_max > self.p_min):
            raise InvalidRange(f"empty or reversed p range [{self.p_min}, {self.p_max}]")
        if not self.hbar > 0:
            raise InvalidRange(f"hbar must be positive, got {self.hbar}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_q, self.n_p)

    @property
    def size(self) -> int:
        return self.n_q * self.n_p

    @property
    def length_q(self) -> float:
        return self.q_max - self.q_min

    @property
    def length_p(self) -> float:
        return self.p_max - self.p_min

    @property
    def dq(self) -> float:
        return self.length_q / self.n_q

    @property
    def dp(self) -> float:
        return self.length_p / self.n_p

    @property
    def cell(self) -> float:
        return self.dq * self.dp

    @cached_property
    def q(self) -> np.ndarray:
        return self.q_min + self.dq * np.arange(self.n_q)

    @cached_property
    def p(self) -> np.ndarray:
        return self.p_min + self.dp * np.arange(self.n_p)

    @cached_property
    def Q(self) -> np.ndarray:
        return np.broadcast_to(self.q[:, None], self.shape)

    @cached_property
    def P(self) -> np.ndarray:
        return np.broadcast_to(self.p[None, :], self.shape)

    @cached_property
    def kq(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_q, d=self.dq)

    @cached_property
    def kp(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_p, d=self.dp)

    def coords(self, axis) -> np.ndarray:
        return self.q if _axis_index(axis) == -2 else self.p

    def spacing(self, axis) -> float:
        return self.dq if _axis_index(axis) == -2 else self.dp

    def center(self, axis) -> float:
        if _axis_index(axis) == -2:
            return 0.5 * (self.q_min + self.q_max)
        return 0.5 * (self.p_min + self.p_max)

    @cached_property
    def trust_region(self) -> np.ndarray:
        """Boolean mask of the central half of each axis."""
        inq = np.abs(self.q - self.center("q")) <= self.length_q / 4
        inp = np.abs(self.p - self.center("p")) <= self.length_p / 4
        return inq[:, None] & inp[None, :]

    def window_1d(self, axis) -> np.ndarray:
        """Smooth periodic bump: 1 on the trust interval, ~0 at the seam.

        The edges are error-function ramps centred 3/8 of the box from the
        middle with width L/40, so both the trust-interval deviation from 1
        and the seam value stay below about 1e-12.
        """
        x = self.coords(axis) - self.center(axis)
        length = self.length_q if _axis_index(axis) == -2 else self.length_p
        c, s = 3 * length / 8, length / 40
        return 0.5 * (erf((x + c) / s) - erf((x - c) / s))

    def window(self, axes: str = "qp") -> np.ndarray:
        w = np.ones(self.shape)
        if "q" in axes:
            w = w * self.window_1d("q")[:, None]
        if "p" in axes:
            w = w * self.window_1d("p")[None, :]
        return w

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[-2:] != self.shape:
            raise GridMismatch(f"field shape {f.shape} does not end in grid shape {self.shape}")
        return f


def make_grid(n_q: int, n_p: int, q_range, p_range, hbar: float = 1.0) -> PhaseGrid:
    q_range = tuple(q_range)
    p_range = tuple(p_range)
    if len(q_range) != 2 or len(p_range) != 2:
        raise InvalidRange("ranges must be (min, max) pairs")
    return PhaseGrid(int(n_q), int(n_p), float(q_range[0]), float(q_range[1]),
                     float(p_range[0]), float(p_range[1]), float(hbar))


def spectral_diff(f: np.ndarray, axis: int, spacing: float, order: int = 1) -> np.ndarray:
    """Fourier derivative of ``f`` along ``axis`` for uniform periodic sampling.

    For odd orders the Nyquist mode is dropped so real input stays real.
    """
    n = f.shape[axis]
    k = 2 * np.pi * np.fft.fftfreq(n, d=spacing)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = n
    out = sfft.ifft(sfft.fft(f, axis=axis, workers=fft_workers()) * mult.reshape(shape),
                    axis=axis, workers=fft_workers())
    if np.isrealobj(f):
        return out.real
    return out


def spectral_derivative(f: np.ndarray, grid: PhaseGrid, axis, order: int = 1) -> np.ndarray:
    f = grid.check(f)
    ax = _axis_index(axis)
    return spectral_diff(f, ax, grid.spacing(ax), order)


def gradient(f: np.ndarray, grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray]:
    return spectral_derivative(f, grid, "q"), spectral_derivative(f, grid, "p")


def poisson_bracket(u: np.ndarray, v: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """``{u, v} = du/dq dv/dp - du/dp dv/dq`` with spectral derivatives."""
    u, v = grid.check(u), grid.check(v)
    if u.shape != v.shape:
        raise GridMismatch(f"bracket operands differ in shape: {u.shape} vs {v.shape}")
    uq, up = gradient(u, grid)
    vq, vp = gradient(v, grid)
    return uq * vp - up * vq


def integrate(f: np.ndarray, grid: PhaseGrid):
    """Riemann sum over the two trailing axes; spectrally accurate for periodic f."""
    f = grid.check(f)
    return f.sum(axis=(-2, -1)) * grid.cell


def inner(a: np.ndarray, b: np.ndarray, grid: PhaseGrid) -> complex:
    """``<a|b> = sum conj(a) b dq dp``."""
    return complex(np.vdot(grid.check(a), grid.check(b)) * grid.cell)


def random_band_limited(grid: PhaseGrid, rng: np.random.Generator, modes: int = 3,
                        decay: float = 2.0, complex_valued: bool = False) -> np.ndarray:
    """Random trigonometric polynomial using wavenumbers up to ``modes`` per axis.

    Coefficients are Gaussian with amplitude ``(1 + |a| + |b|)**-decay``.
    """
    a = np.arange(-modes, modes + 1)
    amp = (1.0 + np.abs(a)[:, None] + np.abs(a)[None, :]) ** (-decay)
    c = rng.standard_normal(amp.shape) + 1j * rng.standard_normal(amp.shape)
    c *= amp
    eq = np.exp(1j * 2 * np.pi * np.outer(a, grid.q - grid.q_min) / grid.length_q)
    ep = np.exp(1j * 2 * np.pi * np.outer(a, grid.p - grid.p_min) / grid.length_p)
    f = eq.T @ c @ ep
    return f if complex_valued else f.real
