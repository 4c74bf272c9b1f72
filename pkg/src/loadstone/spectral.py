"""Sine analysis/synthesis in y and the weighted mode norms.

The y basis is ``Y_k(y) = sqrt(2/ell) sin(mu_k y)`` with ``mu_k = pi k / ell``.
A mode field is an array over the full (x, t) grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .grid import Grid, derivative_matrix, integrate_q


@dataclass(frozen=True)
class ModeSet:
    ell: float
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("need at least one mode")
        if not self.ell > 0:
            raise ValueError("ell must be positive")

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.K + 1)

    @property
    def mu(self) -> np.ndarray:
        return np.pi * self.k / self.ell

    def basis(self, y) -> np.ndarray:
        """Y_k(y) for every k, shape ``(K,) + shape(y)``."""
        y = np.asarray(y, dtype=float)
        mu = self.mu.reshape((-1,) + (1,) * y.ndim)
        return np.sqrt(2.0 / self.ell) * np.sin(mu * y)


@dataclass(frozen=True)
class ModeState:
    """Per-mode fields ``u_k(x, t)``, array shape ``(K, Nx+2, Nt)``."""

    modes: np.ndarray
    grid: Grid
    modeset: ModeSet = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.modes, dtype=float)
        if m.shape != (self.modeset.K,) + self.grid.shape:
            raise ValueError(
                f"mode array shape {m.shape} does not match K={self.modeset.K} "
                f"and grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(m)):
            raise ValueError("mode fields must be finite")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "modes", m)

    @property
    def K(self) -> int:
        return self.modeset.K

    @classmethod
    def zeros(cls, grid: Grid, modeset: ModeSet) -> "ModeState":
        return cls(np.zeros((modeset.K,) + grid.shape), grid, modeset)

    def __sub__(self, other: "ModeState") -> "ModeState":
        return ModeState(self.modes - other.modes, self.grid, self.modeset)

    def __add__(self, other: "ModeState") -> "ModeState":
        return ModeState(self.modes + other.modes, self.grid, self.modeset)

    def scaled(self, s: float) -> "ModeState":
        return ModeState(s * self.modes, self.grid, self.modeset)

    def at(self, y) -> np.ndarray:
        """Synthesize u(x, t, y) at the given y points."""
        return synthesize(self.modes, y, self.modeset.ell)


def analyze(samples, ell: float, K: int) -> np.ndarray:
    """Sine coefficients of samples on a uniform y grid over [0, ell].

    ``samples`` has y as its last axis (endpoints included).  Returns an
    array with the y axis replaced by a leading mode axis of length K.
    """
    samples = np.asarray(samples, dtype=float)
    ny = samples.shape[-1]
    if ny < 4 * K + 1:
        raise ValueError(f"y grid too coarse: {ny} nodes for K={K} (need >= {4 * K + 1})")
    y = np.linspace(0.0, ell, ny)
    hy = ell / (ny - 1)
    w = np.full(ny, hy)
    w[0] = w[-1] = 0.5 * hy
    basis = ModeSet(ell, K).basis(y)  # (K, ny)
    coeffs = samples @ (basis * w).T  # (..., K)
    return np.moveaxis(coeffs, -1, 0)


def synthesize(coeffs, y_points, ell: float) -> np.ndarray:
    """Sum_k c_k Y_k(y).  ``coeffs`` has the mode axis first.

    Output has the trailing shape of ``coeffs`` with y appended as the last
    axis (or dropped for scalar y).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    K = coeffs.shape[0]
    y = np.asarray(y_points, dtype=float)
    basis = ModeSet(ell, K).basis(np.atleast_1d(y))  # (K, ny)
    basis = np.where(np.isclose(np.atleast_1d(y), 0.0) | np.isclose(np.atleast_1d(y), ell), 0.0, basis)
    out = np.tensordot(coeffs, basis, axes=([0], [0]))
    if y.ndim == 0:
        out = out[..., 0]
    return out


def multi_indices(l: int):
    return [(ax, at) for ax, at in product(range(l + 1), repeat=2) if ax + at <= l]


def sobolev_norm_sq(field: np.ndarray, l: int, grid: Grid) -> float:
    """Squared discrete W_2^l(Q) norm of a full-grid field."""
    if not 0 <= l <= 4:
        raise ValueError("Sobolev order must be in 0..4")
    field = np.asarray(field, dtype=float)
    nx, nt = field.shape
    if l > 0 and min(nx, nt) < l + 4:
        raise ValueError(f"grid too coarse for a W_2^{l} norm")
    total = 0.0
    for ax, at in multi_indices(l):
        d = field
        if ax:
            d = derivative_matrix(nx, ax, grid.hx) @ d
        if at:
            d = d @ derivative_matrix(nt, at, grid.ht).T
        total += integrate_q(d * d, grid)
    return total


def sobolev_norm_Q(field: np.ndarray, l: int, grid: Grid) -> float:
    """Discrete W_2^l(Q) norm: all D^alpha with |alpha| <= l, trapezoid rule."""
    return float(np.sqrt(sobolev_norm_sq(field, l, grid)))


def weighted_norm(state: ModeState, l: int, s: float = 3, variant: str = "A") -> float:
    """Weighted mode norm of a state.

    ``variant="A"``: sqrt( sqrt(2/ell) * sum_k (1+mu_k^4)^s ||u_k||^2_{W_2^l} ).
    ``variant="C"``: the same sum with prefactor 1 and s = 3.
    """
    if s < 0:
        raise ValueError("weight exponent must be nonnegative")
    mu = state.modeset.mu
    if variant == "C":
        s = 3
        pre = 1.0
    elif variant == "A":
        pre = np.sqrt(2.0 / state.modeset.ell)
    else:
        raise ValueError(f"unknown norm variant {variant!r}")
    terms = [
        (1.0 + mu[k] ** 4) ** s * sobolev_norm_sq(state.modes[k], l, state.grid)
        for k in range(state.K)
    ]
    # summed in index order so the value does not depend on scheduling
    return float(np.sqrt(pre * sum(terms)))


def c_norm(state: ModeState, i: int) -> float:
    """Mode-vector norm <v>_i with weights (1 + mu_k^4)^3."""
    return weighted_norm(state, i, 3, variant="C")


def derivative_norm(state: ModeState, ax: int, at: int, s: float = 3) -> float:
    """sqrt( sum_k (1+mu_k^4)^s ||D_x^ax D_t^at u_k||^2_{L2(Q)} )."""
    g = state.grid
    nx, nt = g.shape
    total = 0.0
    w = (1.0 + state.modeset.mu ** 4) ** s
    for k in range(state.K):
        d = state.modes[k]
        if ax:
            d = derivative_matrix(nx, ax, g.hx) @ d
        if at:
            d = d @ derivative_matrix(nt, at, g.ht).T
        total += w[k] * integrate_q(d * d, g)
    return float(np.sqrt(total))
