"""Uniform grid on Q = (0, 1) x (0, T) and finite-difference weights."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MIN_NX = 7
MIN_NT = 9


@dataclass(frozen=True)
class Grid:
    """Uniform (x, t) grid.

    ``Nx`` counts interior x nodes, so ``hx = 1/(Nx+1)`` and the x nodes are
    ``i*hx`` for ``i = 0..Nx+1``.  ``Nt`` counts time levels including both
    ends, ``ht = T/(Nt-1)``.
    """

    Nx: int
    Nt: int
    T: float

    def __post_init__(self):
        if self.Nx < MIN_NX or self.Nt < MIN_NT:
            raise ValueError(
                f"grid too coarse: need Nx >= {MIN_NX} and Nt >= {MIN_NT}, "
                f"got Nx={self.Nx}, Nt={self.Nt}"
            )
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def hx(self) -> float:
        return 1.0 / (self.Nx + 1)

    @property
    def ht(self) -> float:
        return self.T / (self.Nt - 1)

    @property
    def x(self) -> np.ndarray:
        """All x nodes, boundaries included (length Nx+2)."""
        x = np.arange(self.Nx + 2) * self.hx
        x[-1] = 1.0
        return x

    @property
    def x_interior(self) -> np.ndarray:
        return self.x[1:-1]

    @property
    def t(self) -> np.ndarray:
        t = np.arange(self.Nt) * self.ht
        t[-1] = self.T
        return t

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of a full-grid field: (x nodes, time levels)."""
        return (self.Nx + 2, self.Nt)

    def mesh(self):
        """Full-grid coordinate arrays X, T of shape ``self.shape``."""
        return np.meshgrid(self.x, self.t, indexing="ij")


def build_grid(Nx: int, Nt: int, T: float) -> Grid:
    return Grid(int(Nx), int(Nt), float(T))


def grid_from_nodes(n: int, T: float) -> Grid:
    """Grid with ``n`` nodes per axis (boundaries included)."""
    return Grid(n - 2, n, float(T))


def fd_weights(offsets, order: int) -> np.ndarray:
    """Weights w with sum_j w_j f(x + s_j h) ~ h^order f^(order)(x).

    Solves the Taylor moment system; fine for the short stencils used here.
    """
    s = np.asarray(offsets, dtype=float)
    n = len(s)
    if order >= n:
        raise ValueError("stencil too short for the requested derivative order")
    A = np.vander(s, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, rhs)


@lru_cache(maxsize=None)
def derivative_matrix(n: int, order: int, h: float) -> np.ndarray:
    """Dense ``n x n`` matrix of a second-order accurate derivative.

    Central stencils in the interior, one-sided stencils of the same accuracy
    near the ends.
    """
    if order == 0:
        return np.eye(n)
    half = (order + 1) // 2
    width = 2 * half + 1
    # one-sided closures need order + 2 points for second-order accuracy
    side = order + 2
    if n < max(width, side):
        raise ValueError(f"need at least {max(width, side)} nodes for a derivative of order {order}")
    D = np.zeros((n, n))
    central = fd_weights(np.arange(-half, half + 1), order)
    for i in range(n):
        if half <= i < n - half:
            D[i, i - half:i + half + 1] = central
        elif i < half:
            offs = np.arange(side) - i
            D[i, :side] = fd_weights(offs, order)
        else:
            offs = np.arange(n - side, n) - i
            D[i, n - side:] = fd_weights(offs, order)
    D /= h ** order
    D.setflags(write=False)
    return D


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def integrate_q(field: np.ndarray, grid: Grid) -> float:
    """Composite trapezoid integral of a full-grid field over Q."""
    wx = trapezoid_weights(field.shape[0], grid.hx)
    wt = trapezoid_weights(field.shape[1], grid.ht)
    return float(wx @ field @ wt)
