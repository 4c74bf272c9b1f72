"""Sparse finite-difference operator for one y-mode.

For mode k and regularization eps >= 0 the operator is

    -eps d/dt (D_t^4 + 2 D_t^2 D_x^2 + D_x^4) u
        + sum_i K_i D_t^i u - (a D_x^4 + b D_x^2 D_t^2 - c D_x^2) u + mu_k^4 u

on the interior x nodes.  Navier conditions u = u_xx = 0 are built into the
x stencils (odd reflection at the walls).

Time layout: each x column stores the physical levels 0..Nt-1 plus ``w``
ghost levels on either side, where ``w`` is the stencil half-width (3 with
the fifth-order eps term, 2 without).  Equation rows sit on levels
0..Nt-2, which are the distinct points of the time circle once t = 0 and
t = T are identified.  The remaining 2w+1 rows per column are

    gamma * delta^p u(0) - delta^p u(T) = 0,    p = 0..2w,

with delta^p the undivided central p-th difference.  Rows p = 0..4
(p = 0..2 for eps = 0) are the semi-nonlocal conditions; the higher ones
close the wide stencils.  Together they are equivalent to the wraparound
u(t + T) = gamma u(t) on the ghost band.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, build_grid, fd_weights
from .problem import ProblemSpec, eval_xt

__all__ = [
    "Grid", "build_grid", "ModeOperator", "AssemblyError", "SingularOperatorError",
    "assemble", "operator_terms", "apply", "halfwidth",
]

EQUATION, NONLOCAL, CLOSURE = "equation", "nonlocal", "closure"


class AssemblyError(RuntimeError):
    pass


class SingularOperatorError(RuntimeError):
    def __init__(self, message, location=None):
        self.location = location
        super().__init__(message)


def halfwidth(eps: float) -> int:
    return 3 if eps > 0 else 2


def _central(p: int, w: int) -> np.ndarray:
    """Undivided central p-th difference weights padded to offsets -w..w."""
    half = max((p + 1) // 2, 0)
    out = np.zeros(2 * w + 1)
    if p == 0:
        out[w] = 1.0
        return out
    out[w - half:w + half + 1] = fd_weights(np.arange(-half, half + 1), p)
    return out


def _time_rows(grid: Grid, p: int, w: int) -> sp.csr_matrix:
    """(Nt-1) x (Nt+2w) matrix of the p-th time difference at eq levels."""
    n_eq = grid.Nt - 1
    L = grid.Nt + 2 * w
    weights = _central(p, w) / grid.ht ** p
    rows, cols, vals = [], [], []
    for o, wt in zip(range(-w, w + 1), weights):
        if wt == 0.0:
            continue
        j = np.arange(n_eq)
        rows.append(j)
        cols.append(j + o + w)
        vals.append(np.full(n_eq, wt))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_eq, L)
    )


def _x_second(grid: Grid) -> sp.csr_matrix:
    n = grid.Nx
    return sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1],
                    format="csr") / grid.hx ** 2


def _nonlocal_block(grid: Grid, gamma: float, w: int) -> sp.csr_matrix:
    L = grid.Nt + 2 * w
    B = np.zeros((2 * w + 1, L))
    for p in range(2 * w + 1):
        c = _central(p, w)
        B[p, 0:2 * w + 1] += gamma * c
        B[p, grid.Nt - 1:grid.Nt + 2 * w] -= c
    return sp.csr_matrix(B)


def operator_terms(spec: ProblemSpec, grid: Grid, mu_k: float, w: int) -> dict:
    """Equation-row blocks of the operator, keyed by term.

    ``"eps"`` is -d/dt Delta^2 without the eps factor.  Every block maps the
    stored unknowns (Nx columns of Nt+2w levels) to the (Nx, Nt-1) equation
    nodes, both flattened column-major in x.
    """
    Ix = sp.identity(grid.Nx, format="csr")
    Dx2 = _x_second(grid)
    Dx4 = (Dx2 @ Dx2).tocsr()
    S = [_time_rows(grid, p, w) for p in range(min(2 * w, 5) + 1)]
    X, Tm = np.meshgrid(grid.x_interior, grid.t[:-1], indexing="ij")
    P = None
    for p, Kp in enumerate(spec.K):
        try:
            kv = eval_xt(Kp, X, Tm).ravel()
        except Exception as err:  # surface which coefficient failed
            raise AssemblyError(f"cannot evaluate K{p}: {err}") from err
        term = sp.diags(kv) @ sp.kron(Ix, S[p], format="csr")
        P = term if P is None else P + term
    M = spec.a * sp.kron(Dx4, S[0]) + spec.b * sp.kron(Dx2, S[2]) - spec.c * sp.kron(Dx2, S[0])
    terms = {
        "P": P.tocsr(),
        "M": -M.tocsr(),
        "mu": (mu_k ** 4) * sp.kron(Ix, S[0], format="csr"),
    }
    if w >= 3:
        terms["eps"] = -(sp.kron(Ix, S[5]) + 2.0 * sp.kron(Dx2, S[3]) + sp.kron(Dx4, S[1])).tocsr()
    return terms


@dataclass
class ModeOperator:
    """Assembled square system for one mode."""

    matrix: sp.csc_matrix
    grid: Grid
    gamma: float
    mu_k: float
    eps: float
    w: int
    row_kind: np.ndarray
    nonlocal_scale: float
    _lu: object = field(default=None, repr=False, compare=False)

    @property
    def levels(self) -> int:
        """Stored time levels per x column."""
        return self.grid.Nt + 2 * self.w

    @property
    def n_nonlocal(self) -> int:
        return int(np.sum(self.row_kind[: self.levels] == NONLOCAL))

    @property
    def t_stored(self) -> np.ndarray:
        return (np.arange(self.levels) - self.w) * self.grid.ht

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x, t)`` on interior x nodes and all stored levels."""
        X, Tm = np.meshgrid(self.grid.x_interior, self.t_stored, indexing="ij")
        return np.broadcast_to(np.asarray(func(X, Tm), dtype=float), X.shape).copy()

    def extend(self, field: np.ndarray) -> np.ndarray:
        """Stored-layout field from physical levels, ghosts filled by wraparound."""
        field = np.asarray(field, dtype=float)
        if field.shape == self.grid.shape:
            field = field[1:-1]
        if field.shape == (self.grid.Nx, self.levels):
            return field.copy()
        if field.shape != (self.grid.Nx, self.grid.Nt):
            raise ValueError(f"field shape {field.shape} does not match the grid")
        w, Nt = self.w, self.grid.Nt
        out = np.empty((self.grid.Nx, self.levels))
        out[:, w:w + Nt] = field
        for m in range(1, w + 1):
            out[:, w - m] = field[:, Nt - 1 - m] / self.gamma
            out[:, w + Nt - 1 + m] = self.gamma * field[:, m]
        return out

    def to_full(self, stored: np.ndarray) -> np.ndarray:
        """Physical full-grid field (x walls included) from stored layout."""
        out = np.zeros(self.grid.shape)
        out[1:-1] = stored[:, self.w:self.w + self.grid.Nt]
        return out

    def equation_part(self, residual: np.ndarray) -> np.ndarray:
        return residual[:, : self.grid.Nt - 1]

    def nonlocal_part(self, residual: np.ndarray) -> np.ndarray:
        return residual[:, self.grid.Nt - 1:] / self.nonlocal_scale

    def factorize(self):
        if self._lu is None:
            try:
                lu = spla.splu(self.matrix, permc_spec="COLAMD")
            except RuntimeError as err:
                raise SingularOperatorError(
                    f"mode operator (mu_k={self.mu_k:g}, eps={self.eps:g}) is singular: {err}"
                ) from err
            diag = np.abs(lu.U.diagonal())
            j = int(np.argmin(diag))
            if diag[j] <= 1e-14 * diag.max():
                col = int(lu.perm_c[j])
                i, s = divmod(col, self.levels)
                raise SingularOperatorError(
                    f"mode operator (mu_k={self.mu_k:g}, eps={self.eps:g}) is numerically "
                    f"singular: pivot {diag[j]:.3e} at x index {i + 1}, time level {s - self.w}",
                    location=(i + 1, s - self.w),
                )
            self._lu = lu
        return self._lu

    def dump(self, path) -> None:
        """Write the matrix as 'row col value' lines."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", newline="\n") as fh:
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{r} {c} {v:.17g}\n")


def assemble(spec: ProblemSpec, grid: Grid, mu_k: float, eps: float) -> ModeOperator:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    w = halfwidth(eps)
    terms = operator_terms(spec, grid, mu_k, w)
    E = terms["P"] + terms["M"] + terms["mu"]
    if eps > 0:
        E = E + eps * terms["eps"]
    E = E.tocsr()
    scale = float(np.max(np.abs(E.data))) if E.nnz else 1.0
    B = sp.kron(sp.identity(grid.Nx), _nonlocal_block(grid, spec.gamma, w)) * scale
    n_eq = grid.Nt - 1
    A = sp.vstack([E, B]).tocsr()
    # interleave so that each x column owns a contiguous block of L rows
    eq_idx = np.arange(grid.Nx * n_eq).reshape(grid.Nx, n_eq)
    nl_idx = grid.Nx * n_eq + np.arange(grid.Nx * (2 * w + 1)).reshape(grid.Nx, 2 * w + 1)
    order = np.hstack([eq_idx, nl_idx]).ravel()
    A = A[order]
    if A.shape[0] != A.shape[1]:
        raise AssemblyError(f"assembled system is not square: {A.shape}")
    if not np.all(np.isfinite(A.data)):
        raise AssemblyError("non-finite matrix entries")
    kinds = [EQUATION] * n_eq
    n_true = 5 if eps > 0 else 3
    kinds += [NONLOCAL if p < n_true else CLOSURE for p in range(2 * w + 1)]
    row_kind = np.tile(np.array(kinds), grid.Nx)
    return ModeOperator(A.tocsc(), grid, spec.gamma, float(mu_k), float(eps), w, row_kind, scale)


def apply(opr: ModeOperator, field: np.ndarray) -> np.ndarray:
    """Matrix-vector product, returned as (Nx, rows per column).

    ``field`` may be a full-grid physical field (ghosts filled by
    wraparound) or an array in stored layout.
    """
    stored = opr.extend(field)
    return (opr.matrix @ stored.ravel()).reshape(opr.grid.Nx, opr.levels)
