"""Mode solves, successive approximations and eps-continuation."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fd_operator import ModeOperator, assemble
from .grid import Grid
from .problem import ProblemSpec, eval_xt, eval_xty
from .spectral import ModeSet, ModeState, analyze, c_norm, derivative_norm

log = logging.getLogger(__name__)

NORM_FLOOR = 1e-300
SOLVE_RTOL = 1e-10
REFINE_STEPS = 3
DEFAULT_SCHEDULE = (1e-2, 1e-3, 1e-4)
# third-order quantities tracked for boundedness of the iterates: (name, x order, t order)
THIRD_ORDER = (("ttt", 0, 3), ("ttx", 1, 2), ("txx", 2, 1))


class SolveError(RuntimeError):
    def __init__(self, message, mode=None):
        self.mode = mode
        super().__init__(message)


def thread_count() -> int:
    raw = os.environ.get("LOADSTONE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def _map(fn, items, threads=None):
    threads = thread_count() if threads is None else threads
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def backward_error(A, x, b) -> float:
    """Normwise backward error ||Ax - b|| / (|| |A||x| || + ||b||).

    The plain relative residual ||Ax - b||/||b|| has a rounding floor of
    about u * || |A||x| || / ||b||, which the high-order time stencils push
    above 1e-10 on fine grids, so the tolerance is applied to this instead.
    """
    r = np.linalg.norm(A @ x - b)
    scale = np.linalg.norm(abs(A) @ np.abs(x)) + np.linalg.norm(b)
    return float(r / scale) if scale > 0 else 0.0


def solve_mode(opr: ModeOperator, rhs: np.ndarray) -> np.ndarray:
    """Solve one mode system; ``rhs`` is a full-grid field of equation values.

    Returns the full-grid solution (x walls are zero).
    """
    grid = opr.grid
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape == grid.shape:
        rhs = rhs[1:-1, : grid.Nt - 1]
    if rhs.shape != (grid.Nx, grid.Nt - 1):
        raise ValueError(f"rhs shape {rhs.shape} does not match the grid")
    b = np.zeros((grid.Nx, opr.levels))
    b[:, : grid.Nt - 1] = rhs
    b = b.ravel()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(grid.shape)
    lu = opr.factorize()
    x = lu.solve(b)
    err = backward_error(opr.matrix, x, b)
    for _ in range(REFINE_STEPS):  # iterative refinement
        if err <= SOLVE_RTOL:
            break
        x = x + lu.solve(b - opr.matrix @ x)
        err = backward_error(opr.matrix, x, b)
    if not err <= SOLVE_RTOL:
        raise SolveError(f"backward error {err:.3e} exceeds {SOLVE_RTOL:g}")
    return opr.to_full(x.reshape(grid.Nx, opr.levels))


def trace_weights(modes: ModeSet, ell0: float) -> np.ndarray:
    """Y_k(ell0) = sqrt(2/ell) sin(mu_k ell0)."""
    return np.sqrt(2.0 / modes.ell) * np.sin(modes.mu * ell0)


def loading_term(state: ModeState, modes: ModeSet, ell0: float) -> np.ndarray:
    """sqrt(2/ell) sum_m mu_m^4 u_m(x, t) sin(mu_m ell0)."""
    w = trace_weights(modes, ell0) * modes.mu ** 4
    out = np.zeros(state.grid.shape)
    for m in range(modes.K):  # fixed summation order
        out += w[m] * state.modes[m]
    return out


@dataclass(frozen=True)
class LoadedData:
    """Iteration-invariant data: sine coefficients of g and f, f0 and Phi0."""

    g_modes: np.ndarray
    f_modes: np.ndarray
    f0: np.ndarray
    Phi0: np.ndarray


def sampled_modes(fn, spec: ProblemSpec, grid: Grid, K: int, ny: int | None = None) -> np.ndarray:
    ny = ny or 16 * K + 1
    X, Tm = grid.mesh()
    Y = np.linspace(0.0, spec.ell, ny)
    vals = eval_xty(fn, X[..., None], Tm[..., None], Y[None, None, :])
    return analyze(vals, spec.ell, K)


def loaded_data(spec: ProblemSpec, grid: Grid, modes: ModeSet, Phi0: np.ndarray,
                ny: int | None = None) -> LoadedData:
    X, Tm = grid.mesh()
    f0 = eval_xt(spec.f0, X, Tm)
    return LoadedData(
        g_modes=sampled_modes(spec.g, spec, grid, modes.K, ny),
        f_modes=sampled_modes(spec.f, spec, grid, modes.K, ny),
        f0=f0,
        Phi0=np.asarray(Phi0, dtype=float),
    )


def assemble_all(spec: ProblemSpec, grid: Grid, modes: ModeSet, eps: float, threads=None):
    def build(mu):
        opr = assemble(spec, grid, mu, eps)
        opr.factorize()
        return opr

    return _map(build, modes.mu.tolist(), threads)


def loaded_rhs(prev: ModeState, data: LoadedData, modes: ModeSet, ell0: float) -> np.ndarray:
    """Right-hand sides F_k(prev) for all modes, shape (K, Nx+2, Nt)."""
    h_part = (data.Phi0 + loading_term(prev, modes, ell0)) / data.f0
    return data.g_modes + data.f_modes * h_part[None]


def picard_step(prev: ModeState, operators, spec: ProblemSpec, grid: Grid,
                data: LoadedData, threads=None) -> ModeState:
    """One successive approximation: solve every mode with the loading frozen at ``prev``."""
    modes = prev.modeset
    rhs = loaded_rhs(prev, data, modes, spec.ell0)

    def solve(k):
        try:
            return solve_mode(operators[k], rhs[k])
        except Exception as err:
            raise SolveError(f"mode {k + 1}: {err}", mode=k + 1) from err

    new = _map(solve, range(modes.K), threads)
    return ModeState(np.stack(new), grid, modes)


def loaded_residual(state: ModeState, operators, data: LoadedData, spec: ProblemSpec) -> tuple:
    """Discrete L2 norms of (I_eps u - F(u)) and of F(u) over the equation nodes."""
    grid = state.grid
    F = loaded_rhs(state, data, state.modeset, spec.ell0)
    r2 = f2 = 0.0
    for k, opr in enumerate(operators):
        lhs = opr.equation_part(opr.matrix.dot(opr.extend(state.modes[k]).ravel())
                                .reshape(grid.Nx, opr.levels))
        Fk = F[k, 1:-1, : grid.Nt - 1]
        r2 += float(np.sum((lhs - Fk) ** 2))
        f2 += float(np.sum(Fk ** 2))
    cell = grid.hx * grid.ht
    return np.sqrt(cell * r2), np.sqrt(cell * f2)


@dataclass
class IterationRecord:
    iteration: int
    diff_norm_2: float
    diff_norm_4: float
    ratio: float
    residual: float
    seconds: float
    bounds: dict = field(default_factory=dict)  # <u_ttt>, <u_ttx>, <u_txx> of the iterate


@dataclass
class ConvergenceLog:
    eps: float
    records: list = field(default_factory=list)

    def append(self, rec: IterationRecord):
        self.records.append(rec)

    @property
    def diffs(self) -> np.ndarray:
        return np.array([r.diff_norm_2 for r in self.records])

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.records])

    def __len__(self):
        return len(self.records)


@dataclass
class PicardResult:
    state: ModeState
    log: ConvergenceLog
    converged: bool
    eps: float
    operators: list = field(default=None, repr=False)


def run_picard(spec: ProblemSpec, grid: Grid, modes: ModeSet, eps: float, data: LoadedData,
               tol: float = 1e-8, max_iter: int = 50, initial: ModeState | None = None,
               operators=None, threads=None) -> PicardResult:
    """Successive approximations from ``initial`` (zero state by default).

    Stops when <u^(l) - u^(l-1)>_2 / max(<u^(l)>_2, floor) < tol.  Running
    out of iterations is reported through ``converged=False``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if operators is None:
        operators = assemble_all(spec, grid, modes, eps, threads)
    prev = initial if initial is not None else ModeState.zeros(grid, modes)
    clog = ConvergenceLog(eps)
    converged = False
    last = None
    for it in range(1, max_iter + 1):
        t0 = time.perf_counter()
        new = picard_step(prev, operators, spec, grid, data, threads)
        diff = new - prev
        d2 = c_norm(diff, 2)
        d4 = c_norm(diff, 4)
        size = c_norm(new, 2)
        res, fnorm = loaded_residual(new, operators, data, spec)
        rel_res = res / max(fnorm, NORM_FLOOR)
        ratio = d2 / last if last else float("nan")
        bounds = {name: derivative_norm(new, ax, at) for name, ax, at in THIRD_ORDER}
        clog.append(IterationRecord(it, d2, d4, ratio, rel_res, time.perf_counter() - t0, bounds))
        log.debug("eps=%g iter=%d diff2=%.3e ratio=%.3g", eps, it, d2, ratio)
        last = d2
        prev = new
        if d2 / max(size, NORM_FLOOR) < tol:
            converged = True
            break
    if not converged:
        log.warning("successive approximations did not converge at eps=%g in %d iterations", eps, max_iter)
    return PicardResult(prev, clog, converged, eps, operators)


@dataclass
class ContinuationResult:
    state: ModeState
    stages: list
    stability: list  # (eps_j, eps_j+1, <u_j - u_j+1>_2)

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.stages)

    @property
    def failed_eps(self):
        return [s.eps for s in self.stages if not s.converged]


def epsilon_continuation(spec: ProblemSpec, grid: Grid, modes: ModeSet, data: LoadedData,
                         eps_schedule=DEFAULT_SCHEDULE, tol: float = 1e-8, max_iter: int = 50,
                         threads=None) -> ContinuationResult:
    """Successive approximations for each eps, warm-started from the previous stage."""
    sched = [float(e) for e in eps_schedule]
    if not sched or any(e <= 0 for e in sched):
        raise ValueError("eps schedule must be non-empty and positive")
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    stages = []
    stability = []
    state = None
    for eps in sched:
        result = run_picard(spec, grid, modes, eps, data, tol, max_iter, initial=state,
                            threads=threads)
        if state is not None:
            stability.append((stages[-1].eps, eps, c_norm(result.state - state, 2)))
        stages.append(result)
        state = result.state
        if not result.converged:
            log.warning("continuation stage eps=%g did not converge", eps)
    return ContinuationResult(state, stages, stability)
