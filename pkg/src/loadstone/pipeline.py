"""End-to-end inverse solve, forward solve and manufactured cases."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .fd_operator import halfwidth, operator_terms, ModeOperator
from .grid import Grid, integrate_q
from .problem import ConditionReport, ProblemError, ProblemSpec, check_conditions, eval_xt
from .spectral import ModeSet, ModeState
from .solver import (
    DEFAULT_SCHEDULE, ContinuationResult, assemble_all, epsilon_continuation,
    loaded_data, loading_term, sampled_modes, solve_mode, trace_weights, _map,
)


class ProblemWarning(UserWarning):
    pass


def L0_expr(spec: ProblemSpec, e: ex.ExprLike) -> ex.Expr:
    """P e - M e as an expression (all derivatives symbolic)."""
    e = ex.as_expr(e)
    d = ex.differentiate
    P = ex.mul(spec.K0, e)
    dt = e
    for i in range(1, 5):
        dt = d(dt, "t")
        P = ex.add(P, ex.mul(spec.K[i], dt))
    exx = d(e, "x", 2)
    M = ex.add(
        ex.mul(spec.a, d(exx, "x", 2)),
        ex.mul(spec.b, d(exx, "t", 2)),
        ex.neg(ex.mul(spec.c, exx)),
    )
    return ex.sub(P, M)


def _fill_edges(core: np.ndarray, shape) -> np.ndarray:
    """Place ``core`` on [1:-1, :-1] and fill the rest by quadratic extrapolation."""
    out = np.zeros(shape)
    out[1:-1, :-1] = core
    out[0] = 3 * out[1] - 3 * out[2] + out[3]
    out[-1] = 3 * out[-2] - 3 * out[-3] + out[-4]
    out[:, -1] = 3 * out[:, -2] - 3 * out[:, -3] + out[:, -4]
    return out


def compute_Phi0(spec: ProblemSpec, grid: Grid, phi0=None, eps: float = 0.0) -> np.ndarray:
    """Phi0 = L0 phi0 - g0 on the full grid.

    By default phi0 comes from ``spec`` and is differentiated symbolically.
    A sampled full-grid ``phi0`` array is handled with the discrete operator
    (including the eps term); nodes outside the equation rows are
    extrapolated.
    """
    X, Tm = grid.mesh()
    g0 = eval_xt(spec.g0, X, Tm)
    if phi0 is None:
        return eval_xt(L0_expr(spec, spec.phi0), X, Tm) - g0
    phi0 = np.asarray(phi0, dtype=float)
    if phi0.shape != grid.shape:
        raise ValueError("sampled phi0 must be a full-grid field")
    w = halfwidth(eps)
    terms = operator_terms(spec, grid, 0.0, w)
    A = terms["P"] + terms["M"]
    if eps > 0:
        A = A + eps * terms["eps"]
    holder = ModeOperator(None, grid, spec.gamma, 0.0, eps, w, np.array([]), 1.0)
    core = (A @ holder.extend(phi0).ravel()).reshape(grid.Nx, grid.Nt - 1)
    return _fill_edges(core, grid.shape) - g0


def reconstruct_h(state: ModeState, spec: ProblemSpec, grid: Grid, Phi0: np.ndarray) -> np.ndarray:
    """h = (Phi0 + loading(state)) / f0 on the full grid."""
    X, Tm = grid.mesh()
    f0 = eval_xt(spec.f0, X, Tm)
    bad = np.abs(f0) < spec.eta
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise ProblemError(
            f"condition '|f0(x,t)| >= eta > 0' violated at x={grid.x[i]:.6g}, t={grid.t[j]:.6g} "
            f"(|f0| = {abs(f0[i, j]):.3g} < eta = {spec.eta:g})"
        )
    return (Phi0 + loading_term(state, state.modeset, spec.ell0)) / f0


def trace_field(state: ModeState, ell0: float) -> np.ndarray:
    w = trace_weights(state.modeset, ell0)
    out = np.zeros(state.grid.shape)
    for k in range(state.K):
        out += w[k] * state.modes[k]
    return out


def trace_residual(state: ModeState, spec: ProblemSpec, grid: Grid, modes: ModeSet | None = None,
                   phi0=None) -> float:
    """Discrete L2(Q) norm of u(x, t, ell0) - phi0(x, t)."""
    if phi0 is None:
        X, Tm = grid.mesh()
        phi0 = eval_xt(spec.phi0, X, Tm)
    z = trace_field(state, spec.ell0) - phi0
    return math.sqrt(max(integrate_q(z * z, grid), 0.0))


def l2_q(field: np.ndarray, grid: Grid) -> float:
    return math.sqrt(max(integrate_q(field * field, grid), 0.0))


@dataclass
class InverseSolution:
    state: ModeState
    h: np.ndarray
    trace_residual: float
    report: ConditionReport
    continuation: ContinuationResult
    Phi0: np.ndarray = field(repr=False)
    warnings: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.continuation.converged

    @property
    def logs(self):
        return [s.log for s in self.continuation.stages]


def solve_inverse(spec: ProblemSpec, grid: Grid, K: int, eps_schedule=DEFAULT_SCHEDULE,
                  tol: float = 1e-8, max_iter: int = 50, ny: int | None = None,
                  c2: float = 1.0, c3: float = 1.0, phi0=None, threads=None) -> InverseSolution:
    """Recover (u, h) from the trace observation.

    Validity of the constants and |f0| >= eta are enforced; the remaining
    sufficient conditions only produce warnings.
    """
    errs = spec.validity_errors()
    if errs:
        raise ProblemError("invalid problem: " + "; ".join(errs))
    if grid.T != spec.T:
        raise ValueError("grid time extent does not match the problem")
    modes = ModeSet(spec.ell, K)
    report = check_conditions(spec, grid, K, c2=c2, c3=c3, ny=ny)
    for c in report.hard_failures:
        if c.name.startswith("|f0"):
            raise ProblemError(f"condition '{c.name}' violated (min |f0| = {c.value:.3g}, eta = {spec.eta:g})")
    notes = []
    for c in report.checks:
        if not c.passed:
            msg = f"sufficient condition not met: {c.name} (value {c.value:.6g})"
            notes.append(msg)
            warnings.warn(msg, ProblemWarning, stacklevel=2)
    if phi0 is None:
        Phi0 = compute_Phi0(spec, grid)
    else:
        if len(list(eps_schedule)) != 1:
            raise ValueError("a sampled phi0 needs a single-stage eps schedule")
        Phi0 = compute_Phi0(spec, grid, phi0=phi0, eps=float(list(eps_schedule)[0]))
    data = loaded_data(spec, grid, modes, Phi0, ny)
    cont = epsilon_continuation(spec, grid, modes, data, eps_schedule, tol, max_iter, threads)
    h = reconstruct_h(cont.state, spec, grid, Phi0)
    if phi0 is None:
        tr = trace_residual(cont.state, spec, grid, modes)
    else:
        tr = trace_residual(cont.state, spec, grid, modes, phi0=phi0)
    return InverseSolution(cont.state, h, tr, report, cont, Phi0, notes)


def solve_forward(spec: ProblemSpec, h_known: ex.ExprLike, grid: Grid, K: int,
                  eps_schedule=DEFAULT_SCHEDULE, ny: int | None = None, threads=None) -> ModeState:
    """Solve the unloaded mode problems with psi = g + h f fully known.

    Uses the last (smallest) eps of the schedule.
    """
    errs = spec.validity_errors()
    if errs:
        raise ProblemError("invalid problem: " + "; ".join(errs))
    modes = ModeSet(spec.ell, K)
    hx = ex.as_expr(h_known)
    psi = ex.add(spec.g, ex.mul(hx, spec.f))
    psi_modes = sampled_modes(psi, spec, grid, K, ny)
    eps = float(list(eps_schedule)[-1])
    ops = assemble_all(spec, grid, modes, eps, threads)
    fields = _map(lambda k: solve_mode(ops[k], psi_modes[k]), range(K), threads)
    return ModeState(np.stack(fields), grid, modes)


@dataclass
class ManufacturedCase:
    spec: ProblemSpec
    u_star: ex.Expr
    h_star: ex.Expr
    amplitudes: dict
    nu: float

    def exact_modes(self, grid: Grid, K: int) -> ModeState:
        X, Tm = grid.mesh()
        base = np.exp(self.nu * Tm) * np.sin(np.pi * X)
        modes = np.zeros((K,) + grid.shape)
        for k, alpha in self.amplitudes.items():
            if k <= K:
                modes[k - 1] = alpha * base
        return ModeState(modes, grid, ModeSet(self.spec.ell, K))

    def exact_h(self, grid: Grid) -> np.ndarray:
        X, Tm = grid.mesh()
        return eval_xt(self.h_star, X, Tm)


def manufactured_case(gamma: float, T: float, ell: float, ell0: float, amplitudes: dict,
                      h_star: ex.ExprLike, template: dict) -> ManufacturedCase:
    """Build consistent data for u* = e^(nu t) sin(pi x) sum_k alpha_k Y_k(y).

    ``template`` supplies K0..K4, a, b, c, f and eta.  g and phi0 are derived
    so that (u*, h*) solves the problem exactly.
    """
    if not gamma > 0 or not T > 0:
        raise ProblemError("manufactured cases need gamma > 0 and T > 0")
    nu = math.log(gamma) / T
    amps = {int(k): float(v) for k, v in dict(amplitudes).items()}
    if any(k < 1 for k in amps):
        raise ValueError("mode numbers start at 1")
    yfun = ex.add(*[
        ex.mul(alpha * math.sqrt(2.0 / ell), ex.Call("sin", ex.mul(math.pi * k / ell, ex.Var("y"))))
        for k, alpha in sorted(amps.items())
    ])
    u_star = ex.mul(ex.Call("exp", ex.mul(nu, ex.Var("t"))), ex.parse("sin(pi*x)"), yfun)
    hs = ex.as_expr(h_star)
    probe = ProblemSpec(
        K0=template["K0"], K1=template["K1"], K2=template["K2"], K3=template["K3"],
        K4=template["K4"], a=template["a"], b=template["b"], c=template["c"],
        gamma=gamma, T=T, ell=ell, ell0=ell0, f=template["f"], g="0", phi0="0",
        eta=template["eta"],
    )
    psi = ex.add(L0_expr(probe, u_star), ex.differentiate(u_star, "y", 4))
    g = ex.sub(psi, ex.mul(hs, probe.f))
    phi0 = ex.substitute(u_star, "y", ell0)
    spec = probe.replace(g=g, phi0=phi0)
    return ManufacturedCase(spec, u_star, hs, amps, nu)


# Coefficient set used by the shipped manufactured example and the acceptance suite.
MMS_TEMPLATE = {
    "K0": "-1", "K1": "-1", "K2": "0", "K3": "3", "K4": "t*(1 - t)",
    "a": 1.0, "b": 1.0, "c": 1.0,
    "f": "exp(t)*(2 + x)*sin(y)", "eta": 1.5,
}


def reference_case() -> ManufacturedCase:
    return manufactured_case(math.e, 1.0, math.pi, 1.0, {1: 1.0, 2: 0.5}, "1 + x*t", MMS_TEMPLATE)


def relative_error(approx: np.ndarray, exact: np.ndarray, grid: Grid) -> float:
    return l2_q(approx - exact, grid) / max(l2_q(exact, grid), 1e-300)


def mode_error(state: ModeState, exact: ModeState) -> float:
    """Relative discrete L2(G) error of the mode vector."""
    g = state.grid
    num = sum(integrate_q((state.modes[k] - exact.modes[k]) ** 2, g) for k in range(state.K))
    den = sum(integrate_q(exact.modes[k] ** 2, g) for k in range(state.K))
    return math.sqrt(num / max(den, 1e-300))


def truncation_estimate(spec: ProblemSpec, grid: Grid, K: int, **solve_kw) -> float:
    """Relative L2(Q) change of h between K and 2K modes (tail(K) indicator)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ProblemWarning)
        h1 = solve_inverse(spec, grid, K, **solve_kw).h
        h2 = solve_inverse(spec, grid, 2 * K, **solve_kw).h
    return relative_error(h1, h2, grid)
