"""Problem definition and the sufficient-condition checker.

The equation on G = (0,1) x (0,ell) x (0,T) is

    sum_i K_i D_t^i u - (a u_xxxx + b u_xxtt - c u_xx) + u_yyyy = g + h f

with gamma D_t^p u|_{t=0} = D_t^p u|_{t=T}, Navier conditions in x and y,
and the trace observation u(x, t, ell0) = phi0(x, t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import expr as ex
from .grid import Grid
from .spectral import ModeSet, ModeState, analyze, weighted_norm

COND_TOL = 1e-10


class ProblemError(ValueError):
    """A hard validity requirement on the problem data is violated."""


@dataclass(frozen=True)
class ProblemSpec:
    K0: ex.Expr
    K1: ex.Expr
    K2: ex.Expr
    K3: ex.Expr
    K4: ex.Expr
    a: float
    b: float
    c: float
    gamma: float
    T: float
    ell: float
    ell0: float
    f: ex.Expr
    g: ex.Expr
    phi0: ex.Expr
    eta: float

    def __post_init__(self):
        for name in ("K0", "K1", "K2", "K3", "K4", "f", "g", "phi0"):
            object.__setattr__(self, name, ex.as_expr(getattr(self, name)))
        for name in ("a", "b", "c", "gamma", "T", "ell", "ell0", "eta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("K0", "K1", "K2", "K3", "K4", "phi0"):
            extra = getattr(self, name).variables() - {"x", "t"}
            if extra:
                raise ProblemError(f"{name} may depend on x and t only, found {sorted(extra)}")

    @property
    def K(self) -> tuple:
        return (self.K0, self.K1, self.K2, self.K3, self.K4)

    def validity_errors(self) -> list[str]:
        """Structural requirements that make the problem meaningless if violated."""
        errs = []
        for name in ("a", "b", "c"):
            if not getattr(self, name) > 0:
                errs.append(f"{name} > 0")
        if not abs(self.gamma) > 1:
            errs.append("|gamma| > 1")
        if not self.T > 0:
            errs.append("T > 0")
        if not 0 < self.ell0 < self.ell:
            errs.append("0 < ell0 < ell")
        if not self.eta > 0:
            errs.append("eta > 0")
        return errs

    def replace(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    @property
    def f0(self) -> ex.Expr:
        return ex.substitute(self.f, "y", self.ell0)

    @property
    def g0(self) -> ex.Expr:
        return ex.substitute(self.g, "y", self.ell0)


def compute_lambda(gamma: float, T: float) -> float:
    """(2/T) ln|gamma|."""
    if not abs(gamma) > 1:
        raise ProblemError("|gamma| > 1 is required")
    if not T > 0:
        raise ProblemError("T > 0 is required")
    return 2.0 / T * math.log(abs(gamma))


def eval_xt(e: ex.Expr, X, T) -> np.ndarray:
    shape = np.broadcast_shapes(np.shape(X), np.shape(T))
    return np.broadcast_to(np.asarray(ex.evaluate(e, x=X, t=T), dtype=float), shape).copy()


def eval_xty(e: ex.Expr, X, T, Y) -> np.ndarray:
    shape = np.broadcast_shapes(np.shape(X), np.shape(T), np.shape(Y))
    return np.broadcast_to(np.asarray(ex.evaluate(e, x=X, t=T, y=Y), dtype=float), shape).copy()


def c1_partial(ell: float, K: int) -> float:
    mu = ModeSet(ell, K).mu
    terms = mu ** 8 / (1.0 + mu ** 4) ** 3
    return float(sum(terms.tolist()))


def c1_tail_bound(ell: float, K: int) -> float:
    """Upper bound on sum_{k>K} mu_k^8/(1+mu_k^4)^3 <= sum_{k>K} mu_k^-4."""
    return (ell / math.pi) ** 4 / (3.0 * K ** 3)


@dataclass
class Check:
    name: str
    value: float
    passed: bool
    hard: bool = False
    note: str = ""


@dataclass
class ConditionReport:
    lam: float
    delta1: float
    delta2: float
    delta3: float
    delta0: float
    sigma: float
    delta: float
    c1: float
    c1_tail: float
    c2: float
    c3: float
    m_const: float
    f0_c01_sq: float
    f_norm_sq: float
    M_const: float
    q: float
    checks: list = field(default_factory=list)

    @property
    def hard_failures(self) -> list:
        return [c for c in self.checks if c.hard and not c.passed]

    @property
    def soft_failures(self) -> list:
        return [c for c in self.checks if not c.hard and not c.passed]

    @property
    def hard_ok(self) -> bool:
        return not self.hard_failures

    def rows(self):
        """(quantity, value, pass) rows; pass is '' for pure quantities."""
        out = [
            ("lambda", self.lam, ""),
            ("delta1", self.delta1, ""),
            ("delta2", self.delta2, ""),
            ("delta3", self.delta3, ""),
            ("delta0", self.delta0, ""),
            ("sigma", self.sigma, ""),
            ("delta", self.delta, ""),
            ("c1", self.c1, ""),
            ("c1_tail_bound", self.c1_tail, ""),
            ("c2", self.c2, ""),
            ("c3", self.c3, ""),
            ("m", self.m_const, ""),
            ("f0_C01_norm_sq", self.f0_c01_sq, ""),
            ("f_W33_norm_sq", self.f_norm_sq, ""),
            ("M", self.M_const, ""),
            ("q", self.q, ""),
        ]
        for c in self.checks:
            out.append((c.name, c.value, "pass" if c.passed else "fail"))
        return out

    def summary(self) -> str:
        lines = ["Sufficient-condition report", ""]
        for c in self.checks:
            tag = "PASS" if c.passed else ("FAIL" if c.hard else "WARN")
            extra = f"  ({c.note})" if c.note else ""
            lines.append(f"  [{tag}] {c.name}: {c.value:.6g}{extra}")
        lines.append("")
        lines.append(f"  lambda = {self.lam:.6g}, delta0 = {self.delta0:.6g}, delta = {self.delta:.6g}")
        lines.append(
            f"  q = {self.q:.6g} (sufficient-condition estimate with c2 = {self.c2:g}, c3 = {self.c3:g})"
        )
        return "\n".join(lines)


def _max_abs(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def check_conditions(
    spec: ProblemSpec,
    grid: Grid,
    K: int,
    sigma_policy: str = "half",
    c2: float = 1.0,
    c3: float = 1.0,
    ny: int | None = None,
) -> ConditionReport:
    """Evaluate every sufficient condition and constant on the grid.

    Never stops at the first failure; each requirement becomes a Check.
    Hard checks are the ones that make the inverse problem ill-defined
    (validity of the constants, |f0| >= eta, degeneracy of K4).
    """
    if min(grid.Nx + 2, grid.Nt) < 5:
        raise ValueError("condition check needs at least 5 nodes per axis")
    if sigma_policy != "half":
        raise ValueError(f"unknown sigma policy {sigma_policy!r}")
    checks: list[Check] = []
    for req in spec.validity_errors():
        checks.append(Check(req, float("nan"), False, hard=True))
    gamma_ok = abs(spec.gamma) > 1 and spec.T > 0
    lam = compute_lambda(spec.gamma, spec.T) if gamma_ok else float("nan")
    if gamma_ok:
        checks.append(Check("|gamma| > 1", abs(spec.gamma), True, hard=True))

    X, Tm = grid.mesh()
    x, t = grid.x, grid.t
    K0, K1, K2, K3, K4 = spec.K
    d = ex.differentiate
    k0t = eval_xt(d(K0, "t"), X, Tm)
    k2t = eval_xt(d(K2, "t"), X, Tm)
    k4t = eval_xt(d(K4, "t"), X, Tm)
    k0, k1, k2, k3, k4 = (eval_xt(Ki, X, Tm) for Ki in spec.K)

    delta1 = float(np.min(-lam * k0 + k0t))
    delta2 = float(np.min(-2.0 * k1 + k2t - lam * k2))
    delta3 = float(min(np.min(2.0 * k3 + (2 * j - 3) * k4t + 3.0 * lam * k4) for j in (0, 1, 2)))
    checks.append(Check("-lambda K0 + K0t >= delta1 > 0", delta1, delta1 > 0))
    checks.append(Check("-2K1 + K2t - lambda K2 >= delta2 > 0", delta2, delta2 > 0))
    checks.append(Check("2K3 + (2j-3)K4t + 3 lambda K4 >= delta3 > 0", delta3, delta3 > 0))

    # degeneracy and periodicity of the coefficients
    deg = max(_max_abs(k4[:, 0]), _max_abs(k4[:, -1]))
    checks.append(Check("K4(0) = K4(T) = 0", deg, deg <= COND_TOL, hard=True))
    per4 = _max_abs(k4t[:, 0] - k4t[:, -1])
    checks.append(Check("K4t(0) = K4t(T)", per4, per4 <= COND_TOL))
    for i, ki in ((0, k0), (2, k2), (3, k3)):
        p = _max_abs(ki[:, 0] - ki[:, -1])
        checks.append(Check(f"K{i}(x,0) = K{i}(x,T)", p, p <= COND_TOL))

    # gamma-periodicity of g and f at sampled y
    ys = np.linspace(0.0, spec.ell, 9)
    Xs, Ys = np.meshgrid(x, ys, indexing="ij")
    for name, fn in (("g", spec.g), ("f", spec.f)):
        at0 = eval_xty(fn, Xs, 0.0, Ys)
        atT = eval_xty(fn, Xs, spec.T, Ys)
        p = _max_abs(spec.gamma * at0 - atT)
        checks.append(Check(f"gamma {name}(x,0,y) = {name}(x,T,y)", p, p <= COND_TOL))

    # phi0 compatibility
    worst = 0.0
    dphi = spec.phi0
    for p in range(4):
        if p:
            dphi = d(dphi, "t")
        v0 = eval_xt(dphi, x, 0.0)
        vT = eval_xt(dphi, x, spec.T)
        worst = max(worst, _max_abs(spec.gamma * v0 - vT))
    checks.append(Check("gamma D_t^p phi0(0) = D_t^p phi0(T), p=0..3", worst, worst <= COND_TOL))
    phixx = d(spec.phi0, "x", 2)
    bnd = 0.0
    for xb in (0.0, 1.0):
        bnd = max(bnd, _max_abs(eval_xt(spec.phi0, xb, t)), _max_abs(eval_xt(phixx, xb, t)))
    checks.append(Check("phi0 = phi0_xx = 0 at x = 0, 1", bnd, bnd <= COND_TOL))

    # f0 bound and its C^{0,1} norm
    f0 = eval_xt(spec.f0, X, Tm)
    fmin = float(np.min(np.abs(f0)))
    checks.append(Check("|f0(x,t)| >= eta > 0", fmin, fmin >= spec.eta and spec.eta > 0, hard=True))
    f0x = eval_xt(d(spec.f0, "x"), X, Tm)
    f0t = eval_xt(d(spec.f0, "t"), X, Tm)
    f0_c01_sq = (_max_abs(f0) + _max_abs(f0x) + _max_abs(f0t)) ** 2

    # constants of the contraction estimate
    a_terms = [lam * spec.a, lam * spec.b, lam * spec.c]
    delta0 = float(min([delta1, *a_terms, delta2, delta3]))
    if delta0 > 0:
        sigma = 62.0 * math.exp(lam * spec.T) / delta0
        delta = delta0 - 31.0 * math.exp(lam * spec.T) / sigma
    else:
        sigma = float("nan")
        delta = float("nan")
    checks.append(Check("delta0 - 31 e^(lambda T)/sigma > delta > 0", delta, bool(delta > 0)))

    c1p = c1_partial(spec.ell, K)
    c1t = c1_tail_bound(spec.ell, K)
    c1_bound = c1p + c1t
    m_const = 10.0 * c1_bound * c2 * c3

    ny = ny or max(16 * K + 1, 4 * K + 1)
    modeset = ModeSet(spec.ell, K)
    Y = np.linspace(0.0, spec.ell, ny)
    fs = eval_xty(spec.f, X[..., None], Tm[..., None], Y[None, None, :])
    f_state = ModeState(analyze(fs, spec.ell, K), grid, modeset)
    f_norm_sq = weighted_norm(f_state, 3, 3, variant="A") ** 2

    if delta > 0:
        M = (
            sigma * math.exp(lam * spec.T) * lam ** 4 * m_const / delta
            / spec.ell ** 2 / spec.eta ** 2 * f0_c01_sq
        )
    else:
        M = float("nan")
    q = M * f_norm_sq
    checks.append(Check("q = M ||f||^2 < 1", q, bool(q < 1),
                        note="sufficient bound only; depends on c2, c3"))

    return ConditionReport(
        lam=lam, delta1=delta1, delta2=delta2, delta3=delta3, delta0=delta0,
        sigma=sigma, delta=delta, c1=c1p, c1_tail=c1t, c2=c2, c3=c3,
        m_const=m_const, f0_c01_sq=f0_c01_sq, f_norm_sq=f_norm_sq,
        M_const=M, q=q, checks=checks,
    )
