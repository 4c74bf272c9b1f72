import math

import numpy as np
import pytest

from loadstone import expr as ex
from loadstone.grid import Grid, grid_from_nodes
from loadstone.pipeline import (
    MMS_TEMPLATE, ProblemWarning, compute_Phi0, l2_q, manufactured_case, mode_error,
    reconstruct_h, relative_error, solve_forward, solve_inverse, trace_field, trace_residual,
    truncation_estimate,
)
from loadstone.problem import ProblemError
from loadstone.spectral import ModeSet, ModeState

from conftest import base_spec

quiet = pytest.mark.filterwarnings("ignore::loadstone.pipeline.ProblemWarning")


def test_Phi0_zero():
    g = Grid(9, 11, 1.0)
    assert np.all(compute_Phi0(base_spec(), g) == 0.0)


def test_Phi0_sine_without_K():
    a, c = 2.0, 3.0
    g = Grid(9, 11, 1.0)
    X, _ = g.mesh()
    spec = base_spec(K0="0", K1="0", K2="0", K3="0", K4="0", a=a, c=c, phi0="sin(pi*x)")
    expected = -(a * math.pi ** 4 + c * math.pi ** 2) * np.sin(np.pi * X)
    np.testing.assert_allclose(compute_Phi0(spec, g), expected, atol=1e-10)
    with_k0 = spec.replace(K0=ex.Num(1.0))
    np.testing.assert_allclose(compute_Phi0(with_k0, g), expected + np.sin(np.pi * X), atol=1e-10)


def test_Phi0_sampled_matches_symbolic(mms_case):
    errs = []
    for n in (17, 33):
        g = grid_from_nodes(n, 1.0)
        X, T = g.mesh()
        phi = ex.evaluate(mms_case.spec.phi0, x=X, t=T)
        sym = compute_Phi0(mms_case.spec, g)
        disc = compute_Phi0(mms_case.spec, g, phi0=phi, eps=0.0)
        errs.append(np.max(np.abs(disc - sym)[1:-1, :-1]) / np.max(np.abs(sym)))
    assert errs[1] < errs[0] / 3


def test_reconstruct_h_empty_loading(mms_case):
    g = Grid(9, 11, 1.0)
    spec = mms_case.spec
    ms = ModeSet(spec.ell, 3)
    Phi0 = compute_Phi0(spec, g)
    h = reconstruct_h(ModeState.zeros(g, ms), spec, g, Phi0)
    X, T = g.mesh()
    np.testing.assert_allclose(h, Phi0 / ex.evaluate(spec.f0, x=X, t=T))
    assert np.all(reconstruct_h(ModeState.zeros(g, ms), spec, g, 0 * Phi0) == 0.0)


def test_reconstruct_h_rejects_small_f0():
    spec = base_spec(f="(x - 0.5)*sin(y)", eta=0.1)
    g = Grid(9, 11, 1.0)
    with pytest.raises(ProblemError, match=r"\|f0\(x,t\)\| >= eta > 0"):
        reconstruct_h(ModeState.zeros(g, ModeSet(spec.ell, 2)), spec, g, np.zeros(g.shape))


def test_solve_inverse_rejects_f0_crossing_zero():
    spec = base_spec(f="(x - 0.5)*sin(y)", eta=0.1)
    with pytest.raises(ProblemError, match=r"\|f0\(x,t\)\| >= eta > 0"):
        solve_inverse(spec, Grid(9, 11, 1.0), 2)


def test_solve_inverse_rejects_invalid():
    with pytest.raises(ProblemError, match=r"\|gamma\| > 1"):
        solve_inverse(base_spec(gamma=0.5), Grid(9, 11, 1.0), 2)


def test_zero_data_inverse():
    sol = solve_inverse(base_spec(), Grid(9, 11, 1.0), 3)
    assert np.all(sol.state.modes == 0.0)
    assert np.all(sol.h == 0.0)
    assert sol.trace_residual == 0.0
    assert all(len(log) == 1 for log in sol.logs)


def test_soft_failures_warn(mms_case):
    with pytest.warns(ProblemWarning):
        solve_inverse(mms_case.spec, grid_from_nodes(17, 1.0), 4)


def test_trace_residual_examples(mms_case):
    g = grid_from_nodes(33, 1.0)
    spec = mms_case.spec
    exact = mms_case.exact_modes(g, 8)
    assert trace_residual(exact, spec, g) < 1e-12
    shifted = spec.replace(phi0=ex.add(spec.phi0, 1.0))
    assert trace_residual(exact, shifted, g) == pytest.approx(math.sqrt(spec.T), rel=1e-12)
    assert trace_residual(ModeState.zeros(g, ModeSet(spec.ell, 2)), base_spec(), g) == 0.0


def test_manufactured_case_properties(mms_case):
    u = mms_case.u_star
    gamma, T = mms_case.spec.gamma, mms_case.spec.T
    for p in range(5):
        d = ex.differentiate(u, "t", p)
        x, y = 0.3, 0.7
        assert ex.evaluate(d, x=x, t=T, y=y) == pytest.approx(gamma * ex.evaluate(d, x=x, t=0.0, y=y),
                                                              rel=1e-12)
    uxx = ex.differentiate(u, "x", 2)
    for xb in (0.0, 1.0):
        assert abs(ex.evaluate(u, x=xb, t=0.4, y=0.9)) < 1e-14
        assert abs(ex.evaluate(uxx, x=xb, t=0.4, y=0.9)) < 1e-12


@quiet
def test_inverse_recovers_zero_h():
    case = manufactured_case(math.e, 1.0, math.pi, 1.0, {1: 1.0}, "0", MMS_TEMPLATE)
    g = grid_from_nodes(17, 1.0)
    sol = solve_inverse(case.spec, g, 4)
    assert l2_q(sol.h, g) < 1e-2


@quiet
def test_inverse_mms_small_grid(mms_case):
    g = grid_from_nodes(17, 1.0)
    sol = solve_inverse(mms_case.spec, g, 8)
    assert sol.converged
    assert relative_error(sol.h, mms_case.exact_h(g), g) < 0.05
    assert mode_error(sol.state, mms_case.exact_modes(g, 8)) < 0.05
    assert np.all(np.isfinite(sol.h))


def test_forward_zero_and_mms(mms_case):
    g = grid_from_nodes(17, 1.0)
    zero = solve_forward(base_spec(), "0", g, 3)
    assert np.all(zero.modes == 0.0)
    errs = []
    for n in (17, 33):
        g = grid_from_nodes(n, 1.0)
        st = solve_forward(mms_case.spec, mms_case.h_star, g, 4)
        errs.append(mode_error(st, mms_case.exact_modes(g, 4)))
    assert errs[1] < errs[0] / 3.5


def test_forward_linearity(mms_case):
    g = grid_from_nodes(17, 1.0)
    spec = mms_case.spec
    a = solve_forward(spec, "1", g, 3)
    b = solve_forward(spec, "x*t", g, 3)
    ab = solve_forward(spec.replace(g=ex.mul(2.0, spec.g)), "1 + x*t", g, 3)
    # psi(ab) = 2g + (1 + x t) f = psi(a) + psi(b)
    np.testing.assert_allclose(ab.modes, (a + b).modes, atol=1e-8 * np.max(np.abs(ab.modes)))


@quiet
def test_forward_then_inverse_round_trip(mms_case):
    g = grid_from_nodes(33, 1.0)
    spec = mms_case.spec
    eps = 1e-4
    u = solve_forward(spec, mms_case.h_star, g, 8, eps_schedule=(eps,))
    phi = trace_field(u, spec.ell0)
    sol = solve_inverse(spec, g, 8, eps_schedule=(eps,), phi0=phi)
    assert relative_error(sol.h, mms_case.exact_h(g), g) < 0.05


@quiet
def test_scaling_invariance_of_h_times_f():
    g = grid_from_nodes(17, 1.0)
    base = manufactured_case(math.e, 1.0, math.pi, 1.0, {1: 1.0, 2: 0.5}, "1 + x*t", MMS_TEMPLATE)
    tmpl = dict(MMS_TEMPLATE, f="3*exp(t)*(2 + x)*sin(y)", eta=4.5)
    scaled = manufactured_case(math.e, 1.0, math.pi, 1.0, {1: 1.0, 2: 0.5}, "(1 + x*t)/3", tmpl)
    s1 = solve_inverse(base.spec, g, 6)
    s2 = solve_inverse(scaled.spec, g, 6)
    np.testing.assert_allclose(3 * s2.h, s1.h, rtol=0, atol=1e-10 * np.max(np.abs(s1.h)))


@quiet
def test_truncation_estimate_small(mms_case):
    est = truncation_estimate(mms_case.spec, grid_from_nodes(17, 1.0), 4)
    assert 0 <= est < 0.05


def test_manufactured_requires_positive_gamma():
    with pytest.raises(ProblemError):
        manufactured_case(-2.0, 1.0, math.pi, 1.0, {1: 1.0}, "1", MMS_TEMPLATE)
