import math

import pytest
from hypothesis import given, settings, strategies as st

from loadstone.grid import Grid
from loadstone.problem import (
    ProblemError, c1_partial, c1_tail_bound, check_conditions, compute_lambda,
)

from conftest import base_spec


def test_lambda_values():
    assert compute_lambda(math.e ** 2, 2.0) == 2.0
    assert compute_lambda(math.e, 2.0) == 1.0
    assert compute_lambda(-math.e, 1.0) == 2.0


@pytest.mark.parametrize("gamma", [1.0, 0.5, -1.0, 0.0])
def test_lambda_rejects_small_gamma(gamma):
    with pytest.raises(ProblemError):
        compute_lambda(gamma, 1.0)


def test_c1_partial_first_term():
    assert c1_partial(math.pi, 1) == 0.125


def test_c1_monotone_and_bracketed():
    vals = [c1_partial(math.pi, K) for K in range(1, 30)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    far = c1_partial(math.pi, 200)
    for K in (1, 4, 8, 20):
        assert c1_partial(math.pi, K) <= far <= c1_partial(math.pi, K) + c1_tail_bound(math.pi, K)


def test_spec_coerces_and_validates_variables():
    s = base_spec(K0=2)
    assert str(s.K0) == "2"
    with pytest.raises(ProblemError):
        base_spec(K1="y*t")


def test_validity_errors():
    s = base_spec(a=-1.0, gamma=0.5, ell0=4.0)
    errs = s.validity_errors()
    assert "a > 0" in errs and "|gamma| > 1" in errs and "0 < ell0 < ell" in errs


def grid():
    return Grid(15, 17, 1.0)


def test_report_constants_for_reference_coefficients():
    r = check_conditions(base_spec(), grid(), 8)
    lam = 2.0
    assert r.lam == lam
    assert r.delta1 == pytest.approx(lam)  # -lambda*K0 + K0t = lambda
    assert r.delta2 == pytest.approx(2.0)  # -2 K1
    assert r.delta0 == pytest.approx(min(r.delta1, lam, lam, lam, r.delta2, r.delta3))
    assert r.sigma == pytest.approx(62 * math.exp(lam) / r.delta0)
    assert r.delta == pytest.approx(r.delta0 / 2)
    assert r.hard_ok


def test_delta1_equals_lambda_with_large_K3():
    s = base_spec(K3="50", K4="t*(1 - t)")
    r = check_conditions(s, grid(), 4)
    assert r.delta1 == pytest.approx(r.lam)
    assert r.delta3 > 0


def test_degenerate_K4_required():
    r = check_conditions(base_spec(K4="1"), grid(), 4)
    names = [c.name for c in r.hard_failures]
    assert "K4(0) = K4(T) = 0" in names
    assert not r.hard_ok


def test_small_gamma_hard_failure():
    r = check_conditions(base_spec(gamma=0.5), grid(), 4)
    assert "|gamma| > 1" in [c.name for c in r.hard_failures]


def test_f0_crossing_zero_is_hard_failure():
    r = check_conditions(base_spec(f="(x - 0.5)*sin(y)"), grid(), 4)
    assert "|f0(x,t)| >= eta > 0" in [c.name for c in r.hard_failures]


def test_soft_failures_do_not_block():
    r = check_conditions(base_spec(K1="1"), grid(), 4)  # delta2 < 0
    assert r.hard_ok
    assert any(c.name.startswith("-2K1") for c in r.soft_failures)


def test_report_is_deterministic():
    a = check_conditions(base_spec(), grid(), 6)
    b = check_conditions(base_spec(), grid(), 6)
    assert a.rows() == b.rows()


def test_phi0_compatibility_detected():
    ok = check_conditions(base_spec(phi0="exp(t)*sin(pi*x)"), grid(), 4)
    bad = check_conditions(base_spec(phi0="sin(pi*x)*(1 + t)"), grid(), 4)
    name = "gamma D_t^p phi0(0) = D_t^p phi0(T), p=0..3"
    assert {c.name: c.passed for c in ok.checks}[name]
    assert not {c.name: c.passed for c in bad.checks}[name]


def test_q_scales_inverse_with_eta_squared():
    r1 = check_conditions(base_spec(eta=1.0), grid(), 4)
    r2 = check_conditions(base_spec(eta=0.5), grid(), 4)
    assert r2.q == pytest.approx(4 * r1.q)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(1.1, 20))
def test_delta0_never_exceeds_arguments(a, b, c, gamma):
    r = check_conditions(base_spec(a=a, b=b, c=c, gamma=gamma), Grid(7, 9, 1.0), 2)
    args = [r.delta1, r.lam * a, r.lam * b, r.lam * c, r.delta2, r.delta3]
    assert all(r.delta0 <= v for v in args)
    assert r.delta0 in args


def test_summary_lists_checks():
    text = check_conditions(base_spec(K4="1"), grid(), 4).summary()
    assert "[FAIL] K4(0) = K4(T) = 0" in text
