import math

import numpy as np
import pytest

from loadstone.fd_operator import (
    CLOSURE, EQUATION, NONLOCAL, ModeOperator, SingularOperatorError, apply, assemble,
    operator_terms,
)
from loadstone.grid import Grid, grid_from_nodes
from loadstone.solver import solve_mode

from conftest import base_spec

NU = 1.0  # ln(e)/1


def nonlocal_field(grid, gamma, seed=0):
    """Random physical field with u(T) = gamma u(0), zero at the x walls."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=grid.shape)
    w[:, -1] = gamma * w[:, 0]
    w[0] = w[-1] = 0.0
    return w


@pytest.mark.parametrize("eps", [1e-2, 0.0])
def test_square_and_row_kinds(eps):
    g = Grid(9, 13, 1.0)
    opr = assemble(base_spec(), g, 2.0, eps)
    n = opr.matrix.shape[0]
    assert opr.matrix.shape == (n, n) == (g.Nx * opr.levels,) * 2
    per_col = opr.row_kind[: opr.levels]
    assert np.sum(per_col == EQUATION) == g.Nt - 1
    assert np.sum(per_col == NONLOCAL) == (5 if eps > 0 else 3)
    assert np.sum(per_col == CLOSURE) == 2
    assert np.all(np.isfinite(opr.matrix.data))


def test_zero_and_linearity(spec):
    g = Grid(9, 13, 1.0)
    opr = assemble(spec, g, 1.0, 1e-3)
    np.testing.assert_array_equal(apply(opr, np.zeros(g.shape)), 0.0)
    u1, u2 = nonlocal_field(g, spec.gamma, 1), nonlocal_field(g, spec.gamma, 2)
    lhs = apply(opr, u1 + u2)
    rhs = apply(opr, u1) + apply(opr, u2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(lhs))


def test_time_constant_sine_without_K():
    a, b, c, mu = 2.0, 0.7, 3.0, 1.5
    spec = base_spec(K0="0", K1="0", K2="0", K3="0", K4="0", a=a, b=b, c=c)
    errs = []
    for n in (17, 33):
        g = grid_from_nodes(n, 1.0)
        opr = assemble(spec, g, mu, 0.0)
        stored = opr.sample(lambda X, T: np.sin(np.pi * X) + 0 * T)
        out = opr.equation_part(apply(opr, stored))
        expected = (mu ** 4 - a * math.pi ** 4 - c * math.pi ** 2) * np.sin(np.pi * g.x_interior)
        errs.append(np.max(np.abs(out - expected[:, None])))
    assert errs[1] < errs[0] / 3.5


def test_eps_term_on_exponential():
    eps = 1e-2
    errs = []
    for n in (17, 33):
        g = grid_from_nodes(n, 1.0)
        opr = assemble(base_spec(), g, 1.0, eps)
        terms = operator_terms(base_spec(), g, 1.0, opr.w)
        stored = opr.sample(lambda X, T: np.exp(NU * T) + 0 * X)
        out = (eps * terms["eps"] @ stored.ravel()).reshape(g.Nx, g.Nt - 1)
        t = g.t[:-1]
        expected = -eps * NU ** 5 * np.exp(NU * t)
        inner = out[2:-2]  # away from walls, where D_x^2 of a constant vanishes
        errs.append(np.max(np.abs(inner - expected)))
    assert errs[1] < errs[0] / 3.5
    assert errs[1] < 1e-4


def test_navier_fourth_difference_first_node():
    errs = []
    for n in (17, 33, 65):
        g = grid_from_nodes(n, 1.0)
        spec = base_spec(K0="0", K1="0", K2="0", K3="0", K4="0", a=1.0, b=1.0, c=1.0)
        terms = operator_terms(spec, g, 0.0, 2)
        opr = assemble(spec, g, 0.0, 0.0)
        u = opr.sample(lambda X, T: np.sin(np.pi * X) + 0 * T)
        out = (terms["M"] @ u.ravel()).reshape(g.Nx, g.Nt - 1)
        # time-constant field: -M u = -(D4 u - D2 u); node 1 sees the wall closure
        x1 = g.x_interior[0]
        exact = -(math.pi ** 4 + math.pi ** 2) * math.sin(math.pi * x1)
        errs.append(abs(out[0, 3] - exact) / abs(exact))
    assert errs[2] < errs[1] / 3.5 and errs[1] < errs[0] / 3.5


@pytest.mark.parametrize("eps", [1e-2, 0.0])
def test_nonlocal_rows_annihilate_exponential(eps):
    g = grid_from_nodes(33, 1.0)
    opr = assemble(base_spec(), g, 2.0, eps)
    stored = opr.sample(lambda X, T: np.exp(NU * T) * np.sin(np.pi * X))
    part = opr.nonlocal_part(apply(opr, stored))
    assert np.max(np.abs(part)) <= 1e-10 * np.max(np.abs(stored))


def test_extend_satisfies_all_boundary_rows(spec):
    g = Grid(11, 15, 1.0)
    opr = assemble(spec, g, 1.0, 1e-2)
    w = nonlocal_field(g, spec.gamma)
    part = opr.nonlocal_part(apply(opr, w))
    assert np.max(np.abs(part)) < 1e-12


@pytest.mark.parametrize("eps", [1e-2, 1e-4, 0.0])
def test_solve_round_trip(spec, eps):
    g = Grid(11, 15, 1.0)
    opr = assemble(spec, g, 2.0, eps)
    w = nonlocal_field(g, spec.gamma, 3)
    rhs = opr.equation_part(apply(opr, w))
    u = solve_mode(opr, rhs)
    np.testing.assert_allclose(u, w, atol=1e-8 * np.max(np.abs(w)))
    np.testing.assert_allclose(solve_mode(opr, 2 * rhs), 2 * u, atol=1e-12 * np.max(np.abs(u)))
    np.testing.assert_array_equal(solve_mode(opr, np.zeros_like(rhs)), 0.0)


def test_solve_rejects_bad_shape(spec):
    g = Grid(9, 11, 1.0)
    opr = assemble(spec, g, 1.0, 1e-2)
    with pytest.raises(ValueError):
        solve_mode(opr, np.zeros((3, 3)))


def test_singular_matrix_reported(spec):
    g = Grid(9, 11, 1.0)
    good = assemble(spec, g, 1.0, 1e-2)
    A = good.matrix.tolil()
    A[5, :] = 0.0
    bad = ModeOperator(A.tocsc(), g, spec.gamma, 1.0, 1e-2, good.w, good.row_kind, 1.0)
    with pytest.raises(SingularOperatorError):
        bad.factorize()


def test_negative_eps_rejected(spec):
    with pytest.raises(ValueError):
        assemble(spec, Grid(9, 11, 1.0), 1.0, -1.0)


def test_dump(tmp_path, spec):
    opr = assemble(spec, Grid(7, 9, 1.0), 1.0, 0.0)
    path = tmp_path / "A.txt"
    opr.dump(path)
    lines = path.read_text().splitlines()
    assert len(lines) == opr.matrix.nnz
    r, c, v = lines[0].split()
    assert opr.matrix[int(r), int(c)] == float(v)


def test_bandwidth_bounded(spec):
    g = Grid(9, 13, 1.0)
    opr = assemble(spec, g, 1.0, 1e-2)
    coo = opr.matrix.tocoo()
    assert np.max(np.abs(coo.row - coo.col)) <= 3 * opr.levels
