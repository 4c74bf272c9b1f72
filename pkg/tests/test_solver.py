import math

import numpy as np
import pytest

from loadstone.grid import Grid, grid_from_nodes
from loadstone.pipeline import compute_Phi0
from loadstone.solver import (
    assemble_all, epsilon_continuation, loaded_data, loaded_residual, loading_term,
    picard_step, run_picard, solve_mode, thread_count,
)
from loadstone.spectral import ModeSet, ModeState, c_norm

from conftest import base_spec


def test_loading_term_examples():
    g = Grid(9, 11, 1.0)
    ms = ModeSet(math.pi, 4)
    assert np.all(loading_term(ModeState.zeros(g, ms), ms, 1.0) == 0.0)
    modes = np.zeros((4,) + g.shape)
    modes[2] = 1.0
    out = loading_term(ModeState(modes, g, ms), ms, 1.0)
    np.testing.assert_allclose(out, math.sqrt(2 / math.pi) * 3.0 ** 4 * math.sin(3.0))
    modes = np.zeros((4,) + g.shape)
    modes[1] = modes[3] = 1.0
    out = loading_term(ModeState(modes, g, ms), ms, math.pi / 2)
    assert np.max(np.abs(out)) < 1e-12


def _setup(case, n=17, K=4):
    spec = case.spec
    grid = grid_from_nodes(n, spec.T)
    modes = ModeSet(spec.ell, K)
    data = loaded_data(spec, grid, modes, compute_Phi0(spec, grid))
    return spec, grid, modes, data


def test_zero_data_step_and_run():
    spec = base_spec()
    grid = Grid(9, 11, 1.0)
    modes = ModeSet(spec.ell, 3)
    data = loaded_data(spec, grid, modes, compute_Phi0(spec, grid))
    ops = assemble_all(spec, grid, modes, 1e-2)
    new = picard_step(ModeState.zeros(grid, modes), ops, spec, grid, data)
    assert np.all(new.modes == 0.0)
    res = run_picard(spec, grid, modes, 1e-2, data)
    assert res.converged and len(res.log) == 1
    assert np.all(res.state.modes == 0.0)


def test_first_step_is_unloaded_solve(mms_case):
    spec, grid, modes, data = _setup(mms_case)
    ops = assemble_all(spec, grid, modes, 1e-2)
    first = picard_step(ModeState.zeros(grid, modes), ops, spec, grid, data)
    rhs0 = data.g_modes + data.f_modes * (data.Phi0 / data.f0)[None]
    for k in range(modes.K):
        np.testing.assert_allclose(first.modes[k], solve_mode(ops[k], rhs0[k]), rtol=0, atol=1e-13)


def test_max_iter_one_flags_failure(mms_case):
    spec, grid, modes, data = _setup(mms_case)
    res = run_picard(spec, grid, modes, 1e-2, data, max_iter=1)
    assert not res.converged
    assert len(res.log) == 1


def test_bad_arguments(mms_case):
    spec, grid, modes, data = _setup(mms_case)
    with pytest.raises(ValueError):
        run_picard(spec, grid, modes, 1e-2, data, tol=0.0)
    with pytest.raises(ValueError):
        run_picard(spec, grid, modes, 1e-2, data, max_iter=0)
    with pytest.raises(ValueError):
        epsilon_continuation(spec, grid, modes, data, (1e-3, 1e-2))
    with pytest.raises(ValueError):
        epsilon_continuation(spec, grid, modes, data, (1e-2, 0.0))


def test_geometric_decay_and_residual(mms_case):
    spec, grid, modes, data = _setup(mms_case)
    tol = 1e-8
    res = run_picard(spec, grid, modes, 1e-2, data, tol=tol)
    assert res.converged
    d = res.log.diffs
    assert np.all(np.diff(d[1:]) < 0)
    assert np.all(res.log.ratios[1:] < 1)
    assert np.all(d >= 0) and np.all(np.array([r.diff_norm_4 for r in res.log.records]) >= 0)
    r, f = loaded_residual(res.state, res.operators, data, spec)
    assert r <= 10 * tol * f


def test_single_stage_continuation_matches_run_picard(mms_case):
    spec, grid, modes, data = _setup(mms_case)
    a = run_picard(spec, grid, modes, 1e-3, data)
    b = epsilon_continuation(spec, grid, modes, data, (1e-3,))
    np.testing.assert_array_equal(a.state.modes, b.state.modes)
    assert b.stability == []


def test_zero_data_continuation():
    spec = base_spec()
    grid = Grid(9, 11, 1.0)
    modes = ModeSet(spec.ell, 2)
    data = loaded_data(spec, grid, modes, compute_Phi0(spec, grid))
    cont = epsilon_continuation(spec, grid, modes, data)
    assert cont.converged
    assert all(d == 0.0 for _, _, d in cont.stability)
    assert np.all(cont.state.modes == 0.0)


def test_linearity_in_data(mms_case):
    spec, grid, modes, data = _setup(mms_case)
    one = run_picard(spec, grid, modes, 1e-2, data, tol=1e-12)
    doubled = spec.replace(g=f"2*({spec.g})", phi0=f"2*({spec.phi0})")
    data2 = loaded_data(doubled, grid, modes, compute_Phi0(doubled, grid))
    two = run_picard(doubled, grid, modes, 1e-2, data2, tol=1e-12)
    diff = c_norm(two.state - one.state.scaled(2.0), 2)
    assert diff <= 1e-8 * c_norm(two.state, 2)


def test_thread_independence(mms_case, monkeypatch):
    spec, grid, modes, data = _setup(mms_case)
    a = run_picard(spec, grid, modes, 1e-2, data, threads=1)
    b = run_picard(spec, grid, modes, 1e-2, data, threads=4)
    np.testing.assert_array_equal(a.state.modes, b.state.modes)
    assert [r.diff_norm_2 for r in a.log.records] == [r.diff_norm_2 for r in b.log.records]


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("LOADSTONE_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("LOADSTONE_THREADS", "0")
    assert thread_count() >= 1
    monkeypatch.setenv("LOADSTONE_THREADS", "junk")
    assert thread_count() == 1


def test_iterates_stay_bounded(mms_case):
    spec, grid, modes, data = _setup(mms_case)
    res = run_picard(spec, grid, modes, 1e-2, data)
    for name in ("ttt", "ttx", "txx"):
        vals = np.array([r.bounds[name] for r in res.log.records])
        assert np.all(np.isfinite(vals)) and np.all(vals > 0)
        assert np.max(vals) <= 1.1 * vals[-1]  # no growth beyond the limit
        assert abs(vals[-1] - vals[-2]) <= 1e-6 * vals[-1]
