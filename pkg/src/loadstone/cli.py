"""Command-line entry point: ``loadstone check|solve|forward|mms <config>``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .expr import ExprError
from .grid import grid_from_nodes
from .output import fmt, write_grid_field, write_rows, write_text
from .pipeline import (
    ProblemWarning, mode_error, relative_error, solve_forward, solve_inverse, trace_residual,
)
from .problem import ProblemError, check_conditions
from .solver import SolveError
from .fd_operator import SingularOperatorError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
MMS_ORDER_GATE = 1.6
log = logging.getLogger("loadstone")


def _out(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / f"{cfg.prefix}_{name}"


def command_check(cfg: RunConfig) -> int:
    spec = cfg.spec()
    report = check_conditions(spec, cfg.grid, cfg.K, c2=cfg.c2, c3=cfg.c3, ny=cfg.Ny)
    write_rows(_out(cfg, "conditions.csv"), ["quantity", "value", "pass"], report.rows())
    verdict = "all hard conditions hold" if report.hard_ok else "hard conditions violated: " + \
        "; ".join(c.name for c in report.hard_failures)
    print(report.summary())
    print(f"verdict: {verdict}")
    return EXIT_OK if report.hard_ok else EXIT_FAIL


def _convergence_rows(sol, timing: bool):
    for stage, res in enumerate(sol.continuation.stages, start=1):
        for r in res.log.records:
            yield [stage, res.eps, r.iteration, r.diff_norm_2, r.diff_norm_4, r.ratio, r.residual,
                   r.seconds if timing else ""]


def _solve_report(cfg: RunConfig, sol) -> str:
    g = cfg.grid
    cont = sol.continuation
    lines = [
        f"loadstone {__version__} solve report",
        f"grid: Nx={g.Nx} Nt={g.Nt} T={fmt(g.T)} hx={fmt(g.hx)} ht={fmt(g.ht)}; modes K={cfg.K}",
        f"eps schedule: {', '.join(fmt(e) for e in cfg.eps_schedule)}; tol={fmt(cfg.tol)} max_iter={cfg.max_iter}",
        "",
    ]
    if cont.converged:
        lines.append("status: converged at every eps stage")
    else:
        lines.append("status: NOT CONVERGED at eps = " + ", ".join(fmt(e) for e in cont.failed_eps))
    lines.append(f"trace residual: {fmt(sol.trace_residual)}")
    if cfg.trace_bound is not None:
        below = sol.trace_residual <= cfg.trace_bound
        lines.append(f"trace bound: {fmt(cfg.trace_bound)} ({'below' if below else 'ABOVE'} bound)")
    lines += ["", "stages (eps, iterations, converged, last diff_norm_2, empirical ratios):"]
    for res in cont.stages:
        ratios = " ".join(f"{r:.4g}" for r in res.log.ratios if not math.isnan(r))
        last = res.log.records[-1].diff_norm_2 if res.log.records else float("nan")
        lines.append(f"  {fmt(res.eps)}  {len(res.log)}  {'yes' if res.converged else 'no'}  "
                     f"{last:.6g}  [{ratios}]")
    lines += ["", "third-order norms of the final iterate (eps, <u_ttt>, <u_ttx>, <u_txx>):"]
    for res in cont.stages:
        b = res.log.records[-1].bounds
        lines.append(f"  {fmt(res.eps)}  {b['ttt']:.6g}  {b['ttx']:.6g}  {b['txx']:.6g}")
    lines += ["", "eps stability (eps_j, eps_j+1, <u_j - u_j+1>_2):"]
    if not cont.stability:
        lines.append("  (single stage)")
    for a, b, d in cont.stability:
        lines.append(f"  {fmt(a)}  {fmt(b)}  {d:.6g}")
    lines += ["", sol.report.summary()]
    if sol.warnings:
        lines += ["", "warnings:"] + [f"  {w}" for w in sol.warnings]
    return "\n".join(lines)


def command_solve(cfg: RunConfig, timing: bool = False) -> int:
    spec = cfg.spec()
    grid = cfg.grid
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ProblemWarning)
        sol = solve_inverse(spec, grid, cfg.K, cfg.eps_schedule, cfg.tol, cfg.max_iter,
                            ny=cfg.Ny, c2=cfg.c2, c3=cfg.c3)
    write_grid_field(_out(cfg, "h.csv"), sol.h, grid)
    for k in cfg.modes_dump or range(1, cfg.K + 1):
        write_grid_field(_out(cfg, f"u_mode{k}.csv"), sol.state.modes[k - 1], grid)
    write_rows(
        _out(cfg, "convergence.csv"),
        ["stage", "eps", "iteration", "diff_norm_2", "diff_norm_4", "ratio", "residual", "seconds"],
        _convergence_rows(sol, timing),
    )
    report = _solve_report(cfg, sol)
    write_text(_out(cfg, "report.txt"), report)
    print(report)
    return EXIT_OK if sol.converged else EXIT_FAIL


def command_forward(cfg: RunConfig) -> int:
    h = cfg.forward_h
    if h is None and cfg.mms is not None:
        h = cfg.mms.h_star
    if h is None:
        raise ConfigError("forward needs 'forward.h' (or an mms section)", key="forward.h")
    spec = cfg.spec()
    grid = cfg.grid
    state = solve_forward(spec, h, grid, cfg.K, cfg.eps_schedule, ny=cfg.Ny)
    for k in cfg.modes_dump or range(1, cfg.K + 1):
        write_grid_field(_out(cfg, f"u_mode{k}.csv"), state.modes[k - 1], grid)
    tr = trace_residual(state, spec, grid)
    text = "\n".join([
        f"loadstone {__version__} forward report",
        f"grid: Nx={grid.Nx} Nt={grid.Nt}; modes K={cfg.K}; eps={fmt(cfg.eps_schedule[-1])}",
        f"h = {h}",
        f"trace mismatch against phi0: {fmt(tr)}",
    ])
    write_text(_out(cfg, "report.txt"), text)
    print(text)
    return EXIT_OK


def command_mms(cfg: RunConfig, levels) -> int:
    if cfg.mms is None:
        raise ConfigError("mms needs an mms section in the config")
    levels = list(levels or cfg.mms.levels)
    if not levels:
        raise ConfigError("no refinement levels given (use --levels or mms.levels)")
    if len(set(levels)) != len(levels) or min(levels) < 9:
        raise ConfigError("refinement levels must be distinct node counts >= 9")
    case = cfg.manufactured()
    rows, prev = [], None
    order = None
    for n in levels:
        grid = grid_from_nodes(n, case.spec.T)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ProblemWarning)
            sol = solve_inverse(case.spec, grid, cfg.K, cfg.eps_schedule, cfg.tol, cfg.max_iter,
                                ny=cfg.Ny, c2=cfg.c2, c3=cfg.c3)
        err_h = relative_error(sol.h, case.exact_h(grid), grid)
        err_u = mode_error(sol.state, case.exact_modes(grid, cfg.K))
        order = None
        if prev is not None:
            e_prev, h_prev = prev
            if err_h > 0 and e_prev > 0:
                # positive iff the error decreased, whatever the level order
                order = math.log(e_prev / err_h) / abs(math.log(h_prev / grid.hx))
            else:
                order = float("nan")
        rows.append([n, grid.hx, grid.ht, err_h, err_u, sol.trace_residual,
                     "" if order is None else order])
        print(f"level {n}: err_h={err_h:.4e} err_u={err_u:.4e} trace={sol.trace_residual:.4e}"
              + ("" if order is None else f" order={order:.3f}")
              + ("" if sol.converged else " (not converged)"))
        prev = (err_h, grid.hx)
    write_rows(_out(cfg, "mms.csv"),
               ["level", "hx", "ht", "err_h", "err_u", "trace_residual", "observed_order"], rows)
    if order is None:
        return EXIT_OK
    return EXIT_OK if order >= MMS_ORDER_GATE else EXIT_FAIL


def _int_list(text: str):
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loadstone", description=__doc__)
    p.add_argument("--version", action="version", version=f"loadstone {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("check", "evaluate the sufficient conditions"),
                        ("solve", "solve the inverse problem"),
                        ("forward", "solve the direct problem with h known"),
                        ("mms", "manufactured-solution refinement study")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config")
        sp.add_argument("--out-dir")
        sp.add_argument("--prefix")
        sp.add_argument("--modes-dump", type=_int_list, help="mode numbers to write, e.g. 1,2")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "solve":
            sp.add_argument("--timing", action="store_true",
                            help="fill the seconds column (outputs are then not reproducible)")
        if name == "mms":
            sp.add_argument("--levels", type=_int_list, help="node counts per axis, e.g. 17,33")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.out_dir:
            cfg.out_dir = args.out_dir
        if args.prefix:
            cfg.prefix = args.prefix
        if args.modes_dump:
            if any(not 1 <= k <= cfg.K for k in args.modes_dump):
                raise ConfigError("--modes-dump entries must lie in 1..K")
            cfg.modes_dump = args.modes_dump
        if args.command == "check":
            return command_check(cfg)
        if args.command == "solve":
            return command_solve(cfg, timing=args.timing)
        if args.command == "forward":
            return command_forward(cfg)
        return command_mms(cfg, args.levels)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProblemError, ExprError, SolveError, SingularOperatorError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
