"""Line-oriented run configuration.

Each non-blank line is ``section.key = value``.  A value is a number, a
bracketed comma list of numbers, or a double-quoted expression string.
``#`` starts a comment; a later duplicate key overrides an earlier one.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from . import expr as ex
from .grid import Grid
from .problem import ProblemSpec
from .solver import DEFAULT_SCHEDULE


class ConfigError(ValueError):
    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


_LINE = re.compile(r"^([A-Za-z_]\w*)\.([A-Za-z_]\w*)\s*=\s*(.*)$")

FUNCTION_KEYS = ("K0", "K1", "K2", "K3", "K4", "f", "g", "phi0")
NUMBER_KEYS = ("a", "b", "c", "gamma", "T", "ell", "ell0", "eta")

# key -> kind; kinds: num, int, list, ilist, expr
SCHEMA = {
    "problem": {**{k: "expr" for k in FUNCTION_KEYS}, **{k: "num" for k in NUMBER_KEYS}},
    "numerics": {
        "Nx": "int", "Nt": "int", "K": "int", "Ny": "int", "eps_schedule": "list",
        "tol": "num", "max_iter": "int", "c2": "num", "c3": "num", "modes_dump": "ilist",
        "trace_bound": "num",
    },
    "output": {"dir": "str", "prefix": "str"},
    "mms": {"modes": "ilist", "amplitudes": "list", "h_star": "expr", "levels": "ilist"},
    "forward": {"h": "expr"},
}


@dataclass
class Value:
    raw: object
    line: int


def _strip_comment(text: str) -> str:
    out, quoted = [], False
    for ch in text:
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out).strip()


def _parse_number(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ConfigError(f"cannot parse number {tok!r}", lineno) from None


def _parse_value(text: str, lineno: int):
    if text.startswith('"'):
        if len(text) < 2 or not text.endswith('"') or '"' in text[1:-1]:
            raise ConfigError("unterminated or malformed string", lineno)
        return text[1:-1]
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError("unterminated list", lineno)
        body = text[1:-1].strip()
        if not body:
            return []
        return [_parse_number(tok.strip(), lineno) for tok in body.split(",")]
    if not text:
        raise ConfigError("missing value", lineno)
    return _parse_number(text, lineno)


def parse_config_text(text: str) -> dict:
    """Raw ``{(section, key): Value}`` mapping (last assignment wins)."""
    entries: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", lineno)
        section, key, value = m.groups()
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r}", lineno)
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key '{section}.{key}'", lineno, f"{section}.{key}")
        entries[(section, key)] = Value(_parse_value(value.strip(), lineno), lineno)
    return entries


def _coerce(kind: str, v: Value, name: str):
    raw = v.raw
    if kind == "str":
        if not isinstance(raw, str):
            raise ConfigError(f"'{name}' must be a quoted string", v.line, name)
        return raw
    if kind == "expr":
        if isinstance(raw, list):
            raise ConfigError(f"'{name}' must be a number or expression", v.line, name)
        if isinstance(raw, float):
            return ex.Num(raw)
        try:
            return ex.parse(raw)
        except ex.ExprSyntaxError as err:
            raise ConfigError(f"'{name}': {err} (position {err.position})", v.line, name) from None
        except ex.ExprError as err:
            raise ConfigError(f"'{name}': {err}", v.line, name) from None
    if kind in ("num", "int"):
        if not isinstance(raw, float):
            raise ConfigError(f"'{name}' must be a number", v.line, name)
        if kind == "int":
            if raw != int(raw):
                raise ConfigError(f"'{name}' must be an integer", v.line, name)
            return int(raw)
        return raw
    if kind in ("list", "ilist"):
        if not isinstance(raw, list):
            raise ConfigError(f"'{name}' must be a bracketed list", v.line, name)
        if kind == "ilist":
            if any(x != int(x) for x in raw):
                raise ConfigError(f"'{name}' must list integers", v.line, name)
            return [int(x) for x in raw]
        return list(raw)
    raise AssertionError(kind)


@dataclass
class MMSSection:
    modes: list
    amplitudes: list
    h_star: ex.Expr
    levels: list = field(default_factory=list)


@dataclass
class RunConfig:
    problem: dict
    Nx: int = 33
    Nt: int = 33
    K: int = 8
    Ny: int | None = None
    eps_schedule: tuple = DEFAULT_SCHEDULE
    tol: float = 1e-8
    max_iter: int = 50
    c2: float = 1.0
    c3: float = 1.0
    modes_dump: list | None = None
    trace_bound: float | None = None
    out_dir: str = "."
    prefix: str = "run"
    mms: MMSSection | None = None
    forward_h: ex.Expr | None = None
    source: str = ""

    @property
    def grid(self) -> Grid:
        return Grid(self.Nx, self.Nt, float(self.problem["T"]))

    def manufactured(self):
        from .pipeline import manufactured_case

        if self.mms is None:
            raise ConfigError("config has no mms section")
        p = self.problem
        template = {k: p[k] for k in ("K0", "K1", "K2", "K3", "K4", "a", "b", "c", "f", "eta")}
        return manufactured_case(
            p["gamma"], p["T"], p["ell"], p["ell0"],
            dict(zip(self.mms.modes, self.mms.amplitudes)), self.mms.h_star, template,
        )

    def spec(self) -> ProblemSpec:
        """Problem definition; for manufactured configs g and phi0 are derived."""
        if self.mms is not None:
            return self.manufactured().spec
        return ProblemSpec(**self.problem)


def build_config(entries: dict, source: str = "") -> RunConfig:
    vals = {}
    for (section, key), v in entries.items():
        vals[(section, key)] = _coerce(SCHEMA[section][key], v, f"{section}.{key}")

    has_mms = any(s == "mms" for s, _ in vals)
    required = ["K0", "K1", "K2", "K3", "K4", "a", "b", "c", "gamma", "T", "ell", "ell0", "f", "eta"]
    if not has_mms:
        required += ["g", "phi0"]
    for key in required:
        if ("problem", key) not in vals:
            raise ConfigError(f"missing required key 'problem.{key}'", key=f"problem.{key}")
    problem = {k: vals[("problem", k)] for s, k in vals if s == "problem"}
    if has_mms:
        for key in ("modes", "amplitudes", "h_star"):
            if ("mms", key) not in vals:
                raise ConfigError(f"missing required key 'mms.{key}'", key=f"mms.{key}")
        mms = MMSSection(vals[("mms", "modes")], vals[("mms", "amplitudes")],
                         vals[("mms", "h_star")], vals.get(("mms", "levels"), []))
        if len(mms.modes) != len(mms.amplitudes) or not mms.modes:
            raise ConfigError("mms.modes and mms.amplitudes must be non-empty and of equal length",
                              entries[("mms", "modes")].line, "mms.modes")
        problem.setdefault("g", ex.Num(0.0))
        problem.setdefault("phi0", ex.Num(0.0))
    else:
        mms = None

    cfg = RunConfig(problem=problem, mms=mms, source=source)
    n = {k: v for (s, k), v in vals.items() if s == "numerics"}
    for key in ("Nx", "Nt", "K", "Ny", "tol", "max_iter", "c2", "c3", "modes_dump", "trace_bound"):
        if key in n:
            setattr(cfg, key, n[key])
    if "eps_schedule" in n:
        cfg.eps_schedule = tuple(n["eps_schedule"])
    if ("output", "dir") in vals:
        cfg.out_dir = vals[("output", "dir")]
    if ("output", "prefix") in vals:
        cfg.prefix = vals[("output", "prefix")]
    cfg.forward_h = vals.get(("forward", "h"))
    _validate(cfg, entries)
    return cfg


def _validate(cfg: RunConfig, entries: dict):
    def line(key):
        v = entries.get(("numerics", key))
        return v.line if v else None

    if cfg.Nx < 7 or cfg.Nt < 9:
        raise ConfigError("grid needs Nx >= 7 and Nt >= 9", line("Nx") or line("Nt"))
    if cfg.K < 1:
        raise ConfigError("numerics.K must be >= 1", line("K"), "numerics.K")
    if cfg.max_iter < 1:
        raise ConfigError("numerics.max_iter must be >= 1", line("max_iter"), "numerics.max_iter")
    if not cfg.tol > 0:
        raise ConfigError("numerics.tol must be positive", line("tol"), "numerics.tol")
    sched = list(cfg.eps_schedule)
    if not sched or any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        raise ConfigError("numerics.eps_schedule must be positive and strictly decreasing",
                          line("eps_schedule"), "numerics.eps_schedule")
    if cfg.modes_dump is not None and any(not 1 <= k <= cfg.K for k in cfg.modes_dump):
        raise ConfigError("numerics.modes_dump entries must lie in 1..K", line("modes_dump"))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    return build_config(parse_config_text(text), source=str(path))
