"""A small expression language for lift definitions, plus builtin map families.

Grammar (power binds tighter than unary minus, which binds tighter than * and /)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom (('^' | '**') ['-'] INT)?
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

Names are ``x``, ``y``, ``pi`` and any declared parameter.  Functions are
``sin`` and ``cos``.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .core import LiftMap, translation

VARIABLES = ("x", "y")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = ("sin", "cos")
EPS_PER = 1e-6


class DSLError(ValueError):
    """Base class for map-language errors."""


class ParseError(DSLError):
    def __init__(self, message: str, offset: int, source: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.source = source


class EvalError(DSLError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (node at offset {offset})")
        self.offset = offset


class LiftValidationError(DSLError):
    def __init__(self, report: "ValidationReport"):
        super().__init__(
            f"periodicity violated: residual {report.residual:.3g} at z = {report.worst_z}"
            f" (direction {report.worst_direction})"
        )
        self.report = report


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    arg: "Expr"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    pos: int = field(default=0, compare=False)

    @property
    def checks_zero(self) -> bool:
        return self.op == "/"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int
    pos: int = field(default=0, compare=False)


Expr = Union[Num, Var, Neg, Call, BinOp, Pow]


# --- parsing ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(src: str):
    tokens = []
    i = 0
    while i < len(src):
        if src[i].isspace():
            i += 1
            continue
        m = _TOKEN.match(src, i)
        if m is None or m.end() == i:
            raise ParseError(f"unexpected character {src[i]!r}", _byte_offset(src, i), src)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte_offset(src, start)))
        i = m.end()
    tokens.append(("end", "", _byte_offset(src, len(src))))
    return tokens


def _byte_offset(src: str, i: int) -> int:
    return len(src[:i].encode("utf-8"))


class _Parser:
    def __init__(self, src: str, names: frozenset):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0
        self.names = names

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value:
            what = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {what}", pos, self.src)

    def error(self, tok, what="expression"):
        kind, text, pos = tok
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected {what}, found {found}", pos, self.src)

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.error(tok, "operator or end of input")
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-"):
            _, op, pos = self.take()
            left = BinOp(op, left, self.term(), pos)
        return left

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/"):
            _, op, pos = self.take()
            left = BinOp(op, left, self.unary(), pos)
        return left

    def unary(self):
        if self.peek()[1] == "-":
            _, _, pos = self.take()
            return Neg(self.unary(), pos)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            _, _, pos = self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            kind, text, tpos = self.take()
            if kind != "num" or not text.isdigit():
                raise ParseError("exponent must be an integer literal", tpos, self.src)
            return Pow(base, sign * int(text), pos)
        return base

    def atom(self):
        tok = self.take()
        kind, text, pos = tok
        if kind == "num":
            return Num(float(text), pos)
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg, pos)
            if text in VARIABLES or text in CONSTANTS or text in self.names:
                return Var(text, pos)
            raise ParseError(f"unknown identifier {text!r}", pos, self.src)
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        self.error(tok)


def parse_expr(src: str, params=()) -> Expr:
    """Parse ``src`` into an expression tree; ``params`` names extra identifiers."""
    return _Parser(src, frozenset(params)).parse()


# --- printing and evaluation -----------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_source(e: Expr) -> str:
    """Fully parenthesized source text that parses back to an equal tree."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.arg)})"
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Pow):
        return f"({to_source(e.base)}^{e.exponent})"
    raise TypeError(f"not an expression node: {e!r}")


def eval_expr(e: Expr, x, y, params: Optional[dict] = None):
    """Evaluate a tree at scalar or array coordinates."""
    params = params or {}
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.name == "x":
            return x
        if e.name == "y":
            return y
        if e.name in params:
            return params[e.name]
        if e.name in CONSTANTS:
            return CONSTANTS[e.name]
        raise EvalError(f"unbound name {e.name!r}", e.pos)
    if isinstance(e, Neg):
        return -eval_expr(e.arg, x, y, params)
    if isinstance(e, Call):
        fn = np.sin if e.func == "sin" else np.cos
        return fn(eval_expr(e.arg, x, y, params))
    if isinstance(e, Pow):
        base = eval_expr(e.base, x, y, params)
        if e.exponent < 0 and np.any(np.asarray(base) == 0):
            raise EvalError("zero raised to a negative power", e.pos)
        return base ** e.exponent if e.exponent >= 0 else 1.0 / base ** (-e.exponent)
    if isinstance(e, BinOp):
        a = eval_expr(e.left, x, y, params)
        b = eval_expr(e.right, x, y, params)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            raise EvalError("division by zero", e.pos)
        return a / b
    raise TypeError(f"not an expression node: {e!r}")


def compile_expr(e: Expr, params: Optional[dict] = None) -> Callable:
    """Close over the tree so it can be called as f(x, y)."""
    params = dict(params or {})

    def fn(x, y):
        return eval_expr(e, x, y, params)

    return fn


# --- map definitions -------------------------------------------------------


@dataclass(frozen=True)
class MapDef:
    name: str
    fx: Expr
    fy: Expr
    inv_fx: Optional[Expr] = None
    inv_fy: Optional[Expr] = None
    params: dict = field(default_factory=dict, compare=False)
    numeric_inverse: Optional[Callable] = field(default=None, compare=False, repr=False)
    rotation: Optional[tuple] = field(default=None, compare=False)
    kind: str = field(default="custom", compare=False)

    def lift(self) -> LiftMap:
        if self.kind == "rigid" and self.rotation is not None:
            return translation(*self.rotation, name=self.name)
        fx = compile_expr(self.fx, self.params)
        fy = compile_expr(self.fy, self.params)

        def forward(x, y):
            return _broadcast(fx(x, y), x), _broadcast(fy(x, y), y)

        inverse = None
        if self.inv_fx is not None and self.inv_fy is not None:
            gx = compile_expr(self.inv_fx, self.params)
            gy = compile_expr(self.inv_fy, self.params)

            def inverse(x, y):
                return _broadcast(gx(x, y), x), _broadcast(gy(x, y), y)

        elif self.numeric_inverse is not None:
            inverse = self.numeric_inverse
        return LiftMap(forward, inverse, name=self.name, rotation=self.rotation)


def _broadcast(value, like):
    if np.ndim(like) and not np.ndim(value):
        return np.full(np.shape(like), value, dtype=float)
    return value


def make_map(name, fx: str, fy: str, inv_fx: Optional[str] = None, inv_fy: Optional[str] = None,
             params: Optional[dict] = None, **extra) -> MapDef:
    params = dict(params or {})
    names = tuple(params)
    return MapDef(
        name,
        parse_expr(fx, names),
        parse_expr(fy, names),
        parse_expr(inv_fx, names) if inv_fx is not None else None,
        parse_expr(inv_fy, names) if inv_fy is not None else None,
        params,
        **extra,
    )


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    samples: int
    residual: float
    worst_z: tuple
    worst_direction: str
    injective_ok: Optional[bool] = None
    min_image_separation: Optional[float] = None


def validate_lift(m: Union[MapDef, LiftMap], samples: int = 64, eps: float = EPS_PER,
                  rng: Optional[np.random.Generator] = None, check_injective: bool = False,
                  raise_on_failure: bool = True) -> ValidationReport:
    """Check F(z + e_i) - F(z) = e_i at random points.

    The optional injectivity check maps 1000 random points and flags images
    closer than 1e-6 on the torus; it is only a coarse heuristic.
    """
    if samples < 16:
        raise ValueError("validate_lift needs at least 16 samples")
    rng = rng if rng is not None else np.random.default_rng(0)
    F = m.lift() if isinstance(m, MapDef) else m
    xs = rng.uniform(-2.0, 2.0, samples)
    ys = rng.uniform(-2.0, 2.0, samples)
    fx, fy = F(xs, ys)
    worst, worst_i, worst_dir = -1.0, 0, "e1"
    for label, (k1, k2) in (("e1", (1, 0)), ("e2", (0, 1))):
        gx, gy = F(xs + k1, ys + k2)
        res = np.hypot(gx - fx - k1, gy - fy - k2)
        i = int(np.argmax(res))
        if res[i] > worst:
            worst, worst_i, worst_dir = float(res[i]), i, label
    inj_ok = sep = None
    if check_injective:
        from scipy.spatial import cKDTree

        px = rng.uniform(0, 1, 1000)
        py = rng.uniform(0, 1, 1000)
        qx, qy = F(px, py)
        pts = np.column_stack([np.mod(qx, 1.0), np.mod(qy, 1.0)])
        tree = cKDTree(pts, boxsize=1.0)
        d, _ = tree.query(pts, k=2)
        sep = float(d[:, 1].min())
        inj_ok = sep > 1e-6
    report = ValidationReport(
        ok=worst <= eps and inj_ok is not False,
        samples=samples,
        residual=worst,
        worst_z=(float(xs[worst_i]), float(ys[worst_i])),
        worst_direction=worst_dir,
        injective_ok=inj_ok,
        min_image_separation=sep,
    )
    if raise_on_failure and worst > eps:
        raise LiftValidationError(report)
    return report


# --- builtin families --------------------------------------------------------

GOLDEN = 0.6180339887


def builtin_family(kind: str, *args, **kw) -> MapDef:
    """rigid(rho1, rho2), skew(rho1, rho2, a) or doubly-perturbed(rho1, rho2, a, b)."""
    if kind == "rigid":
        rho1, rho2 = _params(args, kw, ("rho1", "rho2"))
        return make_map(
            kw.get("name", "rigid"),
            f"x + {rho1!r}", f"y + {rho2!r}",
            f"x - {rho1!r}", f"y - {rho2!r}",
            rotation=(rho1, rho2), kind="rigid",
        )
    if kind == "skew":
        rho1, rho2, a = _params(args, kw, ("rho1", "rho2", "a"))
        return make_map(
            kw.get("name", "skew"),
            "x + rho1", "y + rho2 + a*sin(2*pi*x)",
            "x - rho1", "y - rho2 - a*sin(2*pi*(x - rho1))",
            params={"rho1": rho1, "rho2": rho2, "a": a},
            kind="skew",
        )
    if kind in ("doubly-perturbed", "doubly_perturbed"):
        rho1, rho2, a, b = _params(args, kw, ("rho1", "rho2", "a", "b"))
        bound = 1.0 / (2.0 * math.pi)
        if abs(a) >= bound or abs(b) >= bound:
            raise DSLError(f"amplitudes must satisfy |a|, |b| < 1/(2 pi) ~ {bound:.4f}; got a={a}, b={b}")
        return make_map(
            kw.get("name", "doubly-perturbed"),
            "x + rho1 + a*sin(2*pi*y)", "y + rho2 + b*sin(2*pi*x)",
            params={"rho1": rho1, "rho2": rho2, "a": a, "b": b},
            numeric_inverse=_doubly_inverse(rho1, rho2, a, b),
            kind="doubly-perturbed",
        )
    raise DSLError(f"unknown builtin family {kind!r}")


def _params(args, kw, names):
    vals = list(args) + [kw[n] for n in names[len(args):] if n in kw]
    if len(vals) != len(names):
        raise DSLError(f"expected parameters {names}")
    return tuple(float(v) for v in vals)


def _doubly_inverse(rho1, rho2, a, b, tol=1e-14, max_iter=200):
    # x = u - rho1 - a sin(2 pi y), y = v - rho2 - b sin(2 pi x) is a contraction
    # with constant 4 pi^2 |a b| < 1 when iterated jointly.
    two_pi = 2.0 * math.pi

    def inverse(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        x = u - rho1
        y = v - rho2
        # absolute precision is limited by the size of the coordinates
        eps = tol * (1.0 + max(np.max(np.abs(u), initial=0.0), np.max(np.abs(v), initial=0.0)))
        for _ in range(max_iter):
            xn = u - rho1 - a * np.sin(two_pi * y)
            yn = v - rho2 - b * np.sin(two_pi * xn)
            done = np.max(np.abs(xn - x), initial=0.0) + np.max(np.abs(yn - y), initial=0.0) <= eps
            x, y = xn, yn
            if done:
                break
        return x, y

    return inverse


# --- map files ---------------------------------------------------------------

MAP_KEYS = ("name", "fx", "fy", "inv_fx", "inv_fy")


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def parse_map_text(text: str) -> MapDef:
    """Read the INI-style ``[map]`` format; an optional ``[params]`` section declares names."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(f"malformed map file: {exc}".splitlines()[0], 0, text) from exc
    if "map" not in cp:
        raise ParseError("missing [map] section", 0, text)
    extra_sections = [s for s in cp.sections() if s not in ("map", "params")]
    if extra_sections:
        raise ParseError(f"unknown section {extra_sections[0]!r}", 0, text)
    sec = cp["map"]
    unknown = [k for k in sec if k not in MAP_KEYS]
    if unknown:
        raise ParseError(f"unknown key {unknown[0]!r}", 0, text)
    for req in ("fx", "fy"):
        if req not in sec:
            raise ParseError(f"missing key {req!r}", 0, text)
    params = {}
    if "params" in cp:
        for k, v in cp["params"].items():
            try:
                params[k] = float(_unquote(v))
            except ValueError as exc:
                raise ParseError(f"parameter {k!r} is not a number", 0, text) from exc
    vals = {k: _unquote(sec[k]) for k in sec}
    if ("inv_fx" in vals) != ("inv_fy" in vals):
        raise ParseError("inv_fx and inv_fy must be given together", 0, text)
    return make_map(
        vals.get("name", "map"), vals["fx"], vals["fy"], vals.get("inv_fx"), vals.get("inv_fy"),
        params=params,
    )


def load_map(path) -> MapDef:
    with open(path, encoding="utf-8") as fh:
        return parse_map_text(fh.read())


def dump_map(m: MapDef) -> str:
    lines = ["[map]", f'name = "{m.name}"', f'fx = "{to_source(m.fx)}"', f'fy = "{to_source(m.fy)}"']
    if m.inv_fx is not None:
        lines += [f'inv_fx = "{to_source(m.inv_fx)}"', f'inv_fy = "{to_source(m.inv_fy)}"']
    if m.params:
        lines.append("[params]")
        lines += [f"{k} = {v!r}" for k, v in m.params.items()]
    return "\n".join(lines) + "\n"
