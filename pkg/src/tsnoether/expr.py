"""Scalar expressions: Pratt parser, evaluator, symbolic derivative, printer.

Grammar (loosest to tightest)::

    expr   := expr ('+'|'-') expr          left associative
            | expr ('*'|'/') expr          left associative
            | '-' expr                     prefix
            | expr '^' expr                right associative
            | NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

There is no implicit multiplication and ``e`` is not a constant; write
``exp(1)``.  Names are resolved against an allowed set only when an
expression is bound (:func:`bind`), never at parse time.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import (
    ExprSyntaxError,
    NumericDomain,
    UnboundVariable,
    UnknownFunction,
    UnknownVariable,
)

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")

# printing precedence
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


class Expr:
    """Base class for immutable AST nodes."""

    __slots__ = ()
    prec = _PREC["atom"]

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, other):
        return power(self, _lift(other))

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True, slots=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr
    prec = _PREC["neg"]


@dataclass(frozen=True, slots=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def prec(self):
        return _PREC[self.op]


@dataclass(frozen=True, slots=True)
class Call(Expr):
    func: str
    arg: Expr


ZERO = Num(0.0)
ONE = Num(1.0)
TWO = Num(2.0)


def _lift(value) -> Expr:
    return value if isinstance(value, Expr) else Num(float(value))


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Num) and e.value == value


# ---------------------------------------------------------------- tokenizer

_TOKEN = re.compile(
    r"""(?P<ws>\s+)
      |(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
      |(?P<name>[A-Za-z_][A-Za-z0-9_]*)
      |(?P<op>[-+*/^()])""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | name | op | end
    text: str
    pos: int


def tokenize(source: str) -> list[Token]:
    raw = source.encode("utf-8")
    if len(raw) != len(source):
        # report the byte offset of the first non-ASCII character
        for i, ch in enumerate(source):
            if ord(ch) > 127:
                raise ExprSyntaxError(f"unexpected character {ch!r}", len(source[:i].encode("utf-8")), source)
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos, source)
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(Token("end", "", len(source)))
    return tokens


# ------------------------------------------------------------------- parser

_INFIX_BP = {"+": (10, 11), "-": (10, 11), "*": (20, 21), "/": (20, 21), "^": (41, 40)}
_PREFIX_BP = 30


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, tok: Token, expected: str):
        got = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(f"expected {expected}, got {got}", tok.pos, self.source)

    def expect(self, text: str):
        tok = self.next()
        if tok.text != text or tok.kind != "op":
            self.fail(tok, repr(text))

    def parse(self) -> Expr:
        e = self.expr(0)
        tok = self.peek()
        if tok.kind != "end":
            self.fail(tok, "an operator or end of input")
        return e

    def expr(self, min_bp: int) -> Expr:
        left = self.nud(self.next())
        while True:
            tok = self.peek()
            if tok.kind != "op" or tok.text not in _INFIX_BP:
                break
            lbp, rbp = _INFIX_BP[tok.text]
            if lbp < min_bp:
                break
            self.next()
            left = BinOp(tok.text, left, self.expr(rbp))
        return left

    def nud(self, tok: Token) -> Expr:
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if self.peek().text == "(" and self.peek().kind == "op":
                if tok.text not in FUNCTIONS:
                    raise UnknownFunction(f"unknown function {tok.text!r}", tok.pos, self.source)
                self.next()
                arg = self.expr(0)
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in FUNCTIONS:
                self.fail(self.peek(), f"'(' after {tok.text}")
            return Var(tok.text, tok.pos)
        if tok.kind == "op" and tok.text == "-":
            return Neg(self.expr(_PREFIX_BP))
        if tok.kind == "op" and tok.text == "(":
            e = self.expr(0)
            self.expect(")")
            return e
        self.fail(tok, "a number, name, '-' or '('")


def parse(source: str) -> Expr:
    """Parse ``source`` into an AST.  Raises :class:`ExprSyntaxError` with a byte offset."""
    return _Parser(source).parse()


# ------------------------------------------------------------------ printer

def to_source(e: Expr) -> str:
    """Print with the fewest parentheses that still reparse to the same tree."""
    if isinstance(e, Num):
        text = repr(e.value)
        return f"({text})" if e.value < 0 or text.startswith("-") else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, e.arg.prec < _PREC["neg"])
    p = e.prec
    if e.op == "^":
        return _wrap(e.left, e.left.prec <= p) + "^" + _wrap(e.right, e.right.prec < p)
    return _wrap(e.left, e.left.prec < p) + f" {e.op} " + _wrap(e.right, e.right.prec <= p)


def _wrap(e: Expr, paren: bool) -> str:
    s = to_source(e)
    return f"({s})" if paren else s


# ----------------------------------------------------------------- analysis

def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, (Neg, Call)):
        return free_vars(e.arg)
    return free_vars(e.left) | free_vars(e.right)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (no folding)."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Num):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, mapping))
    return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))


def bind(e: Expr, allowed: Iterable[str], aliases: Mapping[str, str] | None = None) -> Expr:
    """Check every free variable against ``allowed`` after renaming ``aliases``."""
    allowed = set(allowed)
    aliases = dict(aliases or {})

    def walk(node):
        if isinstance(node, Var):
            name = aliases.get(node.name, node.name)
            if name not in allowed:
                where = f" at offset {node.pos}" if node.pos >= 0 else ""
                raise UnknownVariable(f"unknown variable {node.name!r}{where}; allowed: {sorted(allowed)}")
            return node if name == node.name else Var(name, node.pos)
        if isinstance(node, Num):
            return node
        if isinstance(node, Neg):
            return Neg(walk(node.arg))
        if isinstance(node, Call):
            return Call(node.func, walk(node.arg))
        return BinOp(node.op, walk(node.left), walk(node.right))

    return walk(e)


def variables_for(dim: int, extra: Iterable[str] = ("t", "s")) -> tuple[list[str], dict[str, str]]:
    """Allowed names and aliases for a problem of dimension ``dim``.

    Canonical names are ``x1..xd`` and ``v1..vd``; for ``dim == 1`` the bare
    ``x`` and ``v`` are accepted as aliases.
    """
    names = list(extra) + [f"x{i}" for i in range(1, dim + 1)] + [f"v{i}" for i in range(1, dim + 1)]
    aliases = {"x": "x1", "v": "v1"} if dim == 1 else {}
    return names, aliases


# --------------------------------------------------------------- evaluation

def _domain_error(msg: str, node: Expr):
    raise NumericDomain(f"{msg} in {to_source(node)!r}", node)


def _pow(base: float, expo: float) -> float:
    return math.pow(base, expo)


_MATH = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "log": math.log, "sqrt": math.sqrt}


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate in IEEE double arithmetic; domain violations raise :class:`NumericDomain`."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundVariable(f"variable {e.name!r} is not bound") from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, Call):
        u = evaluate(e.arg, env)
        if e.func == "log" and u <= 0:
            _domain_error(f"log of non-positive value {u!r}", e)
        if e.func == "sqrt" and u < 0:
            _domain_error(f"sqrt of negative value {u!r}", e)
        try:
            return _MATH[e.func](u)
        except (ValueError, OverflowError) as exc:
            _domain_error(str(exc), e)
    a = evaluate(e.left, env)
    b = evaluate(e.right, env)
    op = e.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            _domain_error("division by zero", e)
        return a / b
    try:
        return math.pow(a, b)
    except (ValueError, OverflowError, ZeroDivisionError) as exc:
        _domain_error(f"power {a!r}^{b!r}: {exc}", e)


def _codegen(e: Expr, fn: str) -> str:
    if isinstance(e, Num):
        return repr(e.value) if e.value >= 0 else f"({e.value!r})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg, fn)})"
    if isinstance(e, Call):
        return f"{fn}{e.func}({_codegen(e.arg, fn)})"
    if e.op == "^":
        return f"{fn}pow({_codegen(e.left, fn)}, {_codegen(e.right, fn)})"
    return f"({_codegen(e.left, fn)} {e.op} {_codegen(e.right, fn)})"


def compile_expr(e: Expr, argnames: list[str]) -> Callable[..., float]:
    """Scalar fast path taking positional floats in ``argnames`` order.

    On any floating-point failure the tree evaluator is re-run so the error
    names the offending subexpression.
    """
    missing = free_vars(e) - set(argnames)
    if missing:
        raise UnboundVariable(f"variables {sorted(missing)} are not among {argnames}")
    ns = {"m_sin": math.sin, "m_cos": math.cos, "m_exp": math.exp, "m_log": math.log,
          "m_sqrt": math.sqrt, "m_pow": math.pow}
    src = f"def _f({', '.join(argnames)}):\n    return {_codegen(e, 'm_')}\n"
    exec(src, ns)  # noqa: S102 - source built from a validated AST
    fast = ns["_f"]

    def f(*args):
        try:
            return fast(*args)
        except (ZeroDivisionError, ValueError, OverflowError):
            return evaluate(e, dict(zip(argnames, args)))

    f.source = src
    return f


def compile_many(exprs: list[Expr], argnames: list[str]) -> Callable[..., tuple]:
    """Like :func:`compile_expr` but evaluates several expressions in one call, returning a tuple."""
    singles = [compile_expr(e, argnames) for e in exprs]
    ns = {"m_sin": math.sin, "m_cos": math.cos, "m_exp": math.exp, "m_log": math.log,
          "m_sqrt": math.sqrt, "m_pow": math.pow}
    body = ", ".join(_codegen(e, "m_") for e in exprs)
    src = f"def _f({', '.join(argnames)}):\n    return ({body},)\n"
    exec(src, ns)  # noqa: S102
    fast = ns["_f"]

    def f(*args):
        try:
            return fast(*args)
        except (ZeroDivisionError, ValueError, OverflowError):
            return tuple(g(*args) for g in singles)

    return f


def compile_numpy(e: Expr, argnames: list[str]) -> Callable[..., np.ndarray]:
    """Vectorized counterpart of :func:`compile_expr` over equal-shape arrays."""
    missing = free_vars(e) - set(argnames)
    if missing:
        raise UnboundVariable(f"variables {sorted(missing)} are not among {argnames}")
    ns = {"n_sin": np.sin, "n_cos": np.cos, "n_exp": np.exp, "n_log": np.log,
          "n_sqrt": np.sqrt, "n_pow": np.power}
    src = f"def _f({', '.join(argnames)}):\n    return {_codegen(e, 'n_')}\n"
    exec(src, ns)  # noqa: S102
    fast = ns["_f"]

    def f(*args):
        arrs = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
        try:
            with np.errstate(divide="raise", invalid="raise", over="raise", under="ignore"):
                out = fast(*arrs)
        except (FloatingPointError, ZeroDivisionError, ValueError, OverflowError):
            flat = [a.ravel() for a in arrs]
            for k in range(flat[0].size if flat else 1):
                evaluate(e, {n: a[k] for n, a in zip(argnames, flat)})
            raise
        return np.broadcast_to(np.asarray(out, dtype=float), arrs[0].shape if arrs else ()).copy()

    return f


# ---------------------------------------------------------- folding helpers

def _fold(op: str, a: float, b: float) -> Expr | None:
    try:
        val = {"+": a + b, "-": a - b, "*": a * b}.get(op)
        if val is None:
            val = a / b if op == "/" else math.pow(a, b)
    except (ZeroDivisionError, ValueError, OverflowError):
        return None
    return Num(val) if math.isfinite(val) else None


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _fold("+", a.value, b.value) or BinOp("+", a, b)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return _fold("-", a.value, b.value) or BinOp("-", a, b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _fold("*", a.value, b.value) or BinOp("*", a, b)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _fold("/", a.value, b.value) or BinOp("/", a, b)
    return BinOp("/", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expr, b: Expr) -> Expr:
    if _is(b, 0):
        return ONE
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _fold("^", a.value, b.value) or BinOp("^", a, b)
    return BinOp("^", a, b)


def call(func: str, a: Expr) -> Expr:
    if isinstance(a, Num):
        try:
            val = _MATH[func](a.value)
        except (ValueError, OverflowError):
            return Call(func, a)
        # only fold when the result is exactly representable as the identity values
        if val in (0.0, 1.0):
            return Num(val)
    return Call(func, a)


def fold(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up through the folding constructors."""
    if isinstance(e, (Num, Var)):
        return e
    if isinstance(e, Neg):
        return neg(fold(e.arg))
    if isinstance(e, Call):
        return call(e.func, fold(e.arg))
    return _BUILD[e.op](fold(e.left), fold(e.right))


# ------------------------------------------------------------ differentiate

_BUILD = {"+": add, "-": sub, "*": mul, "/": div, "^": power}


def differentiate(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative with constant folding.  Total on the grammar."""
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, var))
    if isinstance(e, Call):
        u = e.arg
        du = differentiate(u, var)
        if _is(du, 0):
            return ZERO
        f = e.func
        if f == "sin":
            outer = call("cos", u)
        elif f == "cos":
            outer = neg(call("sin", u))
        elif f == "exp":
            outer = call("exp", u)
        elif f == "log":
            return div(du, u)
        else:
            return div(du, mul(TWO, call("sqrt", u)))
        return mul(outer, du)
    a, b = e.left, e.right
    da, db = differentiate(a, var), differentiate(b, var)
    if e.op == "+":
        return add(da, db)
    if e.op == "-":
        return sub(da, db)
    if e.op == "*":
        return add(mul(da, b), mul(a, db))
    if e.op == "/":
        return div(sub(mul(da, b), mul(a, db)), power(b, TWO))
    # a ^ b
    if var not in free_vars(b):
        return mul(mul(b, power(a, sub(b, ONE))), da)
    # a^b = exp(b log a)
    return mul(power(a, b), add(mul(db, call("log", a)), div(mul(b, da), a)))
