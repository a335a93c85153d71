"""Coordinate expression language with exact first and second derivatives.

Expressions are parsed against a list of coordinate names and evaluated as
truncated Taylor jets (value, gradient, Hessian) by forward-mode
differentiation through the syntax tree.  Evaluation is vectorized: a point
array of shape ``(n,)`` gives scalar jets, shape ``(P, n)`` gives a batch.

Grammar (``^`` binds tightest and is right-associative, unary minus sits
between ``^`` and ``* /``)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := primary ("^" unary)?
    primary := NUMBER | "pi" | NAME | FUNC "(" expr ")" | "(" expr ")"
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, ExprSyntaxError, NonFinite, UnknownSymbol

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "abs")
CONSTANTS = {"pi": math.pi}
RESERVED = frozenset(FUNCTIONS) | frozenset(CONSTANTS)


# --------------------------------------------------------------------------
# Syntax tree

class Expr:
    """Base class of syntax tree nodes.  Nodes are immutable and hashable."""

    __slots__ = ()

    def __str__(self) -> str:
        return serialize(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Const(Expr):
    name: str


@dataclass(frozen=True)
class Sym(Expr):
    name: str
    index: int


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


def serialize(e: Expr) -> str:
    """Render ``e`` as text that re-parses to the same tree."""
    if isinstance(e, Num):
        v = e.value
        if v < 0:
            return f"(-{serialize(Num(-v))})"
        if v.is_integer() and v < 1e15:
            return str(int(v))
        return repr(v)
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Neg):
        return f"(-{serialize(e.operand)})"
    if isinstance(e, BinOp):
        return f"({serialize(e.left)} {e.op} {serialize(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({serialize(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


def symbols(e: Expr) -> set[str]:
    """Coordinate names referenced by ``e``."""
    if isinstance(e, Sym):
        return {e.name}
    if isinstance(e, Neg):
        return symbols(e.operand)
    if isinstance(e, BinOp):
        return symbols(e.left) | symbols(e.right)
    if isinstance(e, Call):
        return symbols(e.arg)
    return set()


def is_constant(e: Expr) -> bool:
    return not symbols(e)


# --------------------------------------------------------------------------
# Parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num" | "name" | "op" | "end"
    text: str
    offset: int  # byte offset into the UTF-8 source


def _tokenize(src: str) -> list[_Token]:
    tokens = []
    pos = 0
    byte_pos = 0

    def advance(to: int) -> None:
        nonlocal pos, byte_pos
        byte_pos += len(src[pos:to].encode("utf-8"))
        pos = to

    while True:
        ws = len(src[pos:]) - len(src[pos:].lstrip())
        advance(pos + ws)
        if pos >= len(src):
            tokens.append(_Token("end", "", byte_pos))
            return tokens
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", offset=byte_pos)
        kind = m.lastgroup
        start = m.start(kind)
        advance(start)
        tokens.append(_Token(kind, m.group(kind), byte_pos))
        advance(m.end())


class _Parser:
    def __init__(self, src: str, names: Sequence[str]):
        self.tokens = _tokenize(src)
        self.i = 0
        self.index = {name: k for k, name in enumerate(names)}

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind != "op":
            found = self.tok.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {found!r}", offset=self.tok.offset)
        self.take()

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", offset=self.tok.offset)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.take().text
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.take().text
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.take()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.take()
            nxt = self.tok
            if nxt.kind == "op" and nxt.text == "(":
                if tok.text not in FUNCTIONS:
                    raise UnknownSymbol(tok.text, offset=tok.offset)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in FUNCTIONS:
                raise ExprSyntaxError(f"function {tok.text!r} needs an argument", offset=nxt.offset)
            if tok.text in CONSTANTS:
                return Const(tok.text)
            if tok.text not in self.index:
                raise UnknownSymbol(tok.text, offset=tok.offset)
            return Sym(tok.text, self.index[tok.text])
        if tok.kind == "op" and tok.text == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        found = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", offset=tok.offset)


def parse(src: str, chart) -> Expr:
    """Parse ``src`` against the coordinates of ``chart``.

    ``chart`` is anything with a ``names`` attribute, or a plain sequence of
    coordinate names.

    Raises
    ------
    ExprSyntaxError
        Malformed text; ``offset`` is the byte offset of the problem.
    UnknownSymbol
        An identifier that is neither a coordinate, a constant nor a
        supported function.
    """
    names = getattr(chart, "names", chart)
    if not isinstance(src, str):
        raise ExprSyntaxError(f"expression must be a string, got {type(src).__name__}")
    return _Parser(src, tuple(names)).parse()


# --------------------------------------------------------------------------
# Jets

@dataclass
class Jet2:
    """Order-2 jet of a scalar at one point or a batch.

    Shapes are ``()``, ``(n,)``, ``(n, n)`` for a single point and carry a
    leading batch axis otherwise.  Internally ``grad``/``hess`` may be
    ``None`` when a lower order was requested.
    """

    value: np.ndarray
    grad: np.ndarray | None
    hess: np.ndarray | None


_Val = Union[float, Jet2]


def _bad(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0])


def _const_jet(c: float, like: Jet2) -> Jet2:
    v = np.full_like(like.value, c)
    g = None if like.grad is None else np.zeros_like(like.grad)
    h = None if like.hess is None else np.zeros_like(like.hess)
    return Jet2(v, g, h)


def _add(a: _Val, b: _Val, sign: float = 1.0) -> _Val:
    if not isinstance(a, Jet2) and not isinstance(b, Jet2):
        return a + sign * b
    if not isinstance(b, Jet2):
        return Jet2(a.value + sign * b, a.grad, a.hess)
    if not isinstance(a, Jet2):
        return Jet2(a + sign * b.value,
                    None if b.grad is None else sign * b.grad,
                    None if b.hess is None else sign * b.hess)
    g = None if a.grad is None else a.grad + sign * b.grad
    h = None if a.hess is None else a.hess + sign * b.hess
    return Jet2(a.value + sign * b.value, g, h)


def _scale(a: Jet2, c) -> Jet2:
    c = np.asarray(c, dtype=float)
    g = None if a.grad is None else a.grad * c[..., None]
    h = None if a.hess is None else a.hess * c[..., None, None]
    return Jet2(a.value * c, g, h)


def _mul(a: _Val, b: _Val) -> _Val:
    if not isinstance(a, Jet2) and not isinstance(b, Jet2):
        return a * b
    if not isinstance(a, Jet2):
        return _scale(b, a)
    if not isinstance(b, Jet2):
        return _scale(a, b)
    g = h = None
    if a.grad is not None:
        g = a.grad * b.value[..., None] + b.grad * a.value[..., None]
    if a.hess is not None:
        outer = a.grad[..., :, None] * b.grad[..., None, :]
        h = (a.hess * b.value[..., None, None] + b.hess * a.value[..., None, None]
             + outer + np.swapaxes(outer, -1, -2))
    return Jet2(a.value * b.value, g, h)


def _chain(u: Jet2, f0, f1, f2) -> Jet2:
    """Compose a scalar function (value f0, derivatives f1, f2 at u.value)."""
    g = h = None
    if u.grad is not None:
        g = u.grad * f1[..., None]
    if u.hess is not None:
        h = (u.hess * f1[..., None, None]
             + f2[..., None, None] * u.grad[..., :, None] * u.grad[..., None, :])
    return Jet2(f0, g, h)


def _require(mask, message: str, values) -> None:
    if np.ndim(mask) == 0:
        if mask:
            raise DomainError(f"{message} (argument {float(values)!r})")
        return
    if np.any(mask):
        k = _bad(mask)
        raise DomainError(f"{message} (argument {float(np.ravel(values)[k])!r} at sample {k})")


def _func_derivs(name: str, v):
    """Value and first two derivatives of a builtin function at ``v``."""
    if name == "sin":
        s, c = np.sin(v), np.cos(v)
        return s, c, -s
    if name == "cos":
        s, c = np.sin(v), np.cos(v)
        return c, -s, -c
    if name == "tan":
        _require(np.cos(v) == 0.0, "tan pole", v)
        t = np.tan(v)
        d = 1.0 + t * t
        return t, d, 2.0 * t * d
    if name == "exp":
        e = np.exp(v)
        return e, e, e
    if name == "log":
        _require(np.asarray(v) <= 0.0, "log of non-positive value", v)
        return np.log(v), 1.0 / v, -1.0 / (v * v)
    if name == "sqrt":
        _require(np.asarray(v) < 0.0, "sqrt of negative value", v)
        r = np.sqrt(v)
        return r, 0.5 / r, -0.25 / (r * v)
    if name == "sinh":
        s, c = np.sinh(v), np.cosh(v)
        return s, c, s
    if name == "cosh":
        s, c = np.sinh(v), np.cosh(v)
        return c, s, c
    if name == "tanh":
        t = np.tanh(v)
        d = 1.0 - t * t
        return t, d, -2.0 * t * d
    if name == "abs":
        # derivative taken as 0 at the kink
        return np.abs(v), np.sign(v), np.zeros_like(np.asarray(v, dtype=float))
    raise UnknownSymbol(name)


def _call(name: str, u: _Val) -> _Val:
    f0, f1, f2 = _func_derivs(name, u.value if isinstance(u, Jet2) else u)
    if not isinstance(u, Jet2):
        return float(f0)
    return _chain(u, f0, f1, f2)


def _recip(b: _Val) -> _Val:
    v = b.value if isinstance(b, Jet2) else b
    _require(np.asarray(v) == 0.0, "division by zero", v)
    if not isinstance(b, Jet2):
        return 1.0 / b
    r = 1.0 / v
    return _chain(b, r, -r * r, 2.0 * r * r * r)


def _pow(a: _Val, b: _Val) -> _Val:
    if not isinstance(b, Jet2):
        k = float(b)
        v = a.value if isinstance(a, Jet2) else a
        if k.is_integer():
            if k < 0:
                _require(np.asarray(v) == 0.0, "zero to a negative power", v)
        else:
            _require(np.asarray(v) <= 0.0, "non-integer power of non-positive base", v)
        if not isinstance(a, Jet2):
            return float(a ** k)
        f0 = np.power(v, k)
        if k == 0.0:
            return _const_jet(1.0, a)
        f1 = k * np.power(v, k - 1.0)
        f2 = np.zeros_like(v) if k == 1.0 else k * (k - 1.0) * np.power(v, k - 2.0)
        return _chain(a, f0, f1, f2)
    # variable exponent: a^b = exp(b log a), base must be positive
    return _call("exp", _mul(b, _call("log", a)))


def _eval(e: Expr, env: list[Jet2]) -> _Val:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Const):
        return CONSTANTS[e.name]
    if isinstance(e, Sym):
        return env[e.index]
    if isinstance(e, Neg):
        v = _eval(e.operand, env)
        return -v if not isinstance(v, Jet2) else _scale(v, -1.0)
    if isinstance(e, BinOp):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        if e.op == "+":
            return _add(a, b)
        if e.op == "-":
            return _add(a, b, -1.0)
        if e.op == "*":
            return _mul(a, b)
        if e.op == "/":
            return _mul(a, _recip(b))
        if e.op == "^":
            return _pow(a, b)
    if isinstance(e, Call):
        return _call(e.func, _eval(e.arg, env))
    raise TypeError(f"not an expression node: {e!r}")


def seed_jets(points: np.ndarray, order: int = 2) -> list[Jet2]:
    """Identity jets for the coordinates of a ``(P, n)`` point batch."""
    P, n = points.shape
    eye = np.eye(n)
    env = []
    for k in range(n):
        g = np.broadcast_to(eye[k], (P, n)) if order >= 1 else None
        h = np.zeros((P, n, n)) if order >= 2 else None
        env.append(Jet2(points[:, k].astype(float), g, h))
    return env


def evaluate_env(e: Expr, env: list[Jet2]) -> Jet2:
    """Evaluate ``e`` with coordinates bound to arbitrary jets (chain rule).

    Used to push derivatives through compositions such as a Runge-Kutta
    step, where coordinates are themselves functions of the seed point.
    """
    like = env[0]
    with np.errstate(all="ignore"):
        out = _eval(e, env)
    if not isinstance(out, Jet2):
        out = _const_jet(float(out), like)
    _check_finite(out)
    return out


def _check_finite(j: Jet2) -> None:
    for part, label in ((j.value, "value"), (j.grad, "gradient"), (j.hess, "Hessian")):
        if part is None:
            continue
        ok = np.isfinite(part)
        if not np.all(ok):
            P = ok.shape[0] if ok.ndim else 1
            bad = ~ok.reshape(P, -1).all(axis=1) if ok.ndim else np.array([True])
            raise NonFinite(f"non-finite {label} at sample {_bad(bad)}")


def _as_batch(p, n: int | None = None) -> tuple[np.ndarray, bool]:
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or (n is not None and arr.shape[1] != n):
        raise ValueError(f"expected point(s) with {n} coordinates, got shape {np.shape(p)}")
    return arr, single


def eval_jet(e: Expr, points, order: int = 2) -> Jet2:
    """Jet of ``e`` up to ``order`` (0, 1 or 2) at one point or a batch."""
    pts, single = _as_batch(points)
    jet = evaluate_env(e, seed_jets(pts, order))
    if jet.hess is not None:
        # mirror so the stored Hessian is symmetric bit for bit
        jet.hess = 0.5 * (jet.hess + np.swapaxes(jet.hess, -1, -2))
    if single:
        jet = Jet2(jet.value[0],
                   None if jet.grad is None else np.array(jet.grad[0]),
                   None if jet.hess is None else np.array(jet.hess[0]))
    return jet


def eval_jet2(e: Expr, p) -> Jet2:
    """Order-2 jet of ``e`` at ``p``.

    Derivatives are exact up to roundoff (forward-mode, no finite
    differences).

    Raises
    ------
    DomainError
        An argument left a function's domain (``log(-1)``, ``x^0.5`` at
        negative ``x``, division by zero, ...).
    NonFinite
        Overflow or NaN in the result.
    """
    return eval_jet(e, p, order=2)


def evaluate(e: Expr, points) -> np.ndarray | float:
    """Value of ``e`` only."""
    j = eval_jet(e, points, order=0)
    return float(j.value) if np.ndim(j.value) == 0 else j.value
