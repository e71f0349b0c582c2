"""QoI expression language: parsing, symbolic derivatives, numeric evaluation.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := power (('*' | '/') power)*
    power   := unary ('^' power)?          # right-associative, constant exponent
    unary   := '-' unary | primary
    primary := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

``e`` is Euler's number; ``c^expr`` with a positive constant base lowers to
``exp(expr * ln c)``.  Supported functions: exp, ln (alias log), log2, log10,
sqrt, tanh, sigmoid.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

KINDS = (
    "const", "var", "add", "sub", "mul", "div", "pow",
    "exp", "ln", "log2", "sqrt", "tanh", "sigmoid", "neg",
)
UNARY_FUNCS = ("exp", "ln", "log2", "sqrt", "tanh", "sigmoid")
LN2 = math.log(2.0)


class ExprError(ValueError):
    """Malformed expression; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class DomainError(ArithmeticError):
    """Evaluation hit a point outside the expression's domain."""

    def __init__(self, message: str, index: int | None = None):
        if index is not None:
            message = f"{message} (at flat index {index})"
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class Node:
    kind: str
    children: tuple["Node", ...] = ()
    value: float | str | None = None

    def __str__(self) -> str:
        return to_string(self)


# ---------------------------------------------------------------------------
# smart constructors (constant folding + identity elimination)


def const(v: float) -> Node:
    return Node("const", (), float(v))


def var(name: str) -> Node:
    return Node("var", (), name)


def _is_const(n: Node, v: float | None = None) -> bool:
    return n.kind == "const" and (v is None or n.value == v)


def add(a: Node, b: Node) -> Node:
    if _is_const(a) and _is_const(b):
        return const(a.value + b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return b
    return Node("add", (a, b))


def sub(a: Node, b: Node) -> Node:
    if _is_const(a) and _is_const(b):
        return const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Node("sub", (a, b))


def mul(a: Node, b: Node) -> Node:
    if _is_const(a) and _is_const(b):
        return const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return const(0.0)
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 1.0):
        return b
    return Node("mul", (a, b))


def div(a: Node, b: Node) -> Node:
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return const(a.value / b.value)
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return const(0.0)
    return Node("div", (a, b))


def pow_const(a: Node, p: float) -> Node:
    p = float(p)
    if p == 1.0:
        return a
    if p == 0.0:
        return const(1.0)
    if _is_const(a):
        try:
            folded = a.value ** p
        except (OverflowError, ZeroDivisionError):
            folded = None
        if isinstance(folded, float) and math.isfinite(folded):
            return const(folded)
    return Node("pow", (a,), p)


def neg(a: Node) -> Node:
    if _is_const(a):
        return const(-a.value)
    if a.kind == "neg":
        return a.children[0]
    return Node("neg", (a,))


_FOLD = {
    "exp": math.exp,
    "ln": math.log,
    "log2": math.log2,
    "sqrt": math.sqrt,
    "tanh": math.tanh,
    "sigmoid": lambda v: 0.5 * (1.0 + math.tanh(0.5 * v)),
}


def func(name: str, a: Node) -> Node:
    if name not in UNARY_FUNCS:
        raise ExprError(f"unknown function {name!r}")
    if _is_const(a):
        try:
            folded = _FOLD[name](a.value)
        except (ValueError, OverflowError):
            folded = None
        if folded is not None and math.isfinite(folded):
            return const(folded)
    return Node(name, (a,))


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)
_ALIASES = {"log": "ln"}


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprError(f"unexpected character {text[start]!r}", len(text[:start].encode()))
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), len(text[:start].encode())))
        pos = m.end()
    toks.append(_Tok("end", "", len(text.encode())))
    return toks


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.toks = _tokenize(text)
        self.i = 0
        self.variables = tuple(variables)

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> None:
        t = self.take()
        if t.text != text:
            raise ExprError(f"expected {text!r}, found {t.text or 'end of input'!r}", t.offset)

    def parse(self) -> Node:
        node = self.expr()
        t = self.peek()
        if t.kind != "end":
            raise ExprError(f"unexpected {t.text!r}", t.offset)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self) -> Node:
        node = self.power()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            rhs = self.power()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def power(self) -> Node:
        base = self.unary()
        if self.peek().text != "^":
            return base
        caret = self.take()
        exponent = self.power()
        if exponent.kind == "const":
            return pow_const(base, exponent.value)
        if base.kind == "const":
            if base.value <= 0.0:
                raise ExprError("variable exponent needs a positive constant base", caret.offset)
            if base.value == math.e:
                return func("exp", exponent)
            return func("exp", mul(exponent, const(math.log(base.value))))
        raise ExprError("variable exponent in power", caret.offset)

    def unary(self) -> Node:
        if self.peek().text == "-":
            self.take()
            return neg(self.unary())
        if self.peek().text == "+":
            self.take()
            return self.unary()
        return self.primary()

    def primary(self) -> Node:
        t = self.take()
        if t.kind == "num":
            return const(float(t.text))
        if t.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if t.kind == "name":
            if self.peek().text == "(":
                self.take()
                arg = self.expr()
                self.expect(")")
                name = _ALIASES.get(t.text, t.text)
                if name == "log10":
                    return mul(func("ln", arg), const(1.0 / math.log(10.0)))
                if name not in UNARY_FUNCS:
                    raise ExprError(f"unknown function {t.text!r}", t.offset)
                return func(name, arg)
            if t.text in self.variables:
                return var(t.text)
            if t.text == "e":
                return const(math.e)
            raise ExprError(f"unknown identifier {t.text!r}", t.offset)
        raise ExprError(f"unexpected {t.text or 'end of input'!r}", t.offset)


def parse_expr(text: str, variables: Sequence[str] = ("x",)) -> Node:
    if not text or not text.strip():
        raise ExprError("empty expression", 0)
    return _Parser(text, variables).parse()


# ---------------------------------------------------------------------------
# canonical printer

_BINOPS = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def to_string(n: Node) -> str:
    k = n.kind
    if k == "const":
        return repr(n.value) if n.value >= 0 else f"({n.value!r})"
    if k == "var":
        return n.value
    if k in _BINOPS:
        a, b = n.children
        return f"({to_string(a)} {_BINOPS[k]} {to_string(b)})"
    if k == "pow":
        p = n.value
        ps = repr(p) if p >= 0 else f"({p!r})"
        return f"({to_string(n.children[0])} ^ {ps})"
    if k == "neg":
        return f"(-{to_string(n.children[0])})"
    return f"{k}({to_string(n.children[0])})"


def variables_of(n: Node) -> set[str]:
    if n.kind == "var":
        return {n.value}
    out: set[str] = set()
    for c in n.children:
        out |= variables_of(c)
    return out


# ---------------------------------------------------------------------------
# differentiation


def differentiate(n: Node, name: str) -> Node:
    k = n.kind
    if k == "const":
        return const(0.0)
    if k == "var":
        return const(1.0 if n.value == name else 0.0)
    if k == "neg":
        return neg(differentiate(n.children[0], name))
    if k in ("add", "sub"):
        a, b = n.children
        da, db = differentiate(a, name), differentiate(b, name)
        return add(da, db) if k == "add" else sub(da, db)
    if k == "mul":
        a, b = n.children
        return add(mul(differentiate(a, name), b), mul(a, differentiate(b, name)))
    if k == "div":
        a, b = n.children
        da, db = differentiate(a, name), differentiate(b, name)
        return sub(div(da, b), div(mul(a, db), pow_const(b, 2.0)))

    a = n.children[0]
    da = differentiate(a, name)
    if _is_const(da, 0.0):
        return const(0.0)
    if k == "pow":
        p = n.value
        outer = mul(const(p), pow_const(a, p - 1.0))
    elif k == "exp":
        outer = n
    elif k == "ln":
        return div(da, a)
    elif k == "log2":
        return div(da, mul(a, const(LN2)))
    elif k == "sqrt":
        return div(da, mul(const(2.0), n))
    elif k == "tanh":
        outer = sub(const(1.0), pow_const(n, 2.0))
    elif k == "sigmoid":
        outer = mul(n, sub(const(1.0), n))
    else:  # pragma: no cover
        raise ExprError(f"cannot differentiate node kind {k!r}")
    return mul(outer, da)


# ---------------------------------------------------------------------------
# evaluation


def _first_bad(mask) -> int | None:
    idx = np.flatnonzero(np.asarray(mask))
    return int(idx[0]) if idx.size else None


def _check(mask, what: str) -> None:
    if np.any(mask):
        raise DomainError(what, _first_bad(mask))


def _eval(n: Node, env: Mapping[str, np.ndarray], strict: bool = True):
    k = n.kind
    if k == "const":
        return np.float64(n.value)
    if k == "var":
        return env[n.value]
    if k == "add":
        return _eval(n.children[0], env, strict) + _eval(n.children[1], env, strict)
    if k == "sub":
        return _eval(n.children[0], env, strict) - _eval(n.children[1], env, strict)
    if k == "mul":
        return _eval(n.children[0], env, strict) * _eval(n.children[1], env, strict)
    if k == "div":
        a = _eval(n.children[0], env, strict)
        b = _eval(n.children[1], env, strict)
        strict and _check(b == 0.0, "division by zero")
        return a / b
    a = _eval(n.children[0], env, strict)
    if k == "neg":
        return -a
    if k == "pow":
        p = n.value
        if p != int(p):
            strict and _check(a < 0.0, "negative base with fractional exponent")
        if p < 0:
            strict and _check(a == 0.0, "zero base with negative exponent")
        return np.power(a, p)
    if k == "exp":
        return np.exp(a)
    if k == "ln":
        strict and _check(a <= 0.0, "log of non-positive value")
        return np.log(a)
    if k == "log2":
        strict and _check(a <= 0.0, "log of non-positive value")
        return np.log2(a)
    if k == "sqrt":
        strict and _check(a < 0.0, "sqrt of negative value")
        return np.sqrt(a)
    if k == "tanh":
        return np.tanh(a)
    if k == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * a))
    raise ExprError(f"unknown node kind {k!r}")  # pragma: no cover


def evaluate(n: Node, bindings: Mapping[str, float | np.ndarray], *, strict: bool = True):
    """Evaluate ``n`` elementwise in float64.

    Scalars in give a Python float out; arrays broadcast.  With ``strict``
    any domain violation or non-finite result raises :class:`DomainError`;
    otherwise IEEE nan/inf propagate.
    """
    env = {}
    scalar = True
    for name, v in bindings.items():
        arr = np.asarray(v, dtype=np.float64)
        scalar &= arr.ndim == 0
        env[name] = arr
    missing = variables_of(n) - env.keys()
    if missing:
        raise ExprError(f"unbound variable(s): {sorted(missing)}")
    with np.errstate(all="ignore"):
        out = _eval(n, env, strict)
    out = np.asarray(out, dtype=np.float64)
    if strict:
        _check(~np.isfinite(out), "non-finite result")
    if scalar:
        return float(out)
    if out.ndim == 0 and env:
        shape = np.broadcast_shapes(*(a.shape for a in env.values()))
        out = np.broadcast_to(out, shape).copy()
    return out


# ---------------------------------------------------------------------------
# singularities


@dataclass(frozen=True)
class Singularity:
    """Excluded set for one variable: a point, or a closed half-line.

    ``side`` is ``"point"``, ``"le"`` (v <= at) or ``"ge"`` (v >= at).
    """

    var: str
    side: str
    at: float

    def distance(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.side == "point":
            d = np.abs(x - self.at)
        elif self.side == "le":
            d = np.maximum(x - self.at, 0.0)
        else:
            d = np.maximum(self.at - x, 0.0)
        return d

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.side == "point":
            return x == self.at
        if self.side == "le":
            return x <= self.at
        return x >= self.at


def _affine(n: Node):
    """Return (slopes, intercept) when ``n`` is affine in its variables, else None."""
    k = n.kind
    if k == "const":
        return {}, n.value
    if k == "var":
        return {n.value: 1.0}, 0.0
    if k == "neg":
        r = _affine(n.children[0])
        if r is None:
            return None
        return {v: -s for v, s in r[0].items()}, -r[1]
    if k in ("add", "sub"):
        ra, rb = _affine(n.children[0]), _affine(n.children[1])
        if ra is None or rb is None:
            return None
        sign = 1.0 if k == "add" else -1.0
        slopes = dict(ra[0])
        for v, s in rb[0].items():
            slopes[v] = slopes.get(v, 0.0) + sign * s
        return slopes, ra[1] + sign * rb[1]
    if k == "mul":
        ra, rb = _affine(n.children[0]), _affine(n.children[1])
        if ra is None or rb is None:
            return None
        if not ra[0]:
            ra, rb = rb, ra
        if rb[0]:
            return None
        c = rb[1]
        return {v: s * c for v, s in ra[0].items()}, ra[1] * c
    if k == "div":
        ra, rb = _affine(n.children[0]), _affine(n.children[1])
        if ra is None or rb is None or rb[0] or rb[1] == 0.0:
            return None
        c = rb[1]
        return {v: s / c for v, s in ra[0].items()}, ra[1] / c
    return None


def _excluded(arg: Node, point: bool) -> list[Singularity]:
    r = _affine(arg)
    if r is None:
        return []
    slopes = {v: s for v, s in r[0].items() if s != 0.0}
    if len(slopes) != 1:
        return []
    (v, s), = slopes.items()
    root = -r[1] / s
    if point:
        return [Singularity(v, "point", root)]
    return [Singularity(v, "le" if s > 0 else "ge", root)]


def singularities(n: Node) -> list[Singularity]:
    """Excluded points / half-lines contributed by each node.

    Exact for arguments affine in one variable; arguments of any other shape
    are left to the evaluator's runtime domain checks.
    """
    out: list[Singularity] = []
    k = n.kind
    if k == "div":
        out += _excluded(n.children[1], point=True)
    elif k in ("ln", "log2", "sqrt"):
        out += _excluded(n.children[0], point=False)
    elif k == "pow":
        p = n.value
        if p != int(p):
            out += _excluded(n.children[0], point=False)
        elif p < 0:
            out += _excluded(n.children[0], point=True)
    for c in n.children:
        out += singularities(c)
    seen: list[Singularity] = []
    for s in out:
        if s not in seen:
            seen.append(s)
    return seen


# ---------------------------------------------------------------------------
# derivative bundles


@dataclass(frozen=True)
class DerivativeBundle:
    f: Node
    variables: tuple[str, ...]
    partials: tuple[Node, ...]
    second: Node | None = None
    singular: tuple[Singularity, ...] = field(default=())

    @property
    def d1(self) -> Node:
        return self.partials[0]

    @property
    def d2(self) -> Node:
        if self.second is None:
            raise ValueError("second derivative only kept for univariate bundles")
        return self.second

    @classmethod
    def univariate(cls, f: Node, name: str = "x") -> "DerivativeBundle":
        d1 = differentiate(f, name)
        d2 = differentiate(d1, name)
        return cls(f, (name,), (d1,), d2, tuple(singularities(f)))

    @classmethod
    def multivariate(cls, f: Node, names: Iterable[str]) -> "DerivativeBundle":
        names = tuple(names)
        partials = tuple(differentiate(f, v) for v in names)
        return cls(f, names, partials, None, tuple(singularities(f)))

    def singular_for(self, name: str) -> list[Singularity]:
        return [s for s in self.singular if s.var == name]

    def distance_to_singular(self, name: str, x):
        """Distance from ``x`` to the nearest excluded set of ``name`` (inf if none)."""
        d = np.full(np.shape(x), np.inf)
        for s in self.singular_for(name):
            d = np.minimum(d, s.distance(x))
        return d


IDENTITY = DerivativeBundle.univariate(var("x"))
