"""A small expression language for scenario files.

Vector expressions are ";"-separated components.  Each component supports
float literals (including scientific notation), the chart symbols, the
constant pi, + - * / with the usual precedence, unary minus, parentheses,
and the functions sin, cos, exp, sqrt, abs.

Expressions are parsed to a tuple tree, printed back in a canonical form
(stable under reparsing), and compiled to plain Python callables.  Compiled
callables are cached per canonical form; Expr instances themselves pickle
as (source, symbols) so they can cross process boundaries.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .errors import ExprError, IfsimError

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs")

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/();]))"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    n = len(src)
    while pos < n:
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            # skip trailing whitespace before declaring a bad character
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            at = n - len(stripped)
            raise ExprError(f"unexpected character {stripped[0]!r}", at)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, src: str, symbols: tuple):
        self.src = src
        self.symbols = symbols
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message):
        raise ExprError(message, self.peek()[2])

    def parse_vector(self):
        comps = [self.parse_expr()]
        while self.peek()[:2] == ("op", ";"):
            self.take()
            comps.append(self.parse_expr())
        kind, text, off = self.peek()
        if kind != "end":
            self.fail(f"unexpected {text!r}")
        return tuple(comps)

    def parse_expr(self):
        node = self.parse_term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = ("bin", op, node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = ("bin", op, node, self.parse_factor())
        return node

    def parse_factor(self):
        kind, text, off = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return ("neg", self.parse_factor())
        if kind == "op" and text == "+":
            self.take()
            return self.parse_factor()
        return self.parse_atom()

    def parse_atom(self):
        kind, text, off = self.take()
        if kind == "num":
            return ("num", float(text))
        if kind == "name":
            if text == "pi":
                return ("const", "pi")
            if text in FUNCTIONS:
                k, t, o = self.take()
                if (k, t) != ("op", "("):
                    raise ExprError(f"expected '(' after {text!r}", o)
                arg = self.parse_expr()
                k, t, o = self.take()
                if (k, t) != ("op", ")"):
                    raise ExprError("expected ')'", o)
                return ("call", text, arg)
            if text in self.symbols:
                return ("sym", text)
            raise ExprError(f"unknown symbol {text!r}", off)
        if (kind, text) == ("op", "("):
            node = self.parse_expr()
            k, t, o = self.take()
            if (k, t) != ("op", ")"):
                raise ExprError("expected ')'", o)
            return node
        if kind == "end":
            raise ExprError("unexpected end of input", off)
        raise ExprError(f"unexpected {text!r}", off)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node) -> int:
    if node[0] == "bin":
        return _PREC[node[1]]
    if node[0] == "neg":
        return 3
    return 4


def _print_node(node) -> str:
    tag = node[0]
    if tag == "num":
        return repr(node[1])
    if tag == "const":
        return node[1]
    if tag == "sym":
        return node[1]
    if tag == "neg":
        inner = _print_node(node[1])
        if _prec(node[1]) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    if tag == "call":
        return f"{node[1]}({_print_node(node[2])})"
    # binary: parenthesize so reparsing reproduces the same tree shape
    _, op, left, right = node
    p = _PREC[op]
    ls = _print_node(left)
    if _prec(left) < p:
        ls = f"({ls})"
    rs = _print_node(right)
    if _prec(right) <= p:
        rs = f"({rs})"
    return f"{ls} {op} {rs}"


_SCALAR_NS = {
    "sin": math.sin, "cos": math.cos, "exp": math.exp,
    "sqrt": math.sqrt, "abs": abs, "pi": math.pi,
    "__builtins__": {},
}
_BATCH_NS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp,
    "sqrt": np.sqrt, "abs": np.abs, "pi": math.pi,
    "__builtins__": {},
}

_COMPILE_CACHE: dict = {}


def _compile(canonical: str, symbols: tuple, batch: bool):
    key = (canonical, symbols, batch)
    fn = _COMPILE_CACHE.get(key)
    if fn is not None:
        return fn
    comps = [c.strip() for c in canonical.split(";")]
    args_src = ", ".join(symbols)
    ns = dict(_BATCH_NS if batch else _SCALAR_NS)
    raws = [eval(f"lambda {args_src}: ({c})", ns) for c in comps]
    if batch:
        def fn(*args):
            shape = np.broadcast(*args).shape
            return tuple(
                np.array(np.broadcast_to(np.asarray(r(*args), dtype=float), shape))
                for r in raws
            )
    else:
        def fn(*args):
            out = []
            for i, r in enumerate(raws):
                try:
                    out.append(float(r(*args)))
                except ValueError as e:
                    raise IfsimError(f"component {i}: {e}") from e
            return tuple(out)
    _COMPILE_CACHE[key] = fn
    return fn


class Expr:
    """A parsed vector expression tied to a fixed symbol tuple."""

    __slots__ = ("src", "symbols", "ast", "canonical")

    def __init__(self, src: str, symbols):
        self.src = src
        self.symbols = tuple(symbols)
        self.ast = _Parser(src, self.symbols).parse_vector()
        self.canonical = "; ".join(_print_node(c) for c in self.ast)

    @property
    def ncomp(self) -> int:
        return len(self.ast)

    def scalar(self):
        """Callable on floats, returning a tuple of floats."""
        return _compile(self.canonical, self.symbols, batch=False)

    def batch(self):
        """Callable on numpy arrays, returning component arrays of the
        broadcast input shape."""
        return _compile(self.canonical, self.symbols, batch=True)

    def __call__(self, *args):
        return self.scalar()(*args)

    def __eq__(self, other):
        return (isinstance(other, Expr)
                and self.canonical == other.canonical
                and self.symbols == other.symbols)

    def __hash__(self):
        return hash((self.canonical, self.symbols))

    def __repr__(self):
        return f"Expr({self.canonical!r}, symbols={self.symbols!r})"

    def __reduce__(self):
        return (Expr, (self.src, self.symbols))


def parse_field(source: str, dim: int, chart: str) -> Expr:
    """Parse a ';'-separated vector expression with exactly dim components,
    using the symbol names of the given chart."""
    from .geometry import CHART_SYMBOLS, check_chart

    e = Expr(source, CHART_SYMBOLS[check_chart(chart)])
    if e.ncomp != dim:
        raise ExprError(
            f"expected {dim} components, got {e.ncomp}", len(source))
    return e


def eval_field(f: Expr, x) -> tuple:
    """Evaluate a parsed field at one chart point, with finiteness checks."""
    out = f.scalar()(*x)
    for i, v in enumerate(out):
        if not math.isfinite(v):
            raise IfsimError(f"component {i}: non-finite value {v!r}")
    return out
