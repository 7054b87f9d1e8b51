"""Scalar expressions in coordinates and velocities.

Small recursive-descent parser producing an immutable AST, a printer that
round-trips through the parser, symbolic differentiation and compilation of
expression lists into plain Python callables.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

__all__ = [
    "Node",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "ExpressionError",
    "ParseError",
    "UnknownIdentifierError",
    "EvaluationError",
    "FUNCTIONS",
    "parse",
    "to_source",
    "evaluate",
    "diff",
    "derivative",
    "variables",
    "rename",
    "compile_many",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sign")


class ExpressionError(Exception):
    """Base class for expression errors; carries a byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ParseError(ExpressionError):
    pass


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int | None = None):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", offset)


class EvaluationError(ExpressionError):
    pass


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------


class Node:
    __slots__ = ()

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True, eq=True)
class Const(Node):
    value: float
    offset: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True, eq=True)
class Var(Node):
    name: str
    offset: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True, eq=True)
class Unary(Node):
    op: str  # 'neg' or a name in FUNCTIONS
    arg: Node
    offset: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True, eq=True)
class Binary(Node):
    op: str  # one of + - * / ^
    left: Node
    right: Node
    offset: int | None = field(default=None, compare=False, repr=False)


def _wrap(x) -> Node:
    if isinstance(x, Node):
        return x
    return Const(float(x))


ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(n: Node, value: float | None = None) -> bool:
    return isinstance(n, Const) and (value is None or n.value == value)


# light-weight constructors used by diff(); they fold the trivial identities
# so that derivative trees stay small
def add(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return Binary("+", a, b)


def sub(a: Node, b: Node) -> Node:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    return Binary("-", a, b)


def mul(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return Binary("*", a, b)


def div(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Binary("/", a, b)


def neg(a: Node) -> Node:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def power(a: Node, b: Node) -> Node:
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return ONE
    return Binary("^", a, b)


def func(name: str, a: Node) -> Node:
    return Unary(name, a)


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int  # byte offset


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos = 0
    # byte offsets: the source may contain non-ASCII whitespace or garbage
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        boff = len(source[:pos].encode("utf-8"))
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", boff)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), boff))
        pos = m.end()
    toks.append(_Tok("end", "", len(source.encode("utf-8"))))
    return toks


class _Parser:
    def __init__(self, source: str, symbols: set[str]):
        self.source = source
        self.symbols = symbols
        self.toks = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _error_here(self, message: str):
        tok = self.tok
        if tok.kind == "end":
            # point at the last byte of the truncated input
            offset = max(tok.offset - 1, 0)
            raise ParseError(f"{message}: unexpected end of input", offset)
        raise ParseError(f"{message}: unexpected {tok.text!r}", tok.offset)

    def _accept(self, text: str) -> _Tok | None:
        if self.tok.kind == "op" and self.tok.text == text:
            t = self.tok
            self.i += 1
            return t
        return None

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            self._error_here("trailing input")
        return node

    def expr(self) -> Node:
        left = self.term()
        while True:
            t = self._accept("+") or self._accept("-")
            if t is None:
                return left
            right = self.term()
            left = _fold(Binary(t.text, left, right, offset=t.offset))

    def term(self) -> Node:
        left = self.unary()
        while True:
            t = self._accept("*") or self._accept("/")
            if t is None:
                return left
            right = self.unary()
            left = _fold(Binary(t.text, left, right, offset=t.offset))

    def unary(self) -> Node:
        t = self._accept("-")
        if t is not None:
            return _fold(Unary("neg", self.unary(), offset=t.offset))
        if self._accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        t = self._accept("^")
        if t is None:
            return base
        # right-hand side may itself carry a sign or another power
        return _fold(Binary("^", base, self.unary(), offset=t.offset))

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Const(float(tok.text), offset=tok.offset)
        if tok.kind == "name":
            self.i += 1
            if tok.text in FUNCTIONS and self.tok.kind == "op" and self.tok.text == "(":
                self.i += 1
                arg = self.expr()
                if not self._accept(")"):
                    self._error_here("expected ')'")
                return _fold(Unary(tok.text, arg, offset=tok.offset))
            if tok.text not in self.symbols:
                raise UnknownIdentifierError(tok.text, tok.offset)
            return Var(tok.text, offset=tok.offset)
        if self._accept("("):
            node = self.expr()
            if not self._accept(")"):
                self._error_here("expected ')'")
            return node
        self._error_here("expected a number, name or '('")


def _fold(node: Node) -> Node:
    """Constant folding of a freshly built node; leaves it alone on failure."""
    if isinstance(node, Unary) and isinstance(node.arg, Const):
        try:
            value = _UNARY[node.op](node.arg.value)
        except (ArithmeticError, ValueError):
            return node
    elif isinstance(node, Binary) and isinstance(node.left, Const) and isinstance(node.right, Const):
        try:
            value = _BINARY[node.op](node.left.value, node.right.value)
        except (ArithmeticError, ValueError):
            return node
    else:
        return node
    if not math.isfinite(value):
        return node
    return Const(value, offset=node.offset)


def parse(source: str, symbols: Iterable[str]) -> Node:
    """Parse ``source`` against the given symbol table.

    Raises :class:`ParseError` (with a byte offset) on malformed input and
    :class:`UnknownIdentifierError` for names outside ``symbols``.
    """
    symbols = list(symbols)
    if not symbols:
        raise ValueError("symbol table must be nonempty")
    if len(set(symbols)) != len(symbols):
        raise ValueError("symbol table contains duplicates")
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    return _Parser(source, set(symbols)).parse()


# --------------------------------------------------------------------------
# Printing
# --------------------------------------------------------------------------


def _fmt(value: float) -> str:
    text = repr(float(value))
    if value < 0 or text.startswith("-"):
        return f"({text})"
    return text


def to_source(node: Node) -> str:
    """Fully parenthesised source text; ``parse(to_source(n))`` rebuilds ``n``."""
    if isinstance(node, Const):
        return _fmt(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{to_source(node.arg)})"
        return f"{node.op}({to_source(node.arg)})"
    if isinstance(node, Binary):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


def _sign(x: float) -> float:
    x = float(x)
    return float((x > 0) - (x < 0))


def _safe_div(a: float, b: float) -> float:
    return a / b


_UNARY: dict[str, Callable[[float], float]] = {
    "neg": lambda x: -x,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "abs": math.fabs,
    "sign": _sign,
}

_BINARY: dict[str, Callable[[float, float], float]] = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _safe_div,
    "^": math.pow,
}


def _eval(node: Node, env: Mapping[str, float]) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return float(env[node.name])
        except KeyError:
            raise EvaluationError(f"unbound variable {node.name!r}", node.offset) from None
    if isinstance(node, Unary):
        x = _eval(node.arg, env)
        try:
            value = _UNARY[node.op](x)
        except (ArithmeticError, ValueError) as exc:
            raise EvaluationError(f"domain error in {node.op}({x!r}): {exc}", node.offset) from None
    else:
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        try:
            value = _BINARY[node.op](a, b)
        except (ArithmeticError, ValueError) as exc:
            raise EvaluationError(
                f"domain error in {a!r} {node.op} {b!r}: {exc}", node.offset
            ) from None
    if not math.isfinite(value):
        raise EvaluationError(f"non-finite result {value!r} at {node.op!r}", node.offset)
    return value


def evaluate(node: Node, bindings: Mapping[str, float]) -> float:
    """Evaluate in IEEE double precision; domain errors carry the node offset."""
    return _eval(node, bindings)


def variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Unary):
        return variables(node.arg)
    if isinstance(node, Binary):
        return variables(node.left) | variables(node.right)
    return set()


def rename(node: Node, mapping: Mapping[str, str]) -> Node:
    """Return a copy with variables renamed through ``mapping``."""
    if isinstance(node, Var):
        return Var(mapping.get(node.name, node.name), offset=node.offset)
    if isinstance(node, Unary):
        return Unary(node.op, rename(node.arg, mapping), offset=node.offset)
    if isinstance(node, Binary):
        return Binary(
            node.op, rename(node.left, mapping), rename(node.right, mapping), offset=node.offset
        )
    return node


# --------------------------------------------------------------------------
# Differentiation
# --------------------------------------------------------------------------


def diff(node: Node, var: str) -> Node:
    """Symbolic derivative of ``node`` with respect to ``var``."""
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if isinstance(node, Unary):
        a = node.arg
        da = diff(a, var)
        if _is_const(da, 0.0):
            return ZERO
        op = node.op
        if op == "neg":
            return neg(da)
        if op == "sin":
            return mul(func("cos", a), da)
        if op == "cos":
            return neg(mul(func("sin", a), da))
        if op == "tan":
            return div(da, power(func("cos", a), Const(2.0)))
        if op == "exp":
            return mul(node, da)
        if op == "log":
            return div(da, a)
        if op == "sqrt":
            return div(da, mul(Const(2.0), node))
        if op == "abs":
            return mul(func("sign", a), da)
        if op == "sign":
            return ZERO
        raise ValueError(f"unknown unary op {op!r}")
    if isinstance(node, Binary):
        a, b, op = node.left, node.right, node.op
        da, db = diff(a, var), diff(b, var)
        if op == "+":
            return add(da, db)
        if op == "-":
            return sub(da, db)
        if op == "*":
            return add(mul(da, b), mul(a, db))
        if op == "/":
            # (a/b)' = a'/b - a b'/b^2
            return sub(div(da, b), div(mul(a, db), power(b, Const(2.0))))
        if op == "^":
            if var not in variables(b):
                # power rule keeps x^2 differentiable at x = 0
                if _is_const(b):
                    lowered = power(a, Const(b.value - 1.0))
                else:
                    lowered = power(a, sub(b, ONE))
                return mul(mul(b, lowered), da)
            if var not in variables(a):
                return mul(mul(node, func("log", a)), db)
            return mul(node, add(mul(db, func("log", a)), div(mul(b, da), a)))
        raise ValueError(f"unknown binary op {op!r}")
    raise TypeError(f"not an expression node: {node!r}")


def derivative(node: Node, wrt: Sequence[str] | str, bindings: Mapping[str, float]) -> float:
    """Exact first or second derivative of ``node`` at ``bindings``.

    ``wrt`` is one variable name or a list of one or two names.
    """
    if isinstance(wrt, str):
        wrt = [wrt]
    if not 1 <= len(wrt) <= 2:
        raise ValueError("only first and second derivatives are supported")
    known = set(bindings)
    for name in wrt:
        if name not in known:
            raise EvaluationError(f"derivative variable {name!r} is not bound")
    d = node
    for name in wrt:
        d = diff(d, name)
    return evaluate(d, bindings)


# --------------------------------------------------------------------------
# Compilation
# --------------------------------------------------------------------------

_PY_UNARY = {
    "sin": "_sin",
    "cos": "_cos",
    "tan": "_tan",
    "exp": "_exp",
    "log": "_log",
    "sqrt": "_sqrt",
    "abs": "_fabs",
    "sign": "_sign",
}

_PY_GLOBALS = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_tan": math.tan,
    "_exp": math.exp,
    "_log": math.log,
    "_sqrt": math.sqrt,
    "_fabs": math.fabs,
    "_sign": _sign,
    "_pow": math.pow,
    "__builtins__": {},
}


def _py(node: Node, index: Mapping[str, int]) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"_a{index[node.name]}"
    if isinstance(node, Unary):
        inner = _py(node.arg, index)
        if node.op == "neg":
            return f"(-{inner})"
        return f"{_PY_UNARY[node.op]}({inner})"
    a, b = _py(node.left, index), _py(node.right, index)
    if node.op == "^":
        if _is_const(node.right) and node.right.value == 2.0:
            return f"({a}*{a})" if isinstance(node.left, (Var, Const)) else f"_pow({a}, 2.0)"
        return f"_pow({a}, {b})"
    return f"({a} {node.op} {b})"


def compile_many(nodes: Sequence[Node], names: Sequence[str]) -> Callable[..., tuple]:
    """Compile expressions into ``f(*values) -> tuple`` over positional ``names``.

    Domain errors and non-finite results raise :class:`EvaluationError`; the
    failing node is located by re-running the interpreter.
    """
    index = {name: i for i, name in enumerate(names)}
    for node in nodes:
        missing = variables(node) - set(index)
        if missing:
            raise ExpressionError(f"unbound variables {sorted(missing)}")
    args = ", ".join(f"_a{i}" for i in range(len(names)))
    body = ", ".join(_py(n, index) for n in nodes)
    src = f"def _f({args}):\n    return ({body}{',' if len(nodes) == 1 else ''})\n"
    scope: dict = {}
    exec(compile(src, "<nhcartan-expr>", "exec"), dict(_PY_GLOBALS), scope)
    raw = scope["_f"]
    nodes = tuple(nodes)
    names = tuple(names)

    def locate(values):
        env = dict(zip(names, values))
        for n in nodes:
            _eval(n, env)

    def compiled(*values):
        try:
            out = raw(*values)
        except (ArithmeticError, ValueError):
            locate(values)
            raise EvaluationError("domain error during evaluation") from None
        for v in out:
            if not math.isfinite(v):
                locate(values)
                raise EvaluationError("non-finite result during evaluation")
        return out

    compiled.nodes = nodes
    compiled.names = names
    return compiled
