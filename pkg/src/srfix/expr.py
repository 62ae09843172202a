"""Immutable expression trees: parsing, printing, evaluation, complexity.

Trees are built from four node kinds (constants, feature references, unary
and binary operators) and never mutated after construction, so they are safe
to share across threads and to use as dict keys.

Text grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*            # left-associative
    term    := factor (('*' | '/') factor)*        # left-associative
    factor  := '-' factor | power
    power   := atom ['^' '2']                      # ^2 is sugar for square
    atom    := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

Variables are named ``x0 .. x{n-1}`` or any alias supplied in a name map.
``log(abs(u))`` is recognized as the single log-magnitude operator, and
``Gauss``/``gauss`` both name exp(-u^2).

Evaluation is total: log of zero returns the most negative finite log
(log of the smallest positive normal double) and division by zero returns
a sign-preserving huge sentinel (0/0 is 0), mirroring hardware where no
exception path exists.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ParseError

__all__ = [
    "UnaryOp", "BinaryOp", "Expr", "Const", "Var", "Unary", "Binary",
    "OperatorSet", "ComplexityMap", "TRANSCENDENTAL_OPS",
    "parse", "format_expr", "eval_f64", "eval_f64_batch",
    "complexity", "check_constraints", "unary_f64", "binary_f64",
    "iter_nodes", "count_nodes", "get_node", "replace_node",
    "load_alias_map", "LOG_ZERO_SENTINEL", "DIV_SENTINEL",
]


class UnaryOp(Enum):
    SIN = "sin"
    TAN = "tan"
    SINH = "sinh"
    COSH = "cosh"
    EXP = "exp"
    GAUSS = "gauss"
    LOG_ABS = "log_abs"
    SQUARE = "square"


class BinaryOp(Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"


# Unary operators subject to the no-nesting rule; squaring is plain
# arithmetic (a multiplier) and may appear inside function arguments.
TRANSCENDENTAL_OPS = frozenset(
    op for op in UnaryOp if op is not UnaryOp.SQUARE
)

# log(|0|) maps to the most negative finite log value.
LOG_ZERO_SENTINEL = math.log(sys.float_info.min)
# x/0 maps to sign(x) * DIV_SENTINEL; 0/0 maps to 0.
DIV_SENTINEL = sys.float_info.max


class Expr:
    """Base class for expression nodes. Concrete nodes are frozen dataclasses."""

    __slots__ = ()

    def __str__(self) -> str:
        return format_expr(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ValueError(f"constant must be finite, got {self.value!r}")


@dataclass(frozen=True)
class Var(Expr):
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"variable index must be >= 0, got {self.index}")


@dataclass(frozen=True)
class Unary(Expr):
    op: UnaryOp
    child: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: BinaryOp
    left: Expr
    right: Expr


@dataclass(frozen=True)
class OperatorSet:
    """Allowed operators plus the structural constraints enforced on trees."""

    unary: frozenset = frozenset()
    binary: frozenset = frozenset({BinaryOp.ADD, BinaryOp.SUB, BinaryOp.MUL})
    nesting_allowed: bool = False
    max_subtree_complexity: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "unary", frozenset(self.unary))
        object.__setattr__(self, "binary", frozenset(self.binary))
        if not self.binary:
            raise ValueError("operator set needs at least one binary operator")
        if self.max_subtree_complexity is not None and self.max_subtree_complexity < 1:
            raise ValueError("max_subtree_complexity must be positive")


@dataclass
class ComplexityMap:
    """Per-node complexity weights; every weight defaults to 1."""

    operator_weights: dict = field(default_factory=dict)
    const_weight: int = 1
    var_weight: int = 1

    def __post_init__(self):
        if self.const_weight < 1 or self.var_weight < 1:
            raise ValueError("complexity weights must be >= 1")
        for op, w in self.operator_weights.items():
            if w < 1:
                raise ValueError(f"complexity weight for {op} must be >= 1, got {w}")

    def weight(self, op) -> int:
        return self.operator_weights.get(op, 1)


# ---------------------------------------------------------------------------
# Tree traversal helpers
# ---------------------------------------------------------------------------

def iter_nodes(e: Expr, _path: tuple = ()) -> Iterator[tuple[tuple, Expr]]:
    """Preorder traversal yielding (path, node); path is a tuple of child slots."""
    yield _path, e
    if isinstance(e, Unary):
        yield from iter_nodes(e.child, _path + (0,))
    elif isinstance(e, Binary):
        yield from iter_nodes(e.left, _path + (0,))
        yield from iter_nodes(e.right, _path + (1,))


def count_nodes(e: Expr) -> int:
    return sum(1 for _ in iter_nodes(e))


def get_node(e: Expr, path: tuple) -> Expr:
    for slot in path:
        if isinstance(e, Unary):
            e = e.child
        elif isinstance(e, Binary):
            e = e.left if slot == 0 else e.right
        else:
            raise IndexError(f"path {path} walks past a leaf")
    return e


def replace_node(e: Expr, path: tuple, new: Expr) -> Expr:
    """Functional replacement: returns a tree with the node at `path` swapped."""
    if not path:
        return new
    slot, rest = path[0], path[1:]
    if isinstance(e, Unary):
        return Unary(e.op, replace_node(e.child, rest, new))
    if isinstance(e, Binary):
        if slot == 0:
            return Binary(e.op, replace_node(e.left, rest, new), e.right)
        return Binary(e.op, e.left, replace_node(e.right, rest, new))
    raise IndexError(f"path {path} walks past a leaf")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)

_FUNC_NAMES = {
    "sin": UnaryOp.SIN,
    "tan": UnaryOp.TAN,
    "sinh": UnaryOp.SINH,
    "cosh": UnaryOp.COSH,
    "exp": UnaryOp.EXP,
    "gauss": UnaryOp.GAUSS,
    "Gauss": UnaryOp.GAUSS,
    "log_abs": UnaryOp.LOG_ABS,
    "square": UnaryOp.SQUARE,
}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == m.start():
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(text) - len(stripped)
            raise ParseError(f"unexpected character {text[bad_at]!r}", bad_at)
        if m.lastgroup is not None:
            tokens.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, n_features: int, aliases: Mapping[str, int] | None):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.n_features = n_features
        self.aliases = dict(aliases or {})

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def advance(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.advance()
        if val != value:
            raise ParseError(f"expected {value!r}, got {val!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind is not None:
            raise ParseError(f"unexpected trailing token {val!r}", pos)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-"):
            _, op, _ = self.advance()
            right = self.term()
            left = Binary(BinaryOp.ADD if op == "+" else BinaryOp.SUB, left, right)
        return left

    def term(self) -> Expr:
        left = self.factor()
        while self.peek()[1] in ("*", "/"):
            _, op, _ = self.advance()
            right = self.factor()
            left = Binary(BinaryOp.MUL if op == "*" else BinaryOp.DIV, left, right)
        return left

    def factor(self) -> Expr:
        if self.peek()[1] == "-":
            self.advance()
            inner = self.factor()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Binary(BinaryOp.MUL, Const(-1.0), inner)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^":
            _, _, pos = self.advance()
            kind, val, p2 = self.advance()
            if kind != "number" or val != "2":
                raise ParseError("only '^2' (squaring) is supported", p2)
            return Unary(UnaryOp.SQUARE, base)
        return base

    def atom(self) -> Expr:
        kind, val, pos = self.advance()
        if kind == "number":
            return Const(float(val))
        if val == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "ident":
            if self.peek()[1] == "(":
                return self.call(val, pos)
            return self.variable(val, pos)
        raise ParseError(f"unexpected token {val!r}" if val else "unexpected end of input", pos)

    def call(self, name: str, pos: int) -> Expr:
        self.expect("(")
        if name == "log":
            # only log(abs(u)) exists; bare log(u) is rejected
            kind, val, p2 = self.peek()
            if val != "abs":
                raise ParseError("log is only available as log(abs(...))", p2)
            self.advance()
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            self.expect(")")
            return Unary(UnaryOp.LOG_ABS, arg)
        op = _FUNC_NAMES.get(name)
        if op is None:
            raise ParseError(f"unknown function {name!r}", pos)
        arg = self.expr()
        self.expect(")")
        return Unary(op, arg)

    def variable(self, name: str, pos: int) -> Expr:
        if name in self.aliases:
            index = self.aliases[name]
        else:
            m = re.fullmatch(r"x(\d+)", name)
            if m is None:
                raise ParseError(f"unknown identifier {name!r}", pos)
            index = int(m.group(1))
        if index >= self.n_features:
            raise ParseError(
                f"variable index {index} out of range for {self.n_features} features", pos
            )
        return Var(index)


def parse(text: str, n_features: int, aliases: Mapping[str, int] | None = None) -> Expr:
    """Parse expression text into a tree; see the module grammar."""
    return _Parser(text, n_features, aliases).parse()


def load_alias_map(path) -> dict[str, int]:
    """Read a key=value alias file mapping feature names to x-indices.

    Values may be written as ``3`` or ``x3``; blank lines and '#' comments
    are ignored.
    """
    aliases: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected name=index, got {line!r}")
            name, _, value = line.partition("=")
            name, value = name.strip(), value.strip()
            if value.startswith("x"):
                value = value[1:]
            try:
                aliases[name] = int(value)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad index {value!r}") from None
    return aliases


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_UNARY_NAMES = {
    UnaryOp.SIN: "sin",
    UnaryOp.TAN: "tan",
    UnaryOp.SINH: "sinh",
    UnaryOp.COSH: "cosh",
    UnaryOp.EXP: "exp",
    UnaryOp.GAUSS: "gauss",
}

_BIN_PREC = {BinaryOp.ADD: 1, BinaryOp.SUB: 1, BinaryOp.MUL: 2, BinaryOp.DIV: 2}
_BIN_TEXT = {BinaryOp.ADD: " + ", BinaryOp.SUB: " - ", BinaryOp.MUL: "*", BinaryOp.DIV: "/"}


def _format_const(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _fmt(e: Expr, min_prec: int) -> str:
    if isinstance(e, Const):
        return _format_const(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Unary):
        if e.op is UnaryOp.SQUARE:
            inner = _fmt(e.child, 99)
            if not isinstance(e.child, (Var,)) and not (
                isinstance(e.child, Const) and e.child.value >= 0
            ):
                inner = f"({_fmt(e.child, 0)})"
            return f"{inner}^2"
        if e.op is UnaryOp.LOG_ABS:
            return f"log(abs({_fmt(e.child, 0)}))"
        return f"{_UNARY_NAMES[e.op]}({_fmt(e.child, 0)})"
    prec = _BIN_PREC[e.op]
    text = _fmt(e.left, prec) + _BIN_TEXT[e.op] + _fmt(e.right, prec + 1)
    if prec < min_prec:
        return f"({text})"
    return text


def format_expr(e: Expr) -> str:
    """Render a tree as text; parse(format_expr(e)) reproduces the tree."""
    return _fmt(e, 0)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def unary_f64(op: UnaryOp, u: float) -> float:
    """Double-precision unary semantics under the total-function domain policy."""
    if op is UnaryOp.SIN:
        return math.sin(u)
    if op is UnaryOp.TAN:
        return math.tan(u)
    if op is UnaryOp.SINH:
        try:
            return math.sinh(u)
        except OverflowError:
            return math.copysign(math.inf, u)
    if op is UnaryOp.COSH:
        try:
            return math.cosh(u)
        except OverflowError:
            return math.inf
    if op is UnaryOp.EXP:
        try:
            return math.exp(u)
        except OverflowError:
            return math.inf
    if op is UnaryOp.GAUSS:
        try:
            return math.exp(-(u * u))
        except OverflowError:  # pragma: no cover - exp(-x^2) cannot overflow
            return math.inf
    if op is UnaryOp.LOG_ABS:
        if u == 0.0:
            return LOG_ZERO_SENTINEL
        return math.log(abs(u))
    if op is UnaryOp.SQUARE:
        return u * u
    raise ValueError(f"unhandled unary op {op}")


def binary_f64(op: BinaryOp, a: float, b: float) -> float:
    if op is BinaryOp.ADD:
        return a + b
    if op is BinaryOp.SUB:
        return a - b
    if op is BinaryOp.MUL:
        return a * b
    if op is BinaryOp.DIV:
        if b == 0.0:
            if a == 0.0:
                return 0.0
            return math.copysign(DIV_SENTINEL, a)
        return a / b
    raise ValueError(f"unhandled binary op {op}")


def eval_f64(e: Expr, x: Sequence[float]) -> float:
    """Evaluate the tree at one sample in IEEE double precision."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(x[e.index])
    if isinstance(e, Unary):
        return unary_f64(e.op, eval_f64(e.child, x))
    return binary_f64(e.op, eval_f64(e.left, x), eval_f64(e.right, x))


def eval_f64_batch(e: Expr, X: np.ndarray) -> np.ndarray:
    """Vectorized eval_f64 over the rows of an (n, d) sample matrix."""
    X = np.asarray(X, dtype=np.float64)
    with np.errstate(all="ignore"):
        return _eval_batch(e, X)


def _eval_batch(e: Expr, X: np.ndarray) -> np.ndarray:
    if isinstance(e, Const):
        return np.full(X.shape[0], e.value)
    if isinstance(e, Var):
        return X[:, e.index].copy()
    if isinstance(e, Unary):
        u = _eval_batch(e.child, X)
        op = e.op
        if op is UnaryOp.SIN:
            return np.sin(u)
        if op is UnaryOp.TAN:
            return np.tan(u)
        if op is UnaryOp.SINH:
            return np.sinh(u)
        if op is UnaryOp.COSH:
            return np.cosh(u)
        if op is UnaryOp.EXP:
            return np.exp(u)
        if op is UnaryOp.GAUSS:
            return np.exp(-(u * u))
        if op is UnaryOp.LOG_ABS:
            out = np.log(np.abs(u))
            out[u == 0.0] = LOG_ZERO_SENTINEL
            return out
        return u * u
    a = _eval_batch(e.left, X)
    b = _eval_batch(e.right, X)
    op = e.op
    if op is BinaryOp.ADD:
        return a + b
    if op is BinaryOp.SUB:
        return a - b
    if op is BinaryOp.MUL:
        return a * b
    out = a / b
    zero = b == 0.0
    if zero.any():
        out[zero] = np.copysign(DIV_SENTINEL, a[zero])
        out[zero & (a == 0.0)] = 0.0
    return out


# ---------------------------------------------------------------------------
# Complexity and structural constraints
# ---------------------------------------------------------------------------

def complexity(e: Expr, m: ComplexityMap | None = None) -> int:
    """Sum of per-node weights; defaults to node count with an all-ones map."""
    if m is None:
        m = ComplexityMap()
    if isinstance(e, Const):
        return m.const_weight
    if isinstance(e, Var):
        return m.var_weight
    if isinstance(e, Unary):
        return m.weight(e.op) + complexity(e.child, m)
    return m.weight(e.op) + complexity(e.left, m) + complexity(e.right, m)


def check_constraints(e: Expr, ops: OperatorSet, m: ComplexityMap | None = None) -> bool:
    """True iff the tree uses only allowed operators and honors the structural rules.

    With nesting disallowed, no transcendental function may appear anywhere
    inside another's argument. If max_subtree_complexity is set, every unary
    operator's argument subtree must stay within that budget.
    """
    if m is None:
        m = ComplexityMap()
    return _check(e, ops, m, inside_function=False)


def _check(e: Expr, ops: OperatorSet, m: ComplexityMap, inside_function: bool) -> bool:
    if isinstance(e, (Const, Var)):
        return True
    if isinstance(e, Unary):
        if e.op not in ops.unary:
            return False
        transcendental = e.op in TRANSCENDENTAL_OPS
        if transcendental and inside_function and not ops.nesting_allowed:
            return False
        if ops.max_subtree_complexity is not None:
            if complexity(e.child, m) > ops.max_subtree_complexity:
                return False
        return _check(e.child, ops, m, inside_function or transcendental)
    if e.op not in ops.binary:
        return False
    return _check(e.left, ops, m, inside_function) and _check(
        e.right, ops, m, inside_function
    )
