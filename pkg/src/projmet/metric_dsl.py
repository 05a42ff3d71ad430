"""Tiny expression language for Lagrangians, 1-forms and densities.

Grammar (EBNF), with precedence ^  >  unary-  >  * /  >  + - and the
usual associativity (left for + - * /, right for ^):

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

Identifiers: variables x1..xn, v1..vn, u1..un and p; constants pi, e;
functions sin, cos, sqrt, abs, exp and norm2 (Euclidean norm of a whole
variable block, e.g. norm2(v)).  Evaluation is numpy-vectorized and
deterministic; there is no symbolic differentiation or simplification.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .metric_core import FinslerMetric, Lattice, MetricError, OneDensity
from .sampling import rng

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "sqrt": np.sqrt, "abs": np.abs, "exp": np.exp}
CONSTANTS = {"pi": np.pi, "e": np.e}
BLOCKS = ("x", "v", "u")


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


# --- AST ----------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    block: str  # "x" | "v" | "u" | "p"
    index: int  # 0-based; 0 for p


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fname: str
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class BlockRef:
    """A whole variable block, only legal as the argument of norm2."""

    block: str


Expr = object


# --- lexer ----------------------------------------------------------------


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _lex(src: str):
    toks = []
    line, col, i = 1, 1, 0
    while i < len(src):
        c = src[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < len(src) and src[i + 1].isdigit()):
            j = i
            while j < len(src) and (src[j].isdigit() or src[j] == "."):
                j += 1
            if j < len(src) and src[j] in "eE":
                k = j + 1
                if k < len(src) and src[k] in "+-":
                    k += 1
                if k < len(src) and src[k].isdigit():
                    j = k
                    while j < len(src) and src[j].isdigit():
                        j += 1
            text = src[i:j]
            try:
                float(text)
            except ValueError:
                raise ParseError(f"bad number literal {text!r}", line, col)
            toks.append(_Tok("num", text, line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < len(src) and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(_Tok("ident", src[i:j], line, col))
            col += j - i
            i = j
            continue
        if c in "+-*/^(),":
            kind = {"(": "lparen", ")": "rparen", ",": "comma"}.get(c, "op")
            toks.append(_Tok(kind, c, line, col))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(_Tok("eof", "", line, col))
    return toks


# --- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, toks, dim: int):
        self.toks = toks
        self.pos = 0
        self.dim = dim

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def take(self, kind=None, text=None) -> _Tok:
        t = self.toks[self.pos]
        if kind is not None and t.kind != kind:
            raise ParseError(f"expected {kind}, found {t.text!r}", t.line, t.col)
        if text is not None and t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text!r}", t.line, t.col)
        self.pos += 1
        return t

    def expr(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        if self.peek().kind == "op" and self.peek().text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            return Bin("^", node, self.unary())
        return node

    def atom(self):
        t = self.peek()
        if t.kind == "num":
            self.take()
            return Num(float(t.text))
        if t.kind == "lparen":
            self.take()
            node = self.expr()
            self.take("rparen")
            return node
        if t.kind == "ident":
            self.take()
            if self.peek().kind == "lparen":
                return self.call(t)
            return self.name(t)
        raise ParseError(f"expected an expression, found {t.text!r}", t.line, t.col)

    def call(self, t: _Tok):
        self.take("lparen")
        args = [self.expr()]
        while self.peek().kind == "comma":
            self.take()
            args.append(self.expr())
        self.take("rparen")
        if t.text == "norm2":
            if len(args) != 1:
                raise ParseError("norm2 takes exactly one argument", t.line, t.col)
            a = args[0]
            if isinstance(a, Var) and a.block in BLOCKS and a.index == -1:
                return Call("norm2", (BlockRef(a.block),))
            raise ParseError("norm2 expects a bare block name like norm2(v)", t.line, t.col)
        if t.text not in FUNCTIONS:
            raise ParseError(f"unknown function {t.text!r}", t.line, t.col)
        if len(args) != 1:
            raise ParseError(f"{t.text} takes exactly one argument", t.line, t.col)
        return Call(t.text, tuple(args))

    def name(self, t: _Tok):
        s = t.text
        if s in CONSTANTS:
            return Const(s)
        if s == "p":
            return Var("p", 0)
        if s in BLOCKS:
            # bare block name: only meaningful inside norm2, flagged there
            return Var(s, -1)
        if s[0] in BLOCKS and s[1:].isdigit():
            idx = int(s[1:])
            if not 1 <= idx <= self.dim:
                raise ParseError(
                    f"index out of range: {s} with dimension {self.dim}", t.line, t.col
                )
            return Var(s[0], idx - 1)
        raise ParseError(f"unknown identifier {s!r}", t.line, t.col)


def parse(source: str, dim: int):
    """Parse a source string into an AST; raises ParseError with position."""
    if dim < 1:
        raise MetricError("dimension must be positive")
    p = _Parser(_lex(source), dim)
    node = p.expr()
    tail = p.peek()
    if tail.kind != "eof":
        raise ParseError(f"trailing input {tail.text!r}", tail.line, tail.col)
    _reject_bare_blocks(node)
    return node


def _reject_bare_blocks(node):
    if isinstance(node, Var) and node.index == -1:
        raise MetricError(f"bare block name {node.block!r} outside norm2")
    for child in _children(node):
        _reject_bare_blocks(child)


def _children(node):
    if isinstance(node, Neg):
        return (node.arg,)
    if isinstance(node, Bin):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    return ()


# --- evaluation -------------------------------------------------------------


def eval_expr(node, x=None, v=None, u=None, p=None) -> np.ndarray:
    """Vectorized evaluation; blocks are (..., n) arrays, p is (...)."""
    env = {"x": x, "v": v, "u": u, "p": p}

    def ev(nd):
        if isinstance(nd, Num):
            return nd.value
        if isinstance(nd, Const):
            return CONSTANTS[nd.name]
        if isinstance(nd, Var):
            if nd.block == "p":
                if p is None:
                    raise MetricError("expression uses p but none was provided")
                return np.asarray(p, dtype=float)
            arr = env[nd.block]
            if arr is None:
                raise MetricError(f"expression uses {nd.block!r} but none was provided")
            return np.asarray(arr, dtype=float)[..., nd.index]
        if isinstance(nd, Neg):
            return -ev(nd.arg)
        if isinstance(nd, Bin):
            a, b = ev(nd.left), ev(nd.right)
            if nd.op == "+":
                return a + b
            if nd.op == "-":
                return a - b
            if nd.op == "*":
                return a * b
            if nd.op == "/":
                return a / b
            if nd.op == "^":
                return a**b
        if isinstance(nd, Call):
            if nd.fname == "norm2":
                block = nd.args[0].block
                arr = env[block]
                if arr is None:
                    raise MetricError(f"expression uses {block!r} but none was provided")
                return np.linalg.norm(np.asarray(arr, dtype=float), axis=-1)
            return FUNCTIONS[nd.fname](ev(nd.args[0]))
        raise MetricError(f"cannot evaluate node {nd!r}")

    return np.asarray(ev(node), dtype=float)


# --- printing ---------------------------------------------------------------

_LEVEL_ADD, _LEVEL_MUL, _LEVEL_UNARY, _LEVEL_POW, _LEVEL_ATOM = 1, 2, 3, 4, 5


def _level(node) -> int:
    if isinstance(node, Bin):
        if node.op in "+-":
            return _LEVEL_ADD
        if node.op in "*/":
            return _LEVEL_MUL
        return _LEVEL_POW
    if isinstance(node, Neg):
        return _LEVEL_UNARY
    return _LEVEL_ATOM


def to_source(node) -> str:
    """Canonical printing with minimal parentheses; reparses to an equal AST."""

    def wrap(child, need: int) -> str:
        s = to_source(child)
        return f"({s})" if _level(child) < need else s

    if isinstance(node, Num):
        return repr(node.value) if node.value != int(node.value) else str(int(node.value))
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return "p" if node.block == "p" else f"{node.block}{node.index + 1}"
    if isinstance(node, BlockRef):
        return node.block
    if isinstance(node, Neg):
        return "-" + wrap(node.arg, _LEVEL_UNARY)
    if isinstance(node, Bin):
        if node.op in "+-":
            # left-associative: the right child must bind tighter than +/-
            return f"{wrap(node.left, _LEVEL_ADD)} {node.op} {wrap(node.right, _LEVEL_MUL)}"
        if node.op in "*/":
            return f"{wrap(node.left, _LEVEL_MUL)}{node.op}{wrap(node.right, _LEVEL_UNARY)}"
        # '^' is right-associative and binds above unary minus
        return f"{wrap(node.left, _LEVEL_ATOM)}^{wrap(node.right, _LEVEL_UNARY)}"
    if isinstance(node, Call):
        return f"{node.fname}({', '.join(to_source(a) for a in node.args)})"
    raise MetricError(f"cannot print node {node!r}")


# --- gates and constructors --------------------------------------------------


def uses_abs(node) -> bool:
    if isinstance(node, Call) and node.fname == "abs":
        return True
    return any(uses_abs(c) for c in _children(node))


def used_blocks(node) -> set:
    out = set()
    if isinstance(node, Var):
        out.add(node.block)
    if isinstance(node, BlockRef):
        out.add(node.block)
    for c in _children(node):
        out |= used_blocks(c)
    return out


@dataclass(frozen=True)
class HomogeneityReport:
    max_defect: float
    tol: float
    n_samples: int

    @property
    def passed(self) -> bool:
        return self.max_defect <= self.tol


def check_homogeneity(
    node,
    dim: int,
    n_samples: int = 64,
    tol: float = 1e-9,
    seed: int = 0,
    scales=(0.5, 2.0, 7.0),
) -> HomogeneityReport:
    """Sampled gate for positive 1-homogeneity in v: L(x, s v) = s L(x, v)."""
    g = rng(seed)
    x = g.uniform(-1.0, 1.0, size=(n_samples, dim))
    v = g.normal(size=(n_samples, dim))
    v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-9)
    base = eval_expr(node, x=x, v=v)
    worst = 0.0
    for s in scales:
        scaled = eval_expr(node, x=x, v=s * v)
        worst = max(worst, float(np.max(np.abs(scaled - s * base) / (1.0 + np.abs(base)))))
    return HomogeneityReport(max_defect=worst, tol=tol, n_samples=n_samples)


def density_from_expr(
    source: str,
    dim: int,
    lattice: Optional[Lattice] = None,
    periodic: bool = False,
    name: str = "",
    tol: float = 1e-9,
    seed: int = 0,
) -> OneDensity:
    """Parse, gate on homogeneity, and wrap as a OneDensity.

    Expressions containing abs are admitted but marked C0 (no derivative
    access downstream).
    """
    node = parse(source, dim)
    blocks = used_blocks(node)
    if not blocks <= {"x", "v"}:
        raise MetricError(f"a Lagrangian may use x and v only, found {sorted(blocks)}")
    rep = check_homogeneity(node, dim, tol=tol, seed=seed)
    if not rep.passed:
        raise MetricError(
            f"expression is not 1-homogeneous in v (defect {rep.max_defect:.3g})"
        )
    if lattice is None and periodic:
        lattice = Lattice.standard(dim)

    def fn(x, v):
        return eval_expr(node, x=x, v=v)

    smooth = "C0" if uses_abs(node) else "C2"
    return OneDensity(dim=dim, fn=fn, smoothness=smooth, lattice=lattice, name=name or source)


def metric_from_expr(source: str, dim: int, **kw) -> FinslerMetric:
    """Like density_from_expr but tagged as a Finsler metric (the caller
    asserts positivity/convexity; samplers downstream still check)."""
    d = density_from_expr(source, dim, **kw)
    probe = d(np.zeros(dim), np.eye(dim)[0])
    rev_probe = bool(
        abs(d(np.zeros(dim), np.eye(dim)[0]) - d(np.zeros(dim), -np.eye(dim)[0])) < 1e-12
    )
    if not np.isfinite(probe):
        raise MetricError("expression does not evaluate at a basis direction")
    return FinslerMetric(
        dim=d.dim, fn=d.fn, smoothness=d.smoothness, lattice=d.lattice, name=d.name,
        reversible=rev_probe,
    )


def measure_density_from_expr(source: str, dim: int) -> Callable:
    """Density m(u, p) for hyperplane measures: variables u1..un and p."""
    node = parse(source, dim)
    blocks = used_blocks(node)
    if not blocks <= {"u", "p"}:
        raise MetricError(f"a measure density may use u and p only, found {sorted(blocks)}")

    def m(u, p):
        return eval_expr(node, u=u, p=p)

    return m
