"""Scalar expressions on a chart of TM.

Nodes are hash-consed: two structurally equal trees are the same Python
object, so ``==`` is identity and derivative memo tables can be keyed on
nodes directly.  Variables are ``x1..xn`` (base coordinates) and ``y1..yn``
(fibre coordinates).

Two families of constructors exist.  The ``raw_*`` functions build exactly
the requested node (the parser uses them, so ``parse(print(e))`` reproduces
``e``).  The unprefixed ones (:func:`add`, :func:`mul`, ...) apply the basic
rewrite rules of :func:`simplify_basic` on the fly and are what
differentiation uses.
"""

from __future__ import annotations

import math
import threading
import weakref
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Expr", "ParseError", "EvaluationError", "ExpressionBudgetError",
    "const", "var", "add", "sub", "mul", "div", "neg", "power", "sqrt", "func",
    "parse_expr", "to_text", "differentiate", "simplify_basic", "evaluate",
    "Tape", "node_count", "ZERO", "ONE",
]

# node kinds
CONST = "const"
VAR = "var"
NEG = "neg"
SUM = "sum"
PROD = "prod"
QUOT = "quot"
POW = "pow"
SQRT = "sqrt"
FUNCS = ("sin", "cos", "exp", "log")


class ParseError(ValueError):
    """Syntax or name error in expression text."""

    def __init__(self, message: str, offset: int, expected: str = ""):
        self.offset = offset
        self.message = message
        self.expected = expected
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at offset {offset}{hint}")


class EvaluationError(ArithmeticError):
    """Singular or non-finite evaluation; ``subtree`` is the offending node."""

    def __init__(self, message: str, subtree: "Expr", sample: int | None = None):
        self.subtree = subtree
        self.sample = sample
        where = "" if sample is None else f" (sample {sample})"
        super().__init__(f"{message}{where} in {_short(to_text(subtree))}")


class ExpressionBudgetError(RuntimeError):
    pass


def _short(text: str, limit: int = 120) -> str:
    return text if len(text) <= limit else text[: limit - 3] + "..."


_lock = threading.Lock()
_table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


class Expr:
    """Immutable, interned expression node.  Build through the module functions."""

    __slots__ = ("kind", "payload", "args", "vmask", "_hash", "_dcache", "__weakref__")

    kind: str
    payload: object
    args: tuple["Expr", ...]
    vmask: int

    def __repr__(self) -> str:
        return f"Expr({to_text(self)!r})"

    def __str__(self) -> str:
        return to_text(self)

    def __hash__(self) -> int:
        return self._hash

    # equality is identity thanks to interning
    def __eq__(self, other: object) -> bool:
        return self is other

    def __ne__(self, other: object) -> bool:
        return self is not other

    @property
    def is_const(self) -> bool:
        return self.kind == CONST

    @property
    def is_zero(self) -> bool:
        return self.kind == CONST and self.payload[1] == 0

    @property
    def is_one(self) -> bool:
        return self.kind == CONST and self.payload[1] == 1

    def depends_on(self, axis: str, index: int) -> bool:
        return bool(self.vmask >> _bit(axis, index) & 1)

    # operator sugar, simplifying
    def __add__(self, other): return add(self, _lift(other))
    def __radd__(self, other): return add(_lift(other), self)
    def __sub__(self, other): return sub(self, _lift(other))
    def __rsub__(self, other): return sub(_lift(other), self)
    def __mul__(self, other): return mul(self, _lift(other))
    def __rmul__(self, other): return mul(_lift(other), self)
    def __truediv__(self, other): return div(self, _lift(other))
    def __rtruediv__(self, other): return div(_lift(other), self)
    def __neg__(self): return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)


def _bit(axis: str, index: int) -> int:
    return 2 * (index - 1) + (axis == "y")


def _intern(kind: str, payload, args: tuple) -> Expr:
    key = (kind, payload, tuple(map(id, args)))
    node = _table.get(key)
    if node is not None:
        return node
    with _lock:
        node = _table.get(key)
        if node is not None:
            return node
        node = object.__new__(Expr)
        node.kind = kind
        node.payload = payload
        node.args = args
        mask = 0
        for a in args:
            mask |= a.vmask
        if kind == VAR:
            mask = 1 << _bit(*payload)
        node.vmask = mask
        node._hash = hash(key)
        node._dcache = {}
        _table[key] = node
        return node


def _const_key(value) -> tuple:
    if isinstance(value, Fraction):
        return ("q", value)
    return ("f", float(value))


def _num(value):
    """Normalise a Python number to Fraction (exact) or float."""
    if isinstance(value, bool):
        raise TypeError("bool is not a number")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"non-finite constant {value}")
    return value


def const(value) -> Expr:
    v = _num(value)
    return _intern(CONST, _const_key(v), ())


def _cval(e: Expr):
    return e.payload[1]


def var(axis: str, index: int) -> Expr:
    if axis not in ("x", "y") or index < 1:
        raise ValueError(f"bad variable {axis}{index}")
    return _intern(VAR, (axis, int(index)), ())


def _lift(v) -> Expr:
    return v if isinstance(v, Expr) else const(v)


ZERO = const(0)
ONE = const(1)
HALF = const(Fraction(1, 2))
MINUS_ONE = const(-1)


# ---------------------------------------------------------------- raw nodes

def raw_neg(a: Expr) -> Expr:
    return _intern(NEG, None, (a,))


def raw_sum(*args: Expr) -> Expr:
    return _intern(SUM, None, tuple(args))


def raw_prod(*args: Expr) -> Expr:
    return _intern(PROD, None, tuple(args))


def raw_quot(a: Expr, b: Expr) -> Expr:
    return _intern(QUOT, None, (a, b))


def raw_pow(a: Expr, exponent) -> Expr:
    return _intern(POW, Fraction(exponent), (a,))


def raw_func(name: str, a: Expr) -> Expr:
    if name == SQRT:
        return _intern(SQRT, None, (a,))
    if name not in FUNCS:
        raise ValueError(f"unknown function {name}")
    return _intern(name, None, (a,))


# ------------------------------------------------------ simplifying builders

def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []
    c = Fraction(0)
    for t in terms:
        parts = t.args if t.kind == SUM else (t,)
        for p in parts:
            if p.kind == CONST:
                c = c + _cval(p)
            else:
                flat.append(p)
    if c != 0:
        flat.append(const(c))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return raw_sum(*flat)


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def neg(a: Expr) -> Expr:
    if a.kind == CONST:
        return const(-_cval(a))
    if a.kind == NEG:
        return a.args[0]
    if a.kind == PROD and a.args[0].kind == CONST:
        return mul(const(-_cval(a.args[0])), *a.args[1:])
    return raw_neg(a)


def mul(*factors: Expr) -> Expr:
    # Constant coefficients are pulled out and folded; non-constant product
    # children stay nested so products never grow wide (keeps d/dv linear).
    rest: list[Expr] = []
    c = Fraction(1)
    for f in factors:
        if f.kind == NEG:
            c = -c
            f = f.args[0]
        if f.kind == CONST:
            c = c * _cval(f)
            continue
        if f.kind == PROD and f.args[0].kind == CONST:
            c = c * _cval(f.args[0])
            inner = f.args[1:]
            f = inner[0] if len(inner) == 1 else raw_prod(*inner)
        rest.append(f)
    if c == 0:
        return ZERO
    if not rest:
        return const(c)
    body = rest[0] if len(rest) == 1 else raw_prod(*rest)
    if c == 1:
        return body
    if c == -1:
        return raw_neg(body)
    if body.kind == PROD:
        return raw_prod(const(c), *body.args)
    return raw_prod(const(c), body)


def div(a: Expr, b: Expr) -> Expr:
    if a.is_zero:
        return ZERO
    if b.is_one:
        return a
    if b.kind == CONST and _cval(b) != 0:
        return mul(const(_inv(_cval(b))), a)
    if a is b:
        return ONE
    if b.kind == NEG:
        return neg(div(a, b.args[0]))
    return raw_quot(a, b)


def _inv(v):
    return Fraction(1) / v if isinstance(v, Fraction) else 1.0 / v


def power(base: Expr, exponent) -> Expr:
    p = Fraction(exponent) if not isinstance(exponent, Fraction) else exponent
    if p == 0:
        return ONE
    if p == 1:
        return base
    if base.is_one:
        return ONE
    if base.kind == CONST:
        v = _cval(base)
        folded = _const_pow(v, p)
        if folded is not None:
            return const(folded)
    if base.kind == SQRT and p.denominator == 1 and p.numerator % 2 == 0:
        return power(base.args[0], p / 2)
    if base.kind == POW and p.denominator == 1:
        return power(base.args[0], base.payload * p)
    if base.kind == NEG and p.denominator == 1:
        inner = power(base.args[0], p)
        return neg(inner) if p.numerator % 2 else inner
    return raw_pow(base, p)


def _const_pow(v, p: Fraction):
    if v == 0:
        return Fraction(0) if p > 0 else None
    if p.denominator == 1:
        try:
            return v ** int(p)
        except (OverflowError, ZeroDivisionError):
            return None
    if v < 0:
        return None
    if isinstance(v, Fraction):
        root = _exact_root(v, p.denominator)
        if root is not None:
            return root ** p.numerator
    return float(v) ** float(p)


def _exact_root(v: Fraction, k: int):
    def iroot(n: int):
        r = round(n ** (1.0 / k))
        for cand in (r - 1, r, r + 1):
            if cand >= 0 and cand ** k == n:
                return cand
        return None
    num, den = iroot(v.numerator), iroot(v.denominator)
    if num is None or den is None:
        return None
    return Fraction(num, den)


def sqrt(a: Expr) -> Expr:
    if a.kind == CONST:
        v = _cval(a)
        if v >= 0:
            if isinstance(v, Fraction):
                r = _exact_root(v, 2)
                if r is not None:
                    return const(r)
            return const(math.sqrt(v))
    return raw_func(SQRT, a)


_FOLD = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "log": math.log}


def func(name: str, a: Expr) -> Expr:
    if name == SQRT:
        return sqrt(a)
    if a.kind == CONST:
        v = _cval(a)
        if v == 0 and name in ("sin", "exp", "cos"):
            return ZERO if name == "sin" else ONE
        if v == 1 and name == "log":
            return ZERO
        if name != "log" or v > 0:
            return const(_FOLD[name](float(v)))
    return raw_func(name, a)


def simplify_basic(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up through the simplifying constructors."""
    memo: dict[int, Expr] = {}
    for node in _postorder([e]):
        args = tuple(memo[id(a)] for a in node.args)
        memo[id(node)] = _rebuild(node, args)
    return memo[id(e)]


def _rebuild(node: Expr, args: tuple) -> Expr:
    k = node.kind
    if k in (CONST, VAR):
        return node
    if k == NEG:
        return neg(args[0])
    if k == SUM:
        return add(*args)
    if k == PROD:
        return mul(*args)
    if k == QUOT:
        return div(*args)
    if k == POW:
        return power(args[0], node.payload)
    return func(k, args[0])


# --------------------------------------------------------- differentiation

def differentiate(e: Expr, axis: str, index: int) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``axis``+``index``.

    Results are memoised on the node, so repeated requests (and shared
    subtrees) cost one dictionary lookup.
    """
    key = (axis, index)
    bit = 1 << _bit(axis, index)
    # iterative post-order over the nodes that actually depend on the variable
    if e.vmask & bit and key not in e._dcache:
        stack = [(e, False)]
        seen: set[int] = set()
        while stack:
            node, expanded = stack.pop()
            if expanded:
                node._dcache[key] = _d(node, key, bit)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in node.args:
                if child.vmask & bit and key not in child._dcache and id(child) not in seen:
                    stack.append((child, False))
    return _dget(e, key, bit)


def _dget(node: Expr, key, bit) -> Expr:
    if not node.vmask & bit:
        return ZERO
    return node._dcache[key]


def _d(node: Expr, key, bit) -> Expr:
    k = node.kind
    if k == VAR:
        return ONE
    a = node.args
    if k == NEG:
        return neg(_dget(a[0], key, bit))
    if k == SUM:
        return add(*(_dget(t, key, bit) for t in a))
    if k == PROD:
        terms = []
        for i, f in enumerate(a):
            df = _dget(f, key, bit)
            if df.is_zero:
                continue
            terms.append(mul(*a[:i], df, *a[i + 1:]))
        return add(*terms)
    if k == QUOT:
        u, v = a
        du, dv = _dget(u, key, bit), _dget(v, key, bit)
        first = div(du, v)
        if dv.is_zero:
            return first
        return sub(first, div(mul(u, dv), power(v, 2)))
    u = a[0]
    du = _dget(u, key, bit)
    if k == POW:
        p = node.payload
        return mul(const(p), power(u, p - 1), du)
    if k == SQRT:
        return div(mul(HALF, du), node)
    if k == "sin":
        return mul(func("cos", u), du)
    if k == "cos":
        return neg(mul(func("sin", u), du))
    if k == "exp":
        return mul(node, du)
    if k == "log":
        return div(du, u)
    raise AssertionError(k)


# ------------------------------------------------------------ traversal

def _postorder(roots: Iterable[Expr]) -> list[Expr]:
    order: list[Expr] = []
    seen: set[int] = set()
    for root in roots:
        if id(root) in seen:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in reversed(node.args):
                if id(child) not in seen:
                    stack.append((child, False))
    return order


def node_count(roots: Expr | Iterable[Expr]) -> int:
    """Number of distinct nodes in the DAG below ``roots``."""
    if isinstance(roots, Expr):
        roots = [roots]
    return len(_postorder(roots))


def _max_index(e: Expr) -> int:
    m, i = e.vmask, 0
    while m:
        m >>= 2
        i += 1
    return i


# ------------------------------------------------------------------ parser

_FUNC_NAMES = (SQRT,) + FUNCS


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.pos = 0

    def error(self, message: str, expected: str = "", at: int | None = None):
        pos = self.pos if at is None else at
        raise ParseError(message, min(pos, max(len(self.text) - 1, 0)), expected)

    def skip(self):
        t = self.text
        while self.pos < len(t) and t[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, ch: str, expected: str | None = None):
        if self.peek() != ch:
            found = self.peek() or "end of input"
            self.error(f"unexpected {found!r}", expected or repr(ch))
        self.pos += 1

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek():
            self.error(f"unexpected {self.peek()!r}", "operator or end of input")
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            t = self.term()
            terms.append(t if op == "+" else raw_neg(t))
        return terms[0] if len(terms) == 1 else raw_sum(*terms)

    def term(self) -> Expr:
        acc = [self.factor()]
        while self.peek() in ("*", "/"):
            op = self.text[self.pos]
            self.pos += 1
            f = self.factor()
            if op == "*":
                acc.append(f)
            else:
                num = acc[0] if len(acc) == 1 else raw_prod(*acc)
                acc = [raw_quot(num, f)]
        return acc[0] if len(acc) == 1 else raw_prod(*acc)

    def factor(self) -> Expr:
        negate = False
        if self.peek() == "-":
            self.pos += 1
            negate = True
        b = self.base()
        if self.peek() == "^":
            self.pos += 1
            b = raw_pow(b, self.exponent())
        return raw_neg(b) if negate else b

    def exponent(self) -> Fraction:
        if self.peek() == "(":
            self.pos += 1
            sign = 1
            if self.peek() == "-":
                self.pos += 1
                sign = -1
            num = self.number()
            if self.peek() == "/":
                self.pos += 1
                den = self.number()
                if den == 0:
                    self.error("zero denominator in exponent")
                num = num / den
            self.take(")")
            return sign * num
        if not self.peek() or not (self.peek().isdigit() or self.peek() == "."):
            self.error("bad exponent", "number or '('")
        return self.number()

    def number(self) -> Fraction:
        self.skip()
        t, start = self.text, self.pos
        i = start
        while i < len(t) and t[i].isdigit():
            i += 1
        if i < len(t) and t[i] == ".":
            i += 1
            while i < len(t) and t[i].isdigit():
                i += 1
        if i < len(t) and t[i] in "eE":
            j = i + 1
            if j < len(t) and t[j] in "+-":
                j += 1
            if j < len(t) and t[j].isdigit():
                while j < len(t) and t[j].isdigit():
                    j += 1
                i = j
        lit = t[start:i]
        if not lit or lit == ".":
            self.error("expected a number", "number")
        self.pos = i
        return Fraction(lit)

    def base(self) -> Expr:
        ch = self.peek()
        start = self.pos
        if not ch:
            self.error("unexpected end of input", "number, variable, function or '('")
        if ch.isdigit() or ch == ".":
            return const(self.number())
        if ch == "(":
            self.pos += 1
            e = self.expr()
            self.take(")", "')'")
            return e
        if ch.isalpha():
            t = self.text
            i = start
            while i < len(t) and t[i].isalpha():
                i += 1
            name = t[start:i]
            if name in _FUNC_NAMES:
                self.pos = i
                self.take("(", "'(' after function name")
                arg = self.expr()
                self.take(")", "')'")
                return raw_func(name, arg)
            j = i
            while j < len(t) and t[j].isdigit():
                j += 1
            if name in ("x", "y") and j > i:
                index = int(t[i:j])
                if not 1 <= index <= self.dim:
                    self.error(f"variable index out of range: {t[start:j]} (dim={self.dim})",
                               at=start)
                self.pos = j
                return var(name, index)
            while j < len(t) and t[j].isalnum():
                j += 1
            self.error(f"unknown identifier {t[start:j]!r}", "x<i>, y<i> or sqrt/sin/cos/exp/log",
                       at=start)
        self.error(f"unexpected {ch!r}", "number, variable, function or '('")


def parse_expr(text: str, dim: int) -> Expr:
    """Parse DSL text into an (unsimplified) expression over ``dim`` coordinates.

    >>> to_text(parse_expr("x2*y1^2", 2))
    'x2*y1^2'
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    if not text or not text.strip():
        raise ParseError("empty expression", 0, "expression")
    return _Parser(text, dim).parse()


# ----------------------------------------------------------------- printer

def _fmt_number(v) -> str | None:
    """Literal text for a non-negative constant, or None if it needs an operator."""
    if isinstance(v, float):
        return repr(v) if v >= 0 else None
    if v < 0:
        return None
    if v.denominator == 1:
        return str(v.numerator)
    d = v.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return None
    places = max(twos, fives)
    scaled = v * 10 ** places
    s = str(scaled.numerator).rjust(places + 1, "0")
    return s[:-places] + "." + s[-places:]


def _fmt_const_expr(v) -> str:
    lit = _fmt_number(v)
    if lit is not None:
        return lit
    if isinstance(v, float):
        return "-" + repr(-v)
    if v < 0:
        inner = _fmt_number(-v)
        if inner is not None:
            return "-" + inner
        return f"-{-v.numerator}/{v.denominator}"
    return f"{v.numerator}/{v.denominator}"


def _fmt_exponent(p: Fraction) -> str:
    lit = _fmt_number(p)
    if lit is not None:
        return lit
    if p.denominator == 1:
        return f"({p.numerator})"
    return f"({p.numerator}/{p.denominator})"


def to_text(e: Expr) -> str:
    """Render ``e`` in the DSL so that it parses back to the same tree."""
    return _p_expr(e)


def _p_expr(e: Expr) -> str:
    if e.kind != SUM:
        return _p_term(e)
    parts = [_p_first_term(e.args[0])]
    for t in e.args[1:]:
        if t.kind == NEG:
            parts.append(" - " + _p_term(t.args[0]))
        else:
            parts.append(" + " + _p_term(t))
    return "".join(parts)


def _p_first_term(e: Expr) -> str:
    if e.kind == NEG:
        return _p_factor(e)
    return _p_term(e)


def _p_term(e: Expr) -> str:
    if e.kind == PROD:
        first = e.args[0]
        head = _p_term(first) if first.kind == QUOT else _p_factor(first)
        return head + "".join("*" + _p_factor(f) for f in e.args[1:])
    if e.kind == QUOT:
        num, den = e.args
        head = _p_term(num) if num.kind in (PROD, QUOT) else _p_factor(num)
        return head + "/" + _p_factor(den)
    if e.kind == CONST:
        return _fmt_const_expr(_cval(e))
    if e.kind == SUM:
        return "(" + _p_expr(e) + ")"
    return _p_factor(e)


def _p_factor(e: Expr) -> str:
    if e.kind == NEG:
        inner = e.args[0]
        if inner.kind == POW:
            return "-" + _p_pow(inner)
        return "-" + _p_base(inner)
    if e.kind == POW:
        return _p_pow(e)
    return _p_base(e)


def _p_pow(e: Expr) -> str:
    return _p_base(e.args[0]) + "^" + _fmt_exponent(e.payload)


def _p_base(e: Expr) -> str:
    k = e.kind
    if k == CONST:
        lit = _fmt_number(_cval(e))
        return lit if lit is not None else "(" + _fmt_const_expr(_cval(e)) + ")"
    if k == VAR:
        return f"{e.payload[0]}{e.payload[1]}"
    if k == SQRT or k in FUNCS:
        return f"{k}({_p_expr(e.args[0])})"
    return "(" + _p_expr(e) + ")"


# -------------------------------------------------------------- evaluation

_OPS = {CONST: 0, VAR: 1, NEG: 2, SUM: 3, PROD: 4, QUOT: 5, POW: 6, SQRT: 7,
        "sin": 8, "cos": 9, "exp": 10, "log": 11}


class Tape:
    """A list of expressions flattened into one evaluation program.

    Evaluation is vectorised over samples: ``tape(X, Y)`` with ``X`` and
    ``Y`` of shape ``(S, n)`` returns an array of shape ``(len(roots), S)``.
    Shared subexpressions are computed once.
    """

    def __init__(self, roots: Sequence[Expr]):
        self.roots = list(roots)
        order = _postorder(self.roots)
        slot = {id(node): i for i, node in enumerate(order)}
        self.nodes = order
        self.code = [(_OPS[n.kind], tuple(slot[id(a)] for a in n.args), n.payload) for n in order]
        self.out = [slot[id(r)] for r in self.roots]
        self._fn = None

    def __len__(self) -> int:
        return len(self.nodes)

    def fast(self, X, Y) -> np.ndarray:
        """Unchecked evaluation through generated straight-line code.

        Singularities surface as inf/nan in the result; call with
        ``check=True`` to locate them.
        """
        if self._fn is None:
            self._fn = self._generate()
        # complex inputs are allowed (complex-step differentiation)
        dtype = complex if np.iscomplexobj(X) or np.iscomplexobj(Y) else float
        X = np.atleast_2d(np.asarray(X, dtype=dtype))
        Y = np.atleast_2d(np.asarray(Y, dtype=dtype))
        out = np.empty((len(self.out), X.shape[0]), dtype=dtype)
        with np.errstate(all="ignore"):
            self._fn(X.T, Y.T, out)
        return out

    def _generate(self):
        lines = ["def _tape(X, Y, out):"]
        names = {1: "+", 2: "*"}
        for i, (op, a, payload) in enumerate(self.code):
            if op == 0:
                rhs = repr(float(payload[1]))
            elif op == 1:
                rhs = f"{'X' if payload[0] == 'x' else 'Y'}[{payload[1] - 1}]"
            elif op == 2:
                rhs = f"-v{a[0]}"
            elif op in (3, 4):
                rhs = f" {names[op - 2]} ".join(f"v{j}" for j in a)
            elif op == 5:
                rhs = f"v{a[0]} / v{a[1]}"
            elif op == 6:
                p = payload
                if p.denominator == 1:
                    ip = int(p)
                    if ip == 2:
                        rhs = f"v{a[0]} * v{a[0]}"
                    elif ip == -1:
                        rhs = f"1.0 / v{a[0]}"
                    else:
                        rhs = f"v{a[0]} ** {float(ip) if ip < 0 else ip}"
                elif p == Fraction(1, 2):
                    rhs = f"_np.sqrt(v{a[0]})"
                else:
                    rhs = f"_np.power(v{a[0]}, {float(p)!r})"
            else:
                fname = {7: "sqrt", 8: "sin", 9: "cos", 10: "exp", 11: "log"}[op]
                rhs = f"_np.{fname}(v{a[0]})"
            lines.append(f"    v{i} = {rhs}")
        for r, i in enumerate(self.out):
            lines.append(f"    out[{r}] = v{i}")
        src = "\n".join(lines)
        ns = {"_np": np}
        exec(compile(src, "<tape>", "exec"), ns)
        return ns["_tape"]

    def __call__(self, X, Y, check: bool = True) -> np.ndarray:
        if not check:
            return self.fast(X, Y)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        S = X.shape[0]
        vals: list = [None] * len(self.code)
        with np.errstate(all="ignore"):
            for i, (op, a, payload) in enumerate(self.code):
                if op == 0:
                    v = float(payload[1])
                elif op == 1:
                    axis, index = payload
                    src = X if axis == "x" else Y
                    if index > src.shape[1]:
                        raise IndexError(f"variable {axis}{index} outside chart of dim {src.shape[1]}")
                    v = src[:, index - 1]
                elif op == 2:
                    v = -vals[a[0]]
                elif op == 3:
                    v = vals[a[0]]
                    for j in a[1:]:
                        v = v + vals[j]
                elif op == 4:
                    v = vals[a[0]]
                    for j in a[1:]:
                        v = v * vals[j]
                elif op == 5:
                    den = vals[a[1]]
                    if check and np.any(np.asarray(den) == 0):
                        self._fail("division by zero", i, np.asarray(den) == 0, S)
                    v = vals[a[0]] / den
                elif op == 6:
                    b = vals[a[0]]
                    p = payload
                    if p.denominator == 1:
                        ip = int(p)
                        if check and ip < 0 and np.any(np.asarray(b) == 0):
                            self._fail("division by zero", i, np.asarray(b) == 0, S)
                        v = b ** float(ip) if ip < 0 else b ** ip
                    else:
                        if check:
                            bad = np.asarray(b) < 0 if p > 0 else np.asarray(b) <= 0
                            if np.any(bad):
                                self._fail("fractional power of non-positive base", i, bad, S)
                        v = np.power(b, float(p))
                elif op == 7:
                    b = vals[a[0]]
                    if check and np.any(np.asarray(b) < 0):
                        self._fail("sqrt of negative argument", i, np.asarray(b) < 0, S)
                    v = np.sqrt(b)
                elif op == 11:
                    b = vals[a[0]]
                    if check and np.any(np.asarray(b) <= 0):
                        self._fail("log of non-positive argument", i, np.asarray(b) <= 0, S)
                    v = np.log(b)
                elif op == 8:
                    v = np.sin(vals[a[0]])
                elif op == 9:
                    v = np.cos(vals[a[0]])
                else:
                    v = np.exp(vals[a[0]])
                vals[i] = v
        out = np.empty((len(self.out), S))
        for r, i in enumerate(self.out):
            out[r] = vals[i]
        if check and not np.all(np.isfinite(out)):
            self._locate_nonfinite(vals, S)
        return out

    def _fail(self, message, i, mask, S):
        mask = np.broadcast_to(mask, (S,))
        raise EvaluationError(message, self.nodes[i], int(np.argmax(mask)))

    def _locate_nonfinite(self, vals, S):
        for i, v in enumerate(vals):
            bad = ~np.isfinite(np.broadcast_to(v, (S,)))
            if np.any(bad):
                raise EvaluationError("non-finite result", self.nodes[i], int(np.argmax(bad)))


def evaluate(e: Expr, x: Sequence[float], y: Sequence[float]) -> float:
    """IEEE-double value of ``e`` at the single point ``(x, y)``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    if e.kind == CONST:
        return float(_cval(e))
    return float(Tape([e])(x, y)[0, 0])
