"""Scalar expression trees over state variables ``x1..xn`` and time ``t``.

Expressions are immutable frozen dataclasses, so structural equality and
hashing come for free. The grammar accepted by :func:`parse_expression`::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := primary (('^' | '**') exponent)*
    exponent:= ('-' | '+')? primary          # must fold to a constant
    primary := NUMBER | 'x'INT | 't' | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := sin | cos | exp | ln | log | sqrt

Binary subtraction ``a - b`` is parsed as ``add(a, neg(b))``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

UNARY_OPS = ("neg", "sin", "cos", "exp", "ln", "sqrt")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")

ZERO_TOL = 1e-9


class ExpressionError(ValueError):
    """Base class for expression failures."""


class ParseError(ExpressionError):
    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset
        self.text = text


class VariableRangeError(ParseError):
    pass


class EvaluationError(ExpressionError):
    """Domain error raised while evaluating; carries the subtree and point."""

    def __init__(self, message: str, subtree: "Expr", x=None, t=None):
        where = ""
        if x is not None:
            where = f" at x={tuple(float(v) for v in x)}, t={t}"
        super().__init__(f"{message} in '{subtree}'{where}")
        self.reason = message
        self.subtree = subtree
        self.x = None if x is None else tuple(float(v) for v in x)
        self.t = t

    def at(self, x, t) -> "EvaluationError":
        return EvaluationError(self.reason, self.subtree, x, t)


# ---------------------------------------------------------------------------
# Tree nodes


@dataclass(frozen=True)
class Expr:
    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based


@dataclass(frozen=True)
class Time(Expr):
    pass


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


ZERO = Const(0.0)
ONE = Const(1.0)
T = Time()

Variable = Union[int, str]


def x(k: int) -> Var:
    return Var(k)


def add(a: Expr, b: Expr) -> Binary:
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Binary:
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Binary:
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Binary:
    return Binary("div", a, b)


def pow_(a: Expr, c: float) -> Binary:
    return Binary("pow", a, Const(c))


def neg(a: Expr) -> Unary:
    return Unary("neg", a)


def func(name: str, a: Expr) -> Unary:
    return Unary(name, a)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<var>x\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)

_FUNCS = {"sin": "sin", "cos": "cos", "exp": "exp", "ln": "ln", "log": "ln", "sqrt": "sqrt"}


class _Parser:
    def __init__(self, text: str, n: int | None):
        self.text = text
        self.n = n
        self.tokens: list[tuple[str, str, int]] = []
        # byte offsets so errors point into the UTF-8 encoded model file
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise ParseError(f"unexpected character {text[pos]!r}",
                                 _byte_offset(text, pos), text)
            kind = m.lastgroup
            if kind != "ws":
                self.tokens.append((kind, m.group(), _byte_offset(text, pos)))
            pos = m.end()
        self.end = len(text.encode("utf-8"))
        self.i = 0

    def peek(self):
        if self.i < len(self.tokens):
            return self.tokens[self.i]
        return ("eof", "", self.end)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.take()
        if val != value:
            raise ParseError(f"expected {value!r}, found {val or 'end of input'!r}", off, self.text)

    def parse(self) -> Expr:
        if not self.tokens:
            raise ParseError("empty expression", 0, self.text)
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected token {val!r}", off, self.text)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else add(e, neg(rhs))
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        val = self.peek()[1]
        if val == "-":
            self.take()
            return neg(self.unary())
        if val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        e = self.primary()
        while self.peek()[1] in ("^", "**"):
            self.take()
            off = self.peek()[2]
            sign = 1.0
            while self.peek()[1] in ("-", "+"):
                if self.take()[1] == "-":
                    sign = -sign
            ex = fold_constant(self.primary())
            if ex is None:
                raise ParseError("exponent must be a constant", off, self.text)
            e = pow_(e, sign * ex)
        return e

    def primary(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "var":
            k = int(val[1:])
            if k < 1 or (self.n is not None and k > self.n):
                raise VariableRangeError(
                    f"variable {val} out of range 1..{self.n}", off, self.text)
            return Var(k)
        if kind == "name":
            if val == "t":
                return Time()
            if val == "pi":
                return Const(math.pi)
            if val in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(_FUNCS[val], arg)
            raise ParseError(f"unknown name {val!r}", off, self.text)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected {val or 'end of input'!r}", off, self.text)


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def parse_expression(text: str, n: int | None = None) -> Expr:
    """Parse ``text`` into an expression over ``x1..xn`` and ``t``.

    Raises :class:`ParseError` (with a byte offset) on malformed input and
    :class:`VariableRangeError` when a variable index exceeds ``n``.
    """
    if not isinstance(text, str):
        raise ParseError("expression must be a string", 0)
    return _Parser(text, n).parse()


# ---------------------------------------------------------------------------
# Printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_ATOM = 5


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(e: Expr) -> str:
    """Infix text that parses back to an expression with the same values."""
    return _text(e, 0)


def _text(e: Expr, min_prec: int) -> str:
    if isinstance(e, Const):
        s, p = _fmt_num(e.value), (_PREC["neg"] if e.value < 0 else _ATOM)
    elif isinstance(e, Var):
        s, p = f"x{e.index}", _ATOM
    elif isinstance(e, Time):
        s, p = "t", _ATOM
    elif isinstance(e, Unary):
        if e.op == "neg":
            s, p = "-" + _text(e.arg, _PREC["neg"]), _PREC["neg"]
        else:
            s, p = f"{e.op}({_text(e.arg, 0)})", _ATOM
    elif isinstance(e, Binary):
        p = _PREC[e.op]
        if e.op == "pow":
            c = e.right.value
            ex = _fmt_num(c) if c >= 0 else f"({_fmt_num(c)})"
            s = f"{_text(e.left, _ATOM)}^{ex}"
        elif e.op == "add" and isinstance(e.right, Unary) and e.right.op == "neg":
            s = f"{_text(e.left, p)} - {_text(e.right.arg, p + 1)}"
        else:
            sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[e.op]
            s = f"{_text(e.left, p)} {sym} {_text(e.right, p + 1)}"
    else:
        raise TypeError(f"not an expression: {e!r}")
    return f"({s})" if p < min_prec else s


# ---------------------------------------------------------------------------
# Evaluation


def _apply_unary(op: str, a: float, node: Expr) -> float:
    if op == "neg":
        return -a
    if op == "ln" and a <= 0.0:
        raise EvaluationError("ln of non-positive value", node)
    if op == "sqrt" and a < 0.0:
        raise EvaluationError("sqrt of negative value", node)
    fn = _MATH.get(op)
    if fn is None:
        raise ValueError(f"unknown unary op {op!r}")
    try:
        return fn(a)
    except OverflowError:
        raise EvaluationError("overflow", node) from None
    except ValueError:
        raise EvaluationError(f"invalid argument to {op}", node) from None


_MATH = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "ln": math.log, "sqrt": math.sqrt}


def _apply_binary(op: str, a: float, b: float, node: Expr) -> float:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if b == 0.0:
            raise EvaluationError("division by zero", node)
        return a / b
    if op == "pow":
        try:
            return math.pow(a, b)
        except OverflowError:
            raise EvaluationError("overflow", node) from None
        except ValueError:
            raise EvaluationError("invalid power", node) from None
    raise ValueError(f"unknown binary op {op!r}")


def _eval(e: Expr, xs: Sequence[float], t: float) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(xs[e.index - 1])
    if isinstance(e, Time):
        return float(t)
    if isinstance(e, Unary):
        return _apply_unary(e.op, _eval(e.arg, xs, t), e)
    return _apply_binary(e.op, _eval(e.left, xs, t), _eval(e.right, xs, t), e)


def evaluate(e: Expr, xs: Sequence[float] = (), t: float = 0.0) -> float:
    """Evaluate ``e`` at state ``xs`` and time ``t``.

    Raises :class:`EvaluationError` on domain errors or a non-finite result.
    """
    need = max_var(e)
    if need > len(xs):
        raise IndexError(f"expression uses x{need} but state has dimension {len(xs)}")
    try:
        v = _eval(e, xs, t)
    except EvaluationError as err:
        raise err.at(xs, t) from None
    if not math.isfinite(v):
        raise EvaluationError("non-finite result", e, xs, t)
    return v


def max_var(e: Expr) -> int:
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Unary):
        return max_var(e.arg)
    if isinstance(e, Binary):
        return max(max_var(e.left), max_var(e.right))
    return 0


def depends_on(e: Expr, var: Variable) -> bool:
    var = _var_id(var)
    if isinstance(e, Var):
        return var == e.index
    if isinstance(e, Time):
        return var == "t"
    if isinstance(e, Unary):
        return depends_on(e.arg, var)
    if isinstance(e, Binary):
        return depends_on(e.left, var) or depends_on(e.right, var)
    return False


def fold_constant(e: Expr) -> float | None:
    """Value of ``e`` if it contains no variables and evaluates cleanly."""
    if max_var(e) or _has_time(e):
        return None
    try:
        v = _eval(e, (), 0.0)
    except EvaluationError:
        return None
    return v if math.isfinite(v) else None


def _has_time(e: Expr) -> bool:
    if isinstance(e, Time):
        return True
    if isinstance(e, Unary):
        return _has_time(e.arg)
    if isinstance(e, Binary):
        return _has_time(e.left) or _has_time(e.right)
    return False


def is_constant(e: Expr) -> bool:
    return isinstance(e, Const)


# ---------------------------------------------------------------------------
# Smart constructors: constant folding and 0/1 identities


def _try_fold(e: Expr) -> Expr:
    v = fold_constant(e)
    return Const(v) if v is not None else e


def s_neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return neg(a)


def s_add(a: Expr, b: Expr) -> Expr:
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return add(a, b)


def s_sub(a: Expr, b: Expr) -> Expr:
    return s_add(a, s_neg(b))


def s_mul(a: Expr, b: Expr) -> Expr:
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a == Const(-1.0):
        return s_neg(b)
    if b == Const(-1.0):
        return s_neg(a)
    return mul(a, b)


def s_div(a: Expr, b: Expr) -> Expr:
    if b == ONE:
        return a
    if a == ZERO and b != ZERO:
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    return div(a, b)


def s_pow(a: Expr, c: float) -> Expr:
    if c == 0.0:
        return ONE
    if c == 1.0:
        return a
    if isinstance(a, Const):
        return _try_fold(pow_(a, c))
    return pow_(a, c)


def s_unary(op: str, a: Expr) -> Expr:
    if op == "neg":
        return s_neg(a)
    if isinstance(a, Const):
        return _try_fold(Unary(op, a))
    return Unary(op, a)


# ---------------------------------------------------------------------------
# Differentiation


def _var_id(var: Variable) -> int | str:
    if isinstance(var, str):
        if var == "t":
            return "t"
        if re.fullmatch(r"x\d+", var):
            return int(var[1:])
        raise ValueError(f"unknown variable {var!r}")
    return int(var)


def differentiate(e: Expr, var: Variable, *, simplified: bool = True) -> Expr:
    """Partial derivative of ``e`` with respect to ``x_k`` (int or "xk") or "t".

    With ``simplified=False`` only constant folding and 0/1 identities are
    applied, so ``d(a + b)`` evaluates to exactly ``da + db``.
    """
    d = _d(e, _var_id(var))
    return simplify(d) if simplified else d


def _d(e: Expr, v) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == v else ZERO
    if isinstance(e, Time):
        return ONE if v == "t" else ZERO
    if isinstance(e, Unary):
        u = e.arg
        du = _d(u, v)
        if du == ZERO:
            return ZERO
        if e.op == "neg":
            return s_neg(du)
        if e.op == "sin":
            return s_mul(s_unary("cos", u), du)
        if e.op == "cos":
            return s_neg(s_mul(s_unary("sin", u), du))
        if e.op == "exp":
            return s_mul(e, du)
        if e.op == "ln":
            return s_div(du, u)
        if e.op == "sqrt":
            return s_div(du, s_mul(Const(2.0), e))
        raise ValueError(e.op)
    a, b = e.left, e.right
    if e.op == "pow":
        da = _d(a, v)
        c = b.value
        return s_mul(s_mul(Const(c), s_pow(a, c - 1.0)), da)
    da, db = _d(a, v), _d(b, v)
    if e.op == "add":
        return s_add(da, db)
    if e.op == "sub":
        return s_sub(da, db)
    if e.op == "mul":
        return s_add(s_mul(da, b), s_mul(a, db))
    if e.op == "div":
        if db == ZERO:
            return s_div(da, b)
        return s_div(s_sub(s_mul(da, b), s_mul(a, db)), s_pow(b, 2.0))
    raise ValueError(e.op)


def total_time_derivative(e: Expr, f: Sequence[Expr]) -> Expr:
    """Derivative of ``e`` along trajectories of ``x' = f(x, t)``."""
    if hasattr(f, "f"):
        f = f.f
    acc = _d(e, "t")
    for k, fk in enumerate(f, start=1):
        dk = _d(e, k)
        if dk != ZERO:
            acc = s_add(acc, s_mul(dk, fk))
    return simplify(acc)


# ---------------------------------------------------------------------------
# Simplification: folding, identities, like terms in sums, common factors
# in products and quotients. Not a canonical form.


def simplify(e: Expr) -> Expr:
    if isinstance(e, (Const, Var, Time)):
        return e
    if isinstance(e, Unary):
        a = simplify(e.arg)
        if e.op == "neg":
            return _rebuild_sum(*_collect_sum(s_neg(a)))
        return s_unary(e.op, a)
    if e.op in ("add", "sub"):
        return _rebuild_sum(*_collect_sum(e))
    return _rebuild_product(*_collect_product(e))


def _collect_product(e: Expr) -> tuple[float, list[tuple[Expr, float]]]:
    """Return (coef, [(base, exponent), ...]) for a product-like expression.

    Exponents of structurally equal bases are added, so ``x/x`` cancels.
    """
    coef = 1.0
    acc: dict[Expr, float] = {}
    order: list[Expr] = []

    def add_factor(base: Expr, k: float):
        nonlocal coef
        if isinstance(base, Const):
            v = fold_constant(pow_(base, k))
            if v is not None:
                coef *= v
                return
        if base not in acc:
            acc[base] = 0.0
            order.append(base)
        acc[base] += k

    # k stays integral on every recursive call
    def walk(node: Expr, k: float):
        nonlocal coef
        if isinstance(node, Binary) and node.op == "mul":
            walk(node.left, k)
            walk(node.right, k)
        elif isinstance(node, Binary) and node.op == "div":
            walk(node.left, k)
            walk(node.right, -k)
        elif isinstance(node, Unary) and node.op == "neg":
            if int(k) % 2:
                coef = -coef
            walk(node.arg, k)
        elif isinstance(node, Binary) and node.op == "pow":
            c = node.right.value
            inner = simplify(node.left)
            if c.is_integer():
                walk(inner, k * c)
            elif not _is_productish(inner):
                add_factor(inner, c * k)
            else:
                add_factor(pow_(inner, c), k)
        else:
            s = simplify(node)
            if _is_productish(s) or (isinstance(s, Binary) and s.op == "pow"):
                walk(s, k)
            else:
                add_factor(s, k)

    walk(e, 1.0)
    return coef, [(b, acc[b]) for b in order if acc[b] != 0.0]


def _is_productish(e: Expr) -> bool:
    return (isinstance(e, Binary) and e.op in ("mul", "div")) or \
        (isinstance(e, Unary) and e.op == "neg")


def _factor_key(item: tuple[Expr, float]) -> tuple[str, float]:
    return (to_text(item[0]), item[1])


def _rebuild_product(coef: float, factors: list[tuple[Expr, float]]) -> Expr:
    if coef == 0.0:
        return ZERO
    if len(factors) == 1 and factors[0][1] == 1.0 and isinstance(factors[0][0], Binary) \
            and factors[0][0].op in ("add", "sub") and coef != 1.0:
        const, terms = _collect_sum(factors[0][0])
        return _rebuild_sum(coef * const, [(coef * c, core) for c, core in terms])
    factors = sorted(factors, key=_factor_key)
    num: Expr = ONE
    den: Expr = ONE
    for base, k in factors:
        if k > 0:
            num = s_mul(num, s_pow(base, k))
        else:
            den = s_mul(den, s_pow(base, -k))
    body = s_div(num, den) if den != ONE else num
    if body == ONE:
        return Const(coef)
    if coef == 1.0:
        return body
    if coef == -1.0:
        return s_neg(body)
    return s_mul(Const(coef), body)


def _collect_sum(e: Expr) -> tuple[float, list[tuple[float, Expr]]]:
    const = 0.0
    terms: dict[tuple, list] = {}
    order: list[tuple] = []

    def walk(node: Expr, sign: float):
        nonlocal const
        if isinstance(node, Binary) and node.op == "add":
            walk(node.left, sign)
            walk(node.right, sign)
        elif isinstance(node, Binary) and node.op == "sub":
            walk(node.left, sign)
            walk(node.right, -sign)
        elif isinstance(node, Unary) and node.op == "neg":
            walk(node.arg, -sign)
        else:
            s = simplify(node) if not isinstance(node, (Const, Var, Time)) else node
            if isinstance(s, Binary) and s.op in ("add", "sub") or \
                    isinstance(s, Unary) and s.op == "neg":
                walk(s, sign)
                return
            if isinstance(s, Const):
                const += sign * s.value
                return
            coef, factors = _collect_product(s) if _is_productish(s) or \
                (isinstance(s, Binary) and s.op == "pow") else (1.0, [(s, 1.0)])
            if coef == 0.0:
                return
            key = tuple(sorted(factors, key=_factor_key))
            if key not in terms:
                terms[key] = [0.0, factors]
                order.append(key)
            terms[key][0] += sign * coef

    walk(e, 1.0)
    out = [(terms[k][0], _rebuild_product(1.0, terms[k][1])) for k in order if terms[k][0] != 0.0]
    return const, out


def _rebuild_sum(const: float, terms: list[tuple[float, Expr]]) -> Expr:
    acc: Expr | None = None
    for coef, core in terms:
        if coef == 1.0:
            term, negative = core, False
        elif coef == -1.0:
            term, negative = core, True
        elif coef < 0:
            term, negative = s_mul(Const(-coef), core), True
        else:
            term, negative = s_mul(Const(coef), core), False
        if acc is None:
            acc = s_neg(term) if negative else term
        else:
            acc = add(acc, neg(term)) if negative else add(acc, term)
    if acc is None:
        return Const(const)
    if const != 0.0:
        acc = add(acc, Const(const)) if const > 0 else add(acc, neg(Const(-const)))
    return acc


def ratio(num: Expr, den: Expr) -> Expr:
    """Simplified quotient with common-factor cancellation."""
    return simplify(div(num, den))


# ---------------------------------------------------------------------------
# Sampling-based zero test


def is_identically_zero(e: Expr, region, samples: int = 256, seed: int = 42,
                        *, tol: float = ZERO_TOL) -> bool:
    """True iff ``e`` simplifies to 0 or stays below ``tol`` on sampled points."""
    from signstab.sampling import sample_region

    if samples < 1:
        raise ValueError("samples must be >= 1")
    s = simplify(e)
    if isinstance(s, Const):
        return abs(s.value) < tol
    X, Tm = sample_region(region, samples, seed)
    return vanishes_at(s, X, Tm, tol=tol)


def vanishes_at(e: Expr, X, Tm, *, tol: float = ZERO_TOL) -> bool:
    for xs, t in zip(np.asarray(X, dtype=float), np.asarray(Tm, dtype=float)):
        if abs(evaluate(e, xs, float(t))) >= tol:
            return False
    return True


def walk_nodes(e: Expr):
    """Yield every node of ``e`` in pre-order."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Unary):
            stack.append(node.arg)
        elif isinstance(node, Binary):
            stack.append(node.right)
            stack.append(node.left)
