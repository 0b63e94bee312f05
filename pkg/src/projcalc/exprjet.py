"""Expression language and truncated Taylor (jet) arithmetic.

A small infix language is parsed into immutable syntax trees that can be

* evaluated to a plain float (a compiled fast path used in inner loops),
* evaluated to a :class:`Jet` carrying all mixed partial derivatives up to a
  truncation order (order 4 by default, one order above what third-derivative
  curvature invariants require), or
* manipulated symbolically (differentiation, substitution, arithmetic with
  light simplification), which is how derived fields such as Christoffel
  symbols are built.

Grammar (EBNF)::

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := "-" factor | power
    power  := atom ("^" factor)?
    atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"

``^`` is right associative and binds tighter than unary minus, which in turn
binds tighter than ``*`` and ``/``.  NUMBER is a decimal literal with an
optional exponent.  ``abs`` is differentiated with the sign frozen at the
evaluation point; inputs that cross zero are the caller's problem.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "ExprError",
    "ParseError",
    "EvalError",
    "Expression",
    "Num",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Call",
    "parse_expression",
    "Jet",
    "JetSpace",
    "constant_jet",
    "variable_jets",
    "ScalarField",
    "const_field",
    "coord_field",
]

JET_ORDER = 4

CONSTANTS = {"pi": math.pi, "e": math.e}

# name -> (python eval source template, symbolic derivative builder)
FUNCTIONS = ("sin", "cos", "tan", "atan", "exp", "log", "sqrt", "sinh", "cosh", "abs", "sign")


class ExprError(Exception):
    pass


class ParseError(ExprError):
    """Syntax or name error, with the byte offset into the source."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvalError(ExprError):
    """Domain error during evaluation, naming the offending subexpression."""

    def __init__(self, message, node):
        super().__init__(f"{message} in '{node.to_source()}'")
        self.node = node


# ---------------------------------------------------------------------------
# Syntax trees
# ---------------------------------------------------------------------------


class Expression:
    """Base class for immutable expression nodes.

    Derived fields (Christoffel symbols, pullbacks) share subtrees heavily,
    so evaluation, differentiation and substitution all memoize on node
    identity and the trees are really directed acyclic graphs.
    """

    __slots__ = ()

    # precedence levels used by the printer: 1 add, 2 mul, 3 unary minus,
    # 4 power, 5 atom
    _prec = 5

    def to_source(self):
        raise NotImplementedError

    def _src(self, min_prec):
        s = self.to_source()
        return f"({s})" if self._prec < min_prec else s

    def eval_jet(self, space, var_jets, memo=None):
        if memo is None:
            memo = {}
        hit = memo.get(id(self))
        if hit is None:
            hit = self._eval_jet(space, var_jets, memo)
            memo[id(self)] = hit
        return hit

    def _eval_jet(self, space, var_jets, memo):
        raise NotImplementedError

    def diff(self, name, memo=None):
        if memo is None:
            memo = {}
        hit = memo.get(id(self))
        if hit is None:
            hit = self._diff(name, memo)
            memo[id(self)] = hit
        return hit

    def _diff(self, name, memo):
        raise NotImplementedError

    def substitute(self, mapping, memo=None):
        if memo is None:
            memo = {}
        hit = memo.get(id(self))
        if hit is None:
            hit = self._substitute(mapping, memo)
            memo[id(self)] = hit
        return hit

    def _substitute(self, mapping, memo):
        raise NotImplementedError

    def variables(self):
        out = set()
        self._collect_vars(out, set())
        return out

    def _collect_vars(self, out, seen):
        pass

    def __repr__(self):
        return f"{type(self).__name__}({self.to_source()!r})"

    # operator sugar used by the symbolic layer
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)


@dataclass(frozen=True, slots=True)
class Num(Expression):
    value: float

    _prec = 5

    def to_source(self):
        v = self.value
        if v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return repr(v)

    def _src(self, min_prec):
        s = self.to_source()
        # negative literals reparse as unary minus, so guard like one
        return f"({s})" if (self.value < 0 and min_prec > 3) else s

    def _eval_jet(self, space, var_jets, memo):
        return constant_jet(space, self.value)

    def eval_value(self, env):
        return self.value

    def _diff(self, name, memo):
        return _ZERO

    def _substitute(self, mapping, memo):
        return self


@dataclass(frozen=True, slots=True)
class Var(Expression):
    name: str

    _prec = 5

    def to_source(self):
        return self.name

    def _eval_jet(self, space, var_jets, memo):
        return var_jets[self.name]

    def eval_value(self, env):
        return env[self.name]

    def _diff(self, name, memo):
        return _ONE if name == self.name else _ZERO

    def _substitute(self, mapping, memo):
        return mapping.get(self.name, self)

    def _collect_vars(self, out, seen):
        out.add(self.name)


@dataclass(frozen=True, slots=True)
class Neg(Expression):
    arg: Expression

    _prec = 3

    def to_source(self):
        return "-" + self.arg._src(3)

    def _eval_jet(self, space, var_jets, memo):
        return -self.arg.eval_jet(space, var_jets, memo)

    def eval_value(self, env):
        return -self.arg.eval_value(env)

    def _diff(self, name, memo):
        return neg(self.arg.diff(name, memo))

    def _substitute(self, mapping, memo):
        return neg(self.arg.substitute(mapping, memo))

    def _collect_vars(self, out, seen):
        if id(self) not in seen:
            seen.add(id(self))
            self.arg._collect_vars(out, seen)


class _Binary(Expression):
    __slots__ = ()

    def _collect_vars(self, out, seen):
        if id(self) not in seen:
            seen.add(id(self))
            self.left._collect_vars(out, seen)
            self.right._collect_vars(out, seen)


@dataclass(frozen=True, slots=True)
class Add(_Binary):
    left: Expression
    right: Expression

    _prec = 1

    def to_source(self):
        return f"{self.left._src(1)} + {self.right._src(2)}"

    def _eval_jet(self, space, var_jets, memo):
        return self.left.eval_jet(space, var_jets, memo) + self.right.eval_jet(space, var_jets, memo)

    def eval_value(self, env):
        return self.left.eval_value(env) + self.right.eval_value(env)

    def _diff(self, name, memo):
        return add(self.left.diff(name, memo), self.right.diff(name, memo))

    def _substitute(self, mapping, memo):
        return add(self.left.substitute(mapping, memo), self.right.substitute(mapping, memo))


@dataclass(frozen=True, slots=True)
class Sub(_Binary):
    left: Expression
    right: Expression

    _prec = 1

    def to_source(self):
        return f"{self.left._src(1)} - {self.right._src(2)}"

    def _eval_jet(self, space, var_jets, memo):
        return self.left.eval_jet(space, var_jets, memo) - self.right.eval_jet(space, var_jets, memo)

    def eval_value(self, env):
        return self.left.eval_value(env) - self.right.eval_value(env)

    def _diff(self, name, memo):
        return sub(self.left.diff(name, memo), self.right.diff(name, memo))

    def _substitute(self, mapping, memo):
        return sub(self.left.substitute(mapping, memo), self.right.substitute(mapping, memo))


@dataclass(frozen=True, slots=True)
class Mul(_Binary):
    left: Expression
    right: Expression

    _prec = 2

    def to_source(self):
        return f"{self.left._src(2)}*{self.right._src(3)}"

    def _eval_jet(self, space, var_jets, memo):
        return self.left.eval_jet(space, var_jets, memo) * self.right.eval_jet(space, var_jets, memo)

    def eval_value(self, env):
        return self.left.eval_value(env) * self.right.eval_value(env)

    def _diff(self, name, memo):
        return add(
            mul(self.left.diff(name, memo), self.right),
            mul(self.left, self.right.diff(name, memo)),
        )

    def _substitute(self, mapping, memo):
        return mul(self.left.substitute(mapping, memo), self.right.substitute(mapping, memo))


@dataclass(frozen=True, slots=True)
class Div(_Binary):
    left: Expression
    right: Expression

    _prec = 2

    def to_source(self):
        return f"{self.left._src(2)}/{self.right._src(3)}"

    def _eval_jet(self, space, var_jets, memo):
        denom = self.right.eval_jet(space, var_jets, memo)
        if denom.value == 0.0:
            raise EvalError("division by zero", self)
        return self.left.eval_jet(space, var_jets, memo) / denom

    def eval_value(self, env):
        d = self.right.eval_value(env)
        if d == 0.0:
            raise EvalError("division by zero", self)
        return self.left.eval_value(env) / d

    def _diff(self, name, memo):
        num = sub(
            mul(self.left.diff(name, memo), self.right),
            mul(self.left, self.right.diff(name, memo)),
        )
        return div(num, mul(self.right, self.right))

    def _substitute(self, mapping, memo):
        return div(self.left.substitute(mapping, memo), self.right.substitute(mapping, memo))


@dataclass(frozen=True, slots=True)
class Pow(_Binary):
    left: Expression
    right: Expression

    _prec = 4

    def to_source(self):
        # base must be a printable atom; exponent is a factor
        return f"{self.left._src(5)}^{self.right._src(3)}"

    def _eval_jet(self, space, var_jets, memo):
        base = self.left.eval_jet(space, var_jets, memo)
        expo = self.right.eval_jet(space, var_jets, memo)
        if expo.is_constant():
            p = expo.value
            if p == int(p) and abs(p) <= 64:
                return base.int_pow(int(p), self)
            if base.value <= 0.0:
                raise EvalError("non-integer power of a non-positive base", self)
            return (expo * base.log(self)).exp()
        if base.value <= 0.0:
            raise EvalError("variable power of a non-positive base", self)
        return (expo * base.log(self)).exp()

    def eval_value(self, env):
        b = self.left.eval_value(env)
        p = self.right.eval_value(env)
        if b < 0 and p != int(p):
            raise EvalError("non-integer power of a negative base", self)
        if b == 0 and p < 0:
            raise EvalError("division by zero", self)
        return b ** p

    def _diff(self, name, memo):
        if isinstance(self.right, Num):
            p = self.right.value
            return mul(mul(self.right, powx(self.left, Num(p - 1))), self.left.diff(name, memo))
        # general case via b^e = exp(e log b)
        term1 = mul(self.right.diff(name, memo), Call("log", self.left))
        term2 = mul(self.right, div(self.left.diff(name, memo), self.left))
        return mul(self, add(term1, term2))

    def _substitute(self, mapping, memo):
        return powx(self.left.substitute(mapping, memo), self.right.substitute(mapping, memo))


@dataclass(frozen=True, slots=True)
class Call(Expression):
    func: str
    arg: Expression

    _prec = 5

    def to_source(self):
        return f"{self.func}({self.arg.to_source()})"

    def _eval_jet(self, space, var_jets, memo):
        u = self.arg.eval_jet(space, var_jets, memo)
        return u.apply(self.func, self)

    def eval_value(self, env):
        u = self.arg.eval_value(env)
        f = self.func
        if f == "log":
            if u <= 0.0:
                raise EvalError("log of a non-positive value", self)
            return math.log(u)
        if f == "sqrt":
            if u < 0.0:
                raise EvalError("sqrt of a negative value", self)
            return math.sqrt(u)
        if f == "abs":
            return abs(u)
        if f == "sign":
            return float(np.sign(u))
        return getattr(math, f)(u)

    def _diff(self, name, memo):
        du = self.arg.diff(name, memo)
        u = self.arg
        f = self.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = neg(Call("sin", u))
        elif f == "tan":
            outer = add(_ONE, mul(Call("tan", u), Call("tan", u)))
        elif f == "atan":
            outer = div(_ONE, add(_ONE, mul(u, u)))
        elif f == "exp":
            outer = self
        elif f == "log":
            outer = div(_ONE, u)
        elif f == "sqrt":
            outer = div(_ONE, mul(Num(2.0), self))
        elif f == "sinh":
            outer = Call("cosh", u)
        elif f == "cosh":
            outer = Call("sinh", u)
        elif f == "abs":
            outer = Call("sign", u)
        elif f == "sign":
            return _ZERO
        else:  # pragma: no cover - parser rejects unknown functions
            raise ExprError(f"no derivative rule for {f}")
        return mul(outer, du)

    def _substitute(self, mapping, memo):
        return Call(self.func, self.arg.substitute(mapping, memo))

    def _collect_vars(self, out, seen):
        if id(self) not in seen:
            seen.add(id(self))
            self.arg._collect_vars(out, seen)


_ZERO = Num(0.0)
_ONE = Num(1.0)


def as_expr(x):
    if isinstance(x, Expression):
        return x
    return Num(float(x))


# --- simplifying constructors (keep derived trees from exploding) ----------


def add(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if isinstance(a, Num) and a.value == 0.0:
        return b
    if isinstance(b, Num) and b.value == 0.0:
        return a
    return Add(a, b)


def sub(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if isinstance(b, Num) and b.value == 0.0:
        return a
    if isinstance(a, Num) and a.value == 0.0:
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if isinstance(a, Num):
        if a.value == 0.0:
            return _ZERO
        if a.value == 1.0:
            return b
    if isinstance(b, Num):
        if b.value == 0.0:
            return _ZERO
        if b.value == 1.0:
            return a
    return Mul(a, b)


def div(a, b):
    if isinstance(a, Num) and a.value == 0.0:
        return _ZERO
    if isinstance(b, Num) and b.value == 1.0:
        return a
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    return Div(a, b)


def neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def powx(a, b):
    if isinstance(b, Num):
        if b.value == 1.0:
            return a
        if b.value == 0.0:
            return _ONE
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value ** b.value)
    return Pow(a, b)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            stripped = source[pos:].lstrip()
            at = n - len(stripped)
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}", at)
        kind = m.lastgroup
        text = m.group(kind)
        tokens.append((kind, text, m.start(kind)))
        pos = m.end()
    tokens.append(("eof", "", n))
    return tokens


class _Parser:
    def __init__(self, source, names):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0
        self.names = names

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, text, off = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}", off)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected {text!r}", off)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs) if text == "+" else Sub(node, rhs)
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.factor()
                node = Mul(node, rhs) if text == "*" else Div(node, rhs)
            else:
                return node

    def factor(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self):
        node = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            return Pow(node, self.factor())
        return node

    def atom(self):
        kind, text, off = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            nkind, ntext, _ = self.peek()
            if nkind == "op" and ntext == "(":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", off)
                self.advance()
                arg = self.expr()
                pkind, ptext, poff = self.peek()
                if pkind == "op" and ptext == ",":
                    raise ParseError(f"{text} takes one argument", poff)
                self.expect_op(")")
                return Call(text, arg)
            if text in self.names:
                return Var(text)
            if text in CONSTANTS:
                return Num(CONSTANTS[text])
            raise ParseError(f"unknown identifier {text!r}", off)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(f"unexpected {text!r}" if text else "unexpected end of input", off)


def parse_expression(source, coords, params=()):
    """Parse ``source`` against declared coordinate and parameter names."""
    if not coords or len(set(coords)) != len(coords):
        raise ExprError("coordinate names must be nonempty and distinct")
    names = set(coords) | set(params)
    return _Parser(source, names).parse()


# ---------------------------------------------------------------------------
# Jets: truncated multivariate Taylor coefficients
# ---------------------------------------------------------------------------


def _multi_indices(nvars, order):
    """All exponent tuples with total degree <= order, graded lexicographic."""
    out = []

    def rec(prefix, remaining, budget):
        if remaining == 0:
            out.append(tuple(prefix))
            return
        for k in range(budget + 1):
            rec(prefix + [k], remaining - 1, budget - k)

    for total in range(order + 1):
        start = len(out)
        rec([], nvars, total)
        out[start:] = [mi for mi in out[start:] if sum(mi) == total]
    return out


@lru_cache(maxsize=None)
def jet_space(nvars, order=JET_ORDER):
    return JetSpace(nvars, order)


class JetSpace:
    """Coefficient layout and multiplication table for a fixed (nvars, order)."""

    def __init__(self, nvars, order):
        self.nvars = nvars
        self.order = order
        self.indices = _multi_indices(nvars, order)
        self.size = len(self.indices)
        self.position = {mi: k for k, mi in enumerate(self.indices)}
        self.factorials = np.array(
            [math.prod(math.factorial(a) for a in mi) for mi in self.indices]
        )
        # flat (i, j) -> k product table restricted to |i|+|j| <= order
        I, J, K = [], [], []
        for i, mi in enumerate(self.indices):
            di = sum(mi)
            for j, mj in enumerate(self.indices):
                if di + sum(mj) > order:
                    continue
                I.append(i)
                J.append(j)
                K.append(self.position[tuple(a + b for a, b in zip(mi, mj))])
        self._mul_i = np.array(I)
        self._mul_j = np.array(J)
        self._mul_k = np.array(K)
        # positions used when lowering the order by one partial derivative
        self._deriv = []
        if order >= 1:
            lower = jet_space(nvars, order - 1)
            for axis in range(nvars):
                src = np.empty(lower.size, dtype=int)
                scale = np.empty(lower.size)
                for k, mi in enumerate(lower.indices):
                    up = list(mi)
                    up[axis] += 1
                    src[k] = self.position[tuple(up)]
                    scale[k] = up[axis]
                self._deriv.append((src, scale))

    def lower(self):
        if self.order == 0:
            raise ExprError("cannot differentiate an order-0 jet")
        return jet_space(self.nvars, self.order - 1)

    def mul(self, a, b):
        out = np.zeros(self.size)
        np.add.at(out, self._mul_k, a[self._mul_i] * b[self._mul_j])
        return out


class Jet:
    """Taylor coefficients of a scalar function at a point.

    ``coeffs[k]`` is the Taylor coefficient for the multi-index
    ``space.indices[k]``; the partial derivative is the coefficient times the
    multi-index factorial.
    """

    __slots__ = ("space", "coeffs")

    def __init__(self, space, coeffs):
        self.space = space
        self.coeffs = coeffs

    @property
    def value(self):
        return self.coeffs[0]

    @property
    def order(self):
        return self.space.order

    def is_constant(self):
        return not np.any(self.coeffs[1:])

    def partial(self, multi_index):
        """Exact mixed partial for the given exponent tuple."""
        k = self.space.position[tuple(multi_index)]
        return self.coeffs[k] * self.space.factorials[k]

    def gradient(self):
        n = self.space.nvars
        return np.array([self.partial(tuple(int(i == a) for i in range(n))) for a in range(n)])

    def derivative(self, axis):
        """Jet of the partial derivative along ``axis`` (order drops by one)."""
        src, scale = self.space._deriv[axis]
        return Jet(self.space.lower(), self.coeffs[src] * scale)

    def truncate(self, order):
        if order == self.order:
            return self
        if order > self.order:
            raise ExprError("cannot raise jet order")
        target = jet_space(self.space.nvars, order)
        return Jet(target, self.coeffs[: target.size].copy())

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.space is self.space:
                return self, other
            if other.space.nvars != self.space.nvars:
                raise ExprError("jet dimension mismatch")
            m = min(self.order, other.order)
            return self.truncate(m), other.truncate(m)
        c = constant_jet(self.space, float(other))
        return self, c

    def __add__(self, other):
        a, b = self._coerce(other)
        return Jet(a.space, a.coeffs + b.coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._coerce(other)
        return Jet(a.space, a.coeffs - b.coeffs)

    def __rsub__(self, other):
        a, b = self._coerce(other)
        return Jet(a.space, b.coeffs - a.coeffs)

    def __neg__(self):
        return Jet(self.space, -self.coeffs)

    def __mul__(self, other):
        a, b = self._coerce(other)
        return Jet(a.space, a.space.mul(a.coeffs, b.coeffs))

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self._coerce(other)
        return a * b.reciprocal()

    def __rtruediv__(self, other):
        a, b = self._coerce(other)
        return b * a.reciprocal()

    def reciprocal(self, node=None):
        u0 = self.value
        if u0 == 0.0:
            if node is not None:
                raise EvalError("division by zero", node)
            raise ZeroDivisionError("jet reciprocal at zero")
        derivs = [(-1.0) ** k * math.factorial(k) / u0 ** (k + 1) for k in range(self.order + 1)]
        return self._compose(derivs)

    def _compose(self, derivs):
        """Chain rule with the univariate derivative list [f(u0), f'(u0), ...]."""
        space = self.space
        p = self.coeffs.copy()
        p[0] = 0.0
        out = np.zeros(space.size)
        out[0] = derivs[0]
        pk = None
        for k in range(1, self.order + 1):
            pk = p if pk is None else space.mul(pk, p)
            ck = derivs[k] / math.factorial(k)
            if ck != 0.0:
                out += ck * pk
        return Jet(space, out)

    def int_pow(self, p, node=None):
        if p == 0:
            return constant_jet(self.space, 1.0)
        if p < 0:
            return self.reciprocal(node).int_pow(-p)
        result = None
        base = self
        while p:
            if p & 1:
                result = base if result is None else result * base
            p >>= 1
            if p:
                base = base * base
        return result

    def exp(self):
        e = math.exp(self.value)
        return self._compose([e] * (self.order + 1))

    def log(self, node=None):
        u0 = self.value
        if u0 <= 0.0:
            if node is not None:
                raise EvalError("log of a non-positive value", node)
            raise ValueError("jet log of a non-positive value")
        derivs = [math.log(u0)] + [
            (-1.0) ** (k - 1) * math.factorial(k - 1) / u0 ** k for k in range(1, self.order + 1)
        ]
        return self._compose(derivs)

    def apply(self, func, node=None):
        u0 = self.value
        m = self.order
        if func == "exp":
            return self.exp()
        if func == "log":
            return self.log(node)
        if func == "sin":
            cyc = [math.sin(u0), math.cos(u0), -math.sin(u0), -math.cos(u0)]
            return self._compose([cyc[k % 4] for k in range(m + 1)])
        if func == "cos":
            cyc = [math.cos(u0), -math.sin(u0), -math.cos(u0), math.sin(u0)]
            return self._compose([cyc[k % 4] for k in range(m + 1)])
        if func == "sinh":
            pair = [math.sinh(u0), math.cosh(u0)]
            return self._compose([pair[k % 2] for k in range(m + 1)])
        if func == "cosh":
            pair = [math.cosh(u0), math.sinh(u0)]
            return self._compose([pair[k % 2] for k in range(m + 1)])
        if func == "tan":
            t = math.tan(u0)
            s = 1.0 + t * t
            derivs = [t, s, 2 * t * s, s * (2 * s + 4 * t * t), 16 * t * s * s + 8 * t ** 3 * s]
            return self._compose(derivs[: m + 1])
        if func == "atan":
            q = 1.0 + u0 * u0
            derivs = [
                math.atan(u0),
                1.0 / q,
                -2.0 * u0 / q ** 2,
                (6.0 * u0 * u0 - 2.0) / q ** 3,
                (24.0 * u0 - 24.0 * u0 ** 3) / q ** 4,
            ]
            return self._compose(derivs[: m + 1])
        if func == "sqrt":
            if u0 < 0.0 or (u0 == 0.0 and not self.is_constant()):
                raise EvalError("sqrt of a non-positive value", node)
            if u0 == 0.0:
                return constant_jet(self.space, 0.0)
            s = math.sqrt(u0)
            derivs = [s, 0.5 / s, -0.25 / (u0 * s), 0.375 / (u0 * u0 * s), -0.9375 / (u0 ** 3 * s)]
            return self._compose(derivs[: m + 1])
        if func == "abs":
            s = float(np.sign(u0))
            out = self * s
            return out
        if func == "sign":
            return constant_jet(self.space, float(np.sign(u0)))
        raise ExprError(f"unknown function {func!r}")  # pragma: no cover


def constant_jet(space, value):
    coeffs = np.zeros(space.size)
    coeffs[0] = value
    return Jet(space, coeffs)


def variable_jets(space, names, point):
    """Seed jets for the chart coordinates at ``point``."""
    jets = {}
    for axis, name in enumerate(names):
        coeffs = np.zeros(space.size)
        coeffs[0] = float(point[axis])
        if space.order >= 1:
            unit = tuple(int(i == axis) for i in range(space.nvars))
            coeffs[space.position[unit]] = 1.0
        jets[name] = Jet(space, coeffs)
    return jets


# ---------------------------------------------------------------------------
# Scalar fields
# ---------------------------------------------------------------------------

_COMPILE_ENV = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "atan": math.atan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "abs": abs,
    "sign": lambda u: float(np.sign(u)),
    "sinh": math.sinh,
    "cosh": math.cosh,
}


def _children(node):
    if isinstance(node, Neg):
        return (node.arg,)
    if isinstance(node, _Binary):
        return (node.left, node.right)
    if isinstance(node, Call):
        return (node.arg,)
    return ()


def _compile_expression(expr, coords):
    """Build a fast callable; shared subexpressions become temporaries."""
    counts = {}
    postorder = []
    stack = [(expr, False)]
    while stack:
        node, done = stack.pop()
        nid = id(node)
        if done:
            postorder.append(node)
            continue
        if nid in counts:
            counts[nid] += 1
            continue
        counts[nid] = 1
        stack.append((node, True))
        for child in _children(node):
            stack.append((child, False))

    argnames = {name: f"_v{i}" for i, name in enumerate(coords)}
    temp_names = {}
    lines = []

    def gen(node):
        nid = id(node)
        if nid in temp_names:
            return temp_names[nid]
        if isinstance(node, Num):
            return repr(node.value)
        if isinstance(node, Var):
            return argnames[node.name]
        if isinstance(node, Neg):
            return f"(-{gen(node.arg)})"
        if isinstance(node, Add):
            return f"({gen(node.left)}+{gen(node.right)})"
        if isinstance(node, Sub):
            return f"({gen(node.left)}-{gen(node.right)})"
        if isinstance(node, Mul):
            return f"({gen(node.left)}*{gen(node.right)})"
        if isinstance(node, Div):
            return f"({gen(node.left)}/{gen(node.right)})"
        if isinstance(node, Pow):
            return f"({gen(node.left)}**{gen(node.right)})"
        if isinstance(node, Call):
            return f"{node.func}({gen(node.arg)})"
        raise ExprError(f"cannot compile {node!r}")  # pragma: no cover

    for node in postorder:
        if counts[id(node)] > 1 and not isinstance(node, (Num, Var)):
            source = gen(node)
            name = f"_t{len(temp_names)}"
            lines.append(f"    {name} = {source}")
            temp_names[id(node)] = name

    body = gen(expr)
    args = ",".join(argnames[c] for c in coords)
    src = f"def _f({args}):\n" + "\n".join(lines) + f"\n    return {body}\n"
    scope = dict(_COMPILE_ENV)
    exec(src, scope)
    return scope["_f"]


class ScalarField:
    """A closed-form scalar function of the chart coordinates.

    Immutable once built; evaluation is reentrant.  ``eval_jet`` returns all
    mixed partials up to the requested order exactly (no truncation error
    beyond floating point).
    """

    def __init__(self, expression, coords):
        if isinstance(expression, str):
            expression = parse_expression(expression, coords)
        unknown = expression.variables() - set(coords)
        if unknown:
            raise ExprError(f"expression uses undeclared names: {sorted(unknown)}")
        self.expression = expression
        self.coords = tuple(coords)
        self._compiled = None

    @property
    def dim(self):
        return len(self.coords)

    def eval_jet(self, point, order=JET_ORDER):
        space = jet_space(self.dim, order)
        jets = variable_jets(space, self.coords, point)
        jet = self.expression.eval_jet(space, jets)
        if not np.all(np.isfinite(jet.coeffs)):
            raise EvalError("non-finite jet", self.expression)
        return jet

    def __call__(self, point):
        fn = self._compiled
        if fn is None:
            fn = _compile_expression(self.expression, self.coords)
            self._compiled = fn
        return fn(*point)

    def diff(self, coord):
        return ScalarField(self.expression.diff(coord), self.coords)

    def substitute(self, mapping, coords):
        """New field over ``coords`` with variables replaced by expressions."""
        exprs = {k: (v.expression if isinstance(v, ScalarField) else v) for k, v in mapping.items()}
        return ScalarField(self.expression.substitute(exprs), coords)

    def to_source(self):
        return self.expression.to_source()

    def __repr__(self):
        return f"ScalarField({self.to_source()!r}, coords={self.coords})"

    # arithmetic lifts to fields over identical coordinates
    def _lift(self, other):
        if isinstance(other, ScalarField):
            if other.coords != self.coords:
                raise ExprError("field coordinate mismatch")
            return other.expression
        return as_expr(other)

    def __add__(self, other):
        return ScalarField(add(self.expression, self._lift(other)), self.coords)

    def __radd__(self, other):
        return ScalarField(add(self._lift(other), self.expression), self.coords)

    def __sub__(self, other):
        return ScalarField(sub(self.expression, self._lift(other)), self.coords)

    def __rsub__(self, other):
        return ScalarField(sub(self._lift(other), self.expression), self.coords)

    def __mul__(self, other):
        return ScalarField(mul(self.expression, self._lift(other)), self.coords)

    def __rmul__(self, other):
        return ScalarField(mul(self._lift(other), self.expression), self.coords)

    def __truediv__(self, other):
        return ScalarField(div(self.expression, self._lift(other)), self.coords)

    def __rtruediv__(self, other):
        return ScalarField(div(self._lift(other), self.expression), self.coords)

    def __neg__(self):
        return ScalarField(neg(self.expression), self.coords)


def const_field(value, coords):
    return ScalarField(Num(float(value)), coords)


def coord_field(name, coords):
    return ScalarField(Var(name), coords)
