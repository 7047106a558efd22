"""Symbolic expression kernel.

Expressions are sympy trees over the two real coordinates ``t`` and ``x``
with exact (complex rational) constants.  This module adds what the rest of
the package needs on top of sympy: a small grammar with its own parser and
printer, a canonical normal form, a numpy evaluator that refuses to divide
by (near) zero, sampled zero-testing and collection of powers of ``x``.

Grammar (EBNF)::

    expr   = term , { ("+" | "-") , term } ;
    term   = unary , { ("*" | "/") , unary } ;
    unary  = ("+" | "-") , unary | power ;
    power  = atom , [ "^" , unary ] ;
    atom   = number | name | func , "(" , expr , ")" | "(" , expr , ")" ;
    func   = "exp" | "sin" | "cos" | "tan" | "log" ;
    name   = "t" | "x" | "i" | "pi" | parameter ;
    number = digits , [ "." , digits ] , [ ("e" | "E") , [sign] , digits ] ;

Exponents must be constant rationals; a non-integer exponent on a
non-constant base must be a half-integer.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import sympy as sp

from .errors import (
    NLSClassError,
    NotLaurentInX,
    ParseError,
    SingularityError,
    UnknownIdentifier,
)

t = sp.Symbol("t", real=True)
x = sp.Symbol("x", real=True)

Expr = sp.Expr

FUNCTIONS = {"exp": sp.exp, "sin": sp.sin, "cos": sp.cos, "tan": sp.tan, "log": sp.log}
SINGULAR_EPS = 1e-12
DEFAULT_RADIUS = 0.15
DEFAULT_TOLERANCE = 1e-9
EXPAND_LIMIT = 300


def param(name: str) -> sp.Symbol:
    """Real symbol used for a named template parameter (nu, a, b, gh, ...)."""
    return sp.Symbol(name, real=True)


def as_rational(value) -> sp.Expr:
    """Coerce int / Fraction / "p/q" string / sympy number to an exact sympy value."""
    if isinstance(value, sp.Basic):
        if value.has(sp.Float):
            raise NLSClassError(f"floating-point constant {value} is not allowed")
        return value
    if isinstance(value, bool):
        raise NLSClassError("booleans are not numbers")
    if isinstance(value, int):
        return sp.Integer(value)
    if isinstance(value, Fraction):
        return sp.Rational(value.numerator, value.denominator)
    if isinstance(value, str):
        try:
            fr = Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            return parse(value)
        return sp.Rational(fr.numerator, fr.denominator)
    raise NLSClassError(f"expected an exact rational, got {value!r}")


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise ParseError(f"unexpected character {text[bad]!r}", _byte_offset(text, bad), text)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text, bindings, params):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.bindings = bindings
        self.params = params

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, _byte_offset(self.text, tok[2]), self.text)

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] != "op":
            raise self.error(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok)

    def parse(self):
        e = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            tok = self.take()
            rhs = self.unary()
            if tok[1] == "*":
                e = e * rhs
            else:
                if rhs == 0:
                    raise self.error("division by zero", tok)
                e = e / rhs
        return e

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            e = self.unary()
            return -e if tok[1] == "-" else e
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            tok = self.take()
            ex = self.unary()
            if ex.free_symbols or not ex.is_Rational:
                raise self.error("exponent must be a constant rational", tok)
            if not ex.is_Integer and base.free_symbols and ex.q != 2:
                raise self.error("non-integer exponents are restricted to half-integers", tok)
            if base == 0 and ex < 0:
                raise self.error("division by zero", tok)
            return base**ex
        return base

    def atom(self):
        tok = self.take()
        kind, val, _ = tok
        if kind == "num":
            fr = Fraction(val)
            return sp.Rational(fr.numerator, fr.denominator)
        if kind == "id":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return FUNCTIONS[val](arg)
            if val == "t":
                return t
            if val == "x":
                return x
            if val == "i":
                return sp.I
            if val == "pi":
                return sp.pi
            if val in self.bindings:
                return as_rational(self.bindings[val])
            if val in self.params:
                return param(val)
            raise UnknownIdentifier(f"unknown identifier {val!r}", _byte_offset(self.text, tok[2]), self.text)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise self.error(f"unexpected {val or 'end of input'!r}", tok)


def parse(text: str, bindings: Mapping[str, object] | None = None,
          params: Sequence[str] = ()) -> Expr:
    """Parse ``text`` in the expression grammar.

    ``bindings`` maps parameter names to exact values; names listed in
    ``params`` are kept as free real symbols.  Anything else is an
    :class:`UnknownIdentifier`.
    """
    return _Parser(text, dict(bindings or {}), set(params)).parse()


# --------------------------------------------------------------------------
# printing

_ADD, _NEG, _MUL, _POW, _ATOM = 1, 2, 3, 4, 5
_FUNC_NAMES = {sp.exp: "exp", sp.sin: "sin", sp.cos: "cos", sp.tan: "tan", sp.log: "log"}


def _is_negative(term) -> bool:
    c = term.as_coeff_Mul()[0]
    return bool(c.is_real and c.is_negative)


def _wrap(s, prec, minimum):
    return f"({s})" if prec < minimum else s


def _fmt(e) -> tuple[str, int]:
    if e.is_Symbol:
        return e.name, _ATOM
    if e is sp.I:
        return "i", _ATOM
    if e is sp.pi:
        return "pi", _ATOM
    if e is sp.E:
        return "exp(1)", _ATOM
    if e.is_Float:
        # only unsnapped solver output reaches here
        return repr(float(e)), (_NEG if e < 0 else _ATOM)
    if e.is_Integer:
        return str(int(e)), (_NEG if e < 0 else _ATOM)
    if e.is_Rational:
        return f"{e.p}/{e.q}", (_NEG if e < 0 else _MUL)
    if e.is_Add:
        terms = e.as_ordered_terms()
        s, _ = _fmt(terms[0])
        for term in terms[1:]:
            if _is_negative(term):
                ts, tp = _fmt(-term)
                s += " - " + _wrap(ts, tp, _MUL)
            else:
                ts, tp = _fmt(term)
                s += " + " + _wrap(ts, tp, _NEG)
        return s, _ADD
    if e.is_Mul:
        if _is_negative(e):
            s, p = _fmt(-e)
            return "-" + _wrap(s, p, _NEG), _NEG
        parts = []
        for f in e.as_ordered_factors():
            s, p = _fmt(f)
            parts.append(_wrap(s, p, _MUL) if p != _NEG else f"({s})")
        return "*".join(parts), _MUL
    if e.is_Pow:
        base, ex = e.as_base_exp()
        bs, bp = _fmt(base)
        bs = _wrap(bs, bp, _ATOM)
        if ex.is_Integer:
            es = str(int(ex))
        else:
            es = f"({_fmt(ex)[0]})"
        return f"{bs}^{es}", _POW
    for cls, name in _FUNC_NAMES.items():
        if isinstance(e, cls):
            return f"{name}({_fmt(e.args[0])[0]})", _ATOM
    raise NLSClassError(f"expression {e} is outside the printable grammar")


def format_expr(e) -> str:
    """Render ``e`` in the package grammar; ``parse`` reads it back."""
    return _fmt(sp.sympify(e))[0]


# --------------------------------------------------------------------------
# algebra

def normalize(e) -> Expr:
    """Canonical expanded form (sum of monomial terms, powers collected)."""
    return sp.expand(sp.sympify(e))


def _var(v):
    if isinstance(v, sp.Symbol):
        return v
    return {"t": t, "x": x}[v]


def differentiate(e, v="t") -> Expr:
    return normalize(sp.diff(e, _var(v)))


def substitute(e, mapping: Mapping) -> Expr:
    return normalize(sp.sympify(e).subs(dict(mapping), simultaneous=True))


def depends_on(e, v) -> bool:
    return _var(v) in sp.sympify(e).free_symbols


def x_laurent_decompose(e) -> dict[int, Expr]:
    """Coefficients (functions of t) of each integer power of x."""
    n = normalize(e)
    out: dict[int, Expr] = {}
    for term in sp.Add.make_args(n):
        coeff, xpart = term.as_independent(x, as_Add=False)
        if xpart == 1:
            k = 0
        elif xpart == x:
            k = 1
        elif xpart.is_Pow and xpart.base == x and xpart.exp.is_Integer:
            k = int(xpart.exp)
        else:
            raise NotLaurentInX(f"term {term} is not an integer power of x times a t-function")
        out[k] = out.get(k, 0) + coeff
    return {k: normalize(v) for k, v in sorted(out.items()) if normalize(v) != 0}


# --------------------------------------------------------------------------
# numerical evaluation

_UNARY = {
    sp.exp: np.exp,
    sp.sin: np.sin,
    sp.cos: np.cos,
    sp.atan: np.arctan,
    sp.Abs: np.abs,
    sp.re: np.real,
    sp.im: np.imag,
    sp.conjugate: np.conj,
}


def evaluate(e, env: Mapping[sp.Symbol, object]):
    """Vectorised complex evaluation of ``e`` with symbol values from ``env``.

    Raises :class:`SingularityError` when a negative power, ``tan`` or
    ``log`` meets an argument within 1e-12 of its pole.  Error is that of
    the underlying numpy kernels: a few ulps per node, amplified by
    cancellation in ``Add`` nodes and by ``|exponent|`` in ``Pow``.
    """
    env = {k: np.asarray(v, dtype=complex) for k, v in env.items()}
    memo: dict = {}

    def ev(node):
        if node in memo:
            return memo[node]
        if node.is_Symbol:
            if node not in env:
                raise NLSClassError(f"no value for symbol {node}")
            val = env[node]
        elif node.is_number and not node.has(sp.Function) and not node.is_Pow:
            val = np.complex128(complex(node))
        elif node.is_Add:
            val = sum(ev(a) for a in node.args)
        elif node.is_Mul:
            val = ev(node.args[0])
            for a in node.args[1:]:
                val = val * ev(a)
        elif node.is_Pow:
            b = ev(node.base)
            ex = node.exp
            if ex.is_number and ex.is_real and ex < 0 and np.any(np.abs(b) < SINGULAR_EPS):
                raise SingularityError(f"{node.base} vanishes in {node}")
            if ex.is_Integer:
                k = int(ex)
                val = b**k if k >= 0 else 1.0 / b ** (-k)
            else:
                val = np.power(b, ev(ex))
        elif isinstance(node, sp.tan):
            a = ev(node.args[0])
            if np.any(np.abs(np.cos(a)) < SINGULAR_EPS):
                raise SingularityError(f"pole of {node}")
            val = np.tan(a)
        elif isinstance(node, sp.log):
            a = ev(node.args[0])
            if np.any(np.abs(a) < SINGULAR_EPS):
                raise SingularityError(f"log of zero in {node}")
            val = np.log(a)
        elif node.func in _UNARY:
            val = _UNARY[node.func](ev(node.args[0]))
        else:
            raise NLSClassError(f"cannot evaluate node {node.func.__name__}")
        memo[node] = val
        return val

    return ev(sp.sympify(e))


def eval_numeric(e, t_val: float, x_val: float = 0.0, extra: Mapping | None = None) -> complex:
    env = {t: t_val, x: x_val}
    env.update(extra or {})
    return complex(evaluate(e, env))


# --------------------------------------------------------------------------
# sample plans and zero testing

def _poly_real_roots(base, var, lo, hi):
    try:
        poly = sp.Poly(base, var)
    except sp.PolynomialError:
        return []
    if poly.free_symbols - {var}:
        return []
    coeffs = [complex(c) for c in poly.all_coeffs()]
    if len(coeffs) < 2:
        return []
    roots = np.roots(coeffs)
    # repeated roots come back from np.roots with small spurious imaginary parts
    return [float(r.real) for r in roots
            if abs(r.imag) < 1e-6 * max(1.0, abs(r)) and lo - 1 <= r.real <= hi + 1]


def detect_singularities(exprs, t_range=(-3.0, 3.0), x_range=(-3.0, 3.0)) -> list[tuple[str, float]]:
    """Real poles of univariate denominators, log arguments and tan poles."""
    found: set[tuple[str, float]] = set()
    ranges = {"t": (t, t_range), "x": (x, x_range)}
    for e in exprs:
        for node in sp.preorder_traversal(sp.sympify(e)):
            bases = []
            if node.is_Pow and node.exp.is_number and node.exp < 0:
                bases.append(node.base)
            elif isinstance(node, sp.log):
                bases.append(node.args[0])
            elif isinstance(node, sp.tan):
                arg = node.args[0]
                for name, (var, (lo, hi)) in ranges.items():
                    if arg.free_symbols == {var} and sp.degree(arg, var) == 1:
                        k = float(arg.coeff(var, 1))
                        c = float(arg.coeff(var, 0))
                        n_lo = math.floor((min(k * lo, k * hi) + c) / math.pi - 1)
                        n_hi = math.ceil((max(k * lo, k * hi) + c) / math.pi + 1)
                        for n in range(n_lo, n_hi + 1):
                            found.add((name, round((math.pi / 2 + n * math.pi - c) / k, 12)))
                continue
            for base in bases:
                for name, (var, (lo, hi)) in ranges.items():
                    if base.free_symbols == {var}:
                        for r in _poly_real_roots(base, var, lo, hi):
                            found.add((name, round(r, 12)))
    return sorted(found)


def growth_window(exprs, half_width: float = 3.0, budget: float = 4.0) -> tuple[float, float]:
    """Symmetric t-range on which every exp(k t + c) stays below exp(budget + c).

    Exponentials of large rate sampled on a wide window make rounding noise of
    exactly cancelling terms grow like exp(|k| T); the window is narrowed to
    T = min(half_width, budget / max|k|).
    """
    rate = 0.0
    for e in exprs:
        for node in sp.preorder_traversal(sp.sympify(e)):
            if isinstance(node, sp.exp) and node.args[0].free_symbols == {t}:
                arg = sp.expand(node.args[0])
                if sp.degree(arg, t) == 1:
                    rate = max(rate, abs(float(arg.coeff(t, 1))))
    width = half_width if rate == 0 else min(half_width, budget / rate)
    return (-width, width)


@dataclass(frozen=True, eq=False)
class SamplePlan:
    """Paired sample points (t_k, x_k) kept away from declared singularities."""

    t_samples: tuple
    x_samples: tuple
    excluded_radii: Mapping[tuple[str, float], float] = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if len(self.t_samples) != len(self.x_samples):
            raise ValueError("t_samples and x_samples must have equal length")
        for (var, loc), radius in self.excluded_radii.items():
            vals = np.asarray(self.t_samples if var == "t" else self.x_samples, dtype=float)
            if vals.size and np.any(np.abs(vals - loc) < radius):
                raise ValueError(f"a sample lies within {radius} of singularity {var}={loc}")

    @classmethod
    def build(cls, n: int = 256, seed: int = 0, t_range=(-3.0, 3.0), x_range=(-3.0, 3.0),
              singularities=(), radius: float = DEFAULT_RADIUS,
              tolerance: float = DEFAULT_TOLERANCE) -> "SamplePlan":
        excluded = {(var, float(loc)): radius for var, loc in singularities}
        rng = np.random.default_rng(seed)
        ts: list[float] = []
        xs: list[float] = []
        for _ in range(1000):
            tt = rng.uniform(*t_range, size=4 * n)
            xx = rng.uniform(*x_range, size=4 * n)
            ok = np.ones(tt.shape, dtype=bool)
            for (var, loc), r in excluded.items():
                ok &= np.abs((tt if var == "t" else xx) - loc) >= r
            ts.extend(tt[ok].tolist())
            xs.extend(xx[ok].tolist())
            if len(ts) >= n:
                break
        if len(ts) < n:
            raise ValueError("sampling region is empty after exclusions")
        return cls(tuple(ts[:n]), tuple(xs[:n]), excluded, tolerance)

    @classmethod
    def for_exprs(cls, *exprs, n: int = 256, seed: int = 0, t_range=(-3.0, 3.0),
                  x_range=(-3.0, 3.0), radius: float = DEFAULT_RADIUS,
                  tolerance: float = DEFAULT_TOLERANCE, extra_singularities=()) -> "SamplePlan":
        sing = detect_singularities(exprs, t_range, x_range) + list(extra_singularities)
        return cls.build(n, seed, t_range, x_range, sing, radius, tolerance)

    def with_singularities(self, *exprs, seed: int = 0) -> "SamplePlan":
        """Same size/ranges/tolerance, additionally avoiding the poles of ``exprs``."""
        ts = np.asarray(self.t_samples)
        xs = np.asarray(self.x_samples)
        t_range = (float(ts.min()), float(ts.max())) if ts.size else (-3.0, 3.0)
        x_range = (float(xs.min()), float(xs.max())) if xs.size else (-3.0, 3.0)
        sing = set(detect_singularities(exprs, t_range, x_range))
        if sing <= set(self.excluded_radii):
            return self
        sing |= set(self.excluded_radii)
        radius = max(self.excluded_radii.values(), default=DEFAULT_RADIUS)
        return SamplePlan.build(len(ts), seed, t_range, x_range, sorted(sing), radius, self.tolerance)

    @property
    def size(self) -> int:
        return len(self.t_samples)

    def env(self) -> dict:
        return {t: np.asarray(self.t_samples), x: np.asarray(self.x_samples)}


class Verdict(enum.Enum):
    PROVED_ZERO = "ProvedZero"
    PROVED_NONZERO = "ProvedNonzero"
    PROBABLY_ZERO = "ProbablyZero"
    PROBABLY_NONZERO = "ProbablyNonzero"

    @property
    def zero(self) -> bool:
        return self in (Verdict.PROVED_ZERO, Verdict.PROBABLY_ZERO)

    @property
    def grade(self) -> str:
        return "Proved" if self.name.startswith("PROVED") else "Probable"


@dataclass(frozen=True)
class ZeroTest:
    verdict: Verdict
    max_abs: float
    scale: float
    tolerance: float
    n_points: int
    witness: dict | None = None

    @property
    def zero(self) -> bool:
        return self.verdict.zero

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "max_residual": self.max_abs,
            "scale": self.scale,
            "tolerance": self.tolerance,
            "n_points": self.n_points,
            "witness": self.witness,
        }


def _witness(plan, k, value):
    return {"t": plan.t_samples[k], "x": plan.x_samples[k],
            "value": [float(np.real(value)), float(np.imag(value))]}


def sample_values(e, plan: SamplePlan, extra: Mapping | None = None):
    env = plan.env()
    env.update(extra or {})
    vals = evaluate(e, env)
    return np.broadcast_to(vals, (plan.size,))


def is_zero(e, plan: SamplePlan | None = None) -> ZeroTest:
    """Decide ``e == 0``: structurally when possible, else by sampling.

    Numerical verdicts compare the max modulus over the plan with
    ``plan.tolerance`` times the largest term magnitude (at least 1).
    """
    e = sp.sympify(e)
    # expansion of large nested trees can be very slow; sample them as they are
    n = normalize(e) if sp.count_ops(e) <= EXPAND_LIMIT else e
    if plan is None:
        plan = SamplePlan.for_exprs(n)
    if n == 0:
        return ZeroTest(Verdict.PROVED_ZERO, 0.0, 1.0, plan.tolerance, plan.size)
    if not n.free_symbols:
        value = complex(n)
        if n.is_zero is False or abs(value) >= plan.tolerance:
            return ZeroTest(Verdict.PROVED_NONZERO, abs(value), 1.0, plan.tolerance, plan.size,
                            _witness(plan, 0, value) if plan.size else None)
        return ZeroTest(Verdict.PROBABLY_ZERO, abs(value), 1.0, plan.tolerance, plan.size)
    vals = sample_values(n, plan)
    scale = 1.0
    for term in sp.Add.make_args(n):
        scale = max(scale, float(np.max(np.abs(sample_values(term, plan)))))
    mags = np.abs(vals)
    k = int(np.argmax(mags))
    max_abs = float(mags[k])
    if max_abs < plan.tolerance * scale:
        return ZeroTest(Verdict.PROBABLY_ZERO, max_abs, scale, plan.tolerance, plan.size)
    return ZeroTest(Verdict.PROBABLY_NONZERO, max_abs, scale, plan.tolerance, plan.size,
                    _witness(plan, k, vals[k]))
