"""Equivalence transformations of the class and their generators.

A continuous transformation is fixed by three real functions of t:

    t~ = T(t),   x~ = sqrt(T_t) x + X(t),

with the potential transformed by

    V~ = (1/T_t) [ V + (T_tt/T_t)_t x^2/8 + (X_t/sqrt(T_t))_t x/2 + i (gh/4) T_tt/T_t
                   - ((T_tt/T_t) x/4 + X_t/(2 sqrt(T_t)))^2 + Psi_t ].

The discrete part is generated by I_x (x -> -x) and I_t (t -> -t together
with complex conjugation of V).  An :class:`EquivMap` applies its
reflections first and then the continuous part.

Two evaluation routes are provided.  :func:`pullback` returns the bracket
above as a function of the *old* coordinates, i.e. ``V~(T(t), sqrt(T_t) x + X)``;
it needs no inverse of T and is what the numeric checks use.
:func:`apply_to_potential` rewrites the result in the new coordinates and so
needs T^{-1}, which is only available for the registered families.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
import sympy as sp

from . import exprcore as ec
from .errors import DomainViolation, NLSClassError, SingularityError, UnregisteredInverse
from .invariance import ModelParams, Potential, _as_potential

t, x = ec.t, ec.x
_half = sp.Rational(1, 2)
_GRAMMAR_FUNCS = (sp.exp, sp.sin, sp.cos, sp.tan, sp.log)


# --------------------------------------------------------------------------
# registry of invertible T

def _const(e) -> bool:
    return t not in sp.sympify(e).free_symbols


def _register(T: sp.Expr):
    """Return (family, inverse, default domain) or None when T is not registered."""
    T = sp.sympify(T)
    if _const(T):
        return None
    num, den = sp.fraction(sp.cancel(sp.together(T)))
    try:
        pn, pd = sp.Poly(num, t), sp.Poly(den, t)
    except sp.PolynomialError:
        pn = pd = None
    if pn is not None and pn.degree() <= 1 and pd.degree() <= 1:
        a1, a0 = (pn.all_coeffs() if pn.degree() == 1 else [0, pn.all_coeffs()[0]])
        b1, b0 = (pd.all_coeffs() if pd.degree() == 1 else [0, pd.all_coeffs()[0]])
        det = sp.nsimplify(a1 * b0 - b1 * a0)
        if not (det.is_number and det > 0):
            return None
        if b1 == 0:
            a, b = sp.sympify(a1) / b0, sp.sympify(a0) / b0
            return "affine", ec.normalize((t - b) / a), None
        inv = sp.cancel((b0 * t - a0) / (a1 - b1 * t))
        # the branch containing t = 0, or t > 0 when the pole sits at 0
        pole = float(-b0 / b1)
        dom = (-math.inf, pole) if pole > 0 else (pole, math.inf)
        return "moebius", inv, dom
    c, k, d, e = (sp.Wild(n, exclude=[t]) for n in "ckde")
    m = T.match(c * sp.exp(k * t) + d)
    if m and m[c] != 0 and m[k] != 0 and (m[c] * m[k]).is_positive:
        inv = sp.log((t - m[d]) / m[c]) / m[k]
        return "exponential", inv, None
    m = T.match(sp.tan(k * t))
    if m and m[k].is_positive:
        half = float(sp.pi / (2 * m[k]))
        return "tan", sp.atan(t) / m[k], (-half, half)
    m = T.match(c * sp.log(k * t + d) + e)
    if m and m.get(c, 0) != 0 and m.get(k, 0) != 0 and (m[c] * m[k]).is_positive:
        inv = (sp.exp((t - m.get(e, 0)) / m[c]) - m.get(d, 0)) / m[k]
        root = float(-m[d] / m[k])
        dom = (root, math.inf) if m[k] > 0 else (-math.inf, root)
        return "logarithmic", inv, dom
    return None


def in_grammar(e) -> bool:
    """True when ``e`` only uses nodes the expression grammar can print."""
    e = sp.sympify(e)
    for node in sp.preorder_traversal(e):
        if isinstance(node, sp.Function) and not isinstance(node, _GRAMMAR_FUNCS):
            return False
        if node.is_Float:
            return False
    return True


def _sqrt_pos(e, domain=None):
    """sqrt of an expression known to be positive on ``domain``."""
    s = sp.sqrt(sp.factor(e))
    if s.has(sp.Abs):
        mid = _domain_point(domain)
        s = s.replace(lambda n: isinstance(n, sp.Abs),
                      lambda n: n.args[0] if ec.eval_numeric(n.args[0], mid).real > 0 else -n.args[0])
    return s


def _drop_abs(e, domain):
    """Replace |f(t)| by +-f(t), the sign read off at a point of ``domain``.

    Square roots of composed Jacobians simplify to |.| of functions that keep
    one sign on the domain of the map (e.g. |cos 2t| on the tan branch).
    """
    if not e.has(sp.Abs):
        return e
    mid = _domain_point(domain)
    return sp.expand(e.replace(
        lambda n: isinstance(n, sp.Abs),
        lambda n: n.args[0] if ec.eval_numeric(n.args[0], mid).real > 0 else -n.args[0]))


def _domain_point(domain) -> float:
    if domain is None:
        return 0.5
    lo, hi = domain
    if math.isinf(lo) and math.isinf(hi):
        return 0.5
    if math.isinf(lo):
        return hi - 1.0
    if math.isinf(hi):
        return lo + 1.0
    return 0.5 * (lo + hi)


def _tidy(e) -> sp.Expr:
    e = sp.expand(sp.powsimp(sp.powdenest(sp.expand(e))))
    if e.has(sp.atan, sp.Abs):
        e = sp.expand(sp.simplify(e))
    # collect over a common denominator x^k d(t) so that x-powers separate
    num, den = sp.fraction(sp.together(e))
    rest, xpart = sp.factor(den).as_independent(x, as_Add=False)
    k = 0
    if xpart != 1:
        if xpart == x:
            k = 1
        elif xpart.is_Pow and xpart.base == x and xpart.exp.is_Integer:
            k = int(xpart.exp)
        else:
            return ec.normalize(e)
    try:
        poly = sp.Poly(sp.expand(num), x)
    except sp.PolynomialError:
        return ec.normalize(e)
    out = sp.Integer(0)
    for (j,), c in poly.terms():
        out += sp.cancel(c / rest) * x ** (j - k)
    return ec.normalize(out)


# --------------------------------------------------------------------------
# maps

@dataclass(frozen=True)
class EquivMap:
    """Reflections (applied first) followed by the continuous map (T, X, Psi).

    ``T_inv`` is the inverse of T as an expression in t; it is filled in from
    the registry when T belongs to a registered family and is ``None`` for
    numeric-only maps.  ``domain`` is the open t-interval (None = the whole
    line) on which T is used.
    """

    T: sp.Expr = t
    X: sp.Expr = sp.Integer(0)
    Psi: sp.Expr = sp.Integer(0)
    reflect_x: bool = False
    reflect_t: bool = False
    T_inv: sp.Expr | None = None
    domain: tuple | None = None
    family: str = ""

    def __post_init__(self):
        for name in ("T", "X", "Psi"):
            val = sp.sympify(getattr(self, name))
            if x in val.free_symbols:
                raise NLSClassError(f"{name} = {val} depends on x")
            object.__setattr__(self, name, val)
        if _const(self.T):
            raise NLSClassError("T must depend on t")
        if not self.family:
            reg = _register(self.T)
            if reg is None:
                fam, inv, dom = "unregistered", self.T_inv, None
            else:
                fam, inv, dom = reg
            object.__setattr__(self, "family", fam if self.T_inv is None else "given")
            if self.T_inv is None:
                object.__setattr__(self, "T_inv", inv)
            if self.domain is None and dom is not None:
                object.__setattr__(self, "domain", dom)
        if self.T_inv is not None:
            object.__setattr__(self, "T_inv", sp.sympify(self.T_inv))
        if self.domain is not None:
            lo, hi = (float(v) for v in self.domain)
            if not lo < hi:
                raise NLSClassError(f"empty domain {self.domain}")
            object.__setattr__(self, "domain", None if (lo, hi) == (-math.inf, math.inf) else (lo, hi))

    # constructors -------------------------------------------------------
    @classmethod
    def identity(cls) -> "EquivMap":
        return cls()

    @classmethod
    def tau(cls) -> "EquivMap":
        """The discrete map T = -1/t (on t > 0)."""
        return cls(T=-1 / t)

    @classmethod
    def Ix(cls) -> "EquivMap":
        return cls(reflect_x=True)

    @classmethod
    def It(cls) -> "EquivMap":
        return cls(reflect_t=True)

    # derived quantities --------------------------------------------------
    @property
    def numeric_only(self) -> bool:
        return self.T_inv is None

    @property
    def T_t(self) -> sp.Expr:
        return sp.diff(self.T, t)

    @property
    def sqrt_T_t(self) -> sp.Expr:
        return _sqrt_pos(self.T_t, self.domain)

    def is_identity(self) -> bool:
        return (not self.reflect_x and not self.reflect_t and sp.simplify(self.T - t) == 0
                and sp.simplify(self.X) == 0 and sp.simplify(sp.diff(self.Psi, t)) == 0)

    def point_map(self, tv, xv):
        """Image (t~, x~) of sample points under the continuous part."""
        tv = np.asarray(tv, dtype=float)
        xv = np.asarray(xv, dtype=float)
        env = {t: tv}
        tt = np.real(np.broadcast_to(ec.evaluate(self.T, env), tv.shape))
        s = np.real(np.broadcast_to(ec.evaluate(self.sqrt_T_t, env), tv.shape))
        xx = s * xv + np.real(np.broadcast_to(ec.evaluate(self.X, env), tv.shape))
        return tt, xx

    def check_domain(self, ts: Iterable[float]) -> None:
        """Raise DomainViolation unless T_t > 0 at every sample time in the domain."""
        ts = np.asarray(list(ts), dtype=float)
        if self.domain is not None:
            lo, hi = self.domain
            if np.any((ts <= lo) | (ts >= hi)):
                raise DomainViolation(f"sample time outside the domain {self.domain} of T={self.T}")
        if ts.size == 0:
            return
        try:
            vals = np.broadcast_to(ec.evaluate(self.T_t, {t: ts}), ts.shape)
        except SingularityError as exc:
            raise DomainViolation(str(exc)) from exc
        bad = np.real(vals) <= 0
        if np.any(bad):
            k = int(np.argmax(bad))
            raise DomainViolation(f"T_t = {float(np.real(vals[k]))} <= 0 at t = {ts[k]}")

    # serialization ---------------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "T": ec.format_expr(self.T),
            "X": ec.format_expr(self.X),
            "Psi": ec.format_expr(self.Psi),
            "reflect_x": self.reflect_x,
            "reflect_t": self.reflect_t,
        }
        if self.domain is not None:
            d["domain"] = [_json_float(v) for v in self.domain]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, bindings=None) -> "EquivMap":
        known = {"T", "X", "Psi", "reflect_x", "reflect_t", "domain"}
        extra = set(d) - known
        if extra:
            raise NLSClassError(f"unknown EquivMap fields {sorted(extra)}")
        dom = d.get("domain")
        if dom is not None:
            dom = tuple(float(v) for v in dom)
        return cls(
            T=ec.parse(str(d.get("T", "t")), bindings),
            X=ec.parse(str(d.get("X", "0")), bindings),
            Psi=ec.parse(str(d.get("Psi", "0")), bindings),
            reflect_x=bool(d.get("reflect_x", False)),
            reflect_t=bool(d.get("reflect_t", False)),
            domain=dom,
        )

    @classmethod
    def from_json(cls, text: str, bindings=None) -> "EquivMap":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise NLSClassError(f"invalid map JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise NLSClassError("map JSON must be an object")
        return cls.from_dict(d, bindings)

    def subs(self, mapping) -> "EquivMap":
        """Substitute template parameters in T, X and Psi."""
        return EquivMap(self.T.subs(mapping), self.X.subs(mapping), self.Psi.subs(mapping),
                        self.reflect_x, self.reflect_t, domain=self.domain)


def _json_float(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _conj_x(m: EquivMap) -> EquivMap:
    """I_x C I_x for the continuous part C of ``m``."""
    return replace(m, X=-m.X)


def _conj_t(m: EquivMap) -> EquivMap:
    """I_t C I_t: (T, X, Psi)(t) -> (-T(-t), X(-t), -Psi(-t))."""
    flip = {t: -t}
    inv = None if m.T_inv is None else -m.T_inv.subs(flip)
    dom = None if m.domain is None else (-m.domain[1], -m.domain[0])
    return replace(m, T=-m.T.subs(flip), X=m.X.subs(flip), Psi=-m.Psi.subs(flip),
                   T_inv=inv, domain=dom)


def _continuous(m: EquivMap) -> EquivMap:
    return replace(m, reflect_x=False, reflect_t=False)


# --------------------------------------------------------------------------
# action on potentials

def reflect_potential(v, reflect_x: bool = False, reflect_t: bool = False) -> sp.Expr:
    v = sp.sympify(v)
    if reflect_x:
        v = v.subs(x, -x)
    if reflect_t:
        v = v.subs(t, -t).xreplace({sp.I: -sp.I})
    return ec.normalize(v)


def pullback(m: EquivMap, p: ModelParams, V) -> sp.Expr:
    """``V~(T(t), sqrt(T_t) x + X(t))`` as an expression in the old (t, x)."""
    v = reflect_potential(_as_potential(V).expr, m.reflect_x, m.reflect_t)
    T_t = m.T_t
    r = sp.cancel(sp.diff(T_t, t) / T_t)
    s = m.sqrt_T_t
    w = sp.diff(m.X, t) / s
    bracket = (v + sp.diff(r, t) * x**2 / 8 + sp.diff(w, t) * x / 2 + sp.I * p.gh / 4 * r
               - (r * x / 4 + w / 2) ** 2 + sp.diff(m.Psi, t))
    return bracket / T_t


def apply_to_potential(m: EquivMap, p: ModelParams, V) -> Potential:
    """The transformed potential in the new coordinates (renamed back to t, x).

    The old x is replaced by (x~ - X)/sqrt(T_t) while still written in the old
    t, and the old t is replaced by T^{-1}(t~) afterwards.  The model
    parameters are untouched.
    """
    if m.T_inv is None:
        raise UnregisteredInverse(
            f"T = {m.T} is not in a registered family; use pullback() for numeric evaluation")
    b = pullback(m, p, V)
    inv = m.T_inv
    sq = m.sqrt_T_t
    try:
        parts = ec.x_laurent_decompose(b)
    except NLSClassError:
        parts = None
    if parts is None or (m.X != 0 and min(parts, default=0) < 0):
        u = sp.Dummy("u", real=True)
        out = b.subs(x, (u - m.X) / sq).subs(t, inv).subs(u, x)
        return Potential(_tidy(out))
    # Laurent route: transform each t-coefficient separately
    coeffs: dict[int, sp.Expr] = {}
    for k, c in parts.items():
        if m.X == 0:
            coeffs[k] = coeffs.get(k, 0) + c / sq**k
            continue
        for j in range(k + 1):
            coeffs[j] = coeffs.get(j, 0) + c * sp.binomial(k, j) * (-m.X) ** (k - j) / sq**k
    out = sp.Integer(0)
    for k, c in coeffs.items():
        out += _tidy_t(c.subs(t, inv)) * x**k
    return Potential(ec.normalize(out))


def _tidy_t(c) -> sp.Expr:
    """Light simplification of a function of t."""
    c = sp.powsimp(sp.powdenest(c))
    if c.has(sp.atan, sp.Abs):
        c = sp.simplify(c)
    return sp.cancel(sp.together(c))


def action_residual(m: EquivMap, p: ModelParams, V, target, plan: ec.SamplePlan | None = None,
                    n: int = 256, seed: int = 0,
                    tolerance: float = ec.DEFAULT_TOLERANCE) -> ec.ZeroTest:
    """Zero-test ``m . V - target`` on a plan inside the domain of ``m``.

    The comparison is made in the old coordinates: the pullback of ``V`` is
    compared with ``target`` evaluated at the image points, so no inverse of
    T is needed.
    """
    tgt = _as_potential(target).expr
    b = pullback(m, p, V)
    composed = ec.normalize(tgt.subs({t: m.T, x: m.sqrt_T_t * x + m.X}, simultaneous=True))
    diff = b - composed
    if plan is None:
        plan = plan_for(m, b, composed, n=n, seed=seed, tolerance=tolerance)
    m.check_domain(plan.t_samples)
    return ec.is_zero(diff, plan)


def plan_for(m: EquivMap, *exprs, n: int = 256, seed: int = 0,
             tolerance: float = ec.DEFAULT_TOLERANCE) -> ec.SamplePlan:
    """A sample plan inside the domain of ``m`` (intersected with [-3, 3])."""
    lo, hi = -3.0, 3.0
    if m.domain is not None:
        d_lo, d_hi = m.domain
        lo, hi = max(lo, d_lo), min(hi, d_hi)
        if hi - lo < 1.0:
            # the domain lies (mostly) outside [-3, 3]: use a window at its finite end
            lo, hi = (d_lo, min(d_hi, d_lo + 6.0)) if math.isfinite(d_lo) else (max(d_lo, d_hi - 6.0), d_hi)
        margin = 0.02 * (hi - lo)
        lo, hi = lo + margin, hi - margin
    return ec.SamplePlan.for_exprs(*exprs, n=n, seed=seed, t_range=(lo, hi),
                                   x_range=(-3.0, 3.0), tolerance=tolerance,
                                   radius=min(ec.DEFAULT_RADIUS, 0.1 * (hi - lo)))


# --------------------------------------------------------------------------
# group structure

def compose(m1: EquivMap, m2: EquivMap) -> EquivMap:
    """The map ``m1 o m2`` (apply ``m2`` first)."""
    b = m2
    if m1.reflect_x:
        b = _conj_x(b)
    if m1.reflect_t:
        b = _conj_t(b)
    a = m1
    Tb = b.T
    on_b = {t: Tb}
    a_T_t = a.T_t
    r_a = sp.cancel(sp.diff(a_T_t, t) / a_T_t)
    s_a = a.sqrt_T_t
    w_a = sp.diff(a.X, t) / s_a
    T = _simplify_t(a.T.subs(on_b))
    X = _simplify_t(b.X * s_a.subs(on_b) + a.X.subs(on_b))
    Psi = _simplify_t(b.Psi + a.Psi.subs(on_b) + r_a.subs(on_b) * b.X**2 / 8
                      + w_a.subs(on_b) * b.X / 2)
    reg = _register(T)
    if reg is not None:
        fam, inv, _ = reg
    elif a.T_inv is not None and b.T_inv is not None:
        fam, inv = "composite", _simplify_t(b.T_inv.subs(t, a.T_inv))
    else:
        fam, inv = "unregistered", None
    dom = _composed_domain(a, b)
    X, Psi = _drop_abs(X, dom), _drop_abs(Psi, dom)
    return EquivMap(T, X, Psi, m1.reflect_x != m2.reflect_x, m1.reflect_t != m2.reflect_t,
                    T_inv=inv, domain=dom, family=fam)


def _composed_domain(a: EquivMap, b: EquivMap):
    dom = b.domain
    if a.domain is None:
        return dom
    if b.T_inv is None:
        return dom
    lo_b, hi_b = dom if dom is not None else (-math.inf, math.inf)

    def pre(v, fallback):
        if math.isinf(v):
            return fallback
        try:
            return float(sp.re(sp.N(b.T_inv.subs(t, v))))
        except (TypeError, ValueError):
            return fallback

    lo = max(lo_b, pre(a.domain[0], lo_b))
    hi = min(hi_b, pre(a.domain[1], hi_b))
    if not lo < hi:
        raise DomainViolation("composition has an empty domain")
    # the preimage bounds can fall back to b's own; make sure b lands inside a's domain
    probe = _domain_point((lo, hi))
    img = float(np.real(ec.eval_numeric(b.T, probe)))
    if not a.domain[0] < img < a.domain[1]:
        raise DomainViolation(f"T = {b.T} maps t = {probe} outside the domain {a.domain} of the outer map")
    return (lo, hi)


def _simplify_t(e) -> sp.Expr:
    e = sp.sympify(e)
    if e.has(sp.exp, sp.log, sp.atan, sp.tan) or any(
            n.is_Pow and not n.exp.is_Integer for n in sp.preorder_traversal(e)):
        e = sp.simplify(e)
    else:
        e = sp.cancel(e)
        num, den = sp.fraction(e)
        if den.is_number:
            e = sp.expand(e)
    return e


def invert(m: EquivMap) -> EquivMap:
    """The inverse map.  Raises UnregisteredInverse when T^{-1} is not expressible."""
    S = m.T_inv
    if S is None or not in_grammar(S):
        raise UnregisteredInverse(
            f"inverse of T = {m.T} is not expressible in the grammar; numeric inversion only")
    c = _continuous(m)
    S_t = sp.diff(S, t)
    sqrt_S_t = _sqrt_pos(S_t, _image_domain(m))
    X_b = _simplify_t(-c.X.subs(t, S) * sqrt_S_t)
    T_t = c.T_t
    r = sp.cancel(sp.diff(T_t, t) / T_t)
    w = sp.diff(c.X, t) / c.sqrt_T_t
    Psi_b = _simplify_t(-(c.Psi.subs(t, S) + r.subs(t, S) * X_b**2 / 8 + w.subs(t, S) * X_b / 2))
    inv = EquivMap(_simplify_t(S), X_b, Psi_b, T_inv=m.T, domain=_image_domain(m), family="inverse")
    # m = C R, so m^{-1} = R C^{-1} = (R C^{-1} R) R
    if m.reflect_t:
        inv = _conj_t(inv)
    if m.reflect_x:
        inv = _conj_x(inv)
    return replace(inv, reflect_x=m.reflect_x, reflect_t=m.reflect_t)


def _image_domain(m: EquivMap):
    if m.domain is None:
        lo, hi = -math.inf, math.inf
    else:
        lo, hi = m.domain

    def img(v):
        if math.isinf(v):
            lim = sp.limit(m.T, t, sp.oo if v > 0 else -sp.oo)
        else:
            lim = sp.limit(m.T, t, v, "+" if v == lo else "-")
        if lim in (sp.oo, -sp.oo) or not lim.is_finite:
            return math.inf if lim == sp.oo else -math.inf
        return float(lim)

    a, b = img(lo), img(hi)
    if math.isinf(a) and math.isinf(b):
        return None
    return (a, b)


# --------------------------------------------------------------------------
# generators

_KINDS = ("Dprime", "Gprime", "Mprime")


@dataclass(frozen=True)
class InfinitesimalGen:
    """D'(xi), G'(chi) or M'(lambda) of the equivalence algebra."""

    kind: str
    param: sp.Expr

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise NLSClassError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        val = ec.normalize(self.param)
        if x in val.free_symbols:
            raise NLSClassError("generator parameter must not depend on x")
        object.__setattr__(self, "param", val)

    def flow(self, eps) -> EquivMap:
        """First-order one-parameter family with parameter ``eps``."""
        eps = sp.nsimplify(eps) if isinstance(eps, float) else sp.sympify(eps)
        f = self.param
        if self.kind == "Dprime":
            return EquivMap(T=t + eps * f)
        if self.kind == "Gprime":
            return EquivMap(X=eps * f)
        return EquivMap(Psi=eps * f)


def infinitesimal_action(g: InfinitesimalGen, p: ModelParams, V) -> sp.Expr:
    """theta, the coefficient of the V-direction of ``g``."""
    f = g.param
    if g.kind == "Dprime":
        v = _as_potential(V).expr
        return ec.normalize(sp.diff(f, t, 3) * x**2 / 8 + sp.I * p.gh / 4 * sp.diff(f, t, 2)
                            - sp.diff(f, t) * v)
    if g.kind == "Gprime":
        return ec.normalize(sp.diff(f, t, 2) * x / 2)
    return ec.normalize(sp.diff(f, t))


EXACT_REMAINDER = 1e-14


@dataclass
class ConsistencyReport:
    kind: str
    eps: list
    first_order_error: list
    remainder: list
    slope_first: float | None
    slope_second: float | None
    exact: bool

    @property
    def ok(self) -> bool:
        if self.exact:
            return True
        return (self.slope_second is not None and 1.8 <= self.slope_second <= 2.2
                and self.slope_first is not None and 0.8 <= self.slope_first <= 1.2)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "eps": self.eps, "first_order_error": self.first_order_error,
                "remainder": self.remainder, "slope_first": self.slope_first,
                "slope_second": self.slope_second, "exact": self.exact, "ok": self.ok}


def finite_infinitesimal_consistency(g: InfinitesimalGen, p: ModelParams, V,
                                     eps_list: Sequence[float] = (1e-2, 1e-3, 1e-4, 1e-5),
                                     plan: ec.SamplePlan | None = None) -> ConsistencyReport:
    """Compare the flow of ``g`` at small eps with eps * theta.

    ``remainder`` is max |V~_eps - V - eps theta| and ``first_order_error`` is
    the same quantity divided by eps, both taken over the plan in the old
    coordinates.  Log-log slopes are fitted over eps; a remainder below
    1e-14 at every eps is reported as exact (no slope).
    """
    pot = _as_potential(V)
    theta = infinitesimal_action(g, p, pot)
    if plan is None:
        plan = ec.SamplePlan.for_exprs(pot.expr, theta, n=128)
    env = plan.env()
    v_vals = np.broadcast_to(ec.evaluate(pot.expr, env), (plan.size,))
    th_vals = np.broadcast_to(ec.evaluate(theta, env), (plan.size,))
    rem, first = [], []
    for eps in eps_list:
        m = g.flow(eps)
        try:
            m.check_domain(plan.t_samples)
        except DomainViolation as exc:
            raise DomainViolation(f"eps = {eps} too large: {exc}") from exc
        b = np.broadcast_to(ec.evaluate(pullback(m, p, pot), env), (plan.size,))
        r = float(np.max(np.abs(b - v_vals - float(eps) * th_vals)))
        rem.append(r)
        first.append(r / float(eps))
    exact = all(r < EXACT_REMAINDER for r in rem)
    s1 = s2 = None
    if not exact:
        le = np.log(np.asarray(eps_list, dtype=float))
        s2 = float(np.polyfit(le, np.log(np.maximum(rem, 1e-300)), 1)[0])
        s1 = float(np.polyfit(le, np.log(np.maximum(first, 1e-300)), 1)[0])
    return ConsistencyReport(g.kind, [float(e) for e in eps_list], first, rem, s1, s2, exact)
