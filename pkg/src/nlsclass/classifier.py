"""Classification of a given potential to a case of the tables.

Potentials depending on t only are reduced to ``i W(t)`` by a gauge
(Psi_t = -Re V), after which the time-dilation part ``D(xi)`` of their
algebra (xi at most quadratic) fixes a Moebius normalization of t.
Potentials depending on x only are decided from their Laurent coefficients
in x, following the stationary branch of the classification: the
coefficients determine the Table-2/3 row, and the tabulated equivalence
map carries the potential to its x-free Table-1 representative.

Potentials depending on both t and x are returned as the generic case 1.0.
"""
from __future__ import annotations

import json
import logging
from contextvars import ContextVar
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np
import sympy as sp

from . import exprcore as ec
from .equiv import EquivMap, action_residual, compose, in_grammar
from .errors import ConstraintViolation, NLSClassError, NotLaurentInX, TemplateRejection
from .invariance import AnsatzSpace, ModelParams, Potential, is_symmetry, solve_symmetries
from .tables import ClassCase, get_case

log = logging.getLogger(__name__)

t, x = ec.t, ec.x
I = sp.I

# every operator of an x-free potential lies in this span
TIMEDEP_ANSATZ = AnsatzSpace.parse("xi=1,t,t^2;chi=1,t;lam=1")
STATIONARY_POWERS = frozenset({-2, 0, 1, 2})


@dataclass(frozen=True)
class StationaryConstraint:
    """``(a x + b) V_x + 2 a V = c2 x^2 + c1 x + c0_re + i c0_im`` with (a, b) != (0, 0)."""

    a: Fraction
    b: Fraction
    c2: Fraction
    c1: Fraction
    c0_re: Fraction
    c0_im: Fraction

    def __post_init__(self):
        if self.a == 0 and self.b == 0:
            raise ConstraintViolation("a stationary constraint needs (a, b) != (0, 0)")

    def residual(self, V) -> sp.Expr:
        v = V.expr if isinstance(V, Potential) else sp.sympify(V)
        a, b = sp.Rational(self.a), sp.Rational(self.b)
        lhs = (a * x + b) * sp.diff(v, x) + 2 * a * v
        rhs = (sp.Rational(self.c2) * x**2 + sp.Rational(self.c1) * x + sp.Rational(self.c0_re)
               + I * sp.Rational(self.c0_im))
        return ec.normalize(lhs - rhs)

    def satisfied_by(self, V) -> bool:
        return ec.is_zero(self.residual(V)).zero


@dataclass
class ClassificationResult:
    case_id: str
    bindings: dict
    canon: EquivMap | None
    grade: str
    notes: list = field(default_factory=list)
    canonical_case: str | None = None
    canonical_bindings: dict = field(default_factory=dict)
    check: dict | None = None

    def to_dict(self) -> dict:
        return {
            "case": self.case_id,
            "bindings": {k: _fmt(v) for k, v in sorted(self.bindings.items())},
            "canon": None if self.canon is None else self.canon.to_dict(),
            "canonical_case": self.canonical_case,
            "canonical_bindings": {k: _fmt(v) for k, v in sorted(self.canonical_bindings.items())},
            "grade": self.grade,
            "notes": list(self.notes),
            "check": self.check,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, str):
        return v
    return ec.format_expr(sp.sympify(v))


def _exact(v) -> object:
    """Fraction when rational, otherwise the exact sympy number."""
    v = sp.nsimplify(sp.sympify(v)) if not isinstance(v, sp.Basic) else v
    v = sp.simplify(v) if not v.is_Rational else v
    if v.is_Rational:
        return Fraction(int(v.p), int(v.q))
    return v


# --------------------------------------------------------------------------
# grammar gate

def check_template(v: sp.Expr) -> None:
    """Reject x-dependence outside Laurent polynomials and exponentials."""
    for node in sp.preorder_traversal(v):
        if x not in node.free_symbols:
            continue
        if isinstance(node, sp.Function) and node.func is not sp.exp:
            raise TemplateRejection(f"{ec.format_expr(node)} is outside the template grammar",
                                    ec.format_expr(node))
        if node.is_Pow and not node.exp.is_Integer and x in node.base.free_symbols:
            raise TemplateRejection(f"non-integer power {ec.format_expr(node)} of x",
                                    ec.format_expr(node))


def _potential(p: ModelParams, V) -> Potential:
    if isinstance(V, Potential):
        return V
    if isinstance(V, str):
        return Potential.parse(V, model=p)
    return Potential(sp.sympify(V))


# --------------------------------------------------------------------------
# finishing

# sampling options of the canon check; classify() sets them for the duration of a call
_CHECK: ContextVar[dict] = ContextVar("nlsclass_check",
                                      default={"seed": 0, "tolerance": ec.DEFAULT_TOLERANCE})


def _finish(p: ModelParams, V: Potential, case: ClassCase, bindings: dict, canon: EquivMap | None,
            target: ClassCase, target_bindings: dict, notes: list) -> ClassificationResult:
    """Attach the zero-test of ``canon`` against the Table-1 template."""
    res = ClassificationResult(case.id, bindings, canon, "Probable", notes, target.id, target_bindings)
    if canon is None:
        return res
    tgt = target.potential(target_bindings, p)
    try:
        zt = action_residual(canon, p, V, tgt, **_CHECK.get())
    except NLSClassError as exc:
        res.notes.append(f"canon check failed: {exc}")
        return res
    res.check = {"target": ec.format_expr(tgt.expr), **zt.to_dict()}
    if zt.zero:
        res.grade = zt.verdict.grade
    else:
        res.notes.append("canonical map does not reach the target template")
        log.warning("classify: canon check failed for V=%s (case %s)", V, case.id)
    return res


def _chain(*maps: EquivMap) -> EquivMap:
    """``maps[0]`` applied first."""
    out = maps[0]
    for m in maps[1:]:
        out = compose(m, out)
    return out


def _sign_at(m: EquivMap) -> int:
    """Sign of T on the domain of m (used to choose the branch of tau)."""
    if m.domain is None:
        probe = 0.0
    else:
        lo, hi = m.domain
        probe = (lo + hi) / 2 if np.isfinite(lo) and np.isfinite(hi) else (
            lo + 1.0 if np.isfinite(lo) else (hi - 1.0 if np.isfinite(hi) else 0.0))
    val = float(np.real(ec.eval_numeric(m.T, probe)))
    return 1 if val > 0 else -1


def tau_on(sign: int) -> EquivMap:
    """T = -1/t on the half line t > 0 (sign=1) or t < 0 (sign=-1)."""
    return EquivMap(T=-1 / t, domain=(0.0, float("inf")) if sign > 0 else (float("-inf"), 0.0))


def normalize_nu_13(nu, gh) -> tuple:
    """Bring iv/t into the range nu >= gh/4 with tau (nu -> gh/2 - nu).

    Returns (nu, used_tau).  Idempotent.
    """
    nu, gh = sp.sympify(nu), sp.sympify(gh)
    if sp.simplify(nu - gh / 4).is_negative:
        return gh / 2 - nu, True
    return nu, False


# --------------------------------------------------------------------------
# entry points

def classify(p: ModelParams, V, seed: int = 0,
             tolerance: float = ec.DEFAULT_TOLERANCE) -> ClassificationResult:
    """Route to the time-dependent or stationary classification.

    ``seed`` and ``tolerance`` control the sample plan of the final check.
    """
    token = _CHECK.set({"seed": seed, "tolerance": tolerance})
    try:
        return _classify(p, V)
    finally:
        _CHECK.reset(token)


def _classify(p: ModelParams, V) -> ClassificationResult:
    pot = _potential(p, V)
    v = pot.expr
    check_template(v)
    has_t, has_x = t in v.free_symbols, x in v.free_symbols
    if has_t and has_x:
        c = get_case("1.0")
        return ClassificationResult(c.id, {"V": ec.format_expr(v)}, None, "Probable",
                                    ["V depends on both t and x; no equivalence-orbit search is "
                                     "attempted, the kernel M is reported"], c.id, {})
    if has_x:
        return classify_stationary(p, pot)
    return classify_timedep(p, pot)


def classify_timedep(p: ModelParams, Vt) -> ClassificationResult:
    """Classify an x-free potential (constants included)."""
    pot = _potential(p, Vt)
    v = pot.expr
    if x in v.free_symbols:
        raise NLSClassError("classify_timedep needs an x-free potential")
    gh = p.gh
    notes: list[str] = []
    conj = v.xreplace({I: -I})
    R = sp.cancel(sp.expand((v + conj) / 2))
    W = sp.cancel(sp.expand((v - conj) / (2 * I)))

    # the case depends on W alone; the gauge only enters the canonical map
    gauge: EquivMap | None = EquivMap.identity()
    if not ec.is_zero(R).zero:
        Psi = sp.integrate(-R, t)
        if Psi.has(sp.Integral) or not in_grammar(Psi):
            notes.append(f"gauge Psi = -int Re V dt is not expressible in the grammar (Re V = {R}); "
                         "no canonical map emitted")
            gauge = None
        else:
            gauge = EquivMap(Psi=Psi)
            notes.append(f"gauge Psi = {ec.format_expr(Psi)} removes Re V")

    def canon(*maps):
        if gauge is None:
            return None
        return _chain(gauge, *maps)

    if ec.is_zero(W).zero:
        c = get_case("1.5", p)
        return _finish(p, pot, c, {}, canon(), c, {}, notes)

    basis = solve_symmetries(p, Potential(I * W), TIMEDEP_ANSATZ)
    xis = [q.xi for q in basis if q.xi != 0]
    if not xis:
        return _generic_timedep(p, pot, W, canon(), notes)
    if len(xis) > 1:
        notes.append(f"{len(xis)} independent D operators")
    xi = xis[0]
    if xi.has(sp.Float):
        notes.append("time-dilation coefficients did not snap to rationals")
        return _generic_timedep(p, pot, W, canon(), notes)
    kappa = sp.simplify(sp.cancel(xi * W - gh / 4 * sp.diff(xi, t)))
    if t in kappa.free_symbols:
        raise NLSClassError(f"xi W - (gh/4) xi_t = {kappa} is not constant")

    a, b, c0 = (sp.Poly(xi, t).all_coeffs()[::-1] + [0, 0, 0])[:3][::-1]
    disc = b**2 - 4 * a * c0
    # Moebius T with xi(t) T_t = xi~(T)/s for canonical xi~
    if a == 0 and b == 0:
        mob, s, form = EquivMap.identity(), 1 / c0, "const"
    elif a == 0:
        t0 = -c0 / b
        mob, s, form = EquivMap(T=t - t0), 1 / b, "linear"
    elif disc == 0:
        t0 = -b / (2 * a)
        mob, s, form = EquivMap(T=-1 / (t - t0), domain=(float(t0), float("inf"))), 1 / a, "const"
    elif disc > 0:
        r1, r2 = sorted([(-b - sp.sqrt(disc)) / (2 * a), (-b + sp.sqrt(disc)) / (2 * a)],
                        key=lambda r: float(r))
        mob = EquivMap(T=(t - r1) / (r2 - t), domain=(float(r1), float(r2)))
        s, form = -1 / (a * (r2 - r1)), "linear"
    else:
        pc, qc = -b / (2 * a), sp.sqrt(-disc) / (2 * abs(a))
        mob, s, form = EquivMap(T=(t - pc) / qc), 1 / (a * qc), "quadratic"
    maps = [] if mob.is_identity() else [mob]
    ktil = sp.simplify(s * kappa)

    def tau_after():
        # the branch of tau follows the sign of T after the maps so far
        return tau_on(_sign_at(_chain(EquivMap.identity(), *maps)))

    if form == "const":
        if ktil == 0:
            c = get_case("1.5", p)
            return _finish(p, pot, c, {}, canon(*maps), c, {}, notes)
        scale = EquivMap(T=abs(ktil) * t, reflect_t=bool(ktil < 0))
        c = get_case("1.4", p)
        return _finish(p, pot, c, {}, canon(*maps, scale), c, {}, notes)

    if form == "linear":
        nu = sp.simplify(gh / 4 + ktil)
        if nu == 0 or sp.simplify(nu - gh / 2) == 0:
            if nu != 0:
                maps.append(tau_after())
            c = get_case("1.5", p)
            return _finish(p, pot, c, {}, canon(*maps), c, {}, notes)
        nu, used = normalize_nu_13(nu, gh)
        if used:
            maps.append(tau_after())
            notes.append("tau normalizes nu into nu >= gh/4")
        c = get_case("1.3", p)
        b_ = {"nu": _exact(nu)}
        return _finish(p, pot, c, b_, canon(*maps), c, b_, notes)

    nu = sp.simplify(2 * ktil)
    if nu == 0 and gh == 0:
        c = get_case("1.5", p)
        return _finish(p, pot, c, {}, canon(*maps), c, {}, notes)
    if nu < 0:
        maps.append(EquivMap.It())
        nu = -nu
    c = get_case("1.2", p)
    b_ = {"nu": _exact(nu)}
    return _finish(p, pot, c, b_, canon(*maps), c, b_, notes)


def _generic_timedep(p, pot, W, gauge, notes) -> ClassificationResult:
    c = get_case("1.1", p)
    b_ = {"W": ec.format_expr(W)}
    notes.append("no time dilation: generic i W(t)")
    return _finish(p, pot, c, b_, gauge, c, b_, notes)


# --------------------------------------------------------------------------
# stationary

def _split(c) -> tuple:
    c = sp.sympify(c)
    return sp.nsimplify(sp.re(c)), sp.nsimplify(sp.im(c))


def _recenter(v: sp.Expr):
    """Translate a double pole at x0 to x = 0.  Returns (v_shifted, x0) or None."""
    num, den = sp.fraction(sp.together(v))
    try:
        poly = sp.Poly(den, x)
    except sp.PolynomialError:
        return None
    roots = sp.roots(poly)
    if len(roots) != 1:
        return None
    (x0, mult), = roots.items()
    if mult != 2 or not x0.is_real or x0 == 0:
        return None
    return ec.normalize(v.subs(x, x + x0)), x0


def classify_stationary(p: ModelParams, Vx) -> ClassificationResult:
    """Classify a t-free potential by its Laurent coefficients."""
    pot = _potential(p, Vx)
    v = pot.expr
    if t in v.free_symbols:
        raise NLSClassError("classify_stationary needs a t-free potential")
    check_template(v)
    if x not in v.free_symbols:
        return classify_timedep(p, pot)
    notes: list[str] = []
    maps: list[EquivMap] = []
    crit = p.critical
    gh = p.gh
    tab = "3" if crit else "2"

    try:
        parts = ec.x_laurent_decompose(v)
    except NotLaurentInX:
        parts = None
    if parts is None:
        shifted = _recenter(v) if not v.has(sp.exp) else None
        if shifted is None:
            notes.append("not a Laurent polynomial in x")
            return _generic_stationary(p, pot, notes)
        v, x0 = shifted
        maps.append(EquivMap(X=-x0))
        notes.append(f"translation X = {ec.format_expr(-x0)} moves the pole to x = 0")
        try:
            parts = ec.x_laurent_decompose(v)
        except NotLaurentInX:
            notes.append("re-centered potential is still not Laurent in x")
            return _generic_stationary(p, pot, notes)
    if not set(parts) <= STATIONARY_POWERS:
        notes.append(f"x powers {sorted(parts)} admit no extension")
        return _generic_stationary(p, pot, notes)

    e = sp.nsimplify(parts.get(-2, 0))
    a2, b2 = _split(parts.get(2, 0))
    a1, b1 = _split(parts.get(1, 0))
    a0, b0 = _split(parts.get(0, 0))
    if b2 != 0 or b1 != 0:
        notes.append("complex coefficient of x or x^2 admits no extension")
        return _generic_stationary(p, pot, notes)

    if e != 0:
        if a1 != 0:
            notes.append("x term next to x^-2 admits no extension")
            return _generic_stationary(p, pot, notes)
        if a0 != 0:
            maps.append(EquivMap(Psi=-a0 * t))
        ea, eb = _split(e)
        if a2 == 0:
            if b0 != 0:
                notes.append("imaginary constant next to x^-2 admits no extension")
                return _generic_stationary(p, pot, notes)
            cid = tab + ".1"
        else:
            c = sp.sqrt(abs(a2))
            maps.append(EquivMap(T=c * t))
            nu0 = sp.nsimplify(b0 / c)
            if a2 > 0 and gh != 0 and nu0 in (gh, -gh):
                if nu0 == -gh:
                    maps.append(EquivMap.It())
                    eb = -eb
                cid = "2.2"
            elif a2 > 0 and gh == 0 and nu0 == 0:
                cid = "3.2"
            elif a2 < 0 and gh == 0 and nu0 == 0:
                cid = "3.3"
            else:
                notes.append("x^2 and x^-2 terms without the matching imaginary constant")
                return _generic_stationary(p, pot, notes)
        if cid != "2.2" and eb < 0:
            maps.append(EquivMap.It())
            eb = -eb
        bind = {"a": _exact(ea), "b": _exact(eb)}
        return _stationary_result(p, pot, cid, bind, maps, notes)

    if a2 != 0:
        h = a1 / (2 * a2)
        g = a0 - a1**2 / (4 * a2)
        if h != 0 or g != 0:
            maps.append(EquivMap(X=h, Psi=-g * t))
        c = sp.sqrt(abs(a2))
        maps.append(EquivMap(T=c * t))
        nu0 = sp.nsimplify(b0 / c)
        if a2 > 0:
            if gh != 0 and nu0 in (gh, -gh):
                if nu0 == -gh:
                    maps.append(EquivMap.It())
                cid, bind = "2.9", {}
            elif gh == 0 and nu0 == 0:
                cid, bind = "3.10", {}
            else:
                cid = tab + (".6" if tab == "2" else ".7")
                bind = {"nu": abs(nu0)}
        else:
            if gh == 0 and nu0 == 0:
                cid, bind = "3.11", {}
            else:
                cid = tab + (".5" if tab == "2" else ".6")
                bind = {"nu": abs(nu0)}
        if bind and nu0 < 0:
            maps.append(EquivMap.It())
    else:
        if a1 == 0:
            return classify_timedep(p, Potential(parts.get(0, 0)))
        if a0 != 0:
            maps.append(EquivMap(Psi=-a0 * t))
        if a1 < 0:
            maps.append(EquivMap.Ix())
        c = sp.Abs(a1) ** sp.Rational(2, 3)
        maps.append(EquivMap(T=c * t))
        nu0 = sp.nsimplify(b0 / c)
        if nu0 == 0:
            cid, bind = tab + (".8" if tab == "2" else ".9"), {}
        else:
            cid, bind = tab + (".4" if tab == "2" else ".5"), {"nu": abs(nu0)}
            if nu0 < 0:
                maps.append(EquivMap.It())
    bind = {k: _exact(val) for k, val in bind.items()}
    return _stationary_result(p, pot, cid, bind, maps, notes)


def _generic_stationary(p, pot, notes) -> ClassificationResult:
    c = get_case("3.0" if p.critical else "2.0")
    b_ = {"V": ec.format_expr(pot.expr)}
    target = get_case(c.n1_ref, p)
    return _finish(p, pot, c, b_, EquivMap.identity(), target, b_, notes)


def _stationary_result(p, pot, cid, bind, maps, notes) -> ClassificationResult:
    case = get_case(cid, p)
    try:
        case.check_constraints(bind, p)
    except ConstraintViolation as exc:
        raise ConstraintViolation(f"normalized bindings violate the row constraints: {exc}") from exc
    target = get_case(case.n1_ref, p)
    tb = case.target_bindings(bind, p)
    maps.append(case.canon_map(bind, p))
    if target.id.startswith("1.7") and tb["b"] < 0:
        maps.append(EquivMap.It())
        tb["b"] = -tb["b"]
    elif target.id == "1.3":
        nu, used = normalize_nu_13(sp.sympify(tb["nu"]), p.gh)
        if used:
            maps.append(tau_on(_sign_at(_chain(*maps))))
            tb["nu"] = _exact(nu)
            notes.append("tau normalizes nu into nu >= gh/4")
    maps = [m for m in maps if not m.is_identity()] or [EquivMap.identity()]
    return _finish(p, pot, case, bind, _chain(*maps), target, tb, notes)


def case_basis_holds(p: ModelParams, result: ClassificationResult) -> bool:
    """Check that every tabulated operator of the returned case is a symmetry."""
    c = get_case(result.case_id, p)
    if c.generic:
        return True
    pot = c.potential(result.bindings, p)
    return all(is_symmetry(p, pot, q) for q in c.basis_fields(result.bindings, p))
