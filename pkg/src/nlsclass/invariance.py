"""The classifying condition and the ansatz-restricted symmetry solver.

An operator ``Q = D(xi) + G(chi) + lam*M`` is a Lie symmetry of

    i psi_t + psi_xx + |psi|^gamma psi + V(t, x) psi = 0

exactly when

    xi V_t + (xi_t x / 2 + chi) V_x + xi_t V
        = xi_ttt x^2 / 8 + chi_tt x / 2 + lam_t + i (gh / 4) xi_tt,

where ``gh = (4 - gamma) / gamma``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

import numpy as np
import sympy as sp

from . import exprcore as ec
from .errors import NLSClassError, RankDeficientSampling
from .liealg import VectorField
from .numerics import SVD_CUTOFF, null_space, rref, snap_complex

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelParams:
    gamma: Fraction

    def __post_init__(self):
        g = self.gamma
        if isinstance(g, str):
            g = Fraction(g)
        elif isinstance(g, (sp.Rational, sp.Integer)):
            g = Fraction(int(g.p), int(g.q))
        elif isinstance(g, float):
            raise NLSClassError("gamma must be an exact rational, not a float")
        g = Fraction(g)
        if g == 0:
            raise NLSClassError("gamma must be nonzero")
        object.__setattr__(self, "gamma", g)

    @property
    def gamma_hat(self) -> Fraction:
        return (4 - self.gamma) / self.gamma

    @property
    def gh(self) -> sp.Rational:
        g = self.gamma_hat
        return sp.Rational(g.numerator, g.denominator)

    @property
    def critical(self) -> bool:
        return self.gamma == 4

    def bindings(self) -> dict:
        """Names every potential template may use for the model constants."""
        return {"gh": self.gh, "gamma": sp.Rational(self.gamma.numerator, self.gamma.denominator)}


@dataclass(frozen=True)
class Potential:
    """A potential V(t, x); ``params`` bind the named symbols of ``v``."""

    v: sp.Expr
    params: Mapping[str, object] = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str, params: Mapping[str, object] | None = None,
              model: ModelParams | None = None) -> "Potential":
        binds = dict(model.bindings()) if model is not None else {}
        binds.update(params or {})
        return cls(ec.parse(text, binds), dict(params or {}))

    @property
    def expr(self) -> sp.Expr:
        if not self.params:
            return ec.normalize(self.v)
        sub = {ec.param(k): ec.as_rational(val) for k, val in self.params.items()}
        return ec.normalize(sp.sympify(self.v).subs(sub))

    def __str__(self) -> str:
        return ec.format_expr(self.expr)


def _as_potential(V) -> Potential:
    if isinstance(V, Potential):
        return V
    if isinstance(V, str):
        return Potential.parse(V)
    return Potential(sp.sympify(V))


def classifying_residual(p: ModelParams, V, q: VectorField) -> sp.Expr:
    """Left-hand side minus right-hand side of the classifying condition."""
    v = _as_potential(V).expr
    t, x = ec.t, ec.x
    xi, chi, lam = q.components()
    xi_t = sp.diff(xi, t)
    xi_tt = sp.diff(xi_t, t)
    lhs = xi * sp.diff(v, t) + (xi_t * x / 2 + chi) * sp.diff(v, x) + xi_t * v
    rhs = (sp.diff(xi_tt, t) * x**2 / 8 + sp.diff(chi, t, 2) * x / 2 + sp.diff(lam, t)
           + sp.I * p.gh / 4 * xi_tt)
    return ec.normalize(lhs - rhs)


@dataclass(frozen=True)
class SymmetryVerdict:
    holds: bool
    grade: str
    test: ec.ZeroTest
    residual: sp.Expr

    def __bool__(self) -> bool:
        return self.holds

    def to_dict(self) -> dict:
        d = {"holds": self.holds, "grade": self.grade}
        d.update(self.test.to_dict())
        return d


def default_plan(*exprs, seed: int = 0, n: int = 256,
                 tolerance: float = ec.DEFAULT_TOLERANCE) -> ec.SamplePlan:
    """Plan over x in [-3, 3] and a t-window sized to the fastest exponential."""
    return ec.SamplePlan.for_exprs(*exprs, n=n, seed=seed, tolerance=tolerance,
                                   t_range=ec.growth_window(exprs))


def is_symmetry(p: ModelParams, V, q: VectorField, plan: ec.SamplePlan | None = None,
                sample_always: bool = False) -> SymmetryVerdict:
    """Zero-test the classifying residual of ``q`` for the potential ``V``.

    With ``sample_always`` the residual is evaluated on the plan even when it
    normalizes to zero, so the reported ``max_residual`` is a measured value.
    """
    pot = _as_potential(V)
    res = classifying_residual(p, pot, q)
    if plan is None:
        plan = default_plan(pot.expr, *q.components())
    else:
        plan = plan.with_singularities(pot.expr, *q.components())
    zt = ec.is_zero(res, plan)
    if sample_always and zt.verdict is ec.Verdict.PROVED_ZERO:
        # a structurally zero residual is sampled through its unsimplified parts
        zt = ec.ZeroTest(zt.verdict, _unsimplified_max(p, pot, q, plan), 1.0, plan.tolerance, plan.size)
    return SymmetryVerdict(zt.zero, zt.verdict.grade, zt, res)


def _unsimplified_max(p, pot, q, plan) -> float:
    rows = _residual_rows(p, pot, [q], plan)
    return float(np.max(np.abs(rows))) if rows.size else 0.0


# --------------------------------------------------------------------------
# ansatz solver

@dataclass(frozen=True)
class AnsatzSpace:
    xi_basis: tuple
    chi_basis: tuple
    lam_basis: tuple

    def __post_init__(self):
        for name in ("xi_basis", "chi_basis", "lam_basis"):
            vals = tuple(ec.normalize(sp.sympify(v)) for v in getattr(self, name))
            for v in vals:
                if ec.x in v.free_symbols:
                    raise NLSClassError(f"ansatz function {v} depends on x")
            object.__setattr__(self, name, vals)

    @classmethod
    def parse(cls, text: str) -> "AnsatzSpace":
        """Read ``"xi=1,t,t^2;chi=1,t;lam=1"``; omitted components are empty."""
        parts = {"xi": (), "chi": (), "lam": ()}
        for chunk in filter(None, (c.strip() for c in text.split(";"))):
            key, _, body = chunk.partition("=")
            key = key.strip()
            if key not in parts:
                raise NLSClassError(f"unknown ansatz component {key!r}")
            parts[key] = tuple(ec.parse(s) for s in body.split(",") if s.strip())
        return cls(parts["xi"], parts["chi"], parts["lam"])

    def __str__(self) -> str:
        def join(vs):
            return ",".join(ec.format_expr(v) for v in vs)
        return f"xi={join(self.xi_basis)};chi={join(self.chi_basis)};lam={join(self.lam_basis)}"

    def generators(self) -> list[VectorField]:
        return ([VectorField.D(f) for f in self.xi_basis]
                + [VectorField.G(f) for f in self.chi_basis]
                + [VectorField.M(f) for f in self.lam_basis])

    def validate(self, plan: ec.SamplePlan) -> None:
        """Each component list must be linearly independent on the plan's t samples."""
        ts = np.asarray(plan.t_samples)
        for name, funcs in (("xi", self.xi_basis), ("chi", self.chi_basis), ("lam", self.lam_basis)):
            if not funcs:
                continue
            cols = np.column_stack([_scaled(np.broadcast_to(ec.evaluate(f, {ec.t: ts}), ts.shape))
                                    for f in funcs])
            sv = np.linalg.svd(cols, compute_uv=False)
            if sv[-1] <= 1e-10 * sv[0]:
                raise RankDeficientSampling(f"{name} ansatz functions are dependent on the plan")


def _scaled(col):
    n = np.linalg.norm(col)
    return col / n if n > 0 else col


STANDARD_ANSATZ = AnsatzSpace(
    xi_basis=tuple(ec.parse(s) for s in
                   ["1", "t", "t^2", "t^3", "t^4", "exp(4*t)", "exp(-4*t)", "cos(4*t)", "sin(4*t)"]),
    chi_basis=tuple(ec.parse(s) for s in
                    ["1", "t", "t^2", "t^3", "exp(2*t)", "exp(-2*t)", "cos(2*t)", "sin(2*t)"]),
    lam_basis=tuple(ec.parse(s) for s in ["1", "t", "t^2", "t^3", "t^4"]),
)


@lru_cache(maxsize=None)
def _t_derivatives(f: sp.Expr, order: int) -> tuple:
    out = [f]
    for _ in range(order):
        out.append(sp.diff(out[-1], ec.t))
    return tuple(out)


def _residual_rows(p: ModelParams, pot: Potential, gens, plan: ec.SamplePlan,
                   with_scale: bool = False):
    """Residual of each generator at each plan point (complex, points x generators).

    With ``with_scale`` also return the sum of the moduli of the individual
    terms, the natural size against which a residual is negligible.
    """
    v = pot.expr
    env = plan.env()
    tt, xx = env[ec.t], env[ec.x]
    n = plan.size
    V = np.broadcast_to(ec.evaluate(v, env), (n,))
    Vt = np.broadcast_to(ec.evaluate(sp.diff(v, ec.t), env), (n,))
    Vx = np.broadcast_to(ec.evaluate(sp.diff(v, ec.x), env), (n,))
    gh = complex(p.gh)
    cols, scales = [], []
    for q in gens:
        terms = []
        if q.xi != 0:
            f, f1, f2, f3 = (np.broadcast_to(ec.evaluate(d, {ec.t: tt}), (n,))
                             for d in _t_derivatives(q.xi, 3))
            terms += [f * Vt, 0.5 * f1 * xx * Vx, f1 * V, -f3 * xx**2 / 8, -1j * gh / 4 * f2]
        if q.chi != 0:
            g, _, g2 = (np.broadcast_to(ec.evaluate(d, {ec.t: tt}), (n,))
                        for d in _t_derivatives(q.chi, 2))
            terms += [g * Vx, -0.5 * g2 * xx]
        if q.lam != 0:
            terms.append(-np.broadcast_to(ec.evaluate(_t_derivatives(q.lam, 1)[1], {ec.t: tt}), (n,)))
        col = np.zeros(n, dtype=complex)
        scale = np.zeros(n)
        for term in terms:
            col = col + term
            scale = scale + np.abs(term)
        cols.append(col)
        scales.append(scale)
    if not cols:
        empty = np.zeros((n, 0), dtype=complex)
        return (empty, empty.real) if with_scale else empty
    if with_scale:
        return np.column_stack(cols), np.column_stack(scales)
    return np.column_stack(cols)


class SymmetryBasis(list):
    """List of VectorFields with the diagnostics of the solve that produced it."""

    def __init__(self, fields=(), singular_values=None, gap=float("inf"), snapped=True,
                 warnings=()):
        super().__init__(fields)
        self.singular_values = singular_values
        self.gap = gap
        self.snapped = snapped
        self.warnings = list(warnings)

    @property
    def dimension(self) -> int:
        return len(self)

    def to_dict(self) -> dict:
        return {
            "dimension": len(self),
            "basis": [str(q) for q in self],
            "singular_value_gap": self.gap,
            "snapped": self.snapped,
            "warnings": self.warnings,
        }


def solve_symmetries(p: ModelParams, V, a: AnsatzSpace = STANDARD_ANSATZ,
                     plan: ec.SamplePlan | None = None, verify: bool = True) -> SymmetryBasis:
    """All operators in the span of ``a`` satisfying the classifying condition.

    The residual of every ansatz generator is sampled on the plan (real and
    imaginary parts as separate rows), the null space is taken by SVD with
    cutoff 1e-8 * s_max, brought to reduced echelon form, and coefficients
    are snapped to fractions with denominator <= 64 when within 1e-6.
    """
    pot = _as_potential(V)
    gens = a.generators()
    if plan is None:
        plan = default_plan(pot.expr, *a.xi_basis, *a.chi_basis, *a.lam_basis)
    else:
        plan = plan.with_singularities(pot.expr, *a.xi_basis, *a.chi_basis, *a.lam_basis)
    if 2 * plan.size < len(gens):
        raise RankDeficientSampling("too few sample points for the ansatz size")
    a.validate(plan)
    rows, scale = _residual_rows(p, pot, gens, plan, with_scale=True)
    # equilibrate each sample point by the size of its terms
    weight = 1.0 / np.maximum(1.0, scale.max(axis=1, initial=0.0))
    rows = rows * weight[:, None]
    scale = scale * weight[:, None]
    mat = np.vstack([rows.real, rows.imag])
    norms = np.linalg.norm(mat, axis=0)
    # columns that are rounding noise relative to their own terms are exact
    # solutions; do not amplify them
    dead = norms <= 1e-10 * np.maximum(1.0, np.linalg.norm(scale, axis=0))
    mat[:, dead] = 0.0
    norms[dead] = 1.0
    basis, sv, gap = null_space(mat / norms, SVD_CUTOFF)
    # echelon form in the scaled coordinates, where pivots are well separated
    scaled = rref(basis.T) if basis.size else basis.T
    scaled[np.abs(scaled) < 1e-11] = 0.0
    coeffs = scaled / norms[None, :]
    for row in coeffs:
        row /= row[np.argmax(np.abs(row) > 0)]
    fields = []
    snapped_all = True
    warnings = []
    for row in coeffs:
        q = VectorField()
        for c, g in zip(row, gens):
            if abs(c) < 1e-12:
                continue
            s = snap_complex(complex(c))
            if s is None:
                snapped_all = False
                coef = sp.Float(c.real) + sp.I * sp.Float(c.imag)
            else:
                coef = sp.Rational(s[0].numerator, s[0].denominator) + sp.I * sp.Rational(
                    s[1].numerator, s[1].denominator)
            q = q + g * coef
        fields.append(q)
    if not snapped_all:
        warnings.append("SnapFailure: some coefficients are not small rationals")
        log.warning("solve_symmetries: unsnapped coefficients for V=%s", pot.expr)
    if verify and snapped_all:
        for q in fields:
            verdict = is_symmetry(p, pot, q, plan)
            if not verdict.holds:
                warnings.append(f"returned field {q} fails the classifying condition")
    return SymmetryBasis(fields, sv, gap, snapped_all, warnings)
