"""The algebra spanned by D(xi), G(chi) and lambda*M.

A field ``VectorField(xi, chi, lam)`` stands for ``D(xi) + G(chi) + lam*M``
with all three coefficients functions of t.  Brackets come from the closed
multiplication table of the algebra; nothing is expanded in (t, x, psi)
coordinates.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import sympy as sp

from . import exprcore as ec
from .errors import NLSClassError, RankDeficientSampling
from .numerics import snap_complex

_half = sp.Rational(1, 2)
STRUCTURE_TOLERANCE = 1e-8


@dataclass(frozen=True)
class VectorField:
    xi: sp.Expr = sp.Integer(0)
    chi: sp.Expr = sp.Integer(0)
    lam: sp.Expr = sp.Integer(0)

    def __post_init__(self):
        for name in ("xi", "chi", "lam"):
            val = ec.normalize(getattr(self, name))
            if ec.x in val.free_symbols:
                raise NLSClassError(f"{name} = {val} depends on x")
            object.__setattr__(self, name, val)

    @classmethod
    def D(cls, xi) -> "VectorField":
        return cls(xi=sp.sympify(xi))

    @classmethod
    def G(cls, chi) -> "VectorField":
        return cls(chi=sp.sympify(chi))

    @classmethod
    def M(cls, lam=1) -> "VectorField":
        return cls(lam=sp.sympify(lam))

    @classmethod
    def parse(cls, text: str, bindings=None, params=()) -> "VectorField":
        """Read ``"D:<expr>+G:<expr>+M:<expr>"`` (any subset, any order)."""
        text = text.strip()
        if text == "0":
            return cls()
        pieces = re.split(r"(?:^|\+)\s*([DGM])\s*:", text)
        if pieces[0].strip():
            raise NLSClassError(f"vector field must start with D:, G: or M:, got {text!r}")
        comps = {"D": sp.Integer(0), "G": sp.Integer(0), "M": sp.Integer(0)}
        for tag, body in zip(pieces[1::2], pieces[2::2]):
            comps[tag] += ec.parse(body, bindings, params)
        return cls(comps["D"], comps["G"], comps["M"])

    def __str__(self) -> str:
        parts = [f"{tag}:{ec.format_expr(v)}" for tag, v in
                 (("D", self.xi), ("G", self.chi), ("M", self.lam)) if v != 0]
        return "+".join(parts) if parts else "0"

    def components(self) -> tuple:
        return (self.xi, self.chi, self.lam)

    def is_zero_field(self) -> bool:
        return self.xi == 0 and self.chi == 0 and self.lam == 0

    def subs(self, mapping) -> "VectorField":
        return VectorField(*(sp.sympify(c).subs(mapping) for c in self.components()))

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.xi + other.xi, self.chi + other.chi, self.lam + other.lam)

    def __neg__(self) -> "VectorField":
        return VectorField(-self.xi, -self.chi, -self.lam)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + (-other)

    def __mul__(self, c) -> "VectorField":
        c = sp.sympify(c)
        return VectorField(c * self.xi, c * self.chi, c * self.lam)

    __rmul__ = __mul__


def _d(e):
    return sp.diff(e, ec.t)


def bracket(q1: VectorField, q2: VectorField) -> VectorField:
    """Lie bracket from the four non-zero commutation relations, extended bilinearly."""
    xi1, chi1, lam1 = q1.components()
    xi2, chi2, lam2 = q2.components()
    xi = xi1 * _d(xi2) - xi2 * _d(xi1)
    chi = (xi1 * _d(chi2) - _half * _d(xi1) * chi2) - (xi2 * _d(chi1) - _half * _d(xi2) * chi1)
    lam = xi1 * _d(lam2) - xi2 * _d(lam1) + _half * (chi1 * _d(chi2) - chi2 * _d(chi1))
    return VectorField(xi, chi, lam)


def adjoint_reflection(q: VectorField, which: str) -> VectorField:
    """Ad I_x flips the sign of chi; Ad I_t maps (xi, chi, lam)(t) to (-xi, chi, -lam)(-t)."""
    if which in ("Ix", "x"):
        return VectorField(q.xi, -q.chi, q.lam)
    if which in ("It", "t"):
        flip = {ec.t: -ec.t}
        return VectorField(-q.xi.subs(flip), q.chi.subs(flip), -q.lam.subs(flip))
    raise ValueError(f"unknown reflection {which!r}")


class NormalForm(enum.Enum):
    D = "Dclass"    # <d_t>
    G = "Gclass"    # <d_x>
    TM = "tMclass"  # <tM>
    M = "Mclass"    # <M>
    ZERO = "Zero"


@dataclass(frozen=True)
class NormalFormResult:
    form: NormalForm
    grade: str


def onedim_normal_form(q: VectorField, plan: ec.SamplePlan | None = None) -> NormalFormResult:
    """Representative of the one-dimensional subalgebra spanned by ``q``."""
    checks = [(q.xi, NormalForm.D), (q.chi, NormalForm.G),
              (ec.differentiate(q.lam, "t"), NormalForm.TM), (q.lam, NormalForm.M)]
    grade = "Proved"
    for expr, form in checks:
        zt = ec.is_zero(expr, plan)
        if zt.verdict.grade == "Probable":
            grade = "Probable"
        if not zt.zero:
            return NormalFormResult(form, grade)
    return NormalFormResult(NormalForm.ZERO, grade)


@dataclass
class StructureReport:
    basis: list
    constants: np.ndarray
    max_residual: float
    closed: bool
    condition_number: float
    tolerance: float

    def snapped(self):
        """Structure constants as exact complex rationals (None where snapping fails)."""
        out = np.empty(self.constants.shape, dtype=object)
        for idx, c in np.ndenumerate(self.constants):
            s = snap_complex(complex(c))
            out[idx] = None if s is None else (s[0] if s[1] == 0 else complex(s[0], s[1]))
        return out

    def to_dict(self) -> dict:
        n = len(self.basis)
        rels = []
        for i in range(n):
            for j in range(i + 1, n):
                coeffs = {str(self.basis[k]): _jsonable(self.constants[i, j, k])
                          for k in range(n) if abs(self.constants[i, j, k]) > 1e-9}
                if coeffs:
                    rels.append({"i": str(self.basis[i]), "j": str(self.basis[j]), "bracket": coeffs})
        return {
            "basis": [str(b) for b in self.basis],
            "closed": self.closed,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "condition_number": self.condition_number,
            "relations": rels,
        }


def _jsonable(c):
    c = complex(c)
    s = snap_complex(c)
    if s is not None:
        re_, im = s
        return str(re_) if im == 0 else [str(re_), str(im)]
    return [round(c.real, 12), round(c.imag, 12)]


def _component_samples(q: VectorField, ts: np.ndarray) -> np.ndarray:
    env = {ec.t: ts}
    return np.concatenate([np.broadcast_to(ec.evaluate(c, env), ts.shape) for c in q.components()])


def verify_structure_constants(basis, plan: ec.SamplePlan | None = None,
                               tolerance: float | None = None) -> StructureReport:
    """Fit ``[q_i, q_j] = sum_k c^k_ij q_k`` by least squares over sampled t.

    Uses 4 * len(basis) sample times.  The residual is the max-norm misfit
    divided by max(1, max-norm of the bracket samples).
    """
    basis = list(basis)
    if not basis:
        raise ValueError("basis must be nonempty")
    n = len(basis)
    comps = [c for q in basis for c in q.components()]
    if plan is None:
        plan = ec.SamplePlan.for_exprs(*comps, x_range=(0.5, 1.0))
    else:
        plan = plan.with_singularities(*comps)
    tol = STRUCTURE_TOLERANCE if tolerance is None else tolerance
    ts = np.asarray(plan.t_samples[: 4 * n], dtype=float)
    if ts.size < 4 * n:
        raise RankDeficientSampling(f"plan has {ts.size} points, need {4 * n}")
    a = np.column_stack([_component_samples(q, ts) for q in basis])
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficientSampling("sampled basis matrix is rank-deficient")
    cond = float(sv[0] / sv[-1])
    consts = np.zeros((n, n, n), dtype=complex)
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            b = _component_samples(bracket(basis[i], basis[j]), ts)
            c, *_ = np.linalg.lstsq(a, b, rcond=None)
            res = float(np.max(np.abs(a @ c - b))) / max(1.0, float(np.max(np.abs(b))))
            worst = max(worst, res)
            consts[i, j] = c
            consts[j, i] = -c
    return StructureReport(basis, consts, worst, worst < tol, cond, tol)


def as_fraction(c) -> Fraction | None:
    s = snap_complex(complex(c))
    if s is None or s[1] != 0:
        return None
    return s[0]
