"""Machine-readable classification tables and the harness that replays them.

The catalog lives in ``data/catalog.json``.  Each entry carries a potential
template, the parameter constraints of its row, the basis of the maximal
invariance algebra, an ansatz space large enough to contain that basis and,
for stationary rows, the equivalence transformation to the x-free
representative.

Case ids read ``<table>.<row>``.  Table 1 holds the x-free potentials,
table 2 the stationary potentials for gamma != 4 and table 3 those for
gamma = 4.  The ``n1`` field of a table-2/3 entry names the table-1 row it
is equivalent to (its N1 representative), reached by the ``canon`` map.

Templates use the parameter names ``nu``, ``a`` (alpha), ``b`` (beta) and
the model constant ``gh``.  Rows with an arbitrary function use ``V`` or
``W`` and list representative instances instead of a parameter grid.
"""
from __future__ import annotations

import json
import logging
import operator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np
import sympy as sp

from . import exprcore as ec
from .equiv import EquivMap, action_residual
from .errors import ConstraintViolation, NLSClassError
from .invariance import (
    STANDARD_ANSATZ,
    AnsatzSpace,
    ModelParams,
    Potential,
    default_plan,
    is_symmetry,
    solve_symmetries,
)
from .liealg import VectorField, verify_structure_constants

log = logging.getLogger(__name__)

REGIMES = ("any", "ne4", "eq4")
GENERIC_NAMES = ("V", "W")
_OPS = {">=": operator.ge, "<=": operator.le, "!=": operator.ne, "==": operator.eq,
        ">": operator.gt, "<": operator.lt}


@lru_cache(maxsize=None)
def _raw_catalog() -> dict:
    text = resources.files("nlsclass").joinpath("data/catalog.json").read_text(encoding="utf-8")
    return json.loads(text)


def catalog_text() -> str:
    """The catalog file as shipped (used by ``dump-catalog``)."""
    return json.dumps(_raw_catalog(), indent=2, sort_keys=True)


def _regime_ok(regime: str, p: ModelParams) -> bool:
    return regime == "any" or (regime == "eq4") == p.critical


def _fraction(v) -> Fraction:
    v = ec.as_rational(v)
    if not v.is_Rational:
        raise ConstraintViolation(f"parameter value {v} is not an exact rational")
    return Fraction(int(v.p), int(v.q))


def _exact_real(v):
    """Fraction for rationals; exact real algebraic numbers (radicals) pass through.

    Radicals arise when the classifier normalizes a coefficient by a scaling,
    e.g. nu = c / sqrt(a2).  Floats are never accepted.
    """
    v = ec.as_rational(v)
    if v.is_Rational:
        return Fraction(int(v.p), int(v.q))
    if not (v.is_number and v.is_real and v.is_algebraic):
        raise ConstraintViolation(f"parameter value {v} is not an exact real number")
    return v


def _fmt_binding(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, str):
        return v
    return ec.format_expr(sp.sympify(v))


@dataclass(frozen=True)
class ClassCase:
    """One row of a classification table (one gamma regime)."""

    id: str
    table: int
    regime: str
    potential_template: str
    params: tuple = ()
    param_constraints: tuple = ()
    basis: tuple = ()
    n1_ref: str | None = None
    canon: Mapping | None = None
    ansatz: str = "standard"
    generic: bool = False
    instances: tuple = ()

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise NLSClassError(f"case {self.id}: unknown regime {self.regime!r}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClassCase":
        canon = d.get("canon")
        return cls(
            id=d["id"], table=int(d["table"]), regime=d.get("regime", "any"),
            potential_template=d["potential"], params=tuple(d.get("params", ())),
            param_constraints=tuple(d.get("constraints", ())), basis=tuple(d["basis"]),
            n1_ref=d.get("n1"), canon=canon, ansatz=d.get("ansatz", "standard"),
            generic=bool(d.get("generic", False)),
            instances=tuple(dict(i) for i in d.get("instances", ())),
        )

    def to_dict(self) -> dict:
        d = {"id": self.id, "table": self.table, "regime": self.regime,
             "potential": self.potential_template, "params": list(self.params),
             "constraints": list(self.param_constraints), "basis": list(self.basis),
             "ansatz": self.ansatz, "generic": self.generic}
        if self.n1_ref is not None:
            d["n1"] = self.n1_ref
        if self.canon is not None:
            d["canon"] = self.canon
        if self.instances:
            d["instances"] = list(self.instances)
        return d

    # binding -------------------------------------------------------------
    def admits(self, p: ModelParams) -> bool:
        return _regime_ok(self.regime, p)

    def _names(self, bindings: Mapping, p: ModelParams) -> dict:
        names = dict(p.bindings())
        names.update(bindings)
        return names

    def check_constraints(self, bindings: Mapping, p: ModelParams) -> None:
        """Raise ConstraintViolation unless ``bindings`` are admissible for this row at ``p``."""
        if not self.admits(p):
            raise ConstraintViolation(f"case {self.id} needs regime {self.regime}, gamma = {p.gamma}")
        missing = [n for n in self.params if n not in bindings]
        if missing:
            raise ConstraintViolation(f"case {self.id}: unbound parameters {missing}")
        if self.generic and not any(n in bindings for n in GENERIC_NAMES):
            raise ConstraintViolation(f"case {self.id}: generic row needs a V or W instance")
        names = self._names({k: v for k, v in bindings.items() if k in self.params}, p)
        for k in self.params:
            _exact_real(bindings[k])
        for c in self.param_constraints:
            if not _constraint_holds(c, names):
                raise ConstraintViolation(f"case {self.id}: constraint {c} fails at "
                                          + ", ".join(f"{k}={_fmt_binding(bindings[k])}"
                                                      for k in self.params) + f", gamma={p.gamma}")

    def potential(self, bindings: Mapping, p: ModelParams) -> Potential:
        return Potential(ec.parse(self.potential_template, self._names(bindings, p)))

    def basis_fields(self, bindings: Mapping | None = None, p: ModelParams | None = None) -> list:
        names = self._names(bindings or {}, p) if p is not None else dict(bindings or {})
        return [VectorField.parse(s, names) for s in self.basis]

    def ansatz_space(self) -> AnsatzSpace:
        spaces = _raw_catalog().get("ansatz_spaces", {})
        if self.ansatz == "standard":
            return STANDARD_ANSATZ
        return AnsatzSpace.parse(spaces.get(self.ansatz, self.ansatz))

    def canon_map(self, bindings: Mapping, p: ModelParams) -> EquivMap | None:
        if self.canon is None:
            return None
        return EquivMap.from_dict(dict(self.canon["map"]), self._names(bindings, p))

    def target_bindings(self, bindings: Mapping, p: ModelParams) -> dict:
        """Parameters of the N1 case matched to these bindings."""
        names = self._names(bindings, p)
        out = {k: _exact_real(ec.parse(str(v), names))
               for k, v in (self.canon or {}).get("target_params", {}).items()}
        for k in GENERIC_NAMES:
            if k in bindings:
                out[k] = bindings[k]
        return out

    def binding_grid(self, p: ModelParams, grid: Mapping | None = None) -> list[dict]:
        """Admissible bindings from the documented grid (generic rows: their instances)."""
        if not self.admits(p):
            return []
        grid = grid or _raw_catalog()["binding_grid"]
        if self.generic:
            out = []
            for inst in self.instances:
                inst = dict(inst)
                if not _regime_ok(inst.pop("regime", "any"), p):
                    continue
                out.append(inst)
            return out
        names = dict(p.bindings())
        choices: list[dict] = [{}]
        if "nu" in self.params:
            vals = []
            for s in grid["nu"]:
                v = _fraction(ec.parse(s, names))
                if v not in vals:
                    vals.append(v)
            choices = [dict(c, nu=v) for c in choices for v in vals]
        if "a" in self.params:
            pairs = [(_fraction(a), _fraction(b)) for a, b in grid["ab"]]
            choices = [dict(c, a=a, b=b) for c in choices for a, b in pairs]
        out = []
        for c in choices:
            try:
                self.check_constraints(c, p)
            except ConstraintViolation:
                continue
            out.append(c)
        return out


def _constraint_holds(text: str, names: Mapping) -> bool:
    for op in (">=", "<=", "!=", "==", ">", "<"):
        if op in text:
            lhs, rhs = text.split(op, 1)
            break
    else:
        raise NLSClassError(f"malformed constraint {text!r}")
    lv = sp.nsimplify(ec.parse(lhs.strip(), names))
    rv = sp.nsimplify(ec.parse(rhs.strip(), names))
    return bool(_OPS[op](lv, rv))


def case_catalog(regime: str | None = None) -> list[ClassCase]:
    """All catalog entries, optionally only those stored for one regime."""
    cases = [ClassCase.from_dict(d) for d in _raw_catalog()["cases"]]
    if regime is not None:
        cases = [c for c in cases if c.regime == regime]
    return cases


def get_case(case_id: str, p: ModelParams | None = None) -> ClassCase:
    """Look up an entry; a bare "1.5" or "1.7" resolves by the regime of ``p``."""
    by_id = {c.id: c for c in case_catalog()}
    if case_id in by_id:
        return by_id[case_id]
    for suffix in ("a", "b"):
        c = by_id.get(case_id + suffix)
        if c is not None and (p is None or c.admits(p)):
            return c
    raise NLSClassError(f"unknown case {case_id!r}")


def base_id(case_id: str) -> str:
    return case_id.rstrip("ab")


def table1_equivalent(case_id: str) -> str:
    """The Table-1 row a case is equivalent to (itself for Table-1 rows)."""
    c = get_case(case_id)
    return base_id(c.n1_ref if c.n1_ref is not None else c.id)


# --------------------------------------------------------------------------
# verification

@dataclass
class CaseReport:
    case_id: str
    gamma: Fraction
    bindings: dict
    potential: str
    operators: list = field(default_factory=list)
    closure: dict | None = None
    canon: dict | None = None
    dimension: dict | None = None
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "case": self.case_id,
            "gamma": str(self.gamma),
            "bindings": {k: _fmt_binding(v) for k, v in sorted(self.bindings.items())},
            "potential": self.potential,
            "operators": self.operators,
            "closure": self.closure,
            "canon": self.canon,
            "dimension": self.dimension,
            "passed": self.passed,
            "failures": self.failures,
        }


def _span_rank(fields: Sequence[VectorField], ts: np.ndarray) -> int:
    if not fields:
        return 0
    cols = []
    for q in fields:
        col = np.concatenate([np.broadcast_to(ec.evaluate(c, {ec.t: ts}), ts.shape)
                              for c in q.components()])
        n = np.linalg.norm(col)
        cols.append(col / n if n > 0 else col)
    sv = np.linalg.svd(np.column_stack(cols), compute_uv=False)
    return int(np.sum(sv > 1e-8 * sv[0]))


def verify_case(c: ClassCase, bindings: Mapping, p: ModelParams,
                plan: ec.SamplePlan | None = None, seed: int = 0, n: int = 256,
                check_dimension: bool = True, check_canon: bool = True,
                tolerance: float = ec.DEFAULT_TOLERANCE) -> CaseReport:
    """Replay one row: every operator, closure, the N1 map and the dimension.

    Raises ConstraintViolation when ``bindings`` are not admissible.
    """
    bindings = dict(bindings)
    c.check_constraints(bindings, p)
    pot = c.potential(bindings, p)
    fields = c.basis_fields(bindings, p)
    rep = CaseReport(c.id, p.gamma, bindings, ec.format_expr(pot.expr))
    if plan is None:
        a = c.ansatz_space()
        window = [comp for q in fields for comp in q.components()]
        window += [*a.xi_basis, *a.chi_basis, *a.lam_basis]
        plan = ec.SamplePlan.for_exprs(pot.expr, n=n, seed=seed, tolerance=tolerance,
                                       t_range=ec.growth_window(window))

    for s, q in zip(c.basis, fields):
        v = is_symmetry(p, pot, q, plan, sample_always=True)
        d = {"operator": s}
        d.update(v.to_dict())
        rep.operators.append(d)
        if not v.holds:
            rep.failures.append({"check": "operator", "operator": s, "witness": v.test.witness})

    try:
        sr = verify_structure_constants(fields, plan)
        rep.closure = sr.to_dict()
        if not sr.closed:
            rep.failures.append({"check": "closure", "max_residual": sr.max_residual})
    except NLSClassError as exc:
        rep.closure = {"closed": False, "error": str(exc)}
        rep.failures.append({"check": "closure", "error": str(exc)})

    if check_canon and c.canon is not None:
        target_case = get_case(c.n1_ref, p)
        tb = c.target_bindings(bindings, p)
        target = target_case.potential(tb, p)
        m = c.canon_map(bindings, p)
        zt = action_residual(m, p, pot, target, seed=seed, n=n, tolerance=plan.tolerance)
        rep.canon = {"map": m.to_dict(), "target_case": target_case.id,
                     "target": ec.format_expr(target.expr),
                     "target_bindings": {k: _fmt_binding(v) for k, v in sorted(tb.items())}}
        rep.canon.update(zt.to_dict())
        if not zt.zero:
            rep.failures.append({"check": "canon", "witness": zt.witness})

    if check_dimension:
        sol = solve_symmetries(p, pot, c.ansatz_space(), plan)
        ts = np.asarray(plan.t_samples[: 8 * (len(fields) + len(sol) + 1)])
        r_tab, r_sol = _span_rank(fields, ts), _span_rank(list(sol), ts)
        r_both = _span_rank(list(fields) + list(sol), ts)
        ok = r_tab == len(fields) == len(sol) == r_sol == r_both
        rep.dimension = {"expected": len(fields), "found": len(sol), "same_span": r_both == r_tab == r_sol,
                         "singular_value_gap": sol.gap, "solved_basis": [str(q) for q in sol]}
        if not ok:
            rep.failures.append({"check": "dimension", "expected": len(fields), "found": len(sol)})
    return rep


@dataclass
class SummaryReport:
    reports: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def failures(self) -> list:
        out = []
        for r in self.reports:
            for f in r.failures:
                out.append(dict(f, case=r.case_id, gamma=str(r.gamma),
                                bindings={k: _fmt_binding(v) for k, v in sorted(r.bindings.items())}))
        return out

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_instances": len(self.reports),
            "n_failed": sum(not r.passed for r in self.reports),
            "failures": self.failures,
            "instances": [r.to_dict() for r in self.reports],
        }


def _job(args):
    c, bindings, gamma, seed, n, dim, canon, tol = args
    return verify_case(c, bindings, ModelParams(gamma), seed=seed, n=n,
                       check_dimension=dim, check_canon=canon, tolerance=tol)


def instances(p_list: Iterable[ModelParams], cases: Sequence[ClassCase] | None = None) -> list:
    """(case, bindings, params) triples of the binding grid."""
    cases = case_catalog() if cases is None else list(cases)
    out = []
    for p in p_list:
        for c in cases:
            for b in c.binding_grid(p):
                out.append((c, b, p))
    return out


def verify_all(p_list: Iterable[ModelParams], plan: ec.SamplePlan | None = None,
               cases: Sequence[ClassCase] | None = None, seed: int = 0, n: int = 256,
               workers: int = 1, check_dimension: bool = True, check_canon: bool = True,
               tolerance: float = ec.DEFAULT_TOLERANCE) -> SummaryReport:
    """Run :func:`verify_case` over the binding grid of every catalog entry.

    With ``workers > 1`` the case-instances run in a process pool; the
    report order is the grid order either way.  ``plan`` (if given) is
    shared by every instance and forces serial execution.
    """
    jobs = instances(p_list, cases)
    if plan is not None or workers <= 1:
        reports = [verify_case(c, b, p, plan, seed=seed, n=n, check_dimension=check_dimension,
                               check_canon=check_canon, tolerance=tolerance) for c, b, p in jobs]
    else:
        args = [(c, b, p.gamma, seed, n, check_dimension, check_canon, tolerance)
                for c, b, p in jobs]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            reports = list(ex.map(_job, args))
    for r in reports:
        if not r.passed:
            log.warning("case %s failed at gamma=%s: %s", r.case_id, r.gamma, r.failures)
    return SummaryReport(reports)


def corrupted(case_id: str, extra_operator: str, p: ModelParams | None = None) -> ClassCase:
    """A copy of a catalog entry with one extra (usually wrong) basis operator."""
    c = get_case(case_id, p)
    return replace(c, basis=c.basis + (extra_operator,))
