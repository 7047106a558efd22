import json
from fractions import Fraction

import pytest
import sympy as sp

from nlsclass import exprcore as ec
from nlsclass.equiv import EquivMap, action_residual, apply_to_potential
from nlsclass.errors import ConstraintViolation
from nlsclass.exprcore import t, x
from nlsclass.invariance import ModelParams, is_symmetry
from nlsclass.liealg import VectorField
from nlsclass.tables import (
    ClassCase,
    case_catalog,
    catalog_text,
    corrupted,
    get_case,
    instances,
    table1_equivalent,
    verify_all,
    verify_case,
)

D, G, M = VectorField.D, VectorField.G, VectorField.M
I = sp.I
GAMMAS = [ModelParams(g) for g in ("1", "2", "3", "4", "6", "-2")]


def test_catalog_is_valid_json_with_schema():
    data = json.loads(catalog_text())
    assert data["schema"] == "nlsclass-catalog/1"
    assert len(data["cases"]) == len(case_catalog())


def test_entries_round_trip():
    for c in case_catalog():
        assert ClassCase.from_dict(c.to_dict()) == c


def test_ids_unique_and_tables_complete():
    ids = [c.id for c in case_catalog()]
    assert len(ids) == len(set(ids))
    rows = {c.table: set() for c in case_catalog()}
    for c in case_catalog():
        rows[c.table].add(c.id.split(".")[1].rstrip("ab"))
    assert rows[1] >= {str(k) for k in range(1, 8)}
    assert rows[2] >= {str(k) for k in range(1, 10)}
    assert rows[3] >= {str(k) for k in range(1, 12)}


def test_case_12_entry(p2):
    c = get_case("1.2")
    v = c.potential({"nu": 1}, p2).expr
    assert sp.simplify(v - I / 2 * (t + 1) / (t**2 + 1)) == 0
    assert set(c.basis_fields()) == {M(1), G(1), G(t), D(t**2 + 1)}


def test_case_22_entry(p2):
    c = get_case("2.2")
    v = c.potential({"a": 1, "b": 0}, p2).expr
    assert v == x**2 + I + x**-2
    assert set(c.basis_fields()) == {M(1), D(1), D(sp.exp(4 * t))}


def test_case_311_entry():
    c = get_case("3.11")
    assert c.potential({}, ModelParams(4)).expr == -(x**2)
    assert set(c.basis_fields()) == {M(1), D(1), G(sp.cos(2 * t)), G(sp.sin(2 * t)),
                                     D(sp.cos(4 * t)), D(sp.sin(4 * t))}


def test_bare_split_ids_resolve_by_regime():
    assert get_case("1.5", ModelParams(4)).id == "1.5b"
    assert get_case("1.5", ModelParams(2)).id == "1.5a"
    assert get_case("1.7", ModelParams(4)).id == "1.7b"
    assert table1_equivalent("2.6") == "1.3" and table1_equivalent("3.10") == "1.5"


def test_verify_free_potential_at_critical_power(p4):
    r = verify_case(get_case("1.5", p4), {}, p4)
    assert r.passed
    assert [o["operator"] for o in r.operators] == ["M:1", "G:1", "G:t", "D:1", "D:t", "D:t^2"]
    assert r.dimension["found"] == 6


def test_verify_linear_potential(p2):
    c = get_case("2.8")
    r = verify_case(c, {}, p2)
    assert r.passed
    assert set(c.basis_fields()) == {M(1), D(1), G(1) + M(t), G(2 * t) + M(t**2),
                                     D(2 * t) + G(3 * t**2) + M(t**3)}
    out = apply_to_potential(EquivMap(T=t, X=-(t**2), Psi=t**3 / 3), p2, x)
    assert out.expr == 0


def test_constraint_violation_at_excluded_nu(p2):
    with pytest.raises(ConstraintViolation):
        verify_case(get_case("1.3"), {"nu": p2.gh / 2}, p2)
    with pytest.raises(ConstraintViolation):
        verify_case(get_case("1.3"), {"nu": 0}, p2)


def test_sign_normalisations_enforced(p2):
    with pytest.raises(ConstraintViolation):
        get_case("1.2").check_constraints({"nu": -1}, p2)
    with pytest.raises(ConstraintViolation):
        get_case("1.7", p2).check_constraints({"a": 1, "b": -1}, p2)
    with pytest.raises(ConstraintViolation):
        get_case("3.1").check_constraints({"a": 1, "b": 0}, p2)


def test_corrupted_entry_fails_with_witness(p4):
    bad = corrupted("1.5", "D:t^3", p4)
    r = verify_case(bad, {}, p4)
    assert not r.passed
    op = [o for o in r.operators if o["operator"] == "D:t^3"][0]
    assert not op["holds"] and op["witness"] is not None
    s = verify_all([p4], cases=[bad])
    assert not s.passed and s.failures


def test_critical_filter_count():
    eq4 = case_catalog("eq4")
    assert len(eq4) == 14
    assert {c.id for c in eq4} == {"1.5b", "1.7b"} | {f"3.{k}" for k in range(12)}
    # every entry contributes at least one instance on the binding grid
    used = {c.id for c, _, _ in instances([ModelParams(4)], eq4)}
    assert used == {c.id for c in eq4}


def test_instances_respect_constraints():
    for c, b, p in instances(GAMMAS):
        c.check_constraints(b, p)


@pytest.mark.parametrize("case_id,op", [
    ("1.5", "D:t^2"), ("1.7", "D:t^2"), ("2.9", "D:exp(-4*t)"),
    ("3.11", "D:sin(4*t)"), ("3.11", "D:cos(4*t)"), ("2.8", "D:4*t^2+G:4*t^3+M:t^4"),
])
def test_special_power_dichotomy(case_id, op):
    q = VectorField.parse(op)
    binds = {"a": 1, "b": 1}
    base = get_case(case_id, ModelParams(4))
    names = dict.fromkeys(base.params, 1) if base.params else {}
    names = {k: binds.get(k, 1) for k in names}
    p4 = ModelParams(4)
    v4 = base.potential(names, p4)
    assert is_symmetry(p4, v4, q).holds
    for g in ("1", "2", "3", "6", "-2"):
        p = ModelParams(g)
        v = base.potential(names, p)
        assert not is_symmetry(p, v, q).holds, (case_id, g)


@pytest.mark.parametrize("nu", [sp.Integer(0), sp.Integer(2), sp.Rational(5, 2), sp.Integer(7)])
def test_exponential_map_for_shifted_harmonic(nu, p2):
    if nu == p2.gh:
        pytest.skip("excluded value")
    out = apply_to_potential(EquivMap(T=-sp.exp(-4 * t)), p2, x**2 + I * nu).expr
    assert sp.simplify(out - I * (p2.gh - nu) / 4 / t) == 0


@pytest.mark.parametrize("nu", [sp.Integer(0), sp.Integer(1), sp.Rational(3, 2)])
def test_tangent_map_keeps_nu(nu, p2):
    m = EquivMap(T=sp.tan(2 * t))
    target = I / 2 * (p2.gh * t + nu) / (t**2 + 1)
    zt = action_residual(m, p2, -(x**2) + I * nu, target)
    assert zt.zero and zt.max_abs < 1e-9


def test_open_question_constraints_agree(p_any):
    """nu != +-gh on the stationary side is nu~ != 0, gh/2 under nu~ = (gh - nu)/4 ... up to tau."""
    gh = p_any.gh
    for nu in (gh, -gh):
        nt = (gh - nu) / 4
        # nu = gh lands on nu~ = 0; nu = -gh lands on nu~ = gh/2, the tau image of 0
        assert nt in (0, gh / 2)
    for nu in (sp.Integer(3), sp.Rational(1, 7), gh + 1):
        if nu in (gh, -gh):
            continue
        assert (gh - nu) / 4 not in (0, gh / 2)


def test_verify_all_is_deterministic_and_parallel_safe():
    ps = [ModelParams(2)]
    cases = [get_case(i) for i in ("1.2", "1.3", "2.6")]
    a = verify_all(ps, cases=cases).to_dict()
    b = verify_all(ps, cases=cases, workers=2).to_dict()
    assert json.dumps(a, sort_keys=True, default=str) == json.dumps(b, sort_keys=True, default=str)


def test_generic_rows_use_representatives(p2):
    reps = [b for c, b, p in instances([p2]) if c.id == "1.1"]
    assert {b["W"] for b in reps} == {"t^2", "exp(t)", "1/(t^2+2)"}
    reps4 = [b for c, b, p in instances([ModelParams(4)]) if c.id == "1.1"]
    assert "1/(t^2+2)" not in {b["W"] for b in reps4}
