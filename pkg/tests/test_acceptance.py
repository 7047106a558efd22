"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict; the lines are printed in the terminal
summary by ``conftest.py`` and also to stdout when run with ``-s``.
"""
import time

import numpy as np
import pytest
import sympy as sp

from nlsclass import exprcore as ec
from nlsclass.classifier import classify, tau_on
from nlsclass.equiv import (
    EquivMap,
    InfinitesimalGen,
    action_residual,
    apply_to_potential,
    finite_infinitesimal_consistency,
    pullback,
)
from nlsclass.exprcore import t, x
from nlsclass.invariance import AnsatzSpace, ModelParams, is_symmetry, solve_symmetries
from nlsclass.liealg import VectorField, verify_structure_constants
from nlsclass.tables import case_catalog, get_case, instances, table1_equivalent, verify_all

I = sp.I
D, G, M = VectorField.D, VectorField.G, VectorField.M
GRID = [ModelParams(g) for g in ("1", "2", "3", "4", "6", "-2")]


@pytest.fixture(scope="module")
def grid_summary():
    t0 = time.perf_counter()
    summary = verify_all(GRID)
    return summary, time.perf_counter() - t0


def verdict(n, text, ok):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {text}")
    assert ok, text


def test_criterion_1_table_verification(grid_summary):
    summary, elapsed = grid_summary
    reports = summary.reports
    worst = max(op["max_residual"] for r in reports for op in r.operators)
    fewest = min(op["n_points"] for r in reports for op in r.operators)
    all_hold = all(op["holds"] for r in reports for op in r.operators)
    ok = len(reports) >= 40 and all_hold and worst < 1e-9 and fewest >= 200 and elapsed < 60 and summary.passed
    verdict(1, f"{len(reports)} instances, worst residual {worst:.1e}, >= {fewest} points, "
               f"{elapsed:.1f} s", ok)


def test_criterion_2_closure(grid_summary):
    summary, _ = grid_summary
    worst = max(r.closure["max_residual"] for r in summary.reports)
    closed = all(r.closure["closed"] for r in summary.reports)
    rep = verify_structure_constants([D(1), D(t), D(t**2)])
    c = rep.snapped()
    sl2 = (c[0, 1, 0] == 1 and c[0, 2, 1] == 2 and c[1, 2, 2] == 1
           and sum(c[i, j, k] != 0 for i in range(3) for j in range(i + 1, 3) for k in range(3)) == 3)
    verdict(2, f"all algebras closed (worst {worst:.1e}); sl(2) constants [e,h]=e, [e,f]=2h, [h,f]=f "
               "in the basis D(1), D(t), D(t^2)", closed and worst < 1e-8 and sl2)


def canonical_map_cases():
    """(source potential, map, hand-written target) for each listed map and gamma."""
    out = []
    for p in (ModelParams(2), ModelParams(3), ModelParams(-2)):
        gh = p.gh
        exp_map = EquivMap(T=-sp.exp(-4 * t))
        for nu in (sp.Integer(0), sp.Integer(2), sp.Rational(7, 2)):
            if nu in (gh, -gh):
                continue
            out.append((p, x**2 + I * nu, exp_map, I * (gh - nu) / 4 / t, "exp, nu~ = (gh - nu)/4"))
        out.append((p, x**2 + I * gh, exp_map, sp.Integer(0), "exp to free"))
        out.append((p, x**2 + I * gh + (1 + 2 * I) * x**-2, exp_map, (1 + 2 * I) * x**-2, "exp to x^-2"))
        for nu in (sp.Integer(0), sp.Integer(1), sp.Rational(5, 3)):
            out.append((p, -(x**2) + I * nu, EquivMap(T=sp.tan(2 * t)),
                        I / 2 * (gh * t + nu) / (t**2 + 1), "tan, nu~ = nu"))
        for nu in (sp.Integer(1), sp.Integer(4), sp.Rational(9, 4)):
            m = EquivMap(T=nu * t, X=-sp.sqrt(nu) * t**2, Psi=t**3 / 3)
            out.append((p, x + I * nu, m, I, "Galilean, to i"))
        out.append((p, x, EquivMap(T=t, X=-(t**2), Psi=t**3 / 3), sp.Integer(0), "Galilean, to free"))
    p4 = ModelParams(4)
    out.append((p4, x**2, EquivMap(T=-sp.exp(-4 * t)), sp.Integer(0), "exp to free at gh=0"))
    out.append((p4, -(x**2), EquivMap(T=sp.tan(2 * t)), sp.Integer(0), "tan to free at gh=0"))
    out.append((p4, -(x**2) + (3 - I) * x**-2, EquivMap(T=sp.tan(2 * t)), (3 - I) * x**-2, "tan to x^-2"))
    out.append((p4, x**2 + I * 3, EquivMap(T=-sp.exp(-4 * t)), -I * sp.Rational(3, 4) / t,
                "exp, nu~ = -nu/4"))
    return out


def test_criterion_3_canonical_maps():
    worst, bad = 0.0, []
    for p, v, m, target, label in canonical_map_cases():
        zt = action_residual(m, p, v, target)
        worst = max(worst, zt.max_abs)
        if not (zt.zero and zt.max_abs < 1e-9):
            bad.append((label, p.gamma, v))
    verdict(3, f"{len(canonical_map_cases())} source/target pairs, worst residual {worst:.1e}"
               + (f", failing {bad}" if bad else ""), not bad)


def test_criterion_4_tau():
    p = ModelParams(2)
    gh = p.gh
    ok = True
    for nu in (sp.Integer(1), sp.Rational(-1, 2), sp.Rational(3, 7), sp.Integer(5), sp.Rational(1, 3)):
        out = apply_to_potential(EquivMap.tau(), p, I * nu / t).expr
        ok &= sp.simplify(out - I * (gh / 2 - nu) / t) == 0
    fixed = apply_to_potential(EquivMap.tau(), p, I * gh / 4 / t).expr
    ok &= fixed == I * gh / 4 / t
    # tau on t > 0 lands on t < 0; applying it again there must restore V
    v = I * sp.Rational(2, 5) / t + x**2 / t**2
    once = apply_to_potential(tau_on(1), p, v).expr
    twice = apply_to_potential(tau_on(-1), p, once).expr
    plan = ec.SamplePlan.build(n=256, seed=0, t_range=(0.2, 3.0))
    resid = float(np.max(np.abs(ec.sample_values(twice - v, plan))))
    ok &= resid < 1e-10
    verdict(4, f"nu -> gh/2 - nu for 5 values, gh/4 fixed, tau twice residual {resid:.1e}", ok)


def test_criterion_5_dimensions():
    std = AnsatzSpace.parse("xi=1,t,t^2;chi=1,t;lam=1,t")
    osc = AnsatzSpace.parse("xi=1,exp(4*t),exp(-4*t);chi=exp(2*t),exp(-2*t);lam=1")
    p2, p4 = ModelParams(2), ModelParams(4)
    runs = [
        ("V=0, gamma=4", solve_symmetries(p4, "0", std), 6),
        ("V=0, gamma=2", solve_symmetries(p2, "0", std), 5),
        ("V=x^2, gamma=4", solve_symmetries(p4, "x^2", osc), 6),
        ("V=x^2+i*gh, gamma=2", solve_symmetries(p2, x**2 + I * p2.gh, osc), 5),
        ("V=(1+i)x^-2, gamma=4", solve_symmetries(p4, "(1+i)*x^-2", std), 4),
        ("V=(1+i)x^-2, gamma=2", solve_symmetries(p2, "(1+i)*x^-2", std), 3),
    ]
    ok = all(b.dimension == want and b.gap > 1e4 for _, b, want in runs)
    text = ", ".join(f"{name}: {b.dimension} (gap {b.gap:.0e})" for name, b, _ in runs)
    verdict(5, text, ok)


def test_criterion_6_negative_controls():
    p2 = ModelParams(2)
    a = is_symmetry(p2, "0", D(t**2), sample_always=True)
    b = is_symmetry(p2, x**2 + I * p2.gh, D(sp.exp(-4 * t)), sample_always=True)
    ok = (not a.holds and a.test.witness is not None and not b.holds and b.test.witness is not None)
    verdict(6, f"D(t^2) on V=0 fails at {a.test.witness and (round(a.test.witness['t'], 3))}; "
               f"D(exp(-4t)) on x^2+i*gh fails", ok)


def test_criterion_7_epsilon_sweep():
    p = ModelParams(2)
    v = x**2 + I / (t**2 + 1)
    gens = [InfinitesimalGen("Dprime", t**2 + 1), InfinitesimalGen("Dprime", t**2),
            InfinitesimalGen("Gprime", t**3), InfinitesimalGen("Gprime", t),
            InfinitesimalGen("Mprime", t**2)]
    rows, ok = [], True
    for g in gens:
        r = finite_infinitesimal_consistency(g, p, v)
        if r.exact:
            # the mass flow is linear in eps: the remainder vanishes identically
            rows.append(f"{g.kind}({g.param}) exact")
            ok &= max(r.remainder) < 1e-14
        else:
            rows.append(f"{g.kind}({g.param}) slope {r.slope_second:.3f}")
            ok &= 1.8 <= r.slope_second <= 2.2
    verdict(7, "; ".join(rows), ok)


def test_criterion_8_classifier_self_consistency():
    total, bad = 0, []
    for c, b, p in instances(GRID):
        total += 1
        try:
            r = classify(p, c.potential(b, p))
        except Exception as exc:  # noqa: BLE001 - any failure counts against the criterion
            bad.append((c.id, str(p.gamma), b, repr(exc)))
            continue
        same = r.case_id == c.id or (
            table1_equivalent(r.case_id) == table1_equivalent(c.id)
            and (c.canon is None or c.canon["map"] == {"T": "t"}))
        checked = r.check is None or r.check["verdict"] in ("ProvedZero", "ProbablyZero")
        if not (same and checked):
            bad.append((c.id, str(p.gamma), b, r.case_id))
    verdict(8, f"{total - len(bad)}/{total} instances classified to their row" + (f", {bad[:5]}" if bad else ""),
            not bad and total >= 40)


def catalog_strings():
    names = ("nu", "a", "b", "gh", "V", "W")
    out = []
    for c in case_catalog():
        out.append(c.potential_template)
        out.extend(op.split(":", 1)[1] for q in c.basis for op in q.split("+") if ":" in op)
        if c.canon:
            out.extend(c.canon["map"].values())
            out.extend(c.canon.get("target_params", {}).values())
        for inst in c.instances:
            out.extend(v for k, v in inst.items() if k in ("V", "W"))
    return [s for s in out if isinstance(s, str)], names


def test_criterion_9_parser_round_trip():
    strings, names = catalog_strings()
    bad = []
    for s in strings:
        e = ec.parse(s, params=names)
        again = ec.parse(ec.format_expr(e), params=names)
        if ec.normalize(again) != ec.normalize(e):
            bad.append(s)
    verdict(9, f"{len(strings) - len(bad)}/{len(strings)} catalog strings round-trip", not bad)
