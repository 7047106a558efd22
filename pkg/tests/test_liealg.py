import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from nlsclass import exprcore as ec
from nlsclass.exprcore import t
from nlsclass.liealg import (
    NormalForm,
    VectorField,
    adjoint_reflection,
    bracket,
    onedim_normal_form,
    verify_structure_constants,
)
from nlsclass.tables import case_catalog

D, G, M = VectorField.D, VectorField.G, VectorField.M


def hand_bracket(q1, q2):
    """Independent oracle: the commutation table written out term by term."""
    (a1, b1, c1), (a2, b2, c2) = q1.components(), q2.components()
    d = lambda f: sp.diff(f, t)  # noqa: E731
    xi = a1 * d(a2) - a2 * d(a1)
    chi = a1 * d(b2) - a2 * d(b1) - sp.Rational(1, 2) * (d(a1) * b2 - d(a2) * b1)
    lam = a1 * d(c2) - a2 * d(c1) + sp.Rational(1, 2) * (b1 * d(b2) - b2 * d(b1))
    return [sp.expand(e) for e in (xi, chi, lam)]


def same(q, comps):
    return all(sp.simplify(a - b) == 0 for a, b in zip(q.components(), comps))


def test_dilation_with_translation():
    assert bracket(D(1), D(t)) == D(1)


def test_galilei_pair_gives_mass():
    assert bracket(G(1), G(t)) == M(sp.Rational(1, 2))


def test_dilation_on_galilei():
    assert bracket(D(t), G(1)) == G(sp.Rational(-1, 2))


def test_bracket_with_mass_vanishes():
    assert bracket(M(t**2), G(t)).lam == 0
    assert bracket(M(1), D(t**2 + 1)) == VectorField()


def test_parse_and_print():
    q = VectorField.parse("D:2*t+G:3*t^2+M:t^3")
    assert q == D(2 * t) + G(3 * t**2) + M(t**3)
    assert VectorField.parse(str(q)) == q
    assert str(G(1)) == "G:1"
    assert VectorField.parse("0").is_zero_field()


polys = st.lists(st.integers(-3, 3), min_size=1, max_size=4).map(
    lambda cs: sum(sp.Integer(c) * t**k for k, c in enumerate(cs)))
fields = st.builds(VectorField, polys, polys, polys)
mixed = st.sampled_from([sp.exp(2 * t), sp.sin(4 * t), sp.cos(2 * t), t**2 + 1, sp.Integer(1)])
mixed_fields = st.builds(VectorField, mixed, mixed, mixed)


@settings(max_examples=40, deadline=None)
@given(st.one_of(fields, mixed_fields), st.one_of(fields, mixed_fields))
def test_bracket_matches_hand_table(q1, q2):
    assert same(bracket(q1, q2), hand_bracket(q1, q2))


@settings(max_examples=40, deadline=None)
@given(fields, fields, fields, st.integers(-4, 4))
def test_antisymmetry_and_bilinearity(q1, q2, q3, c):
    plan = ec.SamplePlan.build(n=40, seed=1)
    lhs = bracket(q1 * c + q2, q3) - (bracket(q1, q3) * c + bracket(q2, q3))
    anti = bracket(q1, q2) + bracket(q2, q1)
    for e in (*lhs.components(), *anti.components()):
        assert np.max(np.abs(ec.sample_values(e, plan)), initial=0.0) < 1e-9


@settings(max_examples=25, deadline=None)
@given(fields, fields, fields)
def test_jacobi_identity(q1, q2, q3):
    j = (bracket(q1, bracket(q2, q3)) + bracket(q2, bracket(q3, q1))
         + bracket(q3, bracket(q1, q2)))
    for e in j.components():
        assert ec.is_zero(e).zero


def test_ad_ix_flips_galilei():
    assert adjoint_reflection(G(t), "Ix") == G(-t)


def test_ad_it_examples():
    assert adjoint_reflection(D(t), "It") == D(t)
    assert adjoint_reflection(M(t), "It") == M(t)
    assert adjoint_reflection(D(1), "It") == D(-1)
    assert adjoint_reflection(G(t), "It") == G(-t)


@settings(max_examples=30, deadline=None)
@given(st.one_of(fields, mixed_fields), st.sampled_from(["Ix", "It"]))
def test_reflections_are_involutions(q, which):
    assert adjoint_reflection(adjoint_reflection(q, which), which) == q


@settings(max_examples=30, deadline=None)
@given(st.one_of(fields, mixed_fields), st.one_of(fields, mixed_fields))
def test_ad_it_is_an_automorphism(q1, q2):
    lhs = adjoint_reflection(bracket(q1, q2), "It")
    rhs = bracket(adjoint_reflection(q1, "It"), adjoint_reflection(q2, "It"))
    assert all(ec.is_zero(a - b).zero for a, b in zip(lhs.components(), rhs.components()))


@pytest.mark.parametrize("q,form", [
    (D(t**2 + 1) + G(t) + M(3), NormalForm.D),
    (G(sp.exp(2 * t)), NormalForm.G),
    (M(5), NormalForm.M),
    (M(t), NormalForm.TM),
    (VectorField(), NormalForm.ZERO),
])
def test_one_dimensional_normal_forms(q, form):
    assert onedim_normal_form(q).form is form


@settings(max_examples=30, deadline=None)
@given(st.one_of(fields, mixed_fields), st.integers(1, 9).map(lambda k: sp.Rational(k, 3) * (-1) ** k))
def test_normal_form_scaling_invariance(q, c):
    assert onedim_normal_form(q * c).form is onedim_normal_form(q).form


def test_sl2_structure_constants():
    basis = [D(1), D(t), D(t**2)]
    rep = verify_structure_constants(basis)
    assert rep.closed and rep.max_residual < 1e-8
    c = rep.snapped()
    expected = {(0, 1): {0: 1}, (0, 2): {1: 2}, (1, 2): {2: 1}}
    for (i, j), coeffs in expected.items():
        for k in range(3):
            assert c[i, j, k] == coeffs.get(k, 0)


def test_kernel_of_stationary_free_class():
    rep = verify_structure_constants([M(1), G(1), G(t)])
    assert rep.closed
    assert rep.snapped()[1, 2, 0] == sp.Rational(1, 2)


def test_commuting_pair():
    rep = verify_structure_constants([D(1), G(1)])
    assert rep.closed
    assert np.all(np.abs(rep.constants) < 1e-12)


def test_non_closed_span_detected():
    rep = verify_structure_constants([D(1), D(t**3)])
    assert not rep.closed


def test_every_tabulated_algebra_closes():
    from nlsclass.invariance import ModelParams
    for c in case_catalog():
        p = ModelParams(4) if c.regime == "eq4" else ModelParams(2)
        for b in c.binding_grid(p)[:2]:
            rep = verify_structure_constants(c.basis_fields(b, p))
            assert rep.closed, (c.id, b, rep.max_residual)
