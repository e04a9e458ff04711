"""Tests for smooth forms, singular forms, restriction, and duality."""

import math
from fractions import Fraction

import numpy as np
import pytest

from bgeo.forms import (
    BBivector,
    BForm,
    GeometryError,
    bform_equiv,
    bivector_to_bform,
    bwedge,
    d_bform,
    d_smooth,
    dualize,
    find_z_components,
    form_equiv,
    interior_product,
    is_smooth,
    nondegeneracy_check,
    pullback_to_level,
    restrict_to_Z,
    smooth_form,
    top_coefficient,
    transversality_check,
    wedge,
)
from bgeo.symexpr import Num, Patch, ZERO, expr_equiv, normalize, parse_expr, sym

PLANE = Patch(("x", "y"), ((-2.0, 2.0), (-2.0, 2.0)))
R4 = Patch(("x1", "y1", "x2", "y2"), ((-2.0, 2.0),) * 4)
TAU = 2 * math.pi
T4 = Patch(("t1", "t2", "t3", "t4"), ((0.0, TAU),) * 4, periods=(TAU,) * 4)


def affine_bform():
    # dx ^ dy / y
    return BForm(PLANE, 2, smooth_form(PLANE, 1, {("x",): 1}),
                 smooth_form(PLANE, 2, {}), sym("y"), "y")


def standard_r4():
    # dx1 ^ dy1 / y1 + dx2 ^ dy2
    return BForm(R4, 2, smooth_form(R4, 1, {("x1",): 1}),
                 smooth_form(R4, 2, {("x2", "y2"): 1}), sym("y1"), "y1")


class TestSmoothForms:
    def test_antisymmetry_normalization(self):
        a = smooth_form(PLANE, 2, {("y", "x"): 1})
        assert a.coefficient("x", "y") == Num(Fraction(-1))

    def test_repeated_index_drops(self):
        a = smooth_form(PLANE, 2, {("x", "x"): parse_expr("x*y", PLANE)})
        assert a.is_zero()

    def test_wedge_anticommutes(self):
        dx = smooth_form(PLANE, 1, {("x",): 1})
        dy = smooth_form(PLANE, 1, {("y",): 1})
        ab = wedge(dx, dy)
        ba = wedge(dy, dx)
        assert ab.coefficient("x", "y") == Num(Fraction(1))
        assert (ab + ba).is_zero()

    def test_d_squared_zero(self):
        f = smooth_form(PLANE, 0, {(): parse_expr("sin(x)*y^3 + exp(x*y)", PLANE)})
        assert d_smooth(d_smooth(f)).is_zero()

    def test_d_of_product_leibniz(self):
        # d(fg) = df g + f dg on functions, via forms
        f = parse_expr("x^2*y", PLANE)
        g = parse_expr("sin(y) + x", PLANE)
        lhs = d_smooth(smooth_form(PLANE, 0, {(): f * g}))
        fg = smooth_form(PLANE, 0, {(): f})
        gg = smooth_form(PLANE, 0, {(): g})
        rhs = d_smooth(fg).scale(g) + d_smooth(gg).scale(f)
        assert form_equiv(lhs, rhs)

    def test_interior_product(self):
        # iota_{d/dx}(dx ^ dy) = dy
        a = smooth_form(PLANE, 2, {("x", "y"): 1})
        v = interior_product({"x": 1}, a)
        assert v.coefficient("y") == Num(Fraction(1))
        # second slot picks up the sign
        v = interior_product({"y": 1}, a)
        assert v.coefficient("x") == Num(Fraction(-1))

    def test_pullback_to_level(self):
        a = smooth_form(PLANE, 1, {("x",): parse_expr("x*y", PLANE),
                                   ("y",): parse_expr("x^2", PLANE)})
        r = pullback_to_level(a, "y", 0.0)
        assert r.patch.names == ("x",)
        assert r.is_zero()  # x*y at y=0 is 0, dy comps dropped


class TestBFormAlgebra:
    def test_alpha_dz_components_dropped(self):
        a = smooth_form(PLANE, 1, {("x",): 1, ("y",): parse_expr("x", PLANE)})
        w = BForm(PLANE, 2, a, smooth_form(PLANE, 2, {}), sym("y"), "y")
        assert list(w.alpha.comps) == [(0,)]

    def test_wedge_square_standard(self):
        w = standard_r4()
        w2 = bwedge(w, w)
        # omega^2 = 2 dx1 ^ (dy1/y1) ^ dx2 ^ dy2
        assert w2.beta.is_zero()
        assert w2.alpha.coefficient("x1", "x2", "y2") == Num(Fraction(2))

    def test_d_closed(self):
        dw = d_bform(standard_r4())
        assert dw.alpha.is_zero() and dw.beta.is_zero()

    def test_d_squared_zero(self):
        a = smooth_form(R4, 0, {(): parse_expr("x1*y2^2 + sin(x2)", R4)})
        w = BForm(R4, 1, a, smooth_form(R4, 1, {("x2",): parse_expr("y1*x1", R4)}),
                  sym("y1"), "y1")
        ddw = d_bform(d_bform(w))
        assert ddw.alpha.is_zero() and ddw.beta.is_zero()

    def test_d_rejects_mixed_defining_function(self):
        w = affine_bform().with_defining_function(parse_expr("1 + x^2", PLANE))
        with pytest.raises(GeometryError):
            d_bform(w)


class TestZComponents:
    def test_affine_single_component(self):
        comps = find_z_components(affine_bform())
        assert len(comps) == 1
        assert comps[0].value == pytest.approx(0.0, abs=1e-12)
        assert comps[0].fz == pytest.approx(1.0)

    def test_periodic_sine_two_components(self):
        # f = sin(t4) on the 4-torus vanishes at t4 = 0 and pi
        a = smooth_form(T4, 1, {("t1",): 1})
        b = smooth_form(T4, 2, {("t2", "t3"): 1})
        w = BForm(T4, 2, a, b, parse_expr("sin(t4)", T4), "t4")
        comps = find_z_components(w)
        vals = [c.value for c in comps]
        assert vals == pytest.approx([0.0, math.pi], abs=1e-9)
        assert comps[0].fz == pytest.approx(1.0)
        assert comps[1].fz == pytest.approx(-1.0)

    def test_degenerate_zero_rejected(self):
        w = BForm(PLANE, 2, smooth_form(PLANE, 1, {("x",): 1}),
                  smooth_form(PLANE, 2, {}), parse_expr("y^2", PLANE), "y")
        with pytest.raises(GeometryError):
            find_z_components(w)

    def test_no_zeros_rejected_by_transversality(self):
        w = BForm(PLANE, 2, smooth_form(PLANE, 1, {("x",): 1}),
                  smooth_form(PLANE, 2, {}), parse_expr("4 + y", PLANE), "y")
        # f = 4 + y has no zero inside |y| < 2
        with pytest.raises(GeometryError):
            transversality_check(w)


class TestRestriction:
    def test_affine_pair(self):
        pairs = restrict_to_Z(affine_bform())
        (pair,) = pairs
        assert pair.alpha_tilde.coefficient("x") == Num(Fraction(1))
        assert pair.beta_tilde.is_zero()

    def test_orientation_of_fz(self):
        # f = -y flips df/dz, so the intrinsic part flips sign with it
        w = BForm(PLANE, 2, smooth_form(PLANE, 1, {("x",): 1}),
                  smooth_form(PLANE, 2, {}), parse_expr("-y", PLANE), "y")
        (pair,) = restrict_to_Z(w)
        assert pair.alpha_tilde.coefficient("x") == Num(Fraction(-1))

    def test_alpha_tilde_invariant_under_rescaling(self):
        w = standard_r4()
        comps = find_z_components(w)
        base = restrict_to_Z(w, comps)
        h = parse_expr("1 + x1^2/8 + x2^2/8", R4)
        scaled = restrict_to_Z(w.with_defining_function(h), comps)
        for p1, p2 in zip(base, scaled):
            assert form_equiv(p1.alpha_tilde, p2.alpha_tilde)

    def test_beta_tilde_covariance(self):
        # beta~' = beta~ - alpha~ ^ d(log h)|_Z under f -> f h
        w = standard_r4()
        comps = find_z_components(w)
        h = parse_expr("1 + x2^2/8", R4)
        (base,) = restrict_to_Z(w, comps)
        (scaled,) = restrict_to_Z(w.with_defining_function(h), comps)
        logh = smooth_form(R4, 0, {(): parse_expr("log(1 + x2^2/8)", R4)})
        dlogh_z = pullback_to_level(d_smooth(logh), "y1", 0.0)
        want = base.beta_tilde - wedge(base.alpha_tilde, dlogh_z)
        assert form_equiv(scaled.beta_tilde, want)


class TestSmoothness:
    def test_genuinely_singular(self):
        ok, eq = is_smooth(affine_bform())
        assert ok is False and eq is None

    def test_disguised_smooth_with_equivalent(self):
        # y dx ^ dy / y is just dx ^ dy
        w = BForm(PLANE, 2, smooth_form(PLANE, 1, {("x",): sym("y")}),
                  smooth_form(PLANE, 2, {}), sym("y"), "y")
        ok, eq = is_smooth(w)
        assert ok is True
        assert eq.coefficient("x", "y") == Num(Fraction(1))

    def test_smooth_without_exact_quotient(self):
        # sin(y) dx ^ dy / y is smooth but not a polynomial quotient
        w = BForm(PLANE, 2, smooth_form(PLANE, 1, {("x",): parse_expr("sin(y)", PLANE)}),
                  smooth_form(PLANE, 2, {}), sym("y"), "y")
        ok, eq = is_smooth(w)
        assert ok is True and eq is None


class TestNondegeneracy:
    def test_standard_r4(self):
        verdict, detail = nondegeneracy_check(standard_r4())
        assert verdict == "nonvanishing-symbolic"
        assert detail["min_abs"] == pytest.approx(2.0)

    def test_smooth_form_degenerates_as_bform(self):
        # dx ^ dy viewed with defining function y: f*omega = y dx^dy
        w = BForm(PLANE, 2, smooth_form(PLANE, 1, {}),
                  smooth_form(PLANE, 2, {("x", "y"): 1}), sym("y"), "y")
        verdict, detail = nondegeneracy_check(w, grid=33)
        assert verdict == "degenerate"

    def test_torus_form(self):
        # dt1 ^ d(sin t4)/sin(t4)-type structure with beta = dt2 ^ dt3
        a = smooth_form(T4, 1, {("t1",): 1})
        b = smooth_form(T4, 2, {("t2", "t3"): 1})
        w = BForm(T4, 2, a, b, parse_expr("sin(t4)", T4), "t4")
        c = top_coefficient(w)
        verdict, detail = nondegeneracy_check(w, grid=12)
        assert verdict.startswith("nonvanishing")
        assert abs(detail["min_abs"]) == pytest.approx(2.0)


class TestDuality:
    def test_affine_pair(self):
        pi = dualize(affine_bform())
        cc = pi.coordinate_components()
        assert expr_equiv(cc[(0, 1)], sym("y"), PLANE)

    def test_standard_r4_pair(self):
        pi = dualize(standard_r4())
        cc = pi.coordinate_components()
        assert expr_equiv(cc[(0, 1)], sym("y1"), R4)
        assert cc[(2, 3)] == Num(Fraction(1))

    def test_round_trip_symbolic(self):
        for w in (affine_bform(), standard_r4()):
            back = bivector_to_bform(dualize(w))
            assert bform_equiv(w, back)

    def test_round_trip_numeric_tolerance(self):
        # perturbed structure: round trip agrees pointwise to 1e-10
        beta = smooth_form(R4, 2, {("x2", "y2"): parse_expr("1 + x1^2/4", R4),
                                   ("x1", "x2"): parse_expr("y2/8", R4)})
        w = BForm(R4, 2, smooth_form(R4, 1, {("x1",): parse_expr("1 + y2^2/9", R4)}),
                  beta, sym("y1"), "y1")
        back = bivector_to_bform(dualize(w))
        rng = np.random.default_rng(5)
        for _ in range(25):
            pt = R4.random_point(rng)
            for i in range(4):
                for j in range(i + 1, 4):
                    from bgeo.symexpr import eval_expr
                    v1 = eval_expr(w.b_coefficient(i, j), pt)
                    v2 = eval_expr(back.b_coefficient(i, j), pt)
                    assert abs(v1 - v2) < 1e-10

    def test_degenerate_rejected(self):
        w = BForm(PLANE, 2, smooth_form(PLANE, 1, {}),
                  smooth_form(PLANE, 2, {}), sym("y"), "y")
        with pytest.raises(GeometryError):
            dualize(w)
