"""Tests for Darboux flattening and the Moser-path verifiers."""

import math
from fractions import Fraction

import numpy as np
import pytest

from bgeo import symexpr as se
from bgeo.forms import (
    BForm,
    GeometryError,
    SmoothForm,
    d_smooth,
    form_equiv,
)
from bgeo.normalform import (
    _standard_model,
    darboux2d,
    darboux_verify,
    moser_global_verify,
    moser_relative_verify,
    poincare_primitive,
)
from bgeo.symexpr import Patch, diff_expr, expr_equiv, normalize, num, parse_expr, sym


def bform2d(patch, g_text, beta_text=None):
    """(g/z1) dz1^dz2 as a singular form: alpha = -g dz2."""
    g = parse_expr(g_text, patch)
    alpha = SmoothForm(patch, 1, {(patch.names[1],): se.neg(g)})
    beta = {}
    if beta_text is not None:
        beta = {tuple(patch.names): parse_expr(beta_text, patch)}
    return BForm(patch, 2, alpha, SmoothForm(patch, 2, beta),
                 sym(patch.names[0]), patch.names[0])


@pytest.fixture
def p2():
    return Patch(("z1", "z2"), ((-1.0, 1.0), (-1.0, 1.0)))


class TestDarboux2d:
    def test_trivial(self, p2):
        cc = darboux2d(bform2d(p2, "1"))
        assert expr_equiv(cc.forward[1], sym("z2"), p2)
        assert expr_equiv(cc.jacobian_det, num(1), p2)

    def test_cubic_oracle(self, p2):
        # dz^dt with t = z2 + z2^3/3 pulls back to ((1+z2^2)/z1) dz1^dz2
        cc = darboux2d(bform2d(p2, "1 + z2^2"))
        want = parse_expr("z2 + z2^3/3", p2)
        assert normalize(cc.forward[1]) == normalize(want)

    def test_sphere_form(self):
        patch = Patch(("h", "theta"), ((-0.5, 0.5), (0.0, 2 * math.pi)),
                      periods=(None, 2 * math.pi))
        cc = darboux2d(bform2d(patch, "1"), tname="t")
        assert expr_equiv(cc.forward[1], sym("theta"), patch)

    def test_quadrature_fallback(self, p2):
        # exp(z2^2) has no closed-form antiderivative in the table; the
        # Gauss-node path must still satisfy dt/dz2 = g
        omega = bform2d(p2, "exp(z2^2)")
        cc = darboux2d(omega)
        ty = diff_expr(cc.forward[1], "z2")
        assert expr_equiv(ty, parse_expr("exp(z2^2)", p2), p2, tol=1e-9)

    def test_beta_contribution(self, p2):
        # g includes the smooth part: omega = dz1^dz2/z1 + dz1^dz2
        cc = darboux2d(bform2d(p2, "1", beta_text="1"))
        # g = 1 + z1 => t = (1+z1) z2
        want = parse_expr("(1+z1)*z2", p2)
        assert expr_equiv(cc.forward[1], want, p2)

    def test_vanishing_g_rejected(self, p2):
        with pytest.raises(GeometryError, match="vanishes"):
            darboux2d(bform2d(p2, "z2"))

    def test_not_star_shaped(self):
        patch = Patch(("z1", "z2"), ((-1.0, 1.0), (0.5, 1.0)))
        with pytest.raises(GeometryError, match="star-shaped"):
            darboux2d(bform2d(patch, "1"))

    def test_f_must_be_coordinate(self, p2):
        g = parse_expr("1", p2)
        alpha = SmoothForm(p2, 1, {("z2",): se.neg(g)})
        omega = BForm(p2, 2, alpha, SmoothForm(p2, 2, {}),
                      parse_expr("2*z1", p2), "z1")
        with pytest.raises(GeometryError, match="coordinate"):
            darboux2d(omega)


class TestDarbouxVerify:
    def test_2d_residual(self, p2):
        rep = darboux_verify(bform2d(p2, "1 + z2^2"))
        assert rep.ok and rep.max_residual < 1e-9
        assert rep.change is not None

    def test_standard_model_r4(self):
        p4 = Patch(("x1", "y1", "x2", "y2"), ((-1.0, 1.0),) * 4)
        rep = darboux_verify(_standard_model(p4, "y1"))
        assert rep.ok and rep.max_residual == 0.0

    def test_canonical_one_form_differential(self):
        # d(x1 dy1/y1 + x2 dy2) is again the standard model
        p4 = Patch(("x1", "y1", "x2", "y2"), ((-1.0, 1.0),) * 4)
        alpha = SmoothForm(p4, 1, {("x1",): num(1)})
        beta = SmoothForm(p4, 2, {("x2", "y2"): num(1)})
        omega = BForm(p4, 2, alpha, beta, sym("y1"), "y1")
        rep = darboux_verify(omega, point={"x1": 0, "y1": 0, "x2": 0, "y2": 0})
        assert rep.ok

    def test_detects_mismatch(self):
        p4 = Patch(("x1", "y1", "x2", "y2"), ((-1.0, 1.0),) * 4)
        model = _standard_model(p4, "y1")
        skew = BForm(p4, 2, model.alpha, model.beta.scale(2), model.f, "y1")
        rep = darboux_verify(skew)
        assert not rep.ok and rep.max_residual > 0.1


class TestPoincarePrimitive:
    def test_area_form(self):
        p = Patch(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
        rho = SmoothForm(p, 2, {("x", "y"): num(1)})
        mu = poincare_primitive(rho, center={"x": 0.0, "y": 0.0})
        want = SmoothForm(p, 1, {("x",): parse_expr("-y/2", p),
                                 ("y",): parse_expr("x/2", p)})
        assert form_equiv(mu, want, tol=1e-12)

    def test_zero(self):
        p = Patch(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
        mu = poincare_primitive(SmoothForm(p, 2, {}))
        assert mu.is_zero()

    def test_trig_coefficient(self):
        p = Patch(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
        rho = SmoothForm(p, 2, {("x", "y"): parse_expr("cos(x)", p)})
        mu = poincare_primitive(rho)
        assert form_equiv(d_smooth(mu), rho, tol=1e-8)

    def test_degree_one(self):
        p = Patch(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
        rho = SmoothForm(p, 1, {("x",): parse_expr("y", p),
                                ("y",): parse_expr("x", p)})  # d(xy)
        mu = poincare_primitive(rho, center={"x": 0.0, "y": 0.0})
        assert expr_equiv(mu.coefficient(), parse_expr("x*y", p), p, tol=1e-10)

    def test_not_closed_rejected(self):
        p = Patch(("x", "y", "z"), ((-1.0, 1.0),) * 3)
        rho = SmoothForm(p, 2, {("x", "y"): parse_expr("z", p)})
        with pytest.raises(GeometryError, match="closed"):
            poincare_primitive(rho)

    def test_off_center(self):
        p = Patch(("x", "y"), ((0.0, 2.0), (0.0, 2.0)))
        rho = SmoothForm(p, 2, {("x", "y"): parse_expr("x^2 + y", p)})
        mu = poincare_primitive(rho, center={"x": 1.0, "y": 1.0})
        assert form_equiv(d_smooth(mu), rho, tol=1e-8)


def relative_pair():
    p = Patch(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
    alpha = SmoothForm(p, 1, {("x",): num(1)})
    w0 = BForm(p, 2, alpha, SmoothForm(p, 2, {}), sym("y"), "y")
    w1 = BForm(p, 2, alpha, SmoothForm(p, 2, {("x", "y"): sym("y")}),
               sym("y"), "y")
    return w0, w1


class TestMoserRelative:
    def test_identical_forms(self):
        w0, _ = relative_pair()
        rep = moser_relative_verify(w0, w0, n_points=50)
        assert rep.max_residual < 1e-10
        assert rep.v_on_Z_max == 0.0

    def test_2d_perturbation(self):
        w0, w1 = relative_pair()
        rep = moser_relative_verify(w0, w1)
        assert rep.max_residual < 1e-5
        assert rep.v_on_Z_max < 1e-8
        assert rep.steps == 256
        assert rep.mu is not None and rep.primitive is not None
        # the primitive must vanish identically on Z
        for c in rep.primitive.comps.values():
            on_z = se.substitute(c, {"y": 0.0})
            assert expr_equiv(on_z, num(0), w0.patch, tol=1e-12)

    def test_convergence_order(self):
        # halving the step cuts the residual by >= 8x while the time
        # integration error dominates the finite-difference floor
        w0, w1 = relative_pair()
        coarse = moser_relative_verify(w0, w1, n_points=50,
                                       rk_step=Fraction(1, 8))
        fine = moser_relative_verify(w0, w1, n_points=50,
                                     rk_step=Fraction(1, 16))
        assert coarse.max_residual / fine.max_residual >= 8.0

    def test_4d_closed_perturbation(self):
        p4 = Patch(("x1", "y1", "x2", "y2"), ((-1.0, 1.0),) * 4)
        w0 = _standard_model(p4, "y1")
        pert = SmoothForm(p4, 2, {("x2", "y2"): sym("y1"),
                                  ("y1", "y2"): sym("x2")})  # d(x2 y1 dy2)
        w1 = BForm(p4, 2, w0.alpha, w0.beta + pert, w0.f, "y1")
        rep = moser_relative_verify(w0, w1, n_points=50)
        assert rep.max_residual < 1e-4
        assert rep.v_on_Z_max < 1e-8

    def test_nonclosed_difference_rejected(self):
        # y1 dx2^dy2 alone is not closed: no Moser path exists
        p4 = Patch(("x1", "y1", "x2", "y2"), ((-1.0, 1.0),) * 4)
        w0 = _standard_model(p4, "y1")
        pert = SmoothForm(p4, 2, {("x2", "y2"): sym("y1")})
        w1 = BForm(p4, 2, w0.alpha, w0.beta + pert, w0.f, "y1")
        with pytest.raises(GeometryError, match="closed"):
            moser_relative_verify(w0, w1, n_points=20)

    def test_differing_restrictions_rejected(self):
        p = Patch(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
        alpha0 = SmoothForm(p, 1, {("x",): num(1)})
        alpha1 = SmoothForm(p, 1, {("x",): parse_expr("1 + x", p)})
        w0 = BForm(p, 2, alpha0, SmoothForm(p, 2, {}), sym("y"), "y")
        w1 = BForm(p, 2, alpha1, SmoothForm(p, 2, {}), sym("y"), "y")
        with pytest.raises(GeometryError, match="restriction"):
            moser_relative_verify(w0, w1, n_points=20)


def global_family():
    p = Patch(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)), params=("t",))
    alpha = SmoothForm(p, 1, {("x",): num(1)})
    wt = BForm(p, 2, alpha,
               SmoothForm(p, 2, {("x", "y"): parse_expr("t*y", p)}),
               sym("y"), "y")
    mut = BForm(p, 1, SmoothForm(p, 0, {}),
                SmoothForm(p, 1, {("y",): parse_expr("x*y", p)}),
                sym("y"), "y")
    return p, wt, mut


class TestMoserGlobal:
    def test_family(self):
        _, wt, mut = global_family()
        rep = moser_global_verify(wt, mut)
        assert rep.max_residual < 1e-5
        assert rep.v_on_Z_max < 1e-8

    def test_constant_family(self):
        p, _, _ = global_family()
        alpha = SmoothForm(p, 1, {("x",): num(1)})
        w = BForm(p, 2, alpha, SmoothForm(p, 2, {}), sym("y"), "y")
        mu = BForm(p, 1, SmoothForm(p, 0, {}), SmoothForm(p, 1, {}),
                   sym("y"), "y")
        rep = moser_global_verify(w, mu, n_points=50)
        assert rep.max_residual < 1e-10

    def test_wrong_primitive_rejected(self):
        p, wt, _ = global_family()
        bad = BForm(p, 1, SmoothForm(p, 0, {}),
                    SmoothForm(p, 1, {("y",): sym("x")}), sym("y"), "y")
        with pytest.raises(GeometryError, match="d\\(mu_t\\)"):
            moser_global_verify(wt, bad, n_points=20)

    def test_needs_declared_parameter(self):
        p = Patch(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
        alpha = SmoothForm(p, 1, {("x",): num(1)})
        w = BForm(p, 2, alpha, SmoothForm(p, 2, {}), sym("y"), "y")
        mu = BForm(p, 1, SmoothForm(p, 0, {}), SmoothForm(p, 1, {}),
                   sym("y"), "y")
        with pytest.raises(ValueError, match="parameter"):
            moser_global_verify(w, mu)
