"""Semilocal extension of corank-one hypersurface data.

Given an odd-dimensional manifold Z with a closed nowhere-vanishing
one-form alpha and a closed two-form omega whose combination
alpha ^ omega^(n-1) is a volume form, the product Z x (-eps, eps) carries
the singular symplectic model

    omega~ = p*alpha ^ dt/t + p*omega

with Z recovered as the zero set {t = 0} and (alpha, omega) as the
restriction data.  This module certifies the hypotheses, builds the model,
and compares two extensions over the same hypersurface data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import symexpr as se
from .forms import (
    BForm,
    GeometryError,
    SmoothForm,
    _grid_min_abs,
    bwedge,
    d_bform,
    d_smooth,
    find_z_components,
    nondegeneracy_check,
    restrict_to_Z,
    top_coefficient,
    wedge,
)
from .symexpr import Patch, expr_equiv, is_zero, normalize, num, parse_expr, sym

ZERO = se.num(0)


@dataclass(frozen=True)
class HypersurfaceData:
    """Defining forms on an odd-dimensional hypersurface model."""
    patch: Patch
    alpha: SmoothForm
    omega: SmoothForm

    def __post_init__(self):
        if self.patch.dim % 2 == 0:
            raise ValueError("hypersurface patch must be odd-dimensional")
        if self.alpha.degree != 1 or self.omega.degree != 2:
            raise ValueError("expected a one-form and a two-form")
        if self.alpha.patch != self.patch or self.omega.patch != self.patch:
            raise ValueError("forms must live on the given patch")

    @property
    def n(self):
        return (self.patch.dim + 1) // 2


@dataclass(frozen=True)
class DefiningFormsReport:
    alpha_nonvanishing: bool
    alpha_closed: bool
    omega_closed: bool
    top_nonvanishing: bool
    detail: dict = field(default_factory=dict)

    @property
    def all_pass(self):
        return (self.alpha_nonvanishing and self.alpha_closed
                and self.omega_closed and self.top_nonvanishing)


def _form_is_closed(form):
    d = d_smooth(form)
    return all(expr_equiv(c, ZERO, form.patch) for c in d.comps.values())


def leaf_volume_form(data: HypersurfaceData) -> SmoothForm:
    """alpha ^ omega^(n-1), a top-degree form on the hypersurface."""
    power = data.alpha
    for _ in range(data.n - 1):
        power = wedge(power, data.omega)
    return power


def check_defining_forms(data: HypersurfaceData, grid=32) -> DefiningFormsReport:
    """Verdicts for the four hypotheses of the extension construction."""
    patch = data.patch
    params = {p: 1.0 for p in patch.params}
    norm2 = se.add(*[se.mul(c, c) for c in data.alpha.comps.values()]) \
        if data.alpha.comps else ZERO
    detail = {}
    if isinstance(normalize(norm2), se.Num):
        alpha_nv = float(normalize(norm2).value) > 0
        detail["alpha_min_norm2"] = float(normalize(norm2).value)
    else:
        vmin, _ = _grid_min_abs(norm2, patch, grid, params=params)
        alpha_nv = vmin > 1e-12
        detail["alpha_min_norm2"] = vmin
    top = leaf_volume_form(data)
    c = normalize(top.coefficient(*patch.names)) if top.comps else ZERO
    detail["top_coefficient"] = se.to_string(c)
    if isinstance(c, se.Num):
        top_nv = c.value != 0
    else:
        vmin, _ = _grid_min_abs(c, patch, grid, params=params)
        top_nv = vmin > 1e-12
        detail["top_min_abs"] = vmin
    return DefiningFormsReport(
        alpha_nonvanishing=alpha_nv,
        alpha_closed=_form_is_closed(data.alpha),
        omega_closed=_form_is_closed(data.omega),
        top_nonvanishing=top_nv,
        detail=detail)


@dataclass(frozen=True)
class ExtensionModel:
    patch: Patch
    bform: BForm
    data: HypersurfaceData
    provenance: dict = field(default_factory=dict)


def _lift_form(form, product):
    """Pull a form on Z back along the projection (same components; the new
    coordinate is appended last, so indices are unchanged)."""
    return SmoothForm(product, form.degree, dict(form.comps))


def build_extension(data: HypersurfaceData, eps=1.0, tname="t",
                    interval=None, period=None, f=None,
                    grid=24) -> ExtensionModel:
    """Singular symplectic model on the product of Z with a transverse
    interval.  By default the defining function is the new coordinate
    itself on (-eps, eps); a custom periodic coordinate and defining
    function (e.g. the sine of an angle) yield global variants with
    several hypersurface components.
    """
    report = check_defining_forms(data)
    if not report.all_pass:
        raise GeometryError("defining-form hypotheses fail: %r" % (report,))
    patch = data.patch
    if tname in patch.names:
        raise ValueError("coordinate name %r already in use" % tname)
    if interval is None:
        interval = (-float(eps), float(eps))
    product = patch.with_coordinate(tname, interval, period)
    f_expr = se.sym(tname) if f is None else se._coerce(f)
    omega_t = BForm(product, 2, _lift_form(data.alpha, product),
                    _lift_form(data.omega, product), f_expr, tname)

    provenance = {"defining_forms": report}
    # closedness of the model
    d = d_bform(omega_t)
    closed = (all(expr_equiv(c, ZERO, product) for c in d.alpha.comps.values())
              and all(expr_equiv(c, ZERO, product)
                      for c in d.beta.comps.values()))
    if not closed:
        raise GeometryError("extension model is not closed")
    provenance["closed"] = True
    verdict, detail = nondegeneracy_check(omega_t, grid=grid)
    if verdict == "degenerate":
        raise GeometryError("extension model degenerates: %r" % (detail,))
    provenance["nondegeneracy"] = (verdict, detail)

    pairs = restrict_to_Z(omega_t)
    provenance["components"] = [p.component.value for p in pairs]
    if f is None:
        (pair,) = pairs
        ok = (_forms_match(pair.alpha_tilde, data.alpha)
              and _forms_match(pair.beta_tilde, data.omega))
        if not ok:
            raise GeometryError("restriction of the model does not return "
                                "the input data")
        provenance["restriction_returns_data"] = True
    return ExtensionModel(patch=product, bform=omega_t, data=data,
                          provenance=provenance)


def _forms_match(a, b):
    keys = set(a.comps) | set(b.comps)
    patch = a.patch
    for k in keys:
        if not expr_equiv(a.comps.get(k, ZERO), b.comps.get(k, ZERO), patch):
            return False
    return True


@dataclass(frozen=True)
class ComparisonVerdict:
    same_restriction: bool
    verdict: str
    moser_report: object = None
    detail: str = ""


def compare_extensions(m1: ExtensionModel, m2: ExtensionModel,
                       moser=False, n_points=100) -> ComparisonVerdict:
    """Compare two extensions of the same hypersurface data.

    Equality of the restriction pairs on every component is the computable
    half of the equivalence criterion; when the two models share a product
    patch the interpolation flow can additionally be verified.
    """
    if m1.data.patch != m2.data.patch:
        raise ValueError("extensions are over different hypersurface patches")
    pairs1 = restrict_to_Z(m1.bform)
    pairs2 = restrict_to_Z(m2.bform)
    if len(pairs1) != len(pairs2):
        return ComparisonVerdict(False, "distinct",
                                 detail="different component counts")
    for a, b in zip(pairs1, pairs2):
        if not (_forms_match(a.alpha_tilde, b.alpha_tilde)
                and _forms_match(a.beta_tilde, b.beta_tilde)):
            return ComparisonVerdict(False, "distinct",
                                     detail="restriction pairs differ")
    if not moser:
        return ComparisonVerdict(True, "same-restriction")
    if m1.bform.patch != m2.bform.patch:
        # rebuild both on the common collar so the flow is well-posed
        ti = m1.bform.patch.index(m1.bform.zname)
        lo1, hi1 = m1.bform.patch.intervals[ti]
        lo2, hi2 = m2.bform.patch.intervals[ti]
        lo, hi = max(lo1, lo2), min(hi1, hi2)
        if not lo < hi:
            return ComparisonVerdict(True, "same-restriction",
                                     detail="no common collar")
        m1 = build_extension(m1.data, interval=(lo, hi),
                             tname=m1.bform.zname)
        m2 = build_extension(m2.data, interval=(lo, hi),
                             tname=m2.bform.zname)
    from .normalform import moser_relative_verify
    rep = moser_relative_verify(m1.bform, m2.bform, n_points=n_points)
    ok = rep.max_residual < 1e-4
    return ComparisonVerdict(True, "equivalent" if ok else "inconclusive",
                             moser_report=rep)


# ---------------------------------------------------------------------------
# builtin hypersurface data


def torus3_data(a="a", b="b") -> HypersurfaceData:
    """Corank-one data on the 3-torus: the closed defining pair

        alpha = (a dθ1 + b dθ2 - dθ3) / (a^2 + b^2 + 1)
        omega = dθ1^dθ2 + b dθ1^dθ3 - a dθ2^dθ3

    satisfies alpha ^ omega = -dθ1^dθ2^dθ3 identically in the slopes."""
    two_pi = 2 * math.pi
    params = tuple(s for s in (a, b) if not _is_number(s))
    patch = Patch(("theta1", "theta2", "theta3"), ((0.0, two_pi),) * 3,
                  periods=(two_pi,) * 3, params=params)
    av = parse_expr(str(a), patch)
    bv = parse_expr(str(b), patch)
    den = se.add(se.mul(av, av), se.mul(bv, bv), num(1))
    alpha = SmoothForm(patch, 1, {
        ("theta1",): se.div(av, den),
        ("theta2",): se.div(bv, den),
        ("theta3",): se.div(num(-1), den),
    })
    omega = SmoothForm(patch, 2, {
        ("theta1", "theta2"): num(1),
        ("theta1", "theta3"): bv,
        ("theta2", "theta3"): se.neg(av),
    })
    return HypersurfaceData(patch, alpha, omega)


def _is_number(s):
    try:
        float(s)
        return True
    except (TypeError, ValueError):
        return False


def circle_data() -> HypersurfaceData:
    """The lowest-dimensional case: Z = S^1 with alpha = dθ, omega = 0."""
    two_pi = 2 * math.pi
    patch = Patch(("theta",), ((0.0, two_pi),), periods=(two_pi,))
    alpha = SmoothForm(patch, 1, {("theta",): num(1)})
    return HypersurfaceData(patch, alpha, SmoothForm(patch, 2, {}))


def torus4_extension(a="a", b="b") -> ExtensionModel:
    """Global variant on the 4-torus: the transverse coordinate is an angle
    and the defining function sin(θ4) cuts out two copies of T^3."""
    data = torus3_data(a, b)
    two_pi = 2 * math.pi
    return build_extension(data, tname="theta4", interval=(0.0, two_pi),
                           period=two_pi,
                           f=parse_expr("sin(theta4)",
                                        data.patch.with_coordinate(
                                            "theta4", (0.0, two_pi), two_pi)))
