"""Differential forms, singular forms with first-order poles along a
hypersurface, and the associated exterior calculus.

A SmoothForm is a degree-k form with expression coefficients over a Patch.
A BForm represents alpha ^ (dz/f) + beta, where f is a defining function
of the hypersurface Z = {f = 0} and z is the distinguished coordinate.
Everything downstream (restriction to Z, smoothness tests, nondegeneracy,
duality with bivectors) is phrased in terms of that decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from . import symexpr as se
from ._poly import poly_add, poly_mul
from .evalcore import compile_tape, evaluate_tape
from .symexpr import (
    ONE,
    ZERO,
    EvalDomainError,
    Expr,
    Num,
    Patch,
    diff_expr,
    divide_exact,
    eval_expr,
    expr_equiv,
    is_zero,
    mul,
    normalize,
    substitute,
)

__all__ = [
    "SmoothForm", "BForm", "BBivector", "RestrictionPair", "ZComponent",
    "smooth_form", "wedge", "d_smooth", "d_bform", "bwedge",
    "interior_product", "pullback_to_level",
    "find_z_components", "restrict_to_Z", "is_smooth",
    "top_coefficient", "nondegeneracy_check", "transversality_check",
    "dualize", "bivector_to_bform", "form_equiv", "bform_equiv",
    "eval_form_comps", "GeometryError",
]


class GeometryError(Exception):
    """A structural requirement on the geometry does not hold."""


def _sort_indices(key):
    """Sort an index tuple, returning (sorted tuple, permutation sign).
    Repeated indices give sign 0."""
    key = tuple(key)
    if len(set(key)) != len(key):
        return key, 0
    perm = sorted(range(len(key)), key=lambda i: key[i])
    sign = 1
    seen = list(key)
    # count inversions
    for i in range(len(key)):
        for j in range(i + 1, len(key)):
            if key[i] > key[j]:
                sign = -sign
    return tuple(sorted(key)), sign


class SmoothForm:
    """Degree-k differential form with symbolic coefficients."""

    __slots__ = ("patch", "degree", "comps")

    def __init__(self, patch, degree, comps):
        clean = {}
        for key, coef in comps.items():
            key = tuple(patch.index(k) if isinstance(k, str) else int(k)
                        for k in key)
            if len(key) != degree:
                raise ValueError(f"key {key} has wrong length for degree {degree}")
            if any(not 0 <= i < patch.dim for i in key):
                raise ValueError(f"index out of range in {key}")
            skey, sign = _sort_indices(key)
            if sign == 0:
                continue
            coef = se._coerce(coef) if not isinstance(coef, Expr) else coef
            if sign < 0:
                coef = se.neg(coef)
            if skey in clean:
                clean[skey] = se.add(clean[skey], coef)
            else:
                clean[skey] = coef
        self.patch = patch
        self.degree = degree
        self.comps = {k: v for k, v in sorted(clean.items()) if not is_zero(v)}

    def __add__(self, other):
        if not isinstance(other, SmoothForm):
            return NotImplemented
        _check_compatible(self, other)
        out = dict(self.comps)
        for k, v in other.comps.items():
            out[k] = se.add(out.get(k, ZERO), v)
        return SmoothForm(self.patch, self.degree, out)

    def __sub__(self, other):
        return self + other.scale(-1)

    def __neg__(self):
        return self.scale(-1)

    def scale(self, c):
        """Multiply by a scalar expression or number."""
        return SmoothForm(self.patch, self.degree,
                          {k: mul(se._coerce(c), v) for k, v in self.comps.items()})

    def is_zero(self):
        return not self.comps

    def coefficient(self, *names):
        key, sign = _sort_indices(tuple(self.patch.index(n) if isinstance(n, str)
                                        else n for n in names))
        c = self.comps.get(key, ZERO)
        return c if sign >= 0 else se.neg(c)

    def map_coefficients(self, fn):
        return SmoothForm(self.patch, self.degree,
                          {k: fn(v) for k, v in self.comps.items()})

    def __repr__(self):
        if not self.comps:
            return "<SmoothForm 0>"
        names = self.patch.names
        bits = []
        for key, c in self.comps.items():
            basis = "^".join(f"d{names[i]}" for i in key) or "1"
            bits.append(f"({c}) {basis}".strip())
        return "<SmoothForm " + " + ".join(bits) + ">"


def smooth_form(patch, degree, comps=None):
    return SmoothForm(patch, degree, comps or {})


def _check_compatible(a, b):
    if a.patch is not b.patch and a.patch != b.patch:
        raise ValueError("forms live on different patches")
    if a.degree != b.degree:
        raise ValueError("degree mismatch")


def wedge(a, b):
    """Exterior product of smooth forms."""
    if a.patch != b.patch:
        raise ValueError("forms live on different patches")
    out = {}
    for k1, c1 in a.comps.items():
        for k2, c2 in b.comps.items():
            key, sign = _sort_indices(k1 + k2)
            if sign == 0:
                continue
            term = mul(Num(Fraction(sign)), c1, c2)
            out[key] = se.add(out.get(key, ZERO), term)
    return SmoothForm(a.patch, a.degree + b.degree, out)


def d_smooth(a):
    """Exterior derivative of a smooth form."""
    names = a.patch.names
    out = {}
    for key, c in a.comps.items():
        for i in range(a.patch.dim):
            if i in key:
                continue
            dc = diff_expr(c, names[i])
            if is_zero(dc):
                continue
            skey, sign = _sort_indices((i,) + key)
            term = mul(Num(Fraction(sign)), dc)
            out[skey] = se.add(out.get(skey, ZERO), term)
    return SmoothForm(a.patch, a.degree + 1, out)


def interior_product(vf, a):
    """Contraction with a vector field given as {name or index: expr}."""
    comps = {a.patch.index(k) if isinstance(k, str) else int(k): se._coerce(v)
             for k, v in vf.items()}
    out = {}
    for key, c in a.comps.items():
        for pos, idx in enumerate(key):
            coef = comps.get(idx)
            if coef is None or is_zero(coef):
                continue
            rest = key[:pos] + key[pos + 1:]
            sign = Fraction((-1) ** pos)
            term = mul(Num(sign), coef, c)
            out[rest] = se.add(out.get(rest, ZERO), term)
    return SmoothForm(a.patch, a.degree - 1, out)


def pullback_to_level(a, zname, value):
    """Pull a smooth form back to the level set {zname = value}: substitute
    the value and drop components containing d(zname).  The result lives on
    the patch with that coordinate removed."""
    patch = a.patch
    zi = patch.index(zname)
    sub_patch = patch.without(zname)
    out = {}
    for key, c in a.comps.items():
        if zi in key:
            continue
        newkey = tuple(i - 1 if i > zi else i for i in key)
        out[newkey] = substitute(c, {zname: value})
    return SmoothForm(sub_patch, a.degree, out)


def form_equiv(a, b, n_points=64, tol=1e-9, seed=0, params=None):
    """Componentwise semidecidable equality of smooth forms."""
    _check_compatible(a, b)
    keys = set(a.comps) | set(b.comps)
    for k in keys:
        if not expr_equiv(a.comps.get(k, ZERO), b.comps.get(k, ZERO),
                          a.patch, n_points=n_points, tol=tol, seed=seed,
                          params=params):
            return False
    return True


# ---------------------------------------------------------------------------
# b-forms


class BForm:
    """alpha ^ (dz/f) + beta with smooth alpha, beta.

    f is the defining function of Z = {f = 0}; z is the distinguished
    coordinate.  Components of alpha containing dz are dropped (they wedge
    to zero against dz).
    """

    __slots__ = ("patch", "degree", "alpha", "beta", "f", "zname")

    def __init__(self, patch, degree, alpha, beta, f, zname):
        if zname not in patch.names:
            raise ValueError(f"unknown coordinate '{zname}'")
        f = se._coerce(f)
        if is_zero(f):
            raise ValueError("defining function is identically zero")
        zi = patch.index(zname)
        alpha = SmoothForm(patch, degree - 1,
                           {k: v for k, v in alpha.comps.items() if zi not in k})
        if alpha.degree != degree - 1 or beta.degree != degree:
            raise ValueError("alpha/beta degrees inconsistent")
        self.patch = patch
        self.degree = degree
        self.alpha = alpha
        self.beta = beta
        self.f = f
        self.zname = zname

    @property
    def zindex(self):
        return self.patch.index(self.zname)

    def __add__(self, other):
        self._check(other)
        return BForm(self.patch, self.degree, self.alpha + other.alpha,
                     self.beta + other.beta, self.f, self.zname)

    def __sub__(self, other):
        self._check(other)
        return BForm(self.patch, self.degree, self.alpha - other.alpha,
                     self.beta - other.beta, self.f, self.zname)

    def scale(self, c):
        return BForm(self.patch, self.degree, self.alpha.scale(c),
                     self.beta.scale(c), self.f, self.zname)

    def _check(self, other):
        if not isinstance(other, BForm):
            raise TypeError("expected a BForm")
        if (self.patch != other.patch or self.zname != other.zname
                or normalize(self.f) != normalize(other.f)):
            raise ValueError("b-forms use different hypersurface data")

    def f_depends_only_on_z(self):
        return all(is_zero(normalize(diff_expr(self.f, n)))
                   for n in self.patch.names if n != self.zname)

    def with_defining_function(self, h):
        """Re-express the same form with defining function f*h, where h is a
        nonvanishing smooth factor: alpha ^ dz/f = (h*alpha) ^ dz/(f*h)."""
        h = se._coerce(h)
        return BForm(self.patch, self.degree, self.alpha.scale(h),
                     self.beta, mul(self.f, h), self.zname)

    def b_coefficient(self, *names):
        """Coefficient relative to the b-coframe basis e^z = dz/f,
        e^i = dx_i, for a basis index set given by coordinate names."""
        idx = tuple(self.patch.index(n) if isinstance(n, str) else n
                    for n in names)
        zi = self.zindex
        if zi in idx:
            pos = idx.index(zi)
            rest = idx[:pos] + idx[pos + 1:]
            # alpha ^ e^z contributes alpha_rest * (-1)^(moves to slot)
            sign = Fraction((-1) ** (len(idx) - 1 - pos))
            a = mul(Num(sign), self.alpha.coefficient(*rest))
            b = mul(self.f, self.beta.coefficient(*idx))
            return se.add(a, b)
        return self.beta.coefficient(*idx)

    def __repr__(self):
        return (f"<BForm deg {self.degree} on Z={{ {self.f} = 0 }}: "
                f"alpha={self.alpha!r}, beta={self.beta!r}>")


def bwedge(a, b):
    """Exterior product of b-forms over the same hypersurface data."""
    a._check(b)
    alpha = wedge(a.beta, b.alpha) + wedge(a.alpha, b.beta).scale((-1) ** b.degree)
    beta = wedge(a.beta, b.beta)
    return BForm(a.patch, a.degree + b.degree, alpha, beta, a.f, a.zname)


def d_bform(a):
    """Exterior derivative: d(alpha ^ dz/f + beta) = d(alpha) ^ dz/f + d(beta),
    valid because f depends only on z, so d(dz/f) = 0."""
    if not a.f_depends_only_on_z():
        raise GeometryError(
            "exterior derivative needs a defining function of the "
            "distinguished coordinate alone; re-express the form first")
    return BForm(a.patch, a.degree + 1, d_smooth(a.alpha), d_smooth(a.beta),
                 a.f, a.zname)


# ---------------------------------------------------------------------------
# the hypersurface and restriction


@dataclass(frozen=True)
class ZComponent:
    """One connected level component {zname = value} of {f = 0}."""
    zname: str
    value: float
    fz: float  # df/dz there, for orientation/regularity diagnostics


@dataclass(frozen=True)
class RestrictionPair:
    """Restriction data (alpha_tilde, beta_tilde) of a b-form on one
    component of Z.  alpha_tilde is intrinsic; beta_tilde depends on the
    chosen defining function."""
    component: ZComponent
    alpha_tilde: SmoothForm
    beta_tilde: SmoothForm


def find_z_components(bform, n_samples=2048, tol=1e-12):
    """Locate the roots of f along the distinguished coordinate.  Requires
    the z-partial of f to be bounded away from zero at each root."""
    patch = bform.patch
    zname = bform.zname
    zi = patch.index(zname)
    a, b = patch.intervals[zi]
    period = patch.periods[zi]
    # probe f as a function of z with the other coordinates at midpoints;
    # validity of that probe is checked afterwards component by component
    mid = {n: 0.5 * (lo + hi) for n, (lo, hi) in zip(patch.names, patch.intervals)}
    mid.update({p: 1.0 for p in patch.params})

    def fz_only(z):
        env = dict(mid)
        env[zname] = z
        return eval_expr(bform.f, env)

    zs = np.linspace(a, b, n_samples, endpoint=period is None)
    vals = np.array([fz_only(z) for z in zs])
    roots = []
    for i in range(len(zs) - 1):
        v0, v1 = vals[i], vals[i + 1]
        if v0 == 0.0:
            roots.append(zs[i])
        elif v0 * v1 < 0:
            roots.append(brentq(fz_only, zs[i], zs[i + 1]))
    if period is None:
        if vals[-1] == 0.0:
            roots.append(zs[-1])
    else:
        if vals[-1] == 0.0:
            roots.append(zs[-1])
        elif vals[-1] * vals[0] < 0:
            roots.append(brentq(fz_only, zs[-1], b))
        # fold into the fundamental interval so duplicates collapse
        roots = [a + (r - a) % period for r in roots]
    # tangential zeros never change sign; catch them at local minima of |f|
    absvals = np.abs(vals)
    scale = max(float(absvals.max()), 1.0)
    for i in range(1, len(zs) - 1):
        if (absvals[i] <= absvals[i - 1] and absvals[i] <= absvals[i + 1]
                and absvals[i] < 1e-5 * scale
                and not any(abs(zs[i] - r) < 2 * (zs[1] - zs[0]) for r in roots)):
            raise GeometryError(
                f"degenerate zero of the defining function near "
                f"{zname}={zs[i]:.6g}")
    # snap near-rational roots so later exact substitutions (kappa form,
    # smooth quotients) see e.g. 0 rather than 5e-16
    def snap(r):
        q = Fraction(r).limit_denominator(10 ** 6)
        if abs(float(q) - r) < 1e-9 and abs(fz_only(float(q))) < 1e-9:
            return float(q)
        return r

    roots = [snap(r) for r in roots]
    # dedupe
    out = []
    dfdz = diff_expr(bform.f, zname)
    for r in roots:
        if any(abs(r - q.value) < 1e-8 for q in out):
            continue
        env = dict(mid)
        env[zname] = r
        fz = eval_expr(dfdz, env)
        if abs(fz) < 1e-8:
            raise GeometryError(
                f"degenerate zero of the defining function at {zname}={r:.6g}")
        out.append(ZComponent(zname, float(r), float(fz)))
    return sorted(out, key=lambda c: c.value)


def _kappa_form(bform, comp):
    """Correction 1-form on Z from non-z dependence of f (L'Hopital)."""
    patch = bform.patch
    zname = bform.zname
    dfdz = diff_expr(bform.f, zname)
    comps = {}
    for i, n in enumerate(patch.names):
        if n == zname:
            continue
        g = diff_expr(bform.f, n)
        if is_zero(normalize(g)):
            continue
        g_on_z = normalize(substitute(g, {zname: comp.value}))
        if not is_zero(g_on_z):
            # transversality violated: f = 0 is not the level {z = value}
            raise GeometryError(
                "defining function has non-removable dependence on "
                f"'{n}' along the component at {zname}={comp.value:.6g}")
        kappa_i = se.div(diff_expr(g, zname), dfdz)
        comps[(i,)] = substitute(kappa_i, {zname: comp.value})
    form = SmoothForm(patch, 1, comps)
    return pullback_to_level(form, zname, comp.value)


def restrict_to_Z(bform, components=None):
    """Restriction data of a b-form on each component of Z.

    With f a defining function, the form reads a ^ (df/f) + b near Z for
    smooth a, b; the pair returned is (i* a, i* b) expressed on the
    component.  In our parametrization a = alpha / (df/dz) and b picks up
    the correction -i*a ^ kappa when f depends on other coordinates."""
    if components is None:
        components = find_z_components(bform)
    zname = bform.zname
    dfdz = diff_expr(bform.f, zname)
    out = []
    for comp in components:
        sub = {zname: comp.value}
        fz_there = normalize(substitute(dfdz, sub))
        a_intrinsic = bform.alpha.map_coefficients(
            lambda c: se.div(substitute(c, sub), fz_there))
        alpha_t = pullback_to_level(a_intrinsic, zname, comp.value)
        beta_t = pullback_to_level(bform.beta, zname, comp.value)
        kappa = _kappa_form(bform, comp)
        if not kappa.is_zero():
            beta_t = beta_t - wedge(alpha_t, kappa)
        out.append(RestrictionPair(comp, alpha_t, beta_t))
    return out


def is_smooth(bform, components=None):
    """Decide whether a b-form is actually smooth across Z.

    Returns (verdict, smooth_equivalent).  verdict is True with the
    equivalent SmoothForm when alpha/f divides exactly; True with None when
    the restriction vanishes but no exact quotient was found (smooth, but
    only semidecided symbolically); False with None otherwise."""
    pairs = restrict_to_Z(bform, components)
    for pair in pairs:
        if not pair.alpha_tilde.is_zero():
            if not all(expr_equiv(c, ZERO, pair.alpha_tilde.patch)
                       for c in pair.alpha_tilde.comps.values()):
                return False, None
    # try the exact quotient alpha/f
    quotient = {}
    for key, c in bform.alpha.comps.items():
        q = divide_exact(c, bform.f)
        if q is None:
            return True, None
        quotient[key] = q
    zi = bform.zindex
    extra = {key + (zi,): q for key, q in quotient.items()}
    smooth = SmoothForm(bform.patch, bform.degree, extra) + bform.beta
    return True, smooth


def transversality_check(bform, grid=64):
    """Check that f vanishes transversally: simple roots in z, and no
    residual dependence on the other coordinates along each component."""
    comps = find_z_components(bform)
    if not comps:
        raise GeometryError("defining function has no zeros in the patch")
    for comp in comps:
        _kappa_form(bform, comp)  # raises when i* df/dx_i != 0
    return comps


# ---------------------------------------------------------------------------
# nondegeneracy and duality


def top_coefficient(bform):
    """For a degree-2 b-form on a 2n-dim patch, the coefficient c with
    f * omega^n = c * dx_1 ^ ... ^ dx_m.  Nondegeneracy as a b-form is
    c != 0 everywhere, including on Z."""
    m = bform.patch.dim
    if bform.degree != 2 or m % 2:
        raise ValueError("top coefficient needs a 2-form on an even-dim patch")
    n = m // 2
    power = bform
    for _ in range(n - 1):
        power = bwedge(power, bform)
    allkey = tuple(range(m))
    zi = bform.zindex
    rest = tuple(i for i in range(m) if i != zi)
    # f * omega^n = alpha_top ^ dz + f * beta_top
    sign = Fraction((-1) ** (m - 1 - zi))  # move dz into its slot
    a = mul(Num(sign), power.alpha.coefficient(*rest))
    b = mul(power.f, power.beta.coefficient(*allkey))
    return normalize(se.add(a, b))


def _grid_min_abs(expr, patch, grid, params=None, cap=2_000_000):
    names = patch.names
    n = grid
    while n ** patch.dim > cap and n > 4:
        n -= 1
    pts = patch.grid_points(n)
    e = expr
    if params:
        e = substitute(e, {k: float(v) for k, v in params.items()})
    tape = compile_tape(e, names)
    vmin = np.inf
    for lo in range(0, pts.shape[0], 262144):
        vals = evaluate_tape(tape, pts[lo:lo + 262144])
        ok = np.isfinite(vals)
        if ok.any():
            vmin = min(vmin, float(np.min(np.abs(vals[ok]))))
    return vmin, n


def nondegeneracy_check(bform, grid=64, params=None):
    """Return (verdict, detail) for nondegeneracy as a singular 2-form.

    verdict 'nonvanishing-symbolic' when the top coefficient normalizes to
    a nonzero constant; otherwise a numeric minimum of |c| over the grid
    decides, with 'degenerate' when a zero (or near-zero) is found."""
    c = top_coefficient(bform)
    if isinstance(c, Num):
        if c.value == 0:
            return "degenerate", {"top_coefficient": str(c), "min_abs": 0.0}
        return "nonvanishing-symbolic", {"top_coefficient": str(c),
                                         "min_abs": abs(float(c.value))}
    free = se.free_symbols(c)
    missing = free - set(bform.patch.names)
    if missing and not params:
        params = {p: 1.0 for p in missing}
    vmin, used = _grid_min_abs(c, bform.patch, grid, params=params)
    verdict = "nonvanishing-grid" if vmin > 1e-9 else "degenerate"
    return verdict, {"top_coefficient": str(c), "min_abs": vmin,
                     "grid_per_axis": used}


def b_matrix(bform):
    """Antisymmetric matrix of a degree-2 b-form in the b-coframe basis
    (e^z = dz/f in the z slot, e^i = dx_i elsewhere)."""
    m = bform.patch.dim
    W = [[ZERO] * m for _ in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            c = bform.b_coefficient(i, j)
            W[i][j] = c
            W[j][i] = se.neg(c)
    return W


class BBivector:
    """Bivector with components in the b-vector basis (e_z = f d/dz in the
    z slot, e_i = d/dx_i elsewhere)."""

    __slots__ = ("patch", "comps", "f", "zname")

    def __init__(self, patch, comps, f, zname):
        clean = {}
        for (i, j), c in comps.items():
            i = patch.index(i) if isinstance(i, str) else int(i)
            j = patch.index(j) if isinstance(j, str) else int(j)
            if i == j:
                continue
            if i > j:
                i, j, c = j, i, se.neg(se._coerce(c))
            c = se._coerce(c)
            clean[(i, j)] = se.add(clean.get((i, j), ZERO), c)
        self.patch = patch
        self.comps = {k: v for k, v in sorted(clean.items()) if not is_zero(v)}
        self.f = se._coerce(f)
        self.zname = zname

    def coordinate_components(self):
        """Components in the plain coordinate basis d/dx_i ^ d/dx_j: the
        z slot picks up a factor f."""
        zi = self.patch.index(self.zname)
        out = {}
        for (i, j), c in self.comps.items():
            if zi in (i, j):
                c = mul(self.f, c)
            out[(i, j)] = c
        return out

    def bracket_matrix(self):
        m = self.patch.dim
        P = [[ZERO] * m for _ in range(m)]
        for (i, j), c in self.comps.items():
            P[i][j] = c
            P[j][i] = se.neg(c)
        return P

    def __repr__(self):
        names = self.patch.names
        bits = []
        for (i, j), c in self.coordinate_components().items():
            bits.append(f"({c}) @{names[i]}^@{names[j]}")
        return "<BBivector " + (" + ".join(bits) or "0") + ">"


def _det_expr(M):
    n = len(M)
    if n == 1:
        return M[0][0]
    out = ZERO
    for j in range(n):
        if is_zero(M[0][j]):
            continue
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        term = mul(Num(Fraction((-1) ** j)), M[0][j], _det_expr(minor))
        out = se.add(out, term)
    return out


def _inverse_expr(M):
    """Adjugate inverse; fine for the small dimensions we work in.  Entries
    that are rational functions take a polynomial fast path (expression
    arithmetic on nested determinant denominators is too slow)."""
    fast = _inverse_ratfrac(M)
    if fast is not None:
        return fast
    n = len(M)
    det = normalize(_det_expr(M))
    if is_zero(det):
        raise GeometryError("matrix is singular: the form is degenerate")
    inv = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:i] + row[i + 1:] for k, row in enumerate(M) if k != j]
            cof = mul(Num(Fraction((-1) ** (i + j))), _det_expr(minor))
            inv[i][j] = se.div(cof, det)
    return inv


def _inverse_ratfrac(M):
    """Invert a matrix of rational-function entries working on (numerator,
    denominator) polynomial pairs over a shared atom set.  Returns None when
    some entry has no exact polynomial view."""
    n = len(M)
    per_entry = []
    atom_keys = {}
    atom_list = []
    for row in M:
        out_row = []
        for e in row:
            rp = se.expr_to_ratpoly(normalize(e))
            if rp is None:
                return None
            out_row.append(rp)
            for a in rp[2]:
                k = se.sort_key(a)
                if k not in atom_keys:
                    atom_keys[k] = len(atom_list)
                    atom_list.append(a)
        per_entry.append(out_row)
    nat = len(atom_list)

    def remap(poly, local_atoms):
        pos = [atom_keys[se.sort_key(a)] for a in local_atoms]
        out = {}
        for key, c in poly.items():
            gkey = [0] * nat
            for p, e in zip(pos, key):
                gkey[p] = e
            out[tuple(gkey)] = c
        return out

    one = {(0,) * nat: Fraction(1)}

    def cancel(fr):
        num, den = fr
        if not num:
            return {}, one
        dkeys = list(den)
        if len(dkeys) == 1 and dkeys[0] == (0,) * nat:
            c = den[dkeys[0]]
            return ({k: v / c for k, v in num.items()}, one)
        q = se.poly_div_exact(num, den)
        if q is not None:
            return q, one
        # num divides den too: num/(q*num) = 1/q
        q = se.poly_div_exact(den, num)
        if q is not None:
            return one, q
        return num, den

    def rmul(a, b):
        return cancel((poly_mul(a[0], b[0]), poly_mul(a[1], b[1])))

    def radd(a, b):
        num = poly_add(poly_mul(a[0], b[1]), poly_mul(b[0], a[1]))
        return cancel((num, poly_mul(a[1], b[1])))

    def rneg(a):
        return ({k: -v for k, v in a[0].items()}, a[1])

    F = [[cancel((remap(rp[0], rp[2]), remap(rp[1], rp[2])))
          for rp in row] for row in per_entry]

    def det(rows):
        m = len(rows)
        if m == 1:
            return rows[0][0]
        acc = ({}, one)
        for j in range(m):
            if not rows[0][j][0]:
                continue
            minor = [r[:j] + r[j + 1:] for r in rows[1:]]
            term = rmul(rows[0][j], det(minor))
            acc = radd(acc, term if j % 2 == 0 else rneg(term))
        return acc

    D = det(F)
    if not D[0]:
        raise GeometryError("matrix is singular: the form is degenerate")
    Dinv = (D[1], D[0])
    inv = []
    for i in range(n):
        inv_row = []
        for j in range(n):
            minor = [r[:i] + r[i + 1:] for k, r in enumerate(F) if k != j]
            cof = det(minor)
            if (i + j) % 2:
                cof = rneg(cof)
            num, den = rmul(cof, Dinv)
            e_num = se.poly_to_expr(num, tuple(atom_list))
            if len(den) == 1 and next(iter(den)) == (0,) * nat:
                c = den[next(iter(den))]
                entry = mul(Num(Fraction(1) / c), e_num) if c != 1 else e_num
            else:
                entry = se.div(e_num, se.poly_to_expr(den, tuple(atom_list)))
            inv_row.append(entry)
        inv.append(inv_row)
    return inv


def dualize(bform):
    """Bivector of a nondegenerate degree-2 b-form: P = -W^{-1} in the
    paired b-bases, so that the standard plane form dx^dy maps to the
    bracket {x, y} = 1."""
    W = b_matrix(bform)
    P = _inverse_expr(W)
    comps = {}
    for i in range(len(P)):
        for j in range(i + 1, len(P)):
            comps[(i, j)] = se.neg(P[i][j])
    return BBivector(bform.patch, comps, bform.f, bform.zname)


def bivector_to_bform(biv):
    """Inverse of dualize: W = -P^{-1}, written with everything that pairs
    against e^z stored in alpha."""
    P = biv.bracket_matrix()
    Winv = _inverse_expr(P)
    patch = biv.patch
    zi = patch.index(biv.zname)
    alpha_comps = {}
    beta_comps = {}
    for i in range(patch.dim):
        for j in range(i + 1, patch.dim):
            c = se.neg(Winv[i][j])
            if is_zero(normalize(c)):
                continue
            if j == zi:
                alpha_comps[(i,)] = se.add(alpha_comps.get((i,), ZERO), c)
            elif i == zi:
                alpha_comps[(j,)] = se.add(alpha_comps.get((j,), ZERO), se.neg(c))
            else:
                beta_comps[(i, j)] = c
    return BForm(patch, 2, SmoothForm(patch, 1, alpha_comps),
                 SmoothForm(patch, 2, beta_comps), biv.f, biv.zname)


def bform_equiv(a, b, n_points=64, tol=1e-9, seed=0, params=None):
    """Equality of degree-2 b-forms as b-coframe matrices (insensitive to
    how coefficients are split between alpha and f*beta)."""
    a._check(b)
    m = a.patch.dim
    for i in range(m):
        for j in range(i + 1, m):
            if not expr_equiv(a.b_coefficient(i, j), b.b_coefficient(i, j),
                              a.patch, n_points=n_points, tol=tol, seed=seed,
                              params=params):
                return False
    return True


def eval_form_comps(form, points, params=None):
    """Evaluate all components of a smooth form on a point batch; returns
    {key: array}."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = {}
    for key, c in form.comps.items():
        if params:
            c = substitute(c, {k: float(v) for k, v in params.items()})
        tape = compile_tape(c, form.patch.names)
        out[key] = evaluate_tape(tape, pts)
    return out
