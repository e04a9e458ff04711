"""Darboux coordinates in 2-D and numerical Moser-path verification.

darboux2d constructs the explicit coordinate change flattening a singular
2-form (g/z)dz^dy to the model (1/z)dz^dt.  The Moser verifiers build the
interpolation family omega_t between two forms, solve the defining linear
system for the time-dependent vector field in the singular frame, integrate
its time-1 flow with RK4, and measure the pullback residual with
finite-difference Jacobians at low-discrepancy sample points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import qmc

from . import symexpr as se
from .evalcore import evaluate_tape
from .evalcore._tape import compile_tape
from .forms import (
    BForm,
    GeometryError,
    SmoothForm,
    b_matrix,
    d_bform,
    d_smooth,
    find_z_components,
    form_equiv,
    interior_product,
    restrict_to_Z,
    top_coefficient,
)
from .symexpr import (
    EquivalenceInconclusive,
    Num,
    Patch,
    antiderivative,
    diff_expr,
    divide_exact,
    expr_equiv,
    is_zero,
    normalize,
    substitute,
)

ZERO = se.num(0)

RK_STEP = Fraction(1, 256)
FD_STEP = 1e-5
N_SAMPLE = 200
MAX_COLLAR_HALVINGS = 6


def _gauss01(n=32):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# Darboux in dimension 2


@dataclass(frozen=True)
class CoordinateChange:
    """A coordinate change with symbolic forward components."""
    source: Patch
    target: Patch
    forward: tuple
    jacobian_det: object


def _grid_extrema(expr, patch, grid=64):
    names = patch.names
    pts = patch.grid_points(grid, margin=1e-6)
    tape = compile_tape(expr, names)
    vals = evaluate_tape(tape, pts)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        raise GeometryError("expression has no finite values on the patch")
    return float(vals.min()), float(vals.max())


def darboux2d(omega: BForm, grid=64, tname="t") -> CoordinateChange:
    """Flatten omega = (g/z)dz^dy on a 2-D patch to the model (1/z)dz^dt.

    The new coordinates are (z, t) with t(z, y) the fiberwise integral of g
    from y = 0; the pullback of (1/z)dz^dt then reproduces omega because
    dt/dy = g.  Requires g nonvanishing and the y-interval to contain 0.
    """
    patch = omega.patch
    if patch.dim != 2 or omega.degree != 2:
        raise GeometryError("darboux2d needs a 2-form on a 2-D patch")
    zname = omega.zname
    yname = next(n for n in patch.names if n != zname)
    if not expr_equiv(omega.f, se.sym(zname), patch):
        raise GeometryError(
            "defining function must be the coordinate %r itself" % zname)
    g = normalize(omega.b_coefficient(zname, yname))
    lo, hi = patch.intervals[patch.index(yname)]
    if not lo <= 0.0 <= hi:
        raise GeometryError(
            "patch is not star-shaped about %s = 0" % yname)
    gmin, gmax = _grid_extrema(se.fun("abs", g), patch, grid + 1 - grid % 2)
    if gmin < max(1e-9, 1e-6 * gmax):
        raise GeometryError("form coefficient vanishes on the patch "
                            "(min |g| = %.3g)" % gmin)

    y = se.sym(yname)
    F = antiderivative(g, yname)
    if F is not None:
        t = se.sub(F, substitute(F, {yname: 0}))
    else:
        # t = y * int_0^1 g(z, u*y) du by Gauss quadrature, kept symbolic
        nodes, weights = _gauss01()
        terms = [se.mul(Num(float(w)), substitute(g, {yname: se.mul(Num(float(u)), y)}))
                 for u, w in zip(nodes, weights)]
        t = se.mul(y, se.add(*terms))
    t = normalize(t)

    # pullback identity: dt/dy must reproduce g
    ty = normalize(diff_expr(t, yname))
    try:
        ok = expr_equiv(ty, g, patch, tol=1e-9)
    except EquivalenceInconclusive:
        ok = False
    if not ok:
        raise GeometryError("pullback residual exceeds tolerance")

    tmin, tmax = _grid_extrema(t, patch, grid)
    pad = 1e-9 + 1e-9 * (tmax - tmin)
    zi = patch.index(zname)
    target = Patch((zname, tname), (patch.intervals[zi], (tmin - pad, tmax + pad)),
                   params=patch.params)
    return CoordinateChange(source=patch, target=target,
                            forward=(se.sym(zname), t), jacobian_det=ty)


@dataclass(frozen=True)
class DarbouxReport:
    ok: bool
    max_residual: float
    change: CoordinateChange = None
    detail: str = ""


def _standard_model(patch, zname, pairs=None):
    """Model form dx1^dz/z + sum dx_i^dy_i for paired coordinates."""
    names = patch.names
    if pairs is None:
        pairs = [(names[2 * i], names[2 * i + 1])
                 for i in range(len(names) // 2)]
    zpair = [p for p in pairs if zname in p]
    if len(zpair) != 1:
        raise GeometryError("exactly one coordinate pair must contain %r"
                            % zname)
    partner = zpair[0][0] if zpair[0][1] == zname else zpair[0][1]
    alpha = {(patch.index(partner),): se.num(1)}
    beta = {}
    for a, b in pairs:
        if zname in (a, b):
            continue
        beta[(patch.index(a), patch.index(b))] = se.num(1)
    return BForm(patch, 2, SmoothForm(patch, 1, alpha),
                 SmoothForm(patch, 2, beta), se.sym(zname), zname)


def darboux_verify(omega: BForm, point=None, pairs=None, grid=64,
                   n_points=N_SAMPLE, box=0.1, seed=0) -> DarbouxReport:
    """Residual of omega against its flat model near a point of Z.

    Dimension 2 is constructive (via darboux2d); higher dimensions compare
    coefficient matrices in the singular coframe against the standard model
    at sampled points.
    """
    patch = omega.patch
    rng = np.random.default_rng(seed)
    pts = _sample_box(patch, point, box, n_points, rng)
    if patch.dim == 2:
        change = darboux2d(omega, grid=grid)
        zname = omega.zname
        yname = next(n for n in patch.names if n != zname)
        g = omega.b_coefficient(zname, yname)
        resid = se.sub(diff_expr(change.forward[1], yname), g)
        vals = evaluate_tape(compile_tape(resid, patch.names), pts)
        r = float(np.max(np.abs(vals[np.isfinite(vals)])))
        return DarbouxReport(ok=r < 1e-9, max_residual=r, change=change)
    model = _standard_model(patch, omega.zname, pairs)
    W = b_matrix(omega)
    Wm = b_matrix(model)
    worst = 0.0
    m = patch.dim
    for i in range(m):
        for j in range(i + 1, m):
            diff = se.sub(W[i][j], Wm[i][j])
            if is_zero(normalize(diff)):
                continue
            vals = evaluate_tape(compile_tape(diff, patch.names), pts)
            vals = vals[np.isfinite(vals)]
            if vals.size:
                worst = max(worst, float(np.max(np.abs(vals))))
    return DarbouxReport(ok=worst < 1e-9, max_residual=worst,
                         detail="compared against the standard model")


def _sample_box(patch, point, box, n_points, rng):
    lo = np.array([iv[0] for iv in patch.intervals])
    hi = np.array([iv[1] for iv in patch.intervals])
    if point is not None:
        c = np.array([point[n] if isinstance(point, dict) else point[i]
                      for i, n in enumerate(patch.names)])
        half = box * (hi - lo) / 2
        lo = np.maximum(lo, c - half)
        hi = np.minimum(hi, c + half)
    u = rng.random((n_points, patch.dim))
    return lo + u * (hi - lo)


# ---------------------------------------------------------------------------
# Poincare primitives


def poincare_primitive(rho: SmoothForm, center=None, n_nodes=32) -> SmoothForm:
    """Primitive of a closed form via the radial homotopy about `center`.

    The ray integral int_0^1 t^(k-1) a(c + t(x-c)) dt is evaluated by
    Gauss-Legendre quadrature with the nodes substituted symbolically, so
    the result is an explicit form (exact for polynomial coefficients up to
    degree 2*n_nodes - 1).
    """
    patch = rho.patch
    k = rho.degree
    if k < 1:
        raise GeometryError("a 0-form has no primitive")
    drho = d_smooth(rho)
    for c in drho.comps.values():
        if not expr_equiv(c, ZERO, patch, tol=1e-10):
            raise GeometryError("form is not closed")
    if center is None:
        center = {n: 0.5 * (a + b)
                  for n, (a, b) in zip(patch.names, patch.intervals)}
    nodes, weights = _gauss01(n_nodes)
    names = patch.names
    disp = {n: se.sub(se.sym(n), Num(float(center[n]))) for n in names}
    out = {}
    for key, a in rho.comps.items():
        ray = []
        for u, w in zip(nodes, weights):
            scaled = {n: se.add(Num(float(center[n])),
                                se.mul(Num(float(u)), disp[n])) for n in names}
            ray.append(se.mul(Num(float(w * u ** (k - 1))),
                              substitute(a, scaled)))
        A = se.add(*ray)
        for pos, idx in enumerate(key):
            rest = key[:pos] + key[pos + 1:]
            term = se.mul(Num(Fraction((-1) ** pos)), disp[names[idx]], A)
            out[rest] = se.add(out.get(rest, ZERO), term)
    return SmoothForm(patch, k - 1, out)


def _collar_primitive(delta: SmoothForm, zname, c, n_nodes=32):
    """Primitive of a closed form along the retraction of a collar onto
    {z = c}; valid when the pullback of delta to the level set vanishes.

    Returns (rho, core) where rho = (z - c) * core componentwise, so rho
    vanishes identically on the level set and the (z - c) factor is
    available in closed form for smooth division by a defining function."""
    patch = delta.patch
    zi = patch.index(zname)
    for key, a in delta.comps.items():
        if zi not in key:
            lvl = normalize(substitute(a, {zname: c}))
            if not is_zero(lvl) and not expr_equiv(lvl, ZERO, patch):
                raise GeometryError(
                    "form does not pull back to zero on the level set")
    eta = interior_product({zname: se.num(1)}, delta)
    nodes, weights = _gauss01(n_nodes)
    zdisp = se.sub(se.sym(zname), Num(float(c)))
    out = {}
    core = {}
    for key, a in eta.comps.items():
        ray = [se.mul(Num(float(w)),
                      substitute(a, {zname: se.add(Num(float(c)),
                                                   se.mul(Num(float(u)), zdisp))}))
               for u, w in zip(nodes, weights)]
        core[key] = se.add(*ray)
        out[key] = se.mul(zdisp, core[key])
    return (SmoothForm(patch, delta.degree - 1, out),
            SmoothForm(patch, delta.degree - 1, core))


# ---------------------------------------------------------------------------
# Moser verification


@dataclass
class MoserReport:
    max_residual: float
    v_on_Z_max: float
    collar_halvings: int
    collar_radius: float
    steps: int
    mu: object = None
    primitive: object = None
    residuals: object = field(default=None, repr=False)
    sample_points: object = field(default=None, repr=False)


class _MoserEngine:
    """Shared flow/residual machinery for the two Moser verifiers.

    W(points, t) must return the stacked coefficient matrices of omega_t in
    the singular coframe; r(points, t) the right-hand side of the defining
    system in the same coframe.  Velocities come from -W u = r, converted
    back to coordinate components by scaling the z slot with f."""

    def __init__(self, patch, zname, f_expr, W_fn, r_fn):
        self.patch = patch
        self.zi = patch.index(zname)
        self.f_tape = compile_tape(f_expr, patch.names)
        self.W_fn = W_fn
        self.r_fn = r_fn

    def velocity(self, pts, t):
        W = self.W_fn(pts, t)
        r = self.r_fn(pts, t)
        u = np.linalg.solve(W, -r[..., None])[..., 0]
        fvals = evaluate_tape(self.f_tape, pts)
        v = u.copy()
        v[:, self.zi] = u[:, self.zi] * fvals
        return v

    def flow(self, pts, n_steps):
        p = pts.copy()
        h = 1.0 / n_steps
        for k in range(n_steps):
            t = k * h
            k1 = self.velocity(p, t)
            k2 = self.velocity(p + h / 2 * k1, t + h / 2)
            k3 = self.velocity(p + h / 2 * k2, t + h / 2)
            k4 = self.velocity(p + h * k3, t + h)
            p = p + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return p

    def pullback_residual(self, pts, n_steps, fd_step=FD_STEP):
        """max |D J^T Omega_1(flow(p)) J D - W_0(p)| per point, with D the
        diagonal singular-frame scaling at p and J the flow Jacobian from
        central finite differences."""
        n, m = pts.shape
        batch = [pts]
        for j in range(m):
            e = np.zeros(m)
            e[j] = fd_step
            batch += [pts + e, pts - e]
        flowed = self.flow(np.concatenate(batch, axis=0), n_steps)
        q = flowed[:n]
        J = np.empty((n, m, m))
        for j in range(m):
            plus = flowed[(1 + 2 * j) * n:(2 + 2 * j) * n]
            minus = flowed[(2 + 2 * j) * n:(3 + 2 * j) * n]
            J[:, :, j] = (plus - minus) / (2 * fd_step)
        W1q = self.W_fn(q, 1.0)
        fq = evaluate_tape(self.f_tape, q)
        zi = self.zi
        Omega1 = W1q.copy()
        Omega1[:, zi, :] /= fq[:, None]
        Omega1[:, :, zi] /= fq[:, None]
        Omega1[:, zi, zi] = 0.0
        fp = evaluate_tape(self.f_tape, pts)
        A = J.copy()
        A[:, :, zi] *= fp[:, None]
        R = np.einsum("nia,nij,njb->nab", A, Omega1, A) - self.W_fn(pts, 0.0)
        return np.max(np.abs(R), axis=(1, 2))


def _matrix_evaluator(patch, W, extra_cols=0):
    """Compile the strict upper triangle of an expression matrix; returns a
    function building the full antisymmetric matrix on a point batch."""
    m = patch.dim
    tapes = {}
    names = patch.names + patch.params
    for i in range(m):
        for j in range(i + 1, m):
            if not is_zero(W[i][j]):
                tapes[(i, j)] = compile_tape(W[i][j], names)

    def evaluate(pts):
        out = np.zeros((pts.shape[0], m, m))
        for (i, j), tape in tapes.items():
            v = evaluate_tape(tape, pts)
            out[:, i, j] = v
            out[:, j, i] = -v
        return out

    return evaluate


def _vector_evaluator(patch, comps):
    names = patch.names + patch.params
    tapes = {}
    for i, e in enumerate(comps):
        if not is_zero(e):
            tapes[i] = compile_tape(e, names)

    def evaluate(pts):
        out = np.zeros((pts.shape[0], patch.dim))
        for i, tape in tapes.items():
            out[:, i] = evaluate_tape(tape, pts)
        return out

    return evaluate


def _halton_collar(patch, zi, zlo, zhi, n, z_margin=0.05):
    """Low-discrepancy sample points with the singular coordinate confined
    to the collar (excluding a small margin around the level set)."""
    sampler = qmc.Halton(d=patch.dim, scramble=False)
    u = sampler.random(n + 1)[1:]  # drop the origin sample
    lo = np.array([iv[0] for iv in patch.intervals])
    hi = np.array([iv[1] for iv in patch.intervals])
    mid = 0.5 * (zlo + zhi)
    half = 0.5 * (zhi - zlo)
    lo[zi] = mid - (1 - z_margin) * half
    hi[zi] = mid + (1 - z_margin) * half
    pts = lo + 1e-3 + u * (hi - lo - 2e-3)
    # keep points away from the level set itself so 1/f stays finite
    zc = pts[:, zi]
    too_close = np.abs(zc - mid) < z_margin * half
    zc[too_close] = mid + np.sign(zc[too_close] - mid + 1e-12) * z_margin * half
    return pts


def _min_abs_on_collar(expr, patch, zi, zlo, zhi, grid=16):
    axes = []
    for i, (a, b) in enumerate(patch.intervals):
        if i == zi:
            a, b = zlo, zhi
        axes.append(np.linspace(a + 1e-9, b - 1e-9, grid))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    tape = compile_tape(expr, patch.names + patch.params)
    vals = evaluate_tape(tape, pts)
    vals = vals[np.isfinite(vals)]
    return float(np.min(np.abs(vals))) if vals.size else 0.0


def _shrink_collar(omega0, omega1, comp, grid=16):
    """Find a collar about the component on which every interpolated form
    stays nondegenerate; halve the radius up to the retry budget."""
    patch = omega0.patch
    zi = patch.index(omega0.zname)
    lo, hi = patch.intervals[zi]
    r = 0.5 * min(comp.value - lo, hi - comp.value)
    if r <= 0:
        raise GeometryError("component sits on the patch boundary")
    for halvings in range(MAX_COLLAR_HALVINGS + 1):
        ok = True
        for t in (0.0, 0.25, 0.5, 0.75, 1.0):
            omt = omega0.scale(1.0 - t) + omega1.scale(t) if t else omega0
            top = top_coefficient(omt)
            if _min_abs_on_collar(top, patch, zi, comp.value - r,
                                  comp.value + r, grid) < 1e-9:
                ok = False
                break
        if ok:
            return r, halvings
        r /= 2
    raise GeometryError("interpolated family stays degenerate on every "
                        "collar tried (%d halvings)" % MAX_COLLAR_HALVINGS)


def _restrictions_agree(omega0, omega1, components):
    p0 = restrict_to_Z(omega0, components)
    p1 = restrict_to_Z(omega1, components)
    for a, b in zip(p0, p1):
        for da in (a.alpha_tilde - b.alpha_tilde, a.beta_tilde - b.beta_tilde):
            for coef in da.comps.values():
                if not expr_equiv(coef, ZERO, da.patch):
                    return False
    return True


def moser_relative_verify(omega0: BForm, omega1: BForm, n_points=N_SAMPLE,
                          rk_step=RK_STEP, fd_step=FD_STEP,
                          seed=0) -> MoserReport:
    """Numerically verify the relative normal-form statement: two singular
    symplectic forms with equal restriction data are related, near the
    hypersurface, by the time-1 flow of the interpolation vector field.

    Builds a primitive of omega0 - omega1 vanishing on the hypersurface,
    solves the contraction equation for v_t in the singular coframe,
    integrates the flow, and reports the pullback residual.
    """
    omega0._check(omega1)
    patch = omega0.patch
    if patch.params:
        raise ValueError("substitute numeric values for %r before running "
                         "the flow verification" % (patch.params,))
    zname = omega0.zname
    components = find_z_components(omega0)
    if not _restrictions_agree(omega0, omega1, components):
        raise GeometryError("restrictions to the hypersurface differ; the "
                            "relative statement does not apply")
    delta = omega0 - omega1
    smooth_ok, delta_s = _smooth_difference(delta)
    if not smooth_ok:
        raise GeometryError("difference form is not smooth across the "
                            "hypersurface (inconsistent input)")
    for coef in d_smooth(delta_s).comps.values():
        if not expr_equiv(coef, ZERO, patch):
            raise GeometryError("difference of the two forms is not closed; "
                                "inputs are not both symplectic")

    n_steps = int(round(1 / float(rk_step)))
    zi = patch.index(zname)
    W0 = b_matrix(omega0)
    W1 = b_matrix(omega1)
    ev0 = _matrix_evaluator(patch, W0)
    ev1 = _matrix_evaluator(patch, W1)

    worst_resid = 0.0
    worst_vZ = 0.0
    halvings_used = 0
    radius_used = np.inf
    all_resid = []
    all_pts = []
    mu = None
    rho = None
    for comp in components:
        r, halvings = _shrink_collar(omega0, omega1, comp)
        halvings_used = max(halvings_used, halvings)
        radius_used = min(radius_used, r)
        cval = _snap_root(omega0.f, zname, comp.value)
        rho, core = _collar_primitive(delta_s, zname, cval)
        mu = _divide_by_f(core, omega0.f, zname, cval)

        # right-hand side in the singular coframe: rho_z picks up a factor f
        rhs = [rho.coefficient(i) for i in range(patch.dim)]
        rhs[zi] = se.mul(omega0.f, rhs[zi])
        ev_r = _vector_evaluator(patch, rhs)

        def W_fn(pts, t):
            if t == 0.0:
                return ev0(pts)
            if t == 1.0:
                return ev1(pts)
            return (1.0 - t) * ev0(pts) + t * ev1(pts)

        engine = _MoserEngine(patch, zname, omega0.f, W_fn,
                              lambda pts, t: ev_r(pts))
        pts = _halton_collar(patch, zi, comp.value - r, comp.value + r,
                             n_points)
        # tangency: velocity exactly on the level set
        on_Z = pts.copy()
        on_Z[:, zi] = comp.value
        for t in (0.0, 0.5, 1.0):
            worst_vZ = max(worst_vZ, float(np.max(np.abs(
                engine.velocity(on_Z, t)))))
        resid = engine.pullback_residual(pts, n_steps, fd_step)
        all_resid.append(resid)
        all_pts.append(pts)
        worst_resid = max(worst_resid, float(np.max(resid)))

    return MoserReport(max_residual=worst_resid, v_on_Z_max=worst_vZ,
                       collar_halvings=halvings_used,
                       collar_radius=float(radius_used), steps=n_steps,
                       mu=mu, primitive=rho,
                       residuals=np.concatenate(all_resid),
                       sample_points=np.concatenate(all_pts))


def _smooth_difference(delta: BForm):
    """Smooth-form equivalent of a b-form difference, when one exists."""
    if delta.alpha.is_zero():
        return True, delta.beta
    from .forms import is_smooth as _is_smooth
    verdict, smooth = _is_smooth(delta)
    if not verdict or smooth is None:
        return False, None
    return True, smooth


def _snap_root(f, zname, c):
    """Round a numerically found root to a nearby exact rational when the
    defining function divides exactly there; otherwise keep the float."""
    cand = Fraction(c).limit_denominator(10 ** 6)
    if abs(float(cand) - c) < 1e-9:
        if divide_exact(f, se.sub(se.sym(zname), Num(cand))) is not None:
            return float(cand)
    return c


def _divide_by_f(core: SmoothForm, f, zname, c):
    """mu = rho / f for rho = (z - c) * core: factor f = (z - c) * h with h
    nonvanishing near the component, so mu = core / h is smooth."""
    zdisp = se.sub(se.sym(zname), se._coerce(c))
    h = divide_exact(f, zdisp)
    if h is None:
        raise GeometryError("cannot factor the defining function at the "
                            "component; mu = rho/f not certified smooth")
    return SmoothForm(core.patch, core.degree,
                      {key: se.div(a, h) for key, a in core.comps.items()})


def moser_global_verify(omega_t: BForm, mu_t: BForm, tname="t",
                        n_points=N_SAMPLE, rk_step=RK_STEP,
                        fd_step=FD_STEP) -> MoserReport:
    """Verify the global statement for a symbolically given family.

    omega_t and mu_t are forms whose coefficients contain the declared
    parameter `tname`; mu_t must satisfy d(mu_t) = d/dt omega_t (checked
    symbolically).  The vector field solved from the contraction equation
    is automatically tangent to the hypersurface; its time-1 flow pulls the
    final form back to the initial one up to the reported residual.
    """
    patch = omega_t.patch
    if tname not in patch.params:
        raise ValueError("patch must declare %r as a parameter" % tname)
    zname = omega_t.zname
    zi = patch.index(zname)
    if tname in se.free_symbols(omega_t.f):
        raise GeometryError("defining function may not depend on time")

    dmu = d_bform(mu_t)
    dot = BForm(patch, omega_t.degree,
                omega_t.alpha.map_coefficients(lambda e: diff_expr(e, tname)),
                omega_t.beta.map_coefficients(lambda e: diff_expr(e, tname)),
                omega_t.f, omega_t.zname)
    for pair in ((dmu.alpha, dot.alpha), (dmu.beta, dot.beta)):
        diff = pair[0] - pair[1]
        for coef in diff.comps.values():
            if not expr_equiv(coef, ZERO, patch):
                raise GeometryError("d(mu_t) != d/dt omega_t; the family is "
                                    "not certified isotopic")

    components = find_z_components(omega_t)
    # nondegeneracy of the family across the time grid
    for tv in (0.0, 0.25, 0.5, 0.75, 1.0):
        top = top_coefficient(omega_t)
        top = substitute(top, {tname: tv})
        from .forms import _grid_min_abs
        vmin, _ = _grid_min_abs(top, patch, 32)
        if vmin < 1e-9:
            raise GeometryError("family degenerates at t = %g" % tv)

    W = b_matrix(omega_t)
    ev_W = _matrix_evaluator(patch, W)
    rhs = [mu_t.b_coefficient(i) for i in range(patch.dim)]
    ev_r = _vector_evaluator(patch, rhs)

    def with_t(pts, t):
        return np.concatenate([pts, np.full((pts.shape[0], 1), t)], axis=1)

    # with d(mu_t) = d/dt omega_t, the isotopy field solves the contraction
    # equation against -mu_t (so that L_v omega_t cancels the time derivative)
    engine = _MoserEngine(patch, zname, omega_t.f,
                          lambda pts, t: ev_W(with_t(pts, t)),
                          lambda pts, t: -ev_r(with_t(pts, t)))

    n_steps = int(round(1 / float(rk_step)))
    worst_resid = 0.0
    worst_dfvZ = 0.0
    all_resid = []
    all_pts = []
    df = [diff_expr(omega_t.f, n) for n in patch.names]
    ev_df = _vector_evaluator(patch, df)
    for comp in components:
        lo, hi = patch.intervals[zi]
        r = 0.5 * min(comp.value - lo, hi - comp.value)
        if patch.periods[zi] is not None and r <= 0:
            r = 0.25 * patch.periods[zi]
        pts = _halton_collar(patch, zi, comp.value - r, comp.value + r,
                             n_points)
        on_Z = pts.copy()
        on_Z[:, zi] = comp.value
        for t in (0.0, 0.5, 1.0):
            v = engine.velocity(on_Z, t)
            dfv = np.sum(ev_df(with_t(on_Z, t)) * v, axis=1)
            worst_dfvZ = max(worst_dfvZ, float(np.max(np.abs(dfv))))
        resid = engine.pullback_residual(pts, n_steps, fd_step)
        all_resid.append(resid)
        all_pts.append(pts)
        worst_resid = max(worst_resid, float(np.max(resid)))

    return MoserReport(max_residual=worst_resid, v_on_Z_max=worst_dfvZ,
                       collar_halvings=0, collar_radius=float("nan"),
                       steps=n_steps, mu=mu_t,
                       residuals=np.concatenate(all_resid),
                       sample_points=np.concatenate(all_pts))
