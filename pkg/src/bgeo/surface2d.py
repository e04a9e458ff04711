"""Two-dimensional Poisson structures with transversal zero curves on
standard compact surfaces: zero-set extraction, modular vector fields,
modular periods, regularized volume, and the invariant classifier.

Conventions (recorded in reports): the modular field of Pi = P d1^d2 with
volume V dx1^dx2 is X = (d2(PV)/V) d1 - (d1(PV)/V) d2, which satisfies
alpha~(X|_Z) = 1 against the intrinsic restriction of the dual singular
form; the regularized volume integrates (1/P) dx2^dx1, i.e. the sign is
chosen so the asymmetric sphere model comes out positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from . import symexpr as se
from .evalcore import compile_tape, evaluate_tape
from .forms import GeometryError
from .symexpr import (
    Patch,
    diff_expr,
    eval_expr,
    expr_equiv,
    is_zero,
    mul,
    normalize,
    parse_expr,
    substitute,
)

__all__ = [
    "SurfaceStructure", "ZeroCurve", "RadkoInvariants",
    "sphere_patch", "torus_patch", "make_surface",
    "extract_zero_set", "modular_field", "modular_period",
    "regularized_volume", "radko_invariants", "classify_pair",
    "surface_poisson_cohomology",
]

DELTA_POLE = 1e-3
TAU_CURVE = 1e-10


def sphere_patch():
    """Cylindrical chart (h, theta) away from the poles."""
    return Patch(("h", "theta"), ((-1.0, 1.0), (0.0, 2 * math.pi)),
                 periods=(None, 2 * math.pi))


def torus_patch():
    return Patch(("t1", "t2"), ((0.0, 2 * math.pi), (0.0, 2 * math.pi)),
                 periods=(2 * math.pi, 2 * math.pi))


@dataclass(frozen=True)
class SurfaceStructure:
    """Pi = P d/dx1 ^ d/dx2 on a 2-D chart with volume V dx1 ^ dx2."""
    topology: str           # "sphere" | "torus"
    patch: Patch
    P: object               # ScalarExpr
    V: object = None        # ScalarExpr, defaults to 1
    orientation: int = 1

    def __post_init__(self):
        if self.patch.dim != 2:
            raise ValueError("surface structures need a 2-D patch")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        object.__setattr__(self, "P", se._coerce(self.P))
        object.__setattr__(self, "V", se._coerce(self.V if self.V is not None
                                                  else 1))


def make_surface(topology, P_text, V_text="1", orientation=1):
    patch = sphere_patch() if topology == "sphere" else torus_patch()
    if topology not in ("sphere", "torus"):
        raise ValueError(f"unsupported topology '{topology}'")
    return SurfaceStructure(topology, patch,
                            parse_expr(P_text, patch),
                            parse_expr(V_text, patch), orientation)


@dataclass
class ZeroCurve:
    points: np.ndarray      # shape (m, 2), refined onto {P = 0}
    closed: bool
    length: float


@dataclass(frozen=True)
class RadkoInvariants:
    n: int
    periods: tuple
    volume: float
    diagnostics: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# zero-set extraction (marching squares + refinement)


def _grid_axes(patch, n):
    axes = []
    for (a, b), per in zip(patch.intervals, patch.periods):
        axes.append(np.linspace(a, b, n, endpoint=per is None))
    return axes


def _eval_grid(expr, patch, ax1, ax2):
    X1, X2 = np.meshgrid(ax1, ax2, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=-1)
    tape = compile_tape(expr, patch.names)
    return evaluate_tape(tape, pts).reshape(len(ax1), len(ax2))


def extract_zero_set(S, grid=64):
    """Extract the zero curves of P by marching squares with periodic
    stitching, then refine every vertex onto {P = 0} by 1-D root solving."""
    patch = S.patch
    ax1, ax2 = _grid_axes(patch, grid)
    vals = _eval_grid(S.P, patch, ax1, ax2)
    per1 = patch.periods[0] is not None
    per2 = patch.periods[1] is not None
    n1 = len(ax1) if per1 else len(ax1) - 1
    n2 = len(ax2) if per2 else len(ax2) - 1
    (lo1, hi1), (lo2, hi2) = patch.intervals
    w1, w2 = hi1 - lo1, hi2 - lo2
    step1 = ax1[1] - ax1[0]
    step2 = ax2[1] - ax2[0]

    def node(i, j):
        return vals[i % len(ax1), j % len(ax2)]

    def coord(i, j):
        return lo1 + i * step1, lo2 + j * step2

    def interp(p, q, vp, vq):
        t = vp / (vp - vq)
        return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))

    # each segment endpoint is tagged by its grid edge so segments join
    # exactly; edges are ("h", i, j) between (i,j)-(i+1,j) and ("v", i, j)
    # between (i,j)-(i,j+1)
    segs = []
    for i in range(n1):
        for j in range(n2):
            c = [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)]
            if any(v == 0.0 for v in c):
                # nudge exact zeros to keep the case analysis binary
                c = [v if v != 0.0 else 1e-300 for v in c]
            code = sum((1 << k) for k, v in enumerate(c) if v < 0)
            if code in (0, 15):
                continue
            p = [coord(i, j), coord(i + 1, j), coord(i + 1, j + 1), coord(i, j + 1)]

            def edge(which):
                # only called for edges the case table says are crossed
                if which == "b":
                    return (("h", i, j), interp(p[0], p[1], c[0], c[1]))
                if which == "r":
                    return (("v", i + 1, j), interp(p[1], p[2], c[1], c[2]))
                if which == "t":
                    return (("h", i, j + 1), interp(p[3], p[2], c[3], c[2]))
                return (("v", i, j), interp(p[0], p[3], c[0], c[3]))
            table = {
                1: [("b", "l")], 2: [("b", "r")], 3: [("l", "r")],
                4: [("r", "t")], 5: [("b", "r"), ("t", "l")],
                6: [("b", "t")], 7: [("l", "t")],
                8: [("t", "l")], 9: [("b", "t")],
                10: [("b", "l"), ("r", "t")], 11: [("r", "t")],
                12: [("l", "r")], 13: [("b", "r")], 14: [("b", "l")],
            }
            for e1, e2 in table[code]:
                segs.append((edge(e1), edge(e2)))

    def canon_edge(tag):
        kind, i, j = tag
        if per1:
            i %= n1
        if per2:
            j %= n2
        return (kind, i, j)

    # stitch segments into polylines via shared edges
    adj = {}
    for (t1, p1), (t2, p2) in segs:
        t1, t2 = canon_edge(t1), canon_edge(t2)
        adj.setdefault(t1, []).append((t2, p2))
        adj.setdefault(t2, []).append((t1, p1))
    point_of = {}
    for (t1, p1), (t2, p2) in segs:
        point_of[canon_edge(t1)] = p1
        point_of[canon_edge(t2)] = p2

    visited = set()
    curves = []
    for start in point_of:
        if start in visited or len(adj.get(start, ())) == 0:
            continue
        chain = [start]
        visited.add(start)
        closed = False
        while True:
            nbrs = [t for t, _ in adj[chain[-1]] if t not in visited]
            if not nbrs:
                last = [t for t, _ in adj[chain[-1]]]
                closed = chain[0] in last and len(chain) > 2
                break
            chain.append(nbrs[0])
            visited.add(nbrs[0])
        # walk the other direction when the start was mid-chain
        if not closed:
            head = [t for t, _ in adj[chain[0]] if t not in visited]
            while head:
                chain.insert(0, head[0])
                visited.add(head[0])
                head = [t for t, _ in adj[chain[0]] if t not in visited]
        pts = np.array([point_of[t] for t in chain])
        pts = _refine_curve(S, pts)
        _check_pole_margin(S, pts)
        curves.append(_finish_curve(S, pts, closed))
    curves.sort(key=lambda c: (c.points[:, 0].mean(), c.points[:, 1].mean()))
    return curves


def _check_pole_margin(S, pts):
    if S.topology != "sphere":
        return
    if np.any(np.abs(pts[:, 0]) > 1.0 - DELTA_POLE):
        raise GeometryError(
            "zero curve approaches the chart poles (|h| > 1 - 1e-3); "
            "this chart cannot certify the structure")


def _refine_curve(S, pts):
    """Newton/bisection refinement of each vertex onto {P = 0} along the
    axis of strongest variation."""
    patch = S.patch
    P = S.P
    dP1 = diff_expr(P, patch.names[0])
    dP2 = diff_expr(P, patch.names[1])
    out = np.array(pts, dtype=float)
    for k in range(len(out)):
        x1, x2 = out[k]
        env = {patch.names[0]: x1, patch.names[1]: x2}
        g1, g2 = eval_expr(dP1, env), eval_expr(dP2, env)
        axis = 0 if abs(g1) >= abs(g2) else 1
        name = patch.names[axis]

        def f1d(v):
            e = dict(env)
            e[name] = v
            return eval_expr(P, e)

        v0 = out[k][axis]
        h = 1e-2
        try:
            a, b = v0 - h, v0 + h
            fa, fb = f1d(a), f1d(b)
            while fa * fb > 0 and h < 0.3:
                h *= 2
                a, b = v0 - h, v0 + h
                fa, fb = f1d(a), f1d(b)
            if fa * fb <= 0:
                out[k][axis] = brentq(f1d, a, b, xtol=TAU_CURVE)
        except (ValueError, se.EvalDomainError):
            pass
    return out


def _finish_curve(S, pts, closed):
    diffs = _wrapped_diffs(S.patch, pts, closed)
    length = float(np.sum(np.hypot(diffs[:, 0], diffs[:, 1])))
    return ZeroCurve(points=pts, closed=closed, length=length)


def _wrapped_diffs(patch, pts, closed):
    """Consecutive displacement vectors, respecting periodic wrap; includes
    the closing segment when closed."""
    nxt = np.roll(pts, -1, axis=0)
    d = nxt - pts
    for ax, per in enumerate(patch.periods):
        if per is not None:
            d[:, ax] = (d[:, ax] + per / 2) % per - per / 2
    return d if closed else d[:-1]


# ---------------------------------------------------------------------------
# modular field and periods


def modular_field(S):
    """X = (d2(PV)/V) d1 - (d1(PV)/V) d2; the divergence of the Hamiltonian
    field of g with respect to V dx1^dx2 evaluates X(g)."""
    n1, n2 = S.patch.names
    PV = mul(S.P, S.V)
    X1 = se.div(diff_expr(PV, n2), S.V)
    X2 = se.neg(se.div(diff_expr(PV, n1), S.V))
    return (normalize(X1), normalize(X2))


def modular_period(S, curve, _refinements=2):
    """Traversal time of the curve under the modular field, computed as the
    arclength integral of 1/|X| with Richardson extrapolation; positive by
    construction."""
    X1, X2 = modular_field(S)
    names = S.patch.names

    def speed(pt):
        env = {names[0]: pt[0], names[1]: pt[1]}
        vx, vy = eval_expr(X1, env), eval_expr(X2, env)
        s = math.hypot(vx, vy)
        if s < 1e-6:
            raise GeometryError("modular field vanishes on the zero curve")
        return s

    def total(pts):
        d = _wrapped_diffs(S.patch, pts, curve.closed)
        ds = np.hypot(d[:, 0], d[:, 1])
        t = 0.0
        m = len(pts)
        for i in range(len(ds)):
            p, q = pts[i], pts[(i + 1) % m]
            t += ds[i] * 0.5 * (1.0 / speed(p) + 1.0 / speed(q))
        return t

    pts = curve.points
    estimates = [total(pts)]
    for _ in range(_refinements):
        pts = _subdivide(S, pts, curve.closed)
        estimates.append(total(pts))
    # trapezoid is O(h^2): one Richardson sweep per refinement
    order = 2.0
    while len(estimates) > 1:
        k = 2.0 ** order
        estimates = [(k * b - a) / (k - 1.0)
                     for a, b in zip(estimates, estimates[1:])]
        order += 2.0
    return abs(estimates[0])


def _subdivide(S, pts, closed):
    d = _wrapped_diffs(S.patch, pts, closed)
    mids = pts[: len(d)] + d / 2
    out = np.empty((len(pts) + len(mids), 2))
    out[0::2][: len(pts)] = pts
    out[1::2][: len(mids)] = mids
    out = _refine_curve(S, out)
    return out


# ---------------------------------------------------------------------------
# regularized volume


def regularized_volume(S, grid=64, eps0=1e-2, halvings=8, tau_log=1e-4,
                       cutoff_factor=None, return_series=False):
    """Principal-value volume of the dual singular area form.

    V(eps) integrates orientation * (1/P) over {|P| > eps} (sign fixed so
    the asymmetric sphere model is positive); the sequence eps0, eps0/2, ...
    is fitted against c*log(eps) + V0 and V0 returned when |c| < tau_log."""
    patch = S.patch
    names = patch.names
    (lo1, hi1), (lo2, hi2) = patch.intervals
    per2 = patch.periods[1]
    # nodes along axis 2; periodic axes use the uniform (spectrally
    # accurate) rule, bounded axes use Gauss-Legendre
    if per2 is not None:
        x2s = np.linspace(lo2, hi2, grid, endpoint=False)
        w2s = np.full(grid, (hi2 - lo2) / grid)
    else:
        x2s, w2s = np.polynomial.legendre.leggauss(grid)
        x2s = 0.5 * (x2s + 1) * (hi2 - lo2) + lo2
        w2s = 0.5 * (hi2 - lo2) * w2s

    cut = cutoff_factor if cutoff_factor is not None else se.ONE

    def line_roots(Pval):
        """Roots of P along one line of the chart."""
        zs = np.linspace(lo1, hi1, 257)
        ps = np.array([Pval(z) for z in zs])
        roots = []
        for i in range(len(zs) - 1):
            if ps[i] == 0.0:
                roots.append(zs[i])
            elif ps[i] * ps[i + 1] < 0:
                roots.append(brentq(Pval, zs[i], zs[i + 1], xtol=1e-15))
        if ps[-1] == 0.0:
            roots.append(zs[-1])
        return roots

    def line_integral(x2, eps, roots):
        """integral over axis 1 of 1/P restricted to {|P*cut| > eps}."""
        def Pval(x1):
            return eval_expr(S.P, {names[0]: x1, names[1]: x2})

        def gate(x1):
            c = eval_expr(cut, {names[0]: x1, names[1]: x2})
            return abs(Pval(x1) * c) - eps

        # bracket the strip edges with samples concentrated near the roots;
        # the strips shrink with eps, so a uniform grid would miss them
        zs = list(np.linspace(lo1, hi1, 129))
        offsets = np.geomspace(1e-8, 0.5, 48)
        for r in roots:
            zs.extend(r + offsets)
            zs.extend(r - offsets)
        zs = np.unique(np.clip(np.array(zs), lo1, hi1))
        gs = np.array([gate(z) for z in zs])
        cuts = [lo1]
        for i in range(len(zs) - 1):
            if gs[i] == 0.0:
                cuts.append(zs[i])
            elif gs[i] * gs[i + 1] < 0 and zs[i + 1] > zs[i]:
                cuts.append(brentq(gate, zs[i], zs[i + 1], xtol=1e-15))
        cuts.append(hi1)
        total = 0.0
        for a, b in zip(cuts, cuts[1:]):
            m = 0.5 * (a + b)
            if b - a < 1e-13 or gate(m) <= 0:
                continue
            val, _ = quad(lambda x: 1.0 / Pval(x), a, b, limit=200)
            total += val
        return total

    eps_list = [eps0 / 2 ** k for k in range(halvings + 1)]
    root_cache = {}
    series = []
    for eps in eps_list:
        acc = []
        for x2, w in zip(x2s, w2s):
            if x2 not in root_cache:
                root_cache[x2] = line_roots(
                    lambda x1: eval_expr(S.P, {names[0]: x1, names[1]: x2}))
            acc.append(w * line_integral(x2, eps, root_cache[x2]))
        series.append(-S.orientation * math.fsum(acc))
    # fit V(eps) = c log(eps) + V0 + a*eps; the linear term soaks up the
    # strip-asymmetry correction so it does not contaminate c or V0
    L = np.log(eps_list)
    A = np.stack([L, np.ones_like(L), np.array(eps_list)], axis=1)
    (c, v0, _a), *_ = np.linalg.lstsq(A, np.array(series), rcond=None)
    if abs(c) >= tau_log:
        raise GeometryError(
            f"regularized volume does not converge: log coefficient "
            f"{c:.3e} >= {tau_log:g}")
    if return_series:
        return float(v0), float(c), list(zip(eps_list, series))
    return float(v0), float(c)


# ---------------------------------------------------------------------------
# invariants and classification


def radko_invariants(S, grid=64):
    curves = extract_zero_set(S, grid=grid)
    if not curves:
        raise GeometryError(
            "Poisson coefficient has no zeros: not a b-type structure "
            "on this surface")
    periods = sorted(modular_period(S, c) for c in curves)
    vol, logc = regularized_volume(S, grid=grid)
    return RadkoInvariants(
        n=len(curves), periods=tuple(periods), volume=vol,
        diagnostics={"log_coefficient": logc, "grid": grid,
                     "curve_lengths": [c.length for c in curves]})


def classify_pair(S1, S2, tol=1e-4, grid=64):
    """Compare invariant tuples; verdict is 'invariant-equivalent' or
    ('distinct', witness)."""
    if S1.topology != S2.topology:
        raise ValueError(
            f"topology mismatch: {S1.topology} vs {S2.topology}")
    r1 = radko_invariants(S1, grid=grid)
    r2 = radko_invariants(S2, grid=grid)
    if r1.n != r2.n:
        return ("distinct", f"curve count {r1.n} vs {r2.n}", r1, r2)
    for p1, p2 in zip(r1.periods, r2.periods):
        if abs(p1 - p2) > tol:
            return ("distinct", f"period {p1:.6g} vs {p2:.6g}", r1, r2)
    if abs(r1.volume - r2.volume) > tol:
        return ("distinct", f"volume {r1.volume:.6g} vs {r2.volume:.6g}",
                r1, r2)
    return ("invariant-equivalent", None, r1, r2)


def surface_poisson_cohomology(g, n):
    """Poisson cohomology dimensions of a genus-g surface whose structure
    vanishes on n transversal curves: (1, n+2g, n+1)."""
    if g < 0 or n < 1:
        raise ValueError("need genus >= 0 and at least one zero curve")
    return (1, n + 2 * g, n + 1)
