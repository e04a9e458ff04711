"""Command-line front end.

Every subcommand reads JSON documents (schema "bgeo/1"), prints a single
deterministic JSON report to stdout, and exits 0 on success, 1 when a
verification fails, 2 on usage errors.  Reports embed the tolerances,
grid sizes, and seed that produced them.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction

from . import serialize as ser
from .cohomology import BettiData, b_betti, nonvanishing_witness, poisson_betti
from .forms import GeometryError, nondegeneracy_check, transversality_check
from .surface2d import classify_pair, extract_zero_set, modular_period, \
    regularized_volume
from .symexpr import ExprError, to_string


def _fail(msg, code=1):
    print(ser.dumps_canonical({"schema": ser.SCHEMA, "error": str(msg)}))
    return code


def _emit(doc, path=None):
    doc["schema"] = ser.SCHEMA
    print(ser.dumps_canonical(doc))
    return 0


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


# --- subcommand handlers ----------------------------------------------------

def cmd_parse(args):
    doc = ser.load(args.input)
    ser.check_schema(doc)
    kind = doc.get("kind")
    if kind == "surface":
        S = ser.surface_from_dict(doc)
        out = ser.surface_to_dict(S)
    elif kind == "bform":
        out = ser.bform_to_dict(ser.bform_from_dict(doc))
    elif kind == "zdata":
        out = ser.zdata_to_dict(ser.zdata_from_dict(doc))
    else:
        raise ser.SchemaError("unknown document kind %r" % kind)
    return _emit({"kind": kind, "ok": True, "normalized": out})


def cmd_check(args):
    bform = ser.bform_from_dict(ser.load(args.input))
    comps = transversality_check(bform, grid=args.grid)
    verdict, detail = nondegeneracy_check(bform, grid=args.grid)
    doc = {
        "transversal": True,
        "components": [{"coordinate": c.zname, "value": c.value}
                       for c in comps],
        "nondegeneracy": verdict,
        "detail": {k: (float(v) if isinstance(v, (int, float)) else str(v))
                   for k, v in detail.items()},
        "config": {"grid": args.grid},
    }
    code = 0 if verdict != "degenerate" else 1
    _emit(doc)
    return code


def cmd_invariants(args):
    S = ser.surface_from_dict(ser.load(args.input))
    curves = extract_zero_set(S, grid=args.grid)
    if not curves:
        return _fail("defining function has no zeros: not a b-Poisson "
                     "structure on this surface")
    periods = sorted(modular_period(S, c) for c in curves)
    vol, logc, series = regularized_volume(S, grid=args.grid,
                                           tau_log=args.tol_log,
                                           return_series=True)
    if args.emit_plot:
        _write_csv(args.emit_plot, ("eps", "volume"), series)
    return _emit({
        "n": len(curves),
        "periods": [float(p) for p in periods],
        "volume": float(vol),
        "log_coefficient": float(logc),
        "config": {"grid": args.grid, "seed": args.seed,
                   "tol_log": args.tol_log},
    })


def cmd_classify(args):
    S1 = ser.surface_from_dict(ser.load(args.input))
    S2 = ser.surface_from_dict(ser.load(args.other))
    verdict, witness, r1, r2 = classify_pair(S1, S2, tol=args.tol,
                                             grid=args.grid)
    _emit({
        "verdict": verdict,
        "witness": witness,
        "invariants": [
            {"n": r.n, "periods": [float(p) for p in r.periods],
             "volume": float(r.volume)} for r in (r1, r2)],
        "config": {"grid": args.grid, "tol": args.tol, "seed": args.seed},
    })
    return 0 if verdict == "invariant-equivalent" else 1


def _parse_int_list(text):
    return [int(s) for s in text.split(",") if s != ""]


def cmd_cohomology(args):
    if args.surface:
        g, n = _parse_int_list(args.surface)
        data = BettiData(2, (1, 2 * g, 1), tuple((1, 1) for _ in range(n)))
    elif args.betti_m:
        bm = _parse_int_list(args.betti_m)
        comps = tuple(tuple(_parse_int_list(part))
                      for part in (args.betti_z or "").split(";") if part)
        data = BettiData(len(bm) - 1, tuple(bm), comps)
    else:
        raise ser.SchemaError("need --surface g,n or --betti-m/--betti-z")
    witness = nonvanishing_witness(data)
    return _emit({
        "b_betti": b_betti(data),
        "poisson_betti": poisson_betti(data),
        "consistent": witness.consistent,
        "reasons": list(witness.reasons),
    })


def cmd_darboux(args):
    from .normalform import darboux_verify
    bform = ser.bform_from_dict(ser.load(args.input))
    rep = darboux_verify(bform, grid=args.grid, seed=args.seed)
    doc = {
        "ok": rep.ok,
        "max_residual": float(rep.max_residual),
        "config": {"grid": args.grid, "seed": args.seed},
    }
    if rep.change is not None:
        doc["forward"] = [to_string(e) for e in rep.change.forward]
        doc["jacobian_det"] = to_string(rep.change.jacobian_det)
        doc["target_names"] = list(rep.change.target.names)
    _emit(doc)
    return 0 if rep.ok else 1


def cmd_moser(args):
    from .normalform import moser_relative_verify
    w0 = ser.bform_from_dict(ser.load(args.input))
    w1 = ser.bform_from_dict(ser.load(args.other))
    rep = moser_relative_verify(w0, w1, n_points=args.points,
                                rk_step=Fraction(1, args.steps))
    if args.emit_plot:
        rows = [tuple(p) + (r,)
                for p, r in zip(rep.sample_points, rep.residuals)]
        _write_csv(args.emit_plot, w0.patch.names + ("residual",), rows)
    ok = (rep.max_residual < args.tol_residual
          and rep.v_on_Z_max < args.tol_tangency)
    _emit({
        "ok": ok,
        "max_residual": float(rep.max_residual),
        "vfield_on_Z_max": float(rep.v_on_Z_max),
        "collar_halvings": rep.collar_halvings,
        "collar_radius": float(rep.collar_radius),
        "steps": rep.steps,
        "config": {"points": args.points, "steps": args.steps,
                   "seed": args.seed, "tol_residual": args.tol_residual,
                   "tol_tangency": args.tol_tangency},
    })
    return 0 if ok else 1


def cmd_extend(args):
    from .extension import build_extension, check_defining_forms
    data = ser.zdata_from_dict(ser.load(args.input))
    report = check_defining_forms(data)
    doc = {
        "defining_forms": {
            "alpha_nonvanishing": report.alpha_nonvanishing,
            "alpha_closed": report.alpha_closed,
            "omega_closed": report.omega_closed,
            "top_nonvanishing": report.top_nonvanishing,
        },
        "config": {"eps": args.eps, "grid": args.grid},
    }
    if not report.all_pass:
        doc["ok"] = False
        _emit(doc)
        return 1
    model = build_extension(data, eps=args.eps, grid=min(args.grid, 24))
    doc["ok"] = True
    doc["nondegeneracy"] = model.provenance["nondegeneracy"][0]
    doc["components"] = [float(v) for v in model.provenance["components"]]
    doc["model"] = ser.bform_to_dict(model.bform)
    _emit(doc)
    return 0


# --- argument parsing ---------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="bgeo",
        description="symbolic/numerical toolkit for singular (b-)symplectic "
                    "structures on coordinate patches")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--grid", type=int, default=64)
        sp.add_argument("--emit-plot", metavar="CSV", default=None)

    sp = sub.add_parser("parse", help="validate and normalize a document")
    sp.add_argument("input")
    common(sp)
    sp.set_defaults(fn=cmd_parse)

    sp = sub.add_parser("check", help="transversality and nondegeneracy of "
                                      "a b-form document")
    sp.add_argument("input")
    common(sp)
    sp.set_defaults(fn=cmd_check)

    sp = sub.add_parser("invariants", help="curve count, periods, and "
                                           "regularized volume of a surface")
    sp.add_argument("input")
    sp.add_argument("--tol-log", type=float, default=1e-4)
    common(sp)
    sp.set_defaults(fn=cmd_invariants)

    sp = sub.add_parser("classify", help="compare the invariants of two "
                                         "surface structures")
    sp.add_argument("input")
    sp.add_argument("other")
    sp.add_argument("--tol", type=float, default=1e-4)
    common(sp)
    sp.set_defaults(fn=cmd_classify)

    sp = sub.add_parser("cohomology", help="Betti arithmetic of the "
                                           "splitting")
    sp.add_argument("--surface", metavar="G,N", default=None)
    sp.add_argument("--betti-m", metavar="B0,B1,...", default=None)
    sp.add_argument("--betti-z", metavar="B0,...;B0,...", default=None)
    common(sp)
    sp.set_defaults(fn=cmd_cohomology)

    sp = sub.add_parser("darboux", help="flatten/verify a 2-D singular form")
    sp.add_argument("input")
    common(sp)
    sp.set_defaults(fn=cmd_darboux)

    sp = sub.add_parser("moser", help="flow verification for two forms with "
                                      "equal restriction data")
    sp.add_argument("input")
    sp.add_argument("other")
    sp.add_argument("--points", type=int, default=200)
    sp.add_argument("--steps", type=int, default=256)
    sp.add_argument("--tol-residual", type=float, default=1e-5)
    sp.add_argument("--tol-tangency", type=float, default=1e-8)
    common(sp)
    sp.set_defaults(fn=cmd_moser)

    sp = sub.add_parser("extend", help="build the product extension of "
                                       "hypersurface data")
    sp.add_argument("input")
    sp.add_argument("--eps", type=float, default=1.0)
    common(sp)
    sp.set_defaults(fn=cmd_extend)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(ser.dumps_canonical({"schema": ser.SCHEMA,
                                   "error": str(exc)}))
        return 2
    except (ser.SchemaError, GeometryError, ExprError, ValueError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
