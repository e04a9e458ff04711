"""Batch evaluation of expressions on point arrays.

Two interchangeable kernels interpret the same tape format: a Cython
extension and a numpy fallback.  The compiled one is picked automatically
when its module imported cleanly; set BGEO_PURE_PYTHON=1 to force the
fallback (useful for benchmarking and for debugging kernel disagreements).
"""

import os

from ._tape import Tape, compile_tape
from . import _pykernel

if os.environ.get("BGEO_PURE_PYTHON") == "1":
    _ckernel = None
else:
    try:
        from . import _ckernel
    except ImportError:
        _ckernel = None

if _ckernel is not None:
    _kernel = _ckernel
    KERNEL_NAME = "cython"
else:
    _kernel = _pykernel
    KERNEL_NAME = "python"

__all__ = ["Tape", "compile_tape", "evaluate_tape", "eval_on_points",
           "KERNEL_NAME"]


def evaluate_tape(tape, points):
    """Run a compiled tape on points of shape (n, nvars)."""
    return _kernel.evaluate(tape, points)


def eval_on_points(expr, var_names, points, params=None):
    """Compile and evaluate in one go.  Parameter values, if any, are
    appended as extra constant columns."""
    import numpy as np

    points = np.atleast_2d(np.asarray(points, dtype=float))
    names = tuple(var_names)
    if params:
        extra = sorted(params)
        names = names + tuple(extra)
        cols = np.full((points.shape[0], len(extra)),
                       [float(params[k]) for k in extra])
        points = np.hstack([points, cols])
    tape = compile_tape(expr, names)
    return evaluate_tape(tape, points)
