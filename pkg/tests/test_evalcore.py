"""Tests for the tape compiler and both evaluation kernels."""

import numpy as np
import pytest

from bgeo import evalcore
from bgeo.evalcore import _pykernel, _tape, compile_tape, eval_on_points
from bgeo.symexpr import EvalDomainError, Patch, eval_expr, parse_expr

PATCH = Patch(("x", "y"), ((-2.0, 2.0), (-2.0, 2.0)), params=("a",))

EXPRESSIONS = [
    "x + y",
    "x*y - 3*x^2 + 1/2",
    "sin(x)*cos(y) + exp(-x^2)",
    "1/x + x^(-2)",
    "abs(x - y)^(1/2)",
    "a*x^3 - a^2*y",
    "log(abs(x) + 1)",
]

try:
    from bgeo.evalcore import _ckernel
except ImportError:
    _ckernel = None

KERNELS = [("python", _pykernel)] + ([("cython", _ckernel)] if _ckernel else [])


@pytest.mark.parametrize("text", EXPRESSIONS)
@pytest.mark.parametrize("kname,kernel", KERNELS, ids=[k for k, _ in KERNELS])
def test_kernel_matches_tree_eval(text, kname, kernel):
    e = parse_expr(text, PATCH)
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.2, 1.9, size=(200, 3))  # x, y, a columns
    tape = compile_tape(e, ("x", "y", "a"))
    got = kernel.evaluate(tape, pts)
    want = np.array([eval_expr(e, {"x": p[0], "y": p[1]}, {"a": p[2]})
                     for p in pts])
    np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-13)


def test_kernels_agree_on_random_batches():
    if _ckernel is None:
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(11)
    for text in EXPRESSIONS:
        e = parse_expr(text, PATCH)
        tape = compile_tape(e, ("x", "y", "a"))
        pts = rng.uniform(-2, 2, size=(500, 3))
        a = _pykernel.evaluate(tape, pts)
        b = _ckernel.evaluate(tape, pts)
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13, equal_nan=True)


@pytest.mark.parametrize("kname,kernel", KERNELS, ids=[k for k, _ in KERNELS])
def test_poles_are_nonfinite_not_exceptions(kname, kernel):
    tape = compile_tape(parse_expr("1/x", PATCH), ("x",))
    v = kernel.evaluate(tape, np.array([[0.0], [2.0]]))
    assert not np.isfinite(v[0])
    assert v[1] == 0.5
    tape = compile_tape(parse_expr("log(x)", PATCH), ("x",))
    v = kernel.evaluate(tape, np.array([[-1.0]]))
    assert np.isnan(v[0])
    # the tree evaluator raises instead
    with pytest.raises(EvalDomainError):
        eval_expr(parse_expr("1/x", PATCH), {"x": 0.0})


def test_missing_variable_reported_at_compile():
    with pytest.raises(KeyError, match="'y'"):
        compile_tape(parse_expr("x + y", PATCH), ("x",))


def test_eval_on_points_params():
    e = parse_expr("a*x", PATCH)
    v = eval_on_points(e, ("x", "y"), np.array([[2.0, 0.0]]), params={"a": 3.0})
    assert v[0] == 6.0


def test_stack_depth_accounting():
    # deeply nested expression exercises the stack bound
    text = "x"
    for _ in range(30):
        text = f"sin({text}) + x"
    e = parse_expr(text, PATCH)
    tape = compile_tape(e, ("x",))
    pts = np.linspace(-1, 1, 50).reshape(-1, 1)
    for _, kernel in KERNELS:
        got = kernel.evaluate(tape, pts)
        want = np.array([eval_expr(e, {"x": p}) for p in pts[:, 0]])
        np.testing.assert_allclose(got, want, rtol=1e-12)


def test_selected_kernel_exposed():
    assert evalcore.KERNEL_NAME in ("cython", "python")
