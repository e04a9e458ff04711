# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled interpreter for evaluation tapes.

Same instruction set as the numpy fallback, but loops over points in C
with a fixed-size stack, which wins once expressions get deep or batches
get large.
"""

import numpy as np

cimport cython
from libc.math cimport INFINITY, NAN, cos, exp, fabs, log, pow, sin


cdef enum:
    OP_CONST = 0
    OP_VAR = 1
    OP_ADD = 2
    OP_MUL = 3
    OP_POWI = 4
    OP_POWF = 5
    OP_SIN = 6
    OP_COS = 7
    OP_EXP = 8
    OP_LOG = 9
    OP_ABS = 10


cdef inline double _powi(double x, int n) nogil:
    cdef double r = 1.0
    cdef int m = n if n >= 0 else -n
    while m:
        if m & 1:
            r *= x
        x *= x
        m >>= 1
    if n >= 0:
        return r
    if r == 0.0:
        return INFINITY
    return 1.0 / r


def evaluate(tape, points):
    """Evaluate a tape at points of shape (n, nvars); returns shape (n,)."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] x = pts
    cdef int[::1] opcodes = tape.opcodes
    cdef int[::1] iargs = tape.iargs
    cdef double[::1] consts = tape.consts
    out_arr = np.empty(pts.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    stack_arr = np.empty(max(tape.stack_need, 1), dtype=np.float64)
    cdef double[::1] stack = stack_arr

    cdef Py_ssize_t i, k
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nops = opcodes.shape[0]
    cdef int top, op, arg
    cdef double v

    with nogil:
        for i in range(n):
            top = -1
            for k in range(nops):
                op = opcodes[k]
                arg = iargs[k]
                if op == OP_CONST:
                    top += 1
                    stack[top] = consts[arg]
                elif op == OP_VAR:
                    top += 1
                    stack[top] = x[i, arg]
                elif op == OP_ADD:
                    stack[top - 1] += stack[top]
                    top -= 1
                elif op == OP_MUL:
                    stack[top - 1] *= stack[top]
                    top -= 1
                elif op == OP_POWI:
                    stack[top] = _powi(stack[top], arg)
                elif op == OP_POWF:
                    v = stack[top]
                    stack[top] = pow(v, consts[arg]) if v >= 0.0 else NAN
                elif op == OP_SIN:
                    stack[top] = sin(stack[top])
                elif op == OP_COS:
                    stack[top] = cos(stack[top])
                elif op == OP_EXP:
                    stack[top] = exp(stack[top])
                elif op == OP_LOG:
                    v = stack[top]
                    stack[top] = log(v) if v > 0.0 else NAN
                elif op == OP_ABS:
                    stack[top] = fabs(stack[top])
            out[i] = stack[0]
    return out_arr
