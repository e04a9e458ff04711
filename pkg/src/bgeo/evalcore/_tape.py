"""Compile expressions to a flat postfix tape for batch evaluation.

The tape is a stack program: each instruction pushes or combines values on
an evaluation stack.  Both kernels (the compiled one and the numpy
fallback) interpret the same instruction arrays, so they are exchangeable.
Non-finite values (poles, log of a non-positive number) propagate as
inf/nan in the output; callers mask them instead of catching exceptions.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..symexpr import Add, Fun, Mul, Num, Pow, Sym

OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_MUL = 3
OP_POWI = 4   # integer exponent stored in iarg
OP_POWF = 5   # float exponent stored in consts[iarg]
OP_SIN = 6
OP_COS = 7
OP_EXP = 8
OP_LOG = 9
OP_ABS = 10

_FUN_OP = {"sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP, "log": OP_LOG,
           "abs": OP_ABS}


class Tape:
    """A compiled expression: instruction arrays plus variable layout."""

    __slots__ = ("opcodes", "iargs", "consts", "var_names", "stack_need")

    def __init__(self, opcodes, iargs, consts, var_names, stack_need):
        self.opcodes = np.asarray(opcodes, dtype=np.int32)
        self.iargs = np.asarray(iargs, dtype=np.int32)
        self.consts = np.asarray(consts, dtype=np.float64)
        self.var_names = tuple(var_names)
        self.stack_need = int(stack_need)

    def __len__(self):
        return len(self.opcodes)


def compile_tape(expr, var_names):
    """Flatten an expression into a Tape over the given variable order."""
    var_index = {name: i for i, name in enumerate(var_names)}
    opcodes, iargs, consts = [], [], []
    const_cache = {}

    def const_slot(v):
        v = float(v)
        key = np.float64(v).tobytes()
        if key not in const_cache:
            const_cache[key] = len(consts)
            consts.append(v)
        return const_cache[key]

    def emit(op, arg=0):
        opcodes.append(op)
        iargs.append(arg)

    depth = 0
    max_depth = 0

    def push(n):
        nonlocal depth, max_depth
        depth += n
        max_depth = max(max_depth, depth)

    def go(e):
        nonlocal depth
        if isinstance(e, Num):
            emit(OP_CONST, const_slot(e.value))
            push(1)
            return
        if isinstance(e, Sym):
            try:
                emit(OP_VAR, var_index[e.name])
            except KeyError:
                raise KeyError(f"expression uses '{e.name}' which is not "
                               f"among tape variables {var_names}") from None
            push(1)
            return
        if isinstance(e, Add):
            for i, t in enumerate(e.terms):
                go(t)
                if i:
                    emit(OP_ADD)
                    depth -= 1
            return
        if isinstance(e, Mul):
            for i, f in enumerate(e.factors):
                go(f)
                if i:
                    emit(OP_MUL)
                    depth -= 1
            return
        if isinstance(e, Pow):
            go(e.base)
            if isinstance(e.exp, Fraction) and e.exp.denominator == 1:
                emit(OP_POWI, int(e.exp))
            else:
                emit(OP_POWF, const_slot(float(e.exp)))
            return
        if isinstance(e, Fun):
            go(e.arg)
            emit(_FUN_OP[e.fn])
            return
        raise TypeError(f"cannot compile {e!r}")

    go(expr)
    if depth != 1:
        raise AssertionError("tape stack imbalance")
    return Tape(opcodes, iargs, consts, var_names, max_depth)
