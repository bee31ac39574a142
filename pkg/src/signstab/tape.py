"""Flatten expression trees into postfix programs for the evaluation kernels.

A :class:`Program` holds several outputs back to back. Every instruction is an
``(op, arg)`` pair; ``arg`` indexes the constant pool, the state vector or the
delay-slot vector depending on the opcode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from signstab.expr import Binary, Const, Expr, Time, Unary, Var

CONST, VAR, TIME, DVAR = 0, 1, 2, 3
NEG, SIN, COS, EXP, LN, SQRT = 4, 5, 6, 7, 8, 9
ADD, SUB, MUL, DIV, POW = 10, 11, 12, 13, 14

UNARY_CODES = {"neg": NEG, "sin": SIN, "cos": COS, "exp": EXP, "ln": LN, "sqrt": SQRT}
BINARY_CODES = {"add": ADD, "sub": SUB, "mul": MUL, "div": DIV, "pow": POW}

# kernel error codes
ERR_DIV, ERR_LN, ERR_SQRT, ERR_POW, ERR_OVERFLOW, ERR_NONFINITE, ERR_TRIG, ERR_SLOT = range(1, 9)
ERROR_TEXT = {
    0: "ok",
    ERR_DIV: "division by zero",
    ERR_LN: "ln of non-positive value",
    ERR_SQRT: "sqrt of negative value",
    ERR_POW: "invalid power",
    ERR_OVERFLOW: "overflow",
    ERR_NONFINITE: "non-finite result",
    ERR_TRIG: "invalid argument to trigonometric function",
    ERR_SLOT: "delayed variable outside a delayed integration",
}


@dataclass(eq=False)
class Program:
    ops: np.ndarray
    args: np.ndarray
    consts: np.ndarray
    starts: np.ndarray
    n_vars: int
    n_slots: int
    stack_size: int
    exprs: tuple[Expr, ...] = ()
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_outputs(self) -> int:
        return len(self.starts) - 1


SlotLookup = Callable[[int, int], "int | None"]


def compile_program(exprs: Sequence[Expr], n_vars: int,
                    slot_of: SlotLookup | None = None, n_slots: int = 0) -> Program:
    """Compile ``exprs`` into one program.

    ``slot_of(output_index, var_index)`` (both 0-based) returns the delay slot
    that replaces a read of that state variable inside that output, or None.
    """
    ops: list[int] = []
    args: list[int] = []
    consts: list[float] = []
    const_ix: dict[float, int] = {}
    starts = [0]
    depth_max = 1

    def const(v: float) -> int:
        key = float(v)
        # -0.0 and 0.0 compare equal but must stay distinct
        k = (key, np.signbit(key))
        if k not in const_ix:
            const_ix[k] = len(consts)
            consts.append(key)
        return const_ix[k]

    def emit(e: Expr, out: int, depth: int) -> int:
        nonlocal depth_max
        depth_max = max(depth_max, depth + 1)
        if isinstance(e, Const):
            ops.append(CONST), args.append(const(e.value))
        elif isinstance(e, Var):
            if not 1 <= e.index <= n_vars:
                raise ValueError(f"x{e.index} outside 1..{n_vars}")
            slot = slot_of(out, e.index - 1) if slot_of is not None else None
            if slot is None:
                ops.append(VAR), args.append(e.index - 1)
            else:
                ops.append(DVAR), args.append(slot)
        elif isinstance(e, Time):
            ops.append(TIME), args.append(0)
        elif isinstance(e, Unary):
            emit(e.arg, out, depth)
            ops.append(UNARY_CODES[e.op]), args.append(0)
        elif isinstance(e, Binary):
            if e.op == "pow":
                emit(e.left, out, depth)
                ops.append(POW), args.append(const(e.right.value))
            else:
                emit(e.left, out, depth)
                emit(e.right, out, depth + 1)
                ops.append(BINARY_CODES[e.op]), args.append(0)
        else:
            raise TypeError(f"cannot compile {e!r}")
        return depth + 1

    for out, e in enumerate(exprs):
        emit(e, out, 0)
        starts.append(len(ops))

    return Program(
        ops=np.asarray(ops, dtype=np.int32),
        args=np.asarray(args, dtype=np.int32),
        consts=np.asarray(consts if consts else [0.0], dtype=np.float64),
        starts=np.asarray(starts, dtype=np.int32),
        n_vars=n_vars,
        n_slots=n_slots,
        stack_size=depth_max + 1,
        exprs=tuple(exprs),
    )
