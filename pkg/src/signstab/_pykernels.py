"""Pure-Python fallback for the compiled kernels.

Programs are turned into straight-line Python functions (one temporary per
instruction, same operation order as the C interpreter). When the fast path
raises, the interpreter below re-runs the output to classify the error the
same way the compiled kernel does.
"""

from __future__ import annotations

import math

import numpy as np

from signstab import tape as tp


class _DomainError(Exception):
    def __init__(self, code: int):
        self.code = code


def _interp(prog: tp.Program, j: int, x, t: float, d) -> tuple[int, float]:
    stack: list[float] = []
    ops, args, consts = prog.ops, prog.args, prog.consts
    for pc in range(int(prog.starts[j]), int(prog.starts[j + 1])):
        op, arg = int(ops[pc]), int(args[pc])
        if op == tp.CONST:
            stack.append(float(consts[arg]))
        elif op == tp.VAR:
            stack.append(float(x[arg]))
        elif op == tp.TIME:
            stack.append(float(t))
        elif op == tp.DVAR:
            if d is None or arg >= len(d):
                return tp.ERR_SLOT, math.nan
            stack.append(float(d[arg]))
        elif op < tp.ADD:
            a = stack[-1]
            if op == tp.NEG:
                r = -a
            elif op in (tp.SIN, tp.COS):
                if math.isinf(a):
                    return tp.ERR_TRIG, math.nan
                r = math.sin(a) if op == tp.SIN else math.cos(a)
            elif op == tp.EXP:
                try:
                    r = math.exp(a)
                except OverflowError:
                    return tp.ERR_OVERFLOW, math.nan
            elif op == tp.LN:
                if a <= 0.0:
                    return tp.ERR_LN, math.nan
                r = math.log(a)
            else:
                if a < 0.0:
                    return tp.ERR_SQRT, math.nan
                r = math.sqrt(a)
            stack[-1] = r
        elif op == tp.POW:
            a, b = stack[-1], float(consts[arg])
            if a == 0.0 and b < 0.0:
                return tp.ERR_POW, math.nan
            try:
                r = math.pow(a, b)
            except OverflowError:
                return tp.ERR_OVERFLOW, math.nan
            except ValueError:
                return tp.ERR_POW, math.nan
            stack[-1] = r
        else:
            b = stack.pop()
            a = stack[-1]
            if op == tp.ADD:
                r = a + b
            elif op == tp.SUB:
                r = a - b
            elif op == tp.MUL:
                r = a * b
            else:
                if b == 0.0:
                    return tp.ERR_DIV, math.nan
                r = a / b
            stack[-1] = r
    return 0, stack[0]


_UNARY_SRC = {tp.SIN: "_sin({})", tp.COS: "_cos({})", tp.EXP: "_exp({})"}
_BIN_SRC = {tp.ADD: "{} + {}", tp.SUB: "{} - {}", tp.MUL: "{} * {}"}


def _source(prog: tp.Program) -> str:
    lines = ["def _f(x, t, d):"]
    outs = []
    tmp = 0
    for j in range(prog.n_outputs):
        stack: list[str] = []
        for pc in range(int(prog.starts[j]), int(prog.starts[j + 1])):
            op, arg = int(prog.ops[pc]), int(prog.args[pc])
            if op == tp.CONST:
                v = float(prog.consts[arg])
                stack.append(f"({v!r})" if math.isfinite(v) else f"_K[{arg}]")
                continue
            if op == tp.VAR:
                stack.append(f"x[{arg}]")
                continue
            if op == tp.TIME:
                stack.append("t")
                continue
            if op == tp.DVAR:
                stack.append(f"d[{arg}]")
                continue
            name = f"v{tmp}"
            tmp += 1
            if op < tp.ADD:
                a = stack.pop()
                if op == tp.NEG:
                    lines.append(f"    {name} = -{a}")
                elif op == tp.LN:
                    lines.append(f"    if {a} <= 0.0: raise _Dom")
                    lines.append(f"    {name} = _log({a})")
                elif op == tp.SQRT:
                    lines.append(f"    if {a} < 0.0: raise _Dom")
                    lines.append(f"    {name} = _sqrt({a})")
                else:
                    lines.append(f"    {name} = {_UNARY_SRC[op].format(a)}")
            elif op == tp.POW:
                a = stack.pop()
                v = float(prog.consts[arg])
                b = f"({v!r})" if math.isfinite(v) else f"_K[{arg}]"
                lines.append(f"    {name} = _pow({a}, {b})")
            else:
                b = stack.pop()
                a = stack.pop()
                if op == tp.DIV:
                    lines.append(f"    if {b} == 0.0: raise _Dom")
                    lines.append(f"    {name} = {a} / {b}")
                else:
                    lines.append(f"    {name} = {_BIN_SRC[op].format(a, b)}")
            stack.append(name)
        outs.append(stack[0])
    lines.append(f"    return [{', '.join(outs)}]")
    return "\n".join(lines)


class _Dom(Exception):
    pass


def _compiled(prog: tp.Program):
    fn = prog.cache.get("py")
    if fn is None:
        ns = {"_sin": math.sin, "_cos": math.cos, "_exp": math.exp, "_log": math.log,
              "_sqrt": math.sqrt, "_pow": math.pow, "_Dom": _Dom,
              "_K": [float(v) for v in prog.consts]}
        exec(compile(_source(prog), "<signstab-program>", "exec"), ns)
        fn = prog.cache["py"] = ns["_f"]
    return fn


def _classify(prog: tp.Program, x, t, d, check_final: bool = False) -> tuple[int, int]:
    for j in range(prog.n_outputs):
        code, r = _interp(prog, j, x, t, d)
        if code == 0 and check_final and not math.isfinite(r):
            code = tp.ERR_NONFINITE
        if code:
            return code, j
    return tp.ERR_OVERFLOW, 0


def _call(fn, prog, x, t, d):
    try:
        return fn(x, t, d)
    except (_Dom, ValueError, OverflowError, TypeError):
        raise _DomainError(_classify(prog, x, t, d)[0]) from None


def eval_batch(prog: tp.Program, X: np.ndarray, T: np.ndarray):
    fn = _compiled(prog)
    m = X.shape[0]
    out = np.empty((m, prog.n_outputs), dtype=np.float64)
    isfinite = math.isfinite
    for i in range(m):
        row = X[i].tolist()
        t = float(T[i])
        try:
            vals = fn(row, t, None)
        except (_Dom, ValueError, OverflowError, TypeError):
            code, j = _classify(prog, row, t, None, check_final=True)
            return out, code, i, j
        for j, v in enumerate(vals):
            if not isfinite(v):
                return out, tp.ERR_NONFINITE, i, j
        out[i] = vals
    return out, 0, -1, -1


def rk4(prog: tp.Program, x0, t0: float, dt: float, steps: int, blowup: float,
        slot_var, slot_lag, history):
    fn = _compiled(prog)
    n = len(x0)
    if prog.n_outputs != n:
        raise ValueError("program must have one output per state")
    slot_var = [int(v) for v in slot_var]
    slot_lag = [int(v) for v in slot_lag]
    hist = [float(v) for v in history]
    nslots = len(slot_var)
    X = [[float(v) for v in x0]]
    h2 = 0.5 * dt
    rng = range(n)
    status = code = 0

    def slots(k, stage, s):
        if not nslots:
            return None
        d = [0.0] * nslots
        for q in range(nslots):
            j, lag = slot_var[q], slot_lag[q]
            if lag == 0:
                d[q] = s[j]
                continue
            idx = k - lag
            a = X[idx][j] if idx >= 0 else hist[j]
            b = X[idx + 1][j] if idx + 1 >= 0 else hist[j]
            d[q] = a if stage == 0 else (0.5 * a + 0.5 * b if stage == 1 else b)
        return d

    k = 0
    try:
        while k < steps:
            tk = t0 + k * dt
            x = X[k]
            k1 = _call(fn, prog, x, tk, slots(k, 0, x))
            s = [x[i] + h2 * k1[i] for i in rng]
            k2 = _call(fn, prog, s, tk + h2, slots(k, 1, s))
            s = [x[i] + h2 * k2[i] for i in rng]
            k3 = _call(fn, prog, s, tk + h2, slots(k, 1, s))
            s = [x[i] + dt * k3[i] for i in rng]
            k4 = _call(fn, prog, s, tk + dt, slots(k, 2, s))
            xn = [x[i] + dt * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0 for i in rng]
            nrm = 0.0
            for v in xn:
                nrm = nrm + v * v
            nrm = math.sqrt(nrm)
            if not math.isfinite(nrm):
                status = 3
                break
            X.append(xn)
            k += 1
            if nrm > blowup:
                status = 1
                break
    except _DomainError as err:
        status, code = 2, err.code
    return np.asarray(X, dtype=np.float64).reshape(len(X), n), k, status, code
