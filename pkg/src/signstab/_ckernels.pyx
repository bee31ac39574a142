# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled evaluation and RK4 kernels over postfix programs.

Mirrors ``_pykernels`` operation for operation so both backends produce the
same floating-point results.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, log, sqrt, pow, isnan, isinf, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    CONST = 0
    VAR = 1
    TIME = 2
    DVAR = 3
    NEG = 4
    SIN = 5
    COS = 6
    EXP = 7
    LN = 8
    SQRT = 9
    ADD = 10
    SUB = 11
    MUL = 12
    DIV = 13
    POW = 14

cdef enum:
    ERR_DIV = 1
    ERR_LN = 2
    ERR_SQRT = 3
    ERR_POW = 4
    ERR_OVERFLOW = 5
    ERR_NONFINITE = 6
    ERR_TRIG = 7
    ERR_SLOT = 8


cdef inline int eval_one(const int[::1] ops, const int[::1] args, const double[::1] consts,
                         int start, int stop, const double* x, double t, const double* d,
                         int n_slots, double* stack, double* result) noexcept nogil:
    cdef int sp = 0
    cdef int pc, op
    cdef double a, b, r
    for pc in range(start, stop):
        op = ops[pc]
        if op == CONST:
            stack[sp] = consts[args[pc]]
            sp += 1
        elif op == VAR:
            stack[sp] = x[args[pc]]
            sp += 1
        elif op == TIME:
            stack[sp] = t
            sp += 1
        elif op == DVAR:
            if d == NULL or args[pc] >= n_slots:
                return ERR_SLOT
            stack[sp] = d[args[pc]]
            sp += 1
        elif op < ADD:
            a = stack[sp - 1]
            if op == NEG:
                r = -a
            elif op == SIN:
                r = sin(a)
                if isnan(r) and not isnan(a):
                    return ERR_TRIG
            elif op == COS:
                r = cos(a)
                if isnan(r) and not isnan(a):
                    return ERR_TRIG
            elif op == EXP:
                r = exp(a)
                if isinf(r) and isfinite(a):
                    return ERR_OVERFLOW
            elif op == LN:
                if a <= 0.0:
                    return ERR_LN
                r = log(a)
            else:
                if a < 0.0:
                    return ERR_SQRT
                r = sqrt(a)
            stack[sp - 1] = r
        elif op == POW:
            a = stack[sp - 1]
            b = consts[args[pc]]
            if a == 0.0 and b < 0.0:
                return ERR_POW
            r = pow(a, b)
            if isnan(r) and not isnan(a) and not isnan(b):
                return ERR_POW
            if isinf(r) and isfinite(a) and isfinite(b):
                return ERR_OVERFLOW
            stack[sp - 1] = r
        else:
            b = stack[sp - 1]
            a = stack[sp - 2]
            sp -= 1
            if op == ADD:
                r = a + b
            elif op == SUB:
                r = a - b
            elif op == MUL:
                r = a * b
            else:
                if b == 0.0:
                    return ERR_DIV
                r = a / b
            stack[sp - 1] = r
    result[0] = stack[0]
    return 0


def eval_batch(prog, double[:, ::1] X, double[::1] T):
    """Evaluate every output of ``prog`` at each row of ``X``.

    Returns ``(values, status, row, output)``; status is 0 or an error code
    identifying the first failing (row, output) in row-major order.
    """
    cdef const int[::1] ops = prog.ops
    cdef const int[::1] args = prog.args
    cdef const double[::1] consts = prog.consts
    cdef const int[::1] starts = prog.starts
    cdef Py_ssize_t m = X.shape[0]
    cdef int k_out = starts.shape[0] - 1
    cdef int nv = prog.n_vars
    cdef Py_ssize_t i
    cdef int j, code = 0
    cdef double r
    out = np.empty((m, k_out), dtype=np.float64)
    cdef double[:, ::1] O = out
    if m and X.shape[1] < nv:
        raise ValueError("state dimension too small for program")
    cdef double* stack = <double*> malloc(prog.stack_size * sizeof(double))
    if stack == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(m):
                for j in range(k_out):
                    code = eval_one(ops, args, consts, starts[j], starts[j + 1],
                                    &X[i, 0], T[i], NULL, 0, stack, &r)
                    if code == 0 and not isfinite(r):
                        code = ERR_NONFINITE
                    if code:
                        break
                    O[i, j] = r
                if code:
                    break
    finally:
        free(stack)
    if code:
        return out, code, i, j
    return out, 0, -1, -1


cdef inline void fill_slots(double* d, int n_slots, const int[::1] slot_var,
                            const int[::1] slot_lag, const double[:, ::1] Xs,
                            const double[::1] hist, Py_ssize_t k, int stage,
                            const double* s) noexcept nogil:
    # stage: 0 -> c=0, 1 -> c=1/2, 2 -> c=1
    cdef int q, j, lag
    cdef Py_ssize_t idx
    cdef double a, b
    for q in range(n_slots):
        j = slot_var[q]
        lag = slot_lag[q]
        if lag == 0:
            d[q] = s[j]
            continue
        idx = k - lag
        a = Xs[idx, j] if idx >= 0 else hist[j]
        b = Xs[idx + 1, j] if idx + 1 >= 0 else hist[j]
        if stage == 0:
            d[q] = a
        elif stage == 1:
            d[q] = 0.5 * a + 0.5 * b
        else:
            d[q] = b


cdef inline int eval_all(const int[::1] ops, const int[::1] args, const double[::1] consts,
                         const int[::1] starts, int n, const double* x, double t,
                         const double* d, int n_slots, double* stack,
                         double* out) noexcept nogil:
    cdef int j, code
    for j in range(n):
        code = eval_one(ops, args, consts, starts[j], starts[j + 1], x, t, d,
                        n_slots, stack, &out[j])
        if code:
            return code
    return 0


def rk4(prog, double[::1] x0, double t0, double dt, Py_ssize_t steps, double blowup,
        int[::1] slot_var, int[::1] slot_lag, double[::1] history):
    """Classical fixed-step RK4 with optional delayed state reads.

    Returns ``(X, n_done, status, code)``: ``X`` has ``n_done + 1`` valid rows;
    status 0 = complete, 1 = norm exceeded ``blowup``, 2 = evaluation error
    (``code``), 3 = non-finite state.
    """
    cdef const int[::1] ops = prog.ops
    cdef const int[::1] args = prog.args
    cdef const double[::1] consts = prog.consts
    cdef const int[::1] starts = prog.starts
    cdef int n = x0.shape[0]
    cdef int n_slots = slot_var.shape[0]
    cdef Py_ssize_t k
    cdef int i, code = 0, status = 0
    cdef double h2 = 0.5 * dt
    cdef double tk, nrm
    if starts.shape[0] - 1 != n:
        raise ValueError("program must have one output per state")
    Xout = np.empty((steps + 1, n), dtype=np.float64)
    cdef double[:, ::1] Xs = Xout
    cdef double* work = <double*> malloc((6 * n + n_slots + prog.stack_size + 1) * sizeof(double))
    if work == NULL:
        raise MemoryError()
    cdef double* k1 = work
    cdef double* k2 = work + n
    cdef double* k3 = work + 2 * n
    cdef double* k4 = work + 3 * n
    cdef double* s = work + 4 * n
    cdef double* xn = work + 5 * n
    cdef double* d = work + 6 * n
    cdef double* stack = work + 6 * n + n_slots
    cdef const double* dp = d if n_slots > 0 else NULL
    for i in range(n):
        Xs[0, i] = x0[i]
    k = 0
    try:
        with nogil:
            while k < steps:
                tk = t0 + k * dt
                for i in range(n):
                    s[i] = Xs[k, i]
                fill_slots(d, n_slots, slot_var, slot_lag, Xs, history, k, 0, s)
                code = eval_all(ops, args, consts, starts, n, s, tk, dp, n_slots, stack, k1)
                if code:
                    status = 2
                    break
                for i in range(n):
                    s[i] = Xs[k, i] + h2 * k1[i]
                fill_slots(d, n_slots, slot_var, slot_lag, Xs, history, k, 1, s)
                code = eval_all(ops, args, consts, starts, n, s, tk + h2, dp, n_slots, stack, k2)
                if code:
                    status = 2
                    break
                for i in range(n):
                    s[i] = Xs[k, i] + h2 * k2[i]
                fill_slots(d, n_slots, slot_var, slot_lag, Xs, history, k, 1, s)
                code = eval_all(ops, args, consts, starts, n, s, tk + h2, dp, n_slots, stack, k3)
                if code:
                    status = 2
                    break
                for i in range(n):
                    s[i] = Xs[k, i] + dt * k3[i]
                fill_slots(d, n_slots, slot_var, slot_lag, Xs, history, k, 2, s)
                code = eval_all(ops, args, consts, starts, n, s, tk + dt, dp, n_slots, stack, k4)
                if code:
                    status = 2
                    break
                nrm = 0.0
                for i in range(n):
                    xn[i] = Xs[k, i] + dt * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0
                    nrm = nrm + xn[i] * xn[i]
                nrm = sqrt(nrm)
                if not isfinite(nrm):
                    status = 3
                    break
                for i in range(n):
                    Xs[k + 1, i] = xn[i]
                k += 1
                if nrm > blowup:
                    status = 1
                    break
    finally:
        free(work)
    return Xout[:k + 1], k, status, code
