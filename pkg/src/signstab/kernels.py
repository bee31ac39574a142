"""Backend selection for the evaluation and integration kernels.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
pure-Python ``_pykernels`` takes over. Set ``SIGNSTAB_BACKEND=python`` to force
the fallback. Both backends implement::

    eval_batch(prog, X, T) -> (values, status, row, output)
    rk4(prog, x0, t0, dt, steps, blowup, slot_var, slot_lag, history)
        -> (X, n_done, status, code)
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

from signstab import _pykernels

_forced = os.environ.get("SIGNSTAB_BACKEND", "").strip().lower()


def _load_compiled() -> ModuleType | None:
    try:
        return importlib.import_module("signstab._ckernels")
    except ImportError:
        return None


_compiled = _load_compiled()

if _forced == "python" or _compiled is None:
    impl: ModuleType = _pykernels
    BACKEND = "python"
else:
    impl = _compiled
    BACKEND = "cython"


def available_backends() -> dict[str, ModuleType]:
    out = {"python": _pykernels}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def get_backend(name: str | None = None) -> ModuleType:
    if name is None:
        return impl
    backends = available_backends()
    if name not in backends:
        raise ValueError(f"kernel backend {name!r} is not available")
    return backends[name]


def evaluate_many(exprs, X, T, n_vars: int | None = None, *, backend: str | None = None):
    """Values of each expression at each sample: array of shape ``(m, len(exprs))``.

    Domain errors surface as :class:`~signstab.expr.EvaluationError` with the
    offending subtree and sample point, exactly like tree evaluation.
    """
    import numpy as np

    from signstab.expr import EvaluationError, evaluate
    from signstab.tape import ERROR_TEXT, compile_program

    X = np.ascontiguousarray(X, dtype=np.float64)
    T = np.ascontiguousarray(T, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D array of states")
    exprs = list(exprs)
    if not exprs:
        return np.empty((X.shape[0], 0))
    nv = X.shape[1] if n_vars is None else n_vars
    prog = compile_program(exprs, nv)
    values, status, row, out = get_backend(backend).eval_batch(prog, X, T)
    if status:
        xs, t = X[row], float(T[row])
        evaluate(exprs[out], xs, t)  # raises with the precise subtree
        raise EvaluationError(ERROR_TEXT.get(status, "evaluation error"), exprs[out], xs, t)
    return values
