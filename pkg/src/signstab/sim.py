"""Fixed-step RK4 simulation, delayed couplings, contraction-rate estimates, sweeps.

Integrations run inside the selected kernel backend (compiled when available).
Both backends perform the same floating-point operations in the same order,
so trajectories are bitwise reproducible.
"""

from __future__ import annotations

import csv
import io
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from signstab.expr import EvaluationError, evaluate
from signstab.kernels import get_backend
from signstab.model import DelaySpec, DynamicsSpec
from signstab.tape import ERROR_TEXT, compile_program

BLOWUP = 1e12
UNDERFLOW = 1e-14
STABLE_DECAY = 1e-3
UNSTABLE_GROWTH = 10.0


@dataclass(frozen=True)
class Trajectory:
    t0: float
    dt: float
    X: np.ndarray  # (k + 1, n), k <= requested steps
    requested_steps: int
    diverged: bool = False
    error: str | None = None

    @property
    def steps(self) -> int:
        return self.X.shape[0] - 1

    @property
    def complete(self) -> bool:
        return self.steps == self.requested_steps and not self.diverged and self.error is None

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.X.shape[0])

    @property
    def final(self) -> np.ndarray:
        return self.X[-1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.X, axis=1)

    def at(self, t: float) -> np.ndarray:
        k = int(round((t - self.t0) / self.dt))
        if not 0 <= k <= self.steps:
            raise IndexError(f"t={t} outside the integrated range")
        return self.X[k]


def _step_count(t0: float, t_end: float, dt: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    return int(round((t_end - t0) / dt))


def _finish(dyn, raw, t0, dt, steps) -> Trajectory:
    X, k, status, code = raw
    X = np.array(X, dtype=float)
    error = None
    if status == 2:
        error = ERROR_TEXT.get(code, "evaluation error")
        xs = X[-1]
        tk = t0 + (X.shape[0] - 1) * dt
        try:
            for f in dyn.f:
                evaluate(f, xs, tk)
        except EvaluationError as err:
            error = str(err)
        else:
            error = f"{error} at an RK4 stage after t={tk!r}"
    return Trajectory(t0, dt, X, steps, diverged=status in (1, 3), error=error)


def integrate(dyn: DynamicsSpec, x0: Sequence[float], t0: float = 0.0, t_end: float = 1.0,
              dt: float = 1e-3, *, blowup: float = BLOWUP, backend: str | None = None) -> Trajectory:
    """Classical RK4 on a uniform grid; stops early on divergence or domain errors."""
    x0 = np.ascontiguousarray(x0, dtype=float)
    if x0.shape != (dyn.n,):
        raise ValueError(f"x0 must have {dyn.n} entries")
    steps = _step_count(t0, t_end, dt)
    prog = compile_program(dyn.f, dyn.n)
    empty_i = np.zeros(0, dtype=np.int32)
    raw = get_backend(backend).rk4(prog, x0, float(t0), float(dt), steps, float(blowup),
                                   empty_i, empty_i, np.zeros(dyn.n))
    return _finish(dyn, raw, t0, dt, steps)


def integrate_delayed(dyn: DynamicsSpec, delays: DelaySpec, history: Sequence[float] | None = None,
                      t0: float = 0.0, t_end: float = 1.0, dt: float = 1e-3, *,
                      blowup: float = BLOWUP, backend: str | None = None) -> Trajectory:
    """RK4 where ``x_j`` inside ``f_i`` is read at ``t - T_ij``.

    Past values come from the stored grid; the half-step stages use the
    midpoint of the two neighbouring grid values. Delays are rounded to whole
    steps (with a warning when that changes them). Before ``t0`` the state
    equals the constant ``history``, which is also the initial state.
    """
    if history is None:
        history = delays.history
    if history is None:
        raise ValueError("a constant history vector is required")
    hist = np.ascontiguousarray(history, dtype=float)
    if hist.shape != (dyn.n,):
        raise ValueError(f"history must have {dyn.n} entries")
    steps = _step_count(t0, t_end, dt)
    slots: dict[tuple[int, int], int] = {}
    by_edge: dict[tuple[int, int], int] = {}
    for (i, j), T in sorted(delays.delays.items()):
        lag = int(round(T / dt))
        if abs(lag * dt - T) > 1e-9 * max(1.0, T):
            warnings.warn(f"delay {T} on x{j}->x{i} rounded to {lag * dt} (multiple of dt)",
                          stacklevel=2)
        key = (j - 1, lag)
        if key not in slots:
            slots[key] = len(slots)
        by_edge[(i - 1, j - 1)] = slots[key]
    order = sorted(slots, key=slots.get)
    slot_var = np.asarray([v for v, _ in order], dtype=np.int32)
    slot_lag = np.asarray([lag for _, lag in order], dtype=np.int32)
    prog = compile_program(dyn.f, dyn.n, slot_of=lambda i, j: by_edge.get((i, j)),
                           n_slots=len(slots))
    raw = get_backend(backend).rk4(prog, hist.copy(), float(t0), float(dt), steps, float(blowup),
                                   slot_var, slot_lag, hist)
    return _finish(dyn, raw, t0, dt, steps)


# ---------------------------------------------------------------------------
# Contraction rate


@dataclass(frozen=True)
class RateEstimate:
    rate: float  # minus the fitted slope of ln ||a - b||
    residual: float  # RMS deviation of the log-distance from the fit
    t_lo: float
    t_hi: float
    truncated: bool = False


def contraction_rate(a: Trajectory, b: Trajectory, window: tuple[float, float] | None = None) -> RateEstimate:
    """Least-squares exponential rate at which two trajectories approach each other."""
    if a.t0 != b.t0 or a.dt != b.dt:
        raise ValueError("trajectories must share the same time grid")
    k = min(a.X.shape[0], b.X.shape[0])
    t = a.t[:k]
    dist = np.linalg.norm(a.X[:k] - b.X[:k], axis=1)
    lo, hi = (t[0], t[-1]) if window is None else window
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    t, dist = t[sel], dist[sel]
    if dist.size == 0 or dist[0] <= 0.0:
        raise ValueError("trajectories coincide at the start of the window")
    truncated = False
    small = np.nonzero(dist < UNDERFLOW)[0]
    if small.size:
        t, dist = t[:small[0]], dist[:small[0]]
        truncated = True
    if dist.size < 2:
        raise ValueError("fewer than two usable points in the window")
    y = np.log(dist)
    slope, icept = np.polyfit(t, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * t + icept)) ** 2)))
    return RateEstimate(float(-slope), resid, float(t[0]), float(t[-1]), truncated)


# ---------------------------------------------------------------------------
# Fast-asymmetry sweep


def fast_asymmetry_system(alpha: float, omega: float) -> DynamicsSpec:
    """``x' = [[-alpha, 1], [-b(omega t), -alpha]] x`` with ``b(s) = 1 + 0.9 sin s``."""
    a, w = float(alpha), float(omega)
    return DynamicsSpec.from_strings([
        f"-({a!r})*x1 + x2",
        f"-(1 + 0.9*sin(({w!r})*t))*x1 - ({a!r})*x2",
    ])


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    omega: float
    verdict: str  # stable | unstable | inconclusive
    final_norm: float


def classify(x0_norm: float, traj: Trajectory) -> str:
    final = float(np.linalg.norm(traj.final))
    if traj.diverged or final > UNSTABLE_GROWTH * x0_norm:
        return "unstable"
    if traj.error is None and traj.complete and final < STABLE_DECAY * x0_norm:
        return "stable"
    return "inconclusive"


def _sweep_cell(args) -> SweepRow:
    alpha, omega, x0, t_end, dt, backend = args
    traj = integrate(fast_asymmetry_system(alpha, omega), x0, 0.0, t_end, dt, backend=backend)
    x0n = float(np.linalg.norm(x0))
    final = float(np.linalg.norm(traj.final))
    return SweepRow(float(alpha), float(omega), classify(x0n, traj), final)


def fast_asymmetry_sweep(alphas: Sequence[float], omegas: Sequence[float], t_end: float = 2000.0,
                   dt: float = 1e-2, x0: Sequence[float] = (1.0, 0.5), *,
                   workers: int | None = None, backend: str | None = None) -> list[SweepRow]:
    """Simulate every ``(alpha, omega)`` cell and classify the end state.

    Rows come back in ``alphas`` x ``omegas`` order regardless of ``workers``.
    """
    cells = [(float(a), float(w), tuple(float(v) for v in x0), float(t_end), float(dt), backend)
             for a in alphas for w in omegas]
    if workers and workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, cells))
    return [_sweep_cell(c) for c in cells]


# ---------------------------------------------------------------------------
# CSV export


def _open(target):
    if target is None or target == "-":
        return io.StringIO(), True
    return open(Path(target), "w", newline="", encoding="utf-8"), False


def trajectory_csv(traj: Trajectory, target=None) -> str | None:
    """Write ``t,x1,...,xn`` rows; returns the text when ``target`` is None."""
    fh, buffered = _open(target)
    try:
        w = csv.writer(fh, lineterminator="\n")
        n = traj.X.shape[1]
        w.writerow(["t"] + [f"x{k}" for k in range(1, n + 1)])
        for t, row in zip(traj.t, traj.X):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return fh.getvalue() if buffered else None
    finally:
        if not buffered:
            fh.close()


def sweep_csv(rows: Sequence[SweepRow], target=None) -> str | None:
    fh, buffered = _open(target)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "omega", "verdict", "final_norm"])
        for r in rows:
            w.writerow([repr(r.alpha), repr(r.omega), r.verdict, repr(r.final_norm)])
        return fh.getvalue() if buffered else None
    finally:
        if not buffered:
            fh.close()


def decay_rate(traj: Trajectory, t_lo: float | None = None) -> float:
    """Exponential decay rate of ``||x(t)||`` fitted over ``[t_lo, end]``."""
    t = traj.t
    nrm = traj.norms()
    sel = (t >= (t[0] if t_lo is None else t_lo)) & (nrm > UNDERFLOW)
    if sel.sum() < 2:
        raise ValueError("not enough points to fit a rate")
    slope = np.polyfit(t[sel], np.log(nrm[sel]), 1)[0]
    return float(-slope)

