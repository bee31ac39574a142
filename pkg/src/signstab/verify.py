"""Numerical certification: condition (ii), the metric inequality, averaging, verdicts.

The sign-stability verdict is the conjunction of three checks over sampled
region points:

(i)   every reciprocal pair has ``a_ji = -b_ij a_ij`` with ``b_ij > 0``;
(ii)  ``alpha_i = -a_ii > 0.5 * sum_{j in N_i} bdot_ij / b_ij``;
(iii) no directed cycle of length 3 or more.

Alongside it the report carries a metric certificate: for every feedback
chain, ``L = Ddot + A^T D + D A`` with the recursive diagonal metric must be
negative definite, and stages are combined as a cascade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import networkx as nx
import numpy as np
from scipy.optimize import minimize_scalar

from signstab.expr import (
    ZERO_TOL,
    Const,
    EvaluationError,
    Expr,
    is_constant,
    max_var,
    parse_expression,
    ratio,
    neg,
    simplify,
    total_time_derivative,
)
from signstab.graph import (
    POSITIVITY_MARGIN,
    RESIDUAL_TOL,
    ChainDecomposition,
    ConditionResult,
    CycleResult,
    DecompositionError,
    SignedNetwork,
    _values_tolerant,
    build_network,
    check_condition_i,
    decompose_chains,
    feedback_neighbors,
    find_long_cycles,
)
from signstab.kernels import evaluate_many
from signstab.metric import (
    BlockMetric,
    CascadeVerdict,
    DiagonalMetric,
    MetricError,
    assemble_cascade_report,
    build_chain_metric,
    check_block_compatibility,
    check_block_condition_ii,
)
from signstab.model import DynamicsSpec, Region
from signstab.sampling import sample_region

LMI_MARGIN = 1e-9
CANCEL_TOL = 1e-9
SCHEMA = 1


class VerificationError(RuntimeError):
    """An upstream stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _point(X, T, k) -> dict:
    return {"x": [float(v) for v in X[k]], "t": float(T[k])}


def _samples_for(net: SignedNetwork, region, samples, seed):
    region = net.region if region is None else region
    samples = net.samples if samples is None else samples
    seed = net.seed if seed is None else seed
    if (region, samples, seed) == (net.region, net.samples, net.seed):
        return net.X, net.T, net.values
    X, T = sample_region(region, samples, seed)
    n = net.n
    flat = [net.jacobian[i][j] for i in range(n) for j in range(n)]
    return X, T, evaluate_many(flat, X, T, n).reshape(len(T), n, n)


# ---------------------------------------------------------------------------
# Condition (ii)


@dataclass(frozen=True)
class NodeMargin:
    node: int
    neighbors: tuple[int, ...]
    alpha_min: float
    margin: float
    satisfied: bool
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {"node": self.node, "neighbors": list(self.neighbors),
                "alpha_min": self.alpha_min, "margin": self.margin,
                "satisfied": self.satisfied, "witness": self.witness}


@dataclass(frozen=True)
class ConditionII:
    satisfied: bool
    nodes: tuple[NodeMargin, ...]
    constant_shortcut: bool
    logderiv: dict = field(default_factory=dict)  # (i, j) -> bdot_ij expression text

    @property
    def witnesses(self) -> tuple[dict, ...]:
        return tuple({"node": m.node, **m.witness} for m in self.nodes if m.witness)

    def margin(self, node: int) -> float:
        return next(m.margin for m in self.nodes if m.node == node)


def asymmetry_rates(net: SignedNetwork, dyn: DynamicsSpec, X, T) -> tuple[dict, dict]:
    """Per ordered pair ``(i, j)``: ``bdot_ij`` expression and ``bdot_ij / b_ij`` values."""
    exprs, rates = {}, {}
    for (i, j) in sorted(net.pairs):
        for a, b in ((i, j), (j, i)):
            bexpr = net.b(a, b)
            if is_constant(bexpr):
                bdot: Expr = Const(0.0)
                exprs[(a, b)] = bdot
                rates[(a, b)] = np.zeros(len(T))
                continue
            bdot = total_time_derivative(bexpr, dyn.f)
            exprs[(a, b)] = bdot
            with np.errstate(all="ignore"):
                rates[(a, b)] = _values_tolerant(bdot, X, T) / _values_tolerant(bexpr, X, T)
    return exprs, rates


def check_condition_ii(net: SignedNetwork, dyn: DynamicsSpec, region: Region | None = None,
                       samples: int | None = None, seed: int | None = None,
                       *, margin: float = POSITIVITY_MARGIN) -> ConditionII:
    """Per-node worst-case margin ``alpha_i - 0.5 * sum bdot_ij / b_ij`` over samples."""
    X, T, values = _samples_for(net, region, samples, seed)
    exprs, rates = asymmetry_rates(net, dyn, X, T)
    constant_shortcut = net.constant_asymmetries
    nodes = []
    for i in range(1, net.n + 1):
        nbrs = tuple(sorted(feedback_neighbors(net, i)))
        alpha = -values[:, i - 1, i - 1]
        s = np.zeros(len(T))
        for j in nbrs:
            s = s + rates[(i, j)]
        m = alpha - 0.5 * s
        # alpha itself must be positive too; NaN (undefined b) counts as failure
        worst = np.where(np.isnan(m), -np.inf, np.minimum(m, alpha))
        k = int(np.argmin(worst))
        ok = bool(worst[k] >= margin)
        wit = None
        if not ok:
            reason = "alpha not positive" if alpha[k] < margin else "rate below asymmetry growth"
            if np.isnan(m[k]):
                reason = "asymmetry undefined"
            wit = {"reason": reason, "alpha": float(alpha[k]),
                   "half_logderiv": float(0.5 * s[k]), **_point(X, T, k)}
        mk = int(np.nanargmin(m)) if not np.all(np.isnan(m)) else 0
        nodes.append(NodeMargin(i, nbrs, float(alpha.min()), float(m[mk]), ok, wit))
    ld = {f"{a},{b}": str(e) for (a, b), e in exprs.items()}
    return ConditionII(all(n.satisfied for n in nodes), tuple(nodes), constant_shortcut, ld)


# ---------------------------------------------------------------------------
# Metric inequality


@dataclass(frozen=True)
class LMIResult:
    satisfied: bool
    max_eig: float  # of L for the metric as built
    max_eig_normalized: float  # of L / c, c = max weight over samples
    scale: float
    offdiag: float  # max |offdiag(L / c)| / ||A||_F over samples
    diagonal: bool | None  # off-diagonal cancellation check (chains only)
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {"satisfied": self.satisfied, "max_eig": self.max_eig,
                "max_eig_normalized": self.max_eig_normalized, "scale": self.scale,
                "offdiag_rel": self.offdiag, "diagonal": self.diagonal,
                "witness": self.witness}


def lmi_matrices(A: np.ndarray, d: np.ndarray, ddot: np.ndarray) -> np.ndarray:
    """``L = diag(ddot) + A^T D + D A`` for stacked ``A (m,k,k)``, ``d (m,k)``."""
    L = np.swapaxes(A, 1, 2) * d[:, None, :] + d[:, :, None] * A
    idx = np.arange(A.shape[1])
    L[:, idx, idx] += ddot
    return L


def _lmi_from_arrays(A, d, ddot, X, T, margin, chain: bool) -> LMIResult:
    bad = ~np.isfinite(d) | (d <= 0)
    if bad.any():
        k = int(np.argmax(bad.any(axis=1)))
        raise MetricError(f"metric not positive at x={list(map(float, X[k]))}, t={float(T[k])}")
    c = float(d.max())
    L = lmi_matrices(A, d / c, ddot / c)
    k_dim = L.shape[1]
    off = L.copy()
    idx = np.arange(k_dim)
    off[:, idx, idx] = 0.0
    normA = np.linalg.norm(A, axis=(1, 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(normA > 0, np.abs(off).max(axis=(1, 2)) / normA, np.abs(off).max(axis=(1, 2)))
    offdiag = float(rel.max()) if rel.size else 0.0
    S = 0.5 * (L + np.swapaxes(L, 1, 2))
    top = np.linalg.eigvalsh(S)[:, -1]
    k = int(np.argmax(top))
    lam = float(top[k])
    ok = lam <= -margin
    wit = None if ok else {"max_eig": lam * c, **_point(X, T, k)}
    return LMIResult(ok, lam * c, lam, c, offdiag, (offdiag <= CANCEL_TOL) if chain else None, wit)


def check_lmi(net: SignedNetwork, M: DiagonalMetric | BlockMetric, dyn: DynamicsSpec,
              region: Region | None = None, samples: int | None = None,
              seed: int | None = None, *, margin: float = LMI_MARGIN,
              weights: DiagonalMetric | None = None) -> LMIResult:
    """Max eigenvalue of ``Mdot + A^T M + M A`` over samples.

    For a :class:`DiagonalMetric` the Jacobian is restricted to the metric's
    nodes (one chain). Strict negativity is tested after dividing the metric
    by its largest sampled weight, so the verdict does not depend on the
    metric's overall scale. For a :class:`BlockMetric` the full Jacobian is
    used with ``M = blockdiag(w_I M_I)``; ``weights`` (over module ids) gives
    ``w_I`` and defaults to 1.
    """
    X, T, values = _samples_for(net, region, samples, seed)
    if isinstance(M, DiagonalMetric):
        idx = np.asarray(M.order) - 1
        A = values[:, idx][:, :, idx]
        d = M.evaluate(X, T, net.n)
        ddot = M.evaluate_derivative(dyn.f, X, T, net.n)
        return _lmi_from_arrays(A, d, ddot, X, T, margin, chain=M.anchor is not None)
    return _block_lmi(values, M, weights, dyn, X, T, margin)


def _block_lmi(values, M: BlockMetric, weights, dyn, X, T, margin) -> LMIResult:
    m = len(T)
    K = len(M.modules)
    if weights is None:
        w = np.ones((m, K))
        wdot = np.zeros((m, K))
    else:
        ev = weights.evaluate(X, T, dyn.n)
        evd = weights.evaluate_derivative(dyn.f, X, T, dyn.n)
        pos = {mod: c for c, mod in enumerate(weights.order)}
        w = np.ones((m, K))
        wdot = np.zeros((m, K))
        for mod, c in pos.items():
            w[:, mod - 1] = ev[:, c]
            wdot[:, mod - 1] = evd[:, c]
    n = values.shape[1]
    Mf = np.zeros((m, n, n))
    Mdot = np.zeros((m, n, n))
    for I, blk in enumerate(M.modules):
        ix = np.asarray(blk) - 1
        Mf[:, ix[:, None], ix[None, :]] = w[:, I, None, None] * M.mats[I]
        Mdot[:, ix[:, None], ix[None, :]] = wdot[:, I, None, None] * M.mats[I]
    if np.any(~np.isfinite(w) | (w <= 0)):
        k = int(np.argmax((~np.isfinite(w) | (w <= 0)).any(axis=1)))
        raise MetricError(f"module weight not positive at x={list(map(float, X[k]))}, t={float(T[k])}")
    c = float(w.max())
    L = (Mdot + np.swapaxes(values, 1, 2) @ Mf + Mf @ values) / c
    S = 0.5 * (L + np.swapaxes(L, 1, 2))
    top = np.linalg.eigvalsh(S)[:, -1]
    k = int(np.argmax(top))
    lam = float(top[k])
    ok = lam <= -margin
    wit = None if ok else {"max_eig": lam * c, **_point(X, T, k)}
    return LMIResult(ok, lam * c, lam, c, 0.0, None, wit)


# ---------------------------------------------------------------------------
# Averaged Jacobian window


@dataclass(frozen=True)
class AveragedResult:
    satisfied: bool
    T: float
    T_star: float
    eps: float
    gamma: float
    worst_ratio: float  # max over grid of b(t+T) / (e^{2 alpha T} b(t))
    witness_t: float | None

    def to_dict(self) -> dict:
        return {"satisfied": self.satisfied, "T": self.T, "T_star": self.T_star,
                "eps": self.eps, "gamma": self.gamma, "worst_ratio": self.worst_ratio,
                "witness_t": self.witness_t}


def _time_function(b) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(b, str):
        b = parse_expression(b, 0)
    if isinstance(b, Expr):
        if max_var(b) > 0:
            raise ValueError("b must depend on t only")

        def fn(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            return evaluate_many([b], np.zeros((len(t), 1)), t, 1)[:, 0]
        return fn
    return lambda t: np.asarray(b(np.atleast_1d(np.asarray(t, dtype=float))), dtype=float)


def _refine(fn, grid, k, sign):
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    v = sign * float(fn(grid[k])[0])
    if hi <= lo:
        return sign * v
    res = minimize_scalar(lambda s: sign * float(fn(s)[0]), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    return sign * min(v, float(res.fun))


def averaged_jacobian_check(b, alpha: float, T: float, t_grid=None,
                            *, floor: float = 1e-12) -> AveragedResult:
    """Check ``b(t + T) < exp(2 alpha T) b(t)`` on ``t_grid`` and the window ``T*``.

    ``T* = ln(gamma / eps) / (2 alpha)`` uses bounds ``eps <= b <= gamma``
    taken from the grid and polished by a bounded scalar search around the
    grid extremes. The default grid is 2e5 points on ``[0, 200]``.
    """
    if T <= 0:
        raise ValueError("window T must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    fn = _time_function(b)
    grid = np.linspace(0.0, 200.0, 200_001) if t_grid is None else np.asarray(t_grid, dtype=float)
    bt = fn(grid)
    if np.any(~np.isfinite(bt)) or bt.min() < floor:
        k = int(np.argmin(np.where(np.isfinite(bt), bt, -np.inf)))
        raise ValueError(f"b is not positive on the grid (b={bt[k]!r} at t={grid[k]!r})")
    eps = _refine(fn, grid, int(np.argmin(bt)), 1.0)
    gamma = _refine(fn, grid, int(np.argmax(bt)), -1.0)
    T_star = math.log(gamma / eps) / (2.0 * alpha)
    shifted = fn(grid + T)
    ratio_ = shifted / (math.exp(2.0 * alpha * T) * bt)
    k = int(np.argmax(ratio_))
    ok = bool(ratio_[k] < 1.0)
    return AveragedResult(ok, float(T), T_star, eps, gamma, float(ratio_[k]),
                          None if ok else float(grid[k]))


# ---------------------------------------------------------------------------
# Module (block) analysis


@dataclass
class ModuleNetwork:
    """Network whose vertices are modules; duck-types what the chain metric needs."""

    modules: tuple[tuple[int, ...], ...]
    graph: nx.DiGraph
    pairs: dict
    b_exprs: dict  # (I, J) -> b_IJ with A_JI = -b_IJ A_IJ^T

    @property
    def n(self) -> int:
        return len(self.modules)

    def b(self, I: int, J: int) -> Expr:
        return self.b_exprs[(I, J)]


def _module_blocks(values, modules):
    out = {}
    for I, bi in enumerate(modules, start=1):
        for J, bj in enumerate(modules, start=1):
            ri, cj = np.asarray(bi) - 1, np.asarray(bj) - 1
            out[(I, J)] = values[:, ri][:, :, cj]
    return out


def _module_asymmetry(net, I, J, bi, bj, blocks, X, T):
    """Scalar ``b`` with ``A_JI = -b A_IJ^T`` from the largest entry of ``A_IJ``."""
    AIJ, AJI = blocks[(I, J)], blocks[(J, I)]
    p, q = np.unravel_index(int(np.argmax(np.abs(AIJ).max(axis=0))), AIJ.shape[1:])
    gi, gj = bi[p], bj[q]
    b = ratio(neg(net.a(gj, gi)), net.a(gi, gj))
    vb = _values_tolerant(b, X, T)
    R = AJI + vb[:, None, None] * np.swapaxes(AIJ, 1, 2)
    with np.errstate(invalid="ignore"):
        res = np.linalg.norm(R, axis=(1, 2)) / (1.0 + np.linalg.norm(AJI, axis=(1, 2)))
    witness = None
    bad = ~np.isfinite(vb) | (vb < POSITIVITY_MARGIN) | ~(res <= RESIDUAL_TOL)
    if bad.any():
        k = int(np.argmax(bad))
        witness = {"modules": [I, J], "b": float(vb[k]), "residual": float(res[k]),
                   "reason": "module blocks are not related by a positive scalar",
                   **_point(X, T, k)}
    return b, witness, float(np.nanmax(res)) if res.size else 0.0


@dataclass(frozen=True)
class ModuleReport:
    satisfied: bool
    condition_i: ConditionResult
    condition_ii: tuple[ConditionResult, ...]
    condition_iii: CycleResult
    compatibility: ConditionResult
    lmi: LMIResult | None
    pairs: dict

    def to_dict(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "condition_i": {"satisfied": self.condition_i.satisfied,
                            "witnesses": list(self.condition_i.witnesses)},
            "condition_ii": [{"module": k + 1, "satisfied": r.satisfied, **r.detail,
                              "witnesses": list(r.witnesses)}
                             for k, r in enumerate(self.condition_ii)],
            "condition_iii": {"satisfied": not self.condition_iii.cycles,
                              "cycles": [list(c) for c in self.condition_iii.cycles]},
            "compatibility": {"satisfied": self.compatibility.satisfied,
                              **self.compatibility.detail,
                              "witnesses": list(self.compatibility.witnesses)},
            "lmi": None if self.lmi is None else self.lmi.to_dict(),
            "pairs": self.pairs,
        }


def check_modules(net: SignedNetwork, dyn: DynamicsSpec, metric: BlockMetric | None = None,
                  *, margin: float = LMI_MARGIN) -> ModuleReport:
    """Module-level conditions with block metrics ``M_I`` (identity by default)."""
    if dyn.modules is None:
        raise ValueError("dynamics have no module partition")
    modules = dyn.modules
    metric = BlockMetric.identity(modules) if metric is None else metric
    X, T, values = net.X, net.T, net.values
    blocks = _module_blocks(values, modules)
    K = len(modules)
    g = nx.DiGraph()
    g.add_nodes_from(range(1, K + 1))
    for (I, J), A in sorted(blocks.items()):
        if I != J and np.any(np.abs(A) >= ZERO_TOL):
            g.add_edge(J, I)  # block A_IJ: module J drives module I
    pairs, b_exprs, wits, pair_info = {}, {}, [], {}
    for I in range(1, K + 1):
        for J in range(I + 1, K + 1):
            if g.has_edge(J, I) and g.has_edge(I, J):
                b, w, res = _module_asymmetry(net, I, J, modules[I - 1], modules[J - 1], blocks, X, T)
                pairs[(I, J)] = True
                b_exprs[(I, J)] = b
                b_exprs[(J, I)] = simplify(ratio(Const(1.0), b))
                pair_info[f"{I},{J}"] = {"b": str(b), "residual": res}
                if w:
                    wits.append(w)
    cond_i = ConditionResult(not wits, tuple(wits))
    cyc = find_long_cycles(g)
    rates = {}
    for (I, J), b in b_exprs.items():
        if is_constant(b):
            rates[(I, J)] = np.zeros(len(T))
        else:
            with np.errstate(all="ignore"):
                rates[(I, J)] = (_values_tolerant(total_time_derivative(b, dyn.f), X, T)
                                 / _values_tolerant(b, X, T))
    cond_ii = []
    for I in range(1, K + 1):
        s = np.zeros(len(T))
        for J in range(1, K + 1):
            if (I, J) in b_exprs:
                s = s + rates[(I, J)]
        cond_ii.append(check_block_condition_ii(metric.mats[I - 1], blocks[(I, I)], s, margin))
    inter = {(I - 1, J - 1): A for (I, J), A in blocks.items()
             if I != J and g.has_edge(J, I)}
    compat = check_block_compatibility(metric.mats, inter)
    lmi = None
    if cond_i.satisfied and not cyc.cycles:
        dec = decompose_chains(g)
        weights = None
        for ch in dec.chains:
            wm = build_chain_metric(ch, _ModuleView(pairs, b_exprs))
            weights = wm if weights is None else _merge(weights, wm)
        lmi = check_lmi(net, metric, dyn, weights=weights)
    ok = (cond_i.satisfied and all(r.satisfied for r in cond_ii) and not cyc.cycles
          and compat.satisfied)
    return ModuleReport(ok, cond_i, tuple(cond_ii), cyc, compat, lmi, pair_info)


@dataclass
class _ModuleView:
    pairs: dict
    b_exprs: dict

    def b(self, i, j):
        return self.b_exprs[(i, j)]


def _merge(a: DiagonalMetric, b: DiagonalMetric) -> DiagonalMetric:
    return DiagonalMetric(a.order + b.order, {**a.factors, **b.factors},
                          {**a.labels, **b.labels}, a.anchor)


# ---------------------------------------------------------------------------
# Orchestration


@dataclass
class StabilityReport:
    verdict: bool
    region: Region
    samples: int
    seed: int
    condition_i: ConditionResult
    condition_ii: ConditionII | None
    condition_iii: CycleResult
    decomposition: ChainDecomposition | None = None
    metrics: dict = field(default_factory=dict)
    lmi: dict = field(default_factory=dict)
    cascade: CascadeVerdict | None = None
    modules: ModuleReport | None = None
    notes: list = field(default_factory=list)

    @property
    def constant_shortcut(self) -> bool:
        return bool(self.condition_ii and self.condition_ii.constant_shortcut)

    @property
    def certificate(self) -> bool | None:
        if self.modules is not None:
            return self.modules.satisfied
        return None if self.cascade is None else self.cascade.satisfied

    def to_dict(self) -> dict:
        ci = self.condition_i
        out = {
            "schema": SCHEMA,
            "verdict": "sign-stable on region" if self.verdict else "not certified",
            "sign_stable": self.verdict,
            "sampling": {"region": self.region.to_dict(), "samples": self.samples,
                         "seed": self.seed, "method": "scrambled Halton"},
            "conditions": {
                "i": {"satisfied": ci.satisfied, "witnesses": list(ci.witnesses),
                      **ci.detail},
                "ii": None if self.condition_ii is None else {
                    "satisfied": self.condition_ii.satisfied,
                    "constant_shortcut": self.condition_ii.constant_shortcut,
                    "nodes": [m.to_dict() for m in self.condition_ii.nodes],
                    "bdot": self.condition_ii.logderiv,
                },
                "iii": {"satisfied": not self.condition_iii.cycles,
                        "cycles": [list(c) for c in self.condition_iii.cycles],
                        "truncated": self.condition_iii.truncated},
            },
            "constant_shortcut": self.constant_shortcut,
            "decomposition": None if self.decomposition is None else self.decomposition.to_dict(),
            "metrics": {k: v.to_dict() for k, v in sorted(self.metrics.items())},
            "lmi": {k: v.to_dict() for k, v in sorted(self.lmi.items())},
            "cascade": None if self.cascade is None else self.cascade.to_dict(),
            "certificate": self.certificate,
            "notes": list(self.notes),
        }
        if self.modules is not None:
            out["modules"] = self.modules.to_dict()
        return out


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (VerificationError, DecompositionError):
        raise
    except (EvaluationError, MetricError, ValueError) as err:
        raise VerificationError(name, err) from err


def sign_stability_verdict(dyn: DynamicsSpec, region: Region, samples: int = 256,
                           seed: int = 42, *, margin: float = LMI_MARGIN,
                           block_metric: BlockMetric | None = None) -> StabilityReport:
    """Run every check and collect the evidence into a :class:`StabilityReport`."""
    net = _stage("network", build_network, dyn, region, samples, seed)
    cond_i = check_condition_i(net)
    cycles = find_long_cycles(net)
    notes = [
        "verdicts hold on the sampled region and assume trajectories stay in it",
    ]
    if dyn.has_blocks:
        mod = _stage("modules", check_modules, net, dyn, block_metric, margin=margin)
        rep = StabilityReport(mod.satisfied, region, samples, seed, mod.condition_i, None,
                              mod.condition_iii, modules=mod, notes=notes)
        notes.append("module partition given: conditions checked between modules")
        return rep

    cond_ii = _stage("condition ii", check_condition_ii, net, dyn, margin=POSITIVITY_MARGIN)
    verdict = cond_i.satisfied and cond_ii.satisfied and not cycles.cycles
    rep = StabilityReport(verdict, region, samples, seed, cond_i, cond_ii, cycles, notes=notes)
    if cond_ii.constant_shortcut:
        notes.append("all asymmetries constant: condition (ii) reduces to alpha_i > 0")
    if cycles.truncated:
        notes.append("cycle enumeration truncated")
    if not cond_i.satisfied or cycles.cycles:
        return rep

    dec = decompose_chains(net)
    rep.decomposition = dec
    stage_ok = {}
    for ch in dec.chains:
        metric = _stage(f"metric {ch.label}", build_chain_metric, ch, net)
        rep.metrics[ch.label] = metric
        res = _stage(f"lmi {ch.label}", check_lmi, net, metric, dyn, margin=margin)
        rep.lmi[ch.label] = res
        stage_ok[ch.label] = res.satisfied
        if res.diagonal is False:
            notes.append(f"{ch.label}: off-diagonal terms of L did not cancel "
                         f"(relative {res.offdiag:.3g})")
    for k in dec.singletons:
        m = next(nm for nm in cond_ii.nodes if nm.node == k)
        stage_ok[f"x{k}"] = m.satisfied
    rep.cascade = assemble_cascade_report(dec, rep.metrics, stage_ok)
    if rep.cascade.satisfied != verdict:
        notes.append("metric certificate and condition (ii) disagree; for time-varying "
                     "asymmetries the recursive weights use path products, so the two "
                     "tests can differ away from constant asymmetries")
    return rep
