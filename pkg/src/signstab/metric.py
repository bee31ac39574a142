"""Diagonal chain metrics and block (module-level) metrics.

A chain metric keeps every weight ``d_i`` as a list of asymmetry factors so
that its time derivative follows from the product rule on the factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from signstab.expr import Const, Expr, mul, s_add, s_mul, simplify, total_time_derivative
from signstab.graph import Chain, ChainDecomposition, ConditionResult, SignedNetwork
from signstab.kernels import evaluate_many

BLOCK_MARGIN = 1e-9
COMPAT_TOL = 1e-6
SPD_FLOOR = 1e-9


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class DiagonalMetric:
    """Weights ``d_i = prod(factors[i])`` over the nodes of one chain."""

    order: tuple[int, ...]
    factors: dict  # node -> tuple[Expr, ...]
    labels: dict  # node -> tuple[str, ...], e.g. ("b12", "b32")
    anchor: int | None = None

    def weight(self, node: int) -> Expr:
        fs = self.factors[node]
        if not fs:
            return Const(1.0)
        acc = fs[0]
        for f in fs[1:]:
            acc = mul(acc, f)
        return acc

    def weight_text(self, node: int) -> str:
        return "*".join(self.labels[node]) or "1"

    def derivative(self, node: int, f: Sequence[Expr]) -> Expr:
        """Total time derivative of ``d_node`` by the product rule over its factors."""
        fs = self.factors[node]
        out: Expr = Const(0.0)
        for k, fk in enumerate(fs):
            term = total_time_derivative(fk, f)
            for q, fq in enumerate(fs):
                if q != k:
                    term = s_mul(term, fq)
            out = s_add(out, term)
        return simplify(out)

    def evaluate(self, X: np.ndarray, T: np.ndarray, n_vars: int | None = None) -> np.ndarray:
        """Weights at each sample, shape ``(m, len(order))`` in ``order``."""
        m = len(T)
        out = np.ones((m, len(self.order)))
        uniq: list[Expr] = []
        index: dict[Expr, int] = {}
        for node in self.order:
            for f in self.factors[node]:
                if f not in index:
                    index[f] = len(uniq)
                    uniq.append(f)
        if uniq:
            vals = evaluate_many(uniq, X, T, n_vars)
            for c, node in enumerate(self.order):
                for f in self.factors[node]:
                    out[:, c] *= vals[:, index[f]]
        return out

    def evaluate_derivative(self, dyn_f: Sequence[Expr], X, T, n_vars: int | None = None) -> np.ndarray:
        exprs = [self.derivative(node, dyn_f) for node in self.order]
        return evaluate_many(exprs, X, T, n_vars)

    def to_dict(self) -> dict:
        return {str(k): {"weight": self.weight_text(k),
                         "factors": [str(f) for f in self.factors[k]]} for k in self.order}


def _check_chain(chain: Chain, net: SignedNetwork) -> None:
    if len(chain.order) < 2:
        raise MetricError("a chain needs at least two nodes")
    if set(chain.attach) != set(chain.order[1:]) or chain.attach.get(chain.anchor) != chain.root:
        raise MetricError(f"chain {chain.label} has an inconsistent insertion order")
    for p, c in chain.pairs:
        if (min(p, c), max(p, c)) not in net.pairs:
            raise MetricError(f"chain {chain.label} uses ({p}, {c}), which is not a feedback pair")


def build_chain_metric(chain: Chain, net: SignedNetwork) -> DiagonalMetric:
    """Recursive metric: the root pair gets ``(b_rv, 1)``, then ``d_c = d_p * b_cp``."""
    _check_chain(chain, net)
    r, v = chain.root, chain.anchor
    factors = {r: (net.b(r, v),), v: ()}
    labels = {r: (f"b{r}{v}" if max(r, v) < 10 else f"b{r},{v}",), v: ()}
    for c in chain.order[2:]:
        p = chain.attach[c]
        factors[c] = factors[p] + (net.b(c, p),)
        labels[c] = labels[p] + ((f"b{c}{p}" if max(c, p) < 10 else f"b{c},{p}"),)
    return DiagonalMetric(chain.order, factors, labels, v)


@dataclass(frozen=True)
class CascadeVerdict:
    satisfied: bool
    failing: tuple[str, ...]
    cascade: tuple[tuple[str, str], ...]
    note: str = ("stages are checked separately; a cascade of contracting stages "
                 "is contracting, so no global metric is built")

    def to_dict(self) -> dict:
        return {"satisfied": self.satisfied, "failing": list(self.failing),
                "cascade": [list(e) for e in self.cascade], "note": self.note}


def assemble_cascade_report(dec: ChainDecomposition, metrics: Mapping[str, DiagonalMetric],
                            verdicts: Mapping[str, bool]) -> CascadeVerdict:
    """Overall verdict is the conjunction over chains and singleton nodes."""
    labels = [c.label for c in dec.chains] + [f"x{k}" for k in dec.singletons]
    missing = [c.label for c in dec.chains if c.label not in metrics]
    if missing:
        raise MetricError(f"no metric for chains {missing}")
    failing = tuple(lab for lab in labels if not verdicts.get(lab, False))
    return CascadeVerdict(not failing, failing, tuple(dec.cascade_edges()))


# ---------------------------------------------------------------------------
# Block metrics


@dataclass(frozen=True)
class BlockMetric:
    modules: tuple[tuple[int, ...], ...]
    mats: tuple[np.ndarray, ...] = field(compare=False)

    def __post_init__(self):
        if len(self.modules) != len(self.mats):
            raise MetricError("one metric per module is required")
        for blk, M in zip(self.modules, self.mats):
            M = np.asarray(M, dtype=float)
            if M.shape != (len(blk), len(blk)):
                raise MetricError(f"metric for module {list(blk)} has shape {M.shape}")
            if not np.allclose(M, M.T, rtol=0, atol=1e-12):
                raise MetricError(f"metric for module {list(blk)} is not symmetric")
            if np.linalg.eigvalsh(M).min() < SPD_FLOOR:
                raise MetricError(f"metric for module {list(blk)} is not positive definite")

    @classmethod
    def identity(cls, modules) -> "BlockMetric":
        return cls(tuple(tuple(b) for b in modules), tuple(np.eye(len(b)) for b in modules))


def check_block_compatibility(M: Sequence[np.ndarray], A_blocks: Mapping) -> ConditionResult:
    """``M_I A_IJ = A_IJ M_J`` for every sampled inter-module block.

    ``A_blocks[(I, J)]`` has shape ``(m, n_I, n_J)`` (or a single matrix); ``I``
    and ``J`` index ``M`` from 0.
    """
    worst = 0.0
    witnesses = []
    for (I, J), A in sorted(A_blocks.items()):
        A = np.asarray(A, dtype=float)
        if A.ndim == 2:
            A = A[None]
        MI, MJ = np.asarray(M[I], float), np.asarray(M[J], float)
        if A.shape[1:] != (MI.shape[0], MJ.shape[0]):
            raise MetricError(f"block ({I}, {J}) has shape {A.shape[1:]}, "
                              f"expected {(MI.shape[0], MJ.shape[0])}")
        R = np.einsum("ab,mbc->mac", MI, A) - np.einsum("mab,bc->mac", A, MJ)
        res = np.linalg.norm(R, axis=(1, 2))
        scale = 1.0 + np.linalg.norm(A, axis=(1, 2))
        rel = res / scale
        k = int(np.argmax(rel))
        worst = max(worst, float(res[k]))
        if rel[k] > COMPAT_TOL:
            witnesses.append({"blocks": [I, J], "sample": k, "residual": float(res[k])})
    return ConditionResult(not witnesses, tuple(witnesses), {"max_residual": worst})


def check_block_condition_ii(M_i: np.ndarray, A_ii, logderiv, margin: float = BLOCK_MARGIN) -> ConditionResult:
    """Max eigenvalue of ``A^T M + M A + s M`` is at most ``-margin`` at every sample.

    ``A_ii`` is ``(m, k, k)`` or ``(k, k)``; ``logderiv`` is the per-sample sum
    of ``bdot/b`` over the module's feedback neighbours (scalar or ``(m,)``).
    """
    M = np.asarray(M_i, dtype=float)
    A = np.asarray(A_ii, dtype=float)
    if A.ndim == 2:
        A = A[None]
    s = np.broadcast_to(np.asarray(logderiv, dtype=float), (A.shape[0],))
    L = np.einsum("mba,bc->mac", A, M) + np.einsum("ab,mbc->mac", M, A) + s[:, None, None] * M
    L = 0.5 * (L + np.swapaxes(L, 1, 2))
    top = np.linalg.eigvalsh(L)[:, -1]
    k = int(np.argmax(top))
    ok = bool(top[k] <= -margin)
    wit = () if ok else ({"sample": k, "max_eig": float(top[k])},)
    return ConditionResult(ok, wit, {"max_eig": float(top[k])})
