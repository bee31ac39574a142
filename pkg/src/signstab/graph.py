"""Signed interaction network, structural conditions, and chain decomposition.

Convention: the Jacobian entry ``a_ij = df_i/dx_j`` that is not identically
zero on the region is a directed edge ``x_j -> x_i``. Nodes are 1-based.
A reciprocal (feedback) pair ``{i, j}`` has both edges; its asymmetry is
``b_ij = -a_ji / a_ij`` so that ``a_ji = -b_ij * a_ij``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import networkx as nx
import numpy as np

from signstab.expr import (
    ZERO_TOL,
    Const,
    EvaluationError,
    Expr,
    differentiate,
    div,
    evaluate,
    is_constant,
    neg,
    ratio,
    simplify,
)
from signstab.kernels import evaluate_many
from signstab.model import DynamicsSpec, Region
from signstab.sampling import sample_region

POSITIVITY_MARGIN = 1e-9
RESIDUAL_TOL = 1e-6
CONST_TOL = 1e-12
DEFAULT_SAMPLES = 256
DEFAULT_SEED = 42
CYCLE_CAP = 100

POSITIVE, NEGATIVE, SIGN_VARYING, ZERO = "positive", "negative", "sign-varying", "zero"


class DecompositionError(ValueError):
    """The network is not a cascade of feedback chains."""

    def __init__(self, message: str, cycle: list[int] | None = None):
        super().__init__(message)
        self.cycle = cycle


@dataclass(frozen=True)
class Entry:
    i: int
    j: int
    expr: Expr
    sign: str
    lo: float
    hi: float


@dataclass(frozen=True)
class Pair:
    """Reciprocal pair ``i < j`` with asymmetries in both orientations."""

    i: int
    j: int
    b_ij: Expr
    b_ji: Expr
    exact: bool
    constant: bool
    residual: float
    b_min: float
    b_max: float
    witness: dict | None = None

    @property
    def positive(self) -> bool:
        return self.witness is None

    @property
    def key(self) -> tuple[int, int]:
        return (self.i, self.j)


@dataclass
class SignedNetwork:
    n: int
    jacobian: tuple[tuple[Expr, ...], ...]
    edges: dict[tuple[int, int], Entry]
    diagonal: dict[int, Entry]
    pairs: dict[tuple[int, int], Pair]
    region: Region
    samples: int
    seed: int
    X: np.ndarray = field(repr=False)
    T: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)  # (m, n, n) Jacobian at samples

    def a(self, i: int, j: int) -> Expr:
        return self.jacobian[i - 1][j - 1]

    def has_edge(self, src: int, dst: int) -> bool:
        """Edge ``x_src -> x_dst`` (entry ``a_{dst,src}``)."""
        return (dst, src) in self.edges

    def b(self, i: int, j: int) -> Expr:
        """Asymmetry ``b_ij = -a_ji / a_ij`` of the pair ``{i, j}``."""
        p = self.pairs[(min(i, j), max(i, j))]
        return p.b_ij if i < j else p.b_ji

    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(1, self.n + 1))
        g.add_edges_from(sorted((j, i) for (i, j) in self.edges))
        return g

    @property
    def constant_asymmetries(self) -> bool:
        return all(p.constant for p in self.pairs.values())


def _sign_of(v: np.ndarray) -> str:
    if v.size and np.all(v > 0):
        return POSITIVE
    if v.size and np.all(v < 0):
        return NEGATIVE
    return SIGN_VARYING


def _values_tolerant(e: Expr, X: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Values at every sample, NaN where evaluation fails."""
    try:
        return evaluate_many([e], X, T)[:, 0]
    except EvaluationError:
        out = np.empty(len(T))
        for k, (xs, t) in enumerate(zip(X, T)):
            try:
                out[k] = evaluate(e, xs, float(t))
            except EvaluationError:
                out[k] = np.nan
        return out


def _point(X, T, k) -> dict:
    return {"x": [float(v) for v in X[k]], "t": float(T[k])}


def _asymmetry(i, j, a_ij, a_ji, v_ij, v_ji, X, T) -> Pair:
    raw = div(neg(a_ji), a_ij)
    b = ratio(neg(a_ji), a_ij)
    vb = _values_tolerant(b, X, T)
    with np.errstate(invalid="ignore"):
        res = np.abs(v_ji + vb * v_ij) / (1.0 + np.abs(v_ji))
    finite = np.isfinite(res)
    residual = float(res[finite].max()) if finite.any() else 0.0
    exact = residual <= RESIDUAL_TOL
    if not exact:
        b = raw
        vb = _values_tolerant(b, X, T)
        with np.errstate(invalid="ignore"):
            res = np.abs(v_ji + vb * v_ij) / (1.0 + np.abs(v_ji))
        finite = np.isfinite(res)
        residual = float(res[finite].max()) if finite.any() else 0.0
    if exact and not is_constant(b):
        # common factors the simplifier expanded away: constant on every sample
        fin = vb[np.isfinite(vb)]
        if fin.size == vb.size and np.ptp(fin) <= CONST_TOL * max(1.0, float(np.abs(fin).max())):
            c = Const(float(np.median(fin)))
            vc = np.full(len(vb), c.value)
            with np.errstate(invalid="ignore"):
                rc = np.abs(v_ji + vc * v_ij) / (1.0 + np.abs(v_ji))
            if float(rc.max()) <= RESIDUAL_TOL:
                b, vb, residual = c, vc, float(rc.max())
    b_rev = simplify(div(Const(1.0), b)) if exact else div(neg(a_ij), a_ji)

    witness = None
    bad = ~np.isfinite(vb) | (vb < POSITIVITY_MARGIN)
    if bad.any():
        k = int(np.argmax(bad))
        if not np.isfinite(vb[k]):
            if abs(v_ij[k]) < ZERO_TOL and abs(v_ji[k]) >= ZERO_TOL:
                reason = f"a_{i}{j} vanishes while a_{j}{i} does not"
            else:
                reason = "asymmetry undefined"
            value = None
        else:
            reason = "asymmetry not positive"
            value = float(vb[k])
        witness = {"pair": [i, j], "reason": reason, "b": value, **_point(X, T, k)}
    fin = vb[np.isfinite(vb)]
    return Pair(
        i=i, j=j, b_ij=b, b_ji=b_rev, exact=exact,
        constant=is_constant(b),
        residual=residual,
        b_min=float(fin.min()) if fin.size else float("nan"),
        b_max=float(fin.max()) if fin.size else float("nan"),
        witness=witness,
    )


def build_network(dyn: DynamicsSpec, region: Region, samples: int = DEFAULT_SAMPLES,
                  seed: int = DEFAULT_SEED) -> SignedNetwork:
    """Differentiate, sample and classify every Jacobian entry of ``dyn``."""
    if samples < 2:
        raise ValueError("samples must be >= 2")
    if region.n != dyn.n:
        raise ValueError(f"region has dimension {region.n}, model has {dyn.n}")
    n = dyn.n
    jac = tuple(tuple(differentiate(dyn.f[i], j + 1) for j in range(n)) for i in range(n))
    X, T = sample_region(region, samples, seed)
    flat = [jac[i][j] for i in range(n) for j in range(n)]
    values = evaluate_many(flat, X, T, n).reshape(len(T), n, n)

    edges: dict[tuple[int, int], Entry] = {}
    diagonal: dict[int, Entry] = {}
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            e = jac[i - 1][j - 1]
            v = values[:, i - 1, j - 1]
            structural_zero = isinstance(e, Const) and e.value == 0.0
            zero = structural_zero or bool(np.all(np.abs(v) < ZERO_TOL))
            entry = Entry(i, j, e, ZERO if zero else _sign_of(v), float(v.min()), float(v.max()))
            if i == j:
                diagonal[i] = entry
            elif not zero:
                edges[(i, j)] = entry

    pairs = {}
    for (i, j) in sorted(edges):
        if i < j and (j, i) in edges:
            pairs[(i, j)] = _asymmetry(
                i, j, jac[i - 1][j - 1], jac[j - 1][i - 1],
                values[:, i - 1, j - 1], values[:, j - 1, i - 1], X, T)
    return SignedNetwork(n, jac, edges, diagonal, pairs, region, samples, seed, X, T, values)


@dataclass(frozen=True)
class ConditionResult:
    satisfied: bool
    witnesses: tuple[dict, ...] = ()
    detail: dict = field(default_factory=dict)


def check_condition_i(net: SignedNetwork, samples: int | None = None,
                      seed: int | None = None) -> ConditionResult:
    """Reciprocal entries have opposite signs: ``b_ij >= margin`` at every sample.

    With a different ``samples``/``seed`` than the network was built with, the
    asymmetries are re-checked on the new point set.
    """
    samples = net.samples if samples is None else samples
    seed = net.seed if seed is None else seed
    pairs = net.pairs
    if (samples, seed) != (net.samples, net.seed) and pairs:
        X, T = sample_region(net.region, samples, seed)
        pairs = {}
        for (i, j), p in net.pairs.items():
            a_ij, a_ji = net.a(i, j), net.a(j, i)
            vij, vji = evaluate_many([a_ij, a_ji], X, T, net.n).T
            pairs[(i, j)] = _asymmetry(i, j, a_ij, a_ji, vij, vji, X, T)
    witnesses = []
    asym = {}
    for key, p in sorted(pairs.items()):
        asym[f"{p.i},{p.j}"] = {
            "b": str(p.b_ij), "min": p.b_min, "max": p.b_max,
            "constant": p.constant, "exact": p.exact, "residual": p.residual,
        }
        if p.witness is not None:
            witnesses.append(p.witness)
        elif p.residual > RESIDUAL_TOL:
            witnesses.append({"pair": [p.i, p.j], "reason": "asymmetry residual too large",
                              "residual": p.residual})
    return ConditionResult(not witnesses, tuple(witnesses), {"asymmetries": asym})


# ---------------------------------------------------------------------------
# Cycles


@dataclass(frozen=True)
class CycleResult:
    cycles: tuple[tuple[int, ...], ...]
    truncated: bool

    def __bool__(self) -> bool:
        return bool(self.cycles)


def _as_digraph(g) -> nx.DiGraph:
    if isinstance(g, SignedNetwork):
        return g.digraph()
    if isinstance(g, nx.DiGraph):
        return g
    d = nx.DiGraph()
    d.add_edges_from(sorted(g))
    return d


def _rotate(c: list[int]) -> tuple[int, ...]:
    k = c.index(min(c))
    return tuple(c[k:] + c[:k])


def find_long_cycles(net, cap: int = CYCLE_CAP) -> CycleResult:
    """Elementary directed cycles of length >= 3, each starting at its lowest node.

    ``net`` may be a SignedNetwork, a DiGraph, or an iterable of ``(src, dst)``
    edges. Enumeration stops after ``cap`` cycles and sets ``truncated``.
    """
    g = _as_digraph(net)
    h = nx.DiGraph()
    h.add_nodes_from(sorted(g.nodes))
    h.add_edges_from(sorted((u, v) for u, v in g.edges if u != v))
    found = []
    truncated = False
    for c in nx.simple_cycles(h):
        if len(c) < 3:
            continue
        if len(found) == cap:
            truncated = True
            break
        found.append(_rotate(list(c)))
    found.sort(key=lambda c: (len(c), c))
    return CycleResult(tuple(found), truncated)


def feedback_neighbors(net: SignedNetwork, i: int) -> frozenset[int]:
    if not 1 <= i <= net.n:
        raise ValueError(f"node {i} outside 1..{net.n}")
    return frozenset(j for j in range(1, net.n + 1)
                     if j != i and (i, j) in net.edges and (j, i) in net.edges)


# ---------------------------------------------------------------------------
# Chain decomposition


@dataclass(frozen=True)
class Chain:
    """Feedback chain: ``order[0]`` is the root, ``order[1]`` the anchor node.

    ``attach[c]`` is the existing node that ``c`` was attached to when it was
    inserted; the root has no entry.
    """

    index: int
    order: tuple[int, ...]
    attach: dict

    @property
    def label(self) -> str:
        return f"C{self.index}"

    @property
    def root(self) -> int:
        return self.order[0]

    @property
    def anchor(self) -> int:
        return self.order[1]

    @property
    def nodes(self) -> frozenset[int]:
        return frozenset(self.order)

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        """Feedback pairs in insertion order, each as ``(attach, new)``."""
        return tuple((self.attach[c], c) for c in self.order[1:])

    def path_to_root(self, node: int) -> list[int]:
        path = [node]
        while path[-1] != self.root:
            path.append(self.attach[path[-1]])
        return path


@dataclass(frozen=True)
class ChainDecomposition:
    chains: tuple[Chain, ...]
    singletons: tuple[int, ...]
    cascade: nx.DiGraph = field(compare=False)
    component: dict = field(compare=False)  # node -> vertex label

    def pair_set(self) -> set[frozenset[int]]:
        return {frozenset(p) for c in self.chains for p in c.pairs}

    def cascade_edges(self) -> list[tuple[str, str]]:
        return sorted(self.cascade.edges)

    def to_dict(self) -> dict:
        return {
            "chains": [{"label": c.label, "order": list(c.order),
                        "pairs": [list(p) for p in c.pairs]} for c in self.chains],
            "singletons": list(self.singletons),
            "cascade": [list(e) for e in self.cascade_edges()],
        }


def _pair_graph(pairs: Iterable[tuple[int, int]], n: int) -> dict[int, list[int]]:
    adj: dict[int, list[int]] = {k: [] for k in range(1, n + 1)}
    for i, j in pairs:
        adj[i].append(j)
        adj[j].append(i)
    for k in adj:
        adj[k].sort()
    return adj


def chains_from_pairs(pairs: Iterable[tuple[int, int]], n: int) -> tuple[list[Chain], list[int]]:
    """Root each pair-graph component at its lowest node and order it breadth first."""
    adj = _pair_graph(pairs, n)
    seen: set[int] = set()
    chains, singletons = [], []
    for r in range(1, n + 1):
        if r in seen:
            continue
        if not adj[r]:
            seen.add(r)
            singletons.append(r)
            continue
        order, attach = [r], {}
        seen.add(r)
        q = deque([r])
        while q:
            p = q.popleft()
            for c in adj[p]:
                if c in seen:
                    if attach.get(p) != c:
                        raise DecompositionError(
                            f"feedback pairs around node {c} close a loop", None)
                    continue
                seen.add(c)
                attach[c] = p
                order.append(c)
                q.append(c)
        chains.append(Chain(len(chains) + 1, tuple(order), attach))
    return chains, singletons


def decompose_chains(net: SignedNetwork | nx.DiGraph) -> ChainDecomposition:
    """Split the network into feedback chains and the cascade DAG between them."""
    g = _as_digraph(net)
    cyc = find_long_cycles(g, cap=1)
    if cyc.cycles:
        c = list(cyc.cycles[0])
        raise DecompositionError(f"cycle of length {len(c)} present: {c}", c)
    n = max(g.nodes, default=0)
    if isinstance(net, SignedNetwork):
        n = net.n
    pairs = sorted((u, v) for u, v in g.edges if u < v and g.has_edge(v, u))
    chains, singletons = chains_from_pairs(pairs, n)

    component = {}
    for c in chains:
        for k in c.order:
            component[k] = c.label
    for k in singletons:
        component[k] = f"x{k}"
    dag = nx.DiGraph()
    dag.add_nodes_from([c.label for c in chains] + [f"x{k}" for k in singletons])
    for u, v in sorted(g.edges):
        if u == v or g.has_edge(v, u):
            continue
        cu, cv = component[u], component[v]
        if cu == cv:
            raise DecompositionError(f"one-directional edge x{u}->x{v} inside chain {cu}", None)
        dag.add_edge(cu, cv)
    if not nx.is_directed_acyclic_graph(dag):
        loop = [e[0] for e in nx.find_cycle(dag)]
        raise DecompositionError(f"cascade graph has a cycle through {loop}", None)
    return ChainDecomposition(tuple(chains), tuple(singletons), dag, component)
