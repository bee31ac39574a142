"""Delay-independent contraction certificates.

For a feedback pair whose couplings are read with delay, the cross terms of
``V = x^T D x`` no longer cancel. Each one is bounded by a sum of squares and
the delayed squares are absorbed by integral terms, which raises every
involved node's rate requirement. For a chain with metric weights ``d`` and a
delayed pair ``{i, j}`` with coupling bound ``c = sup d_i |a_ij|`` (equal to
``sup d_j |a_ji|``), node ``i`` needs

    alpha_i > (0.5 * ddot_i + sum over its delayed pairs of s * c) / d_i

where ``s`` is a safety factor applied to the sampled bound. For two nodes
this is ``alpha_1 > (0.5 bdot_12 + Gamma) / b_12`` and ``alpha_2 > Gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from signstab.expr import is_constant
from signstab.graph import (
    POSITIVITY_MARGIN,
    SignedNetwork,
    decompose_chains,
    find_long_cycles,
)
from signstab.kernels import evaluate_many
from signstab.metric import build_chain_metric
from signstab.model import DelaySpec, DynamicsSpec

SAFETY = 1.1
OMEGA_GRID = np.concatenate(([0.0], np.logspace(-3, 3, 10_000)))


@dataclass(frozen=True)
class InteractionBound:
    gamma: float
    pairs: dict  # "i,j" -> max |a_ij| b_ij over samples
    sample_based: bool = True


def _vertices(net: SignedNetwork, limit: int = 12):
    """Corners of the region box (times both interval ends), if there are few."""
    if net.n > limit:
        return None
    box = list(net.region.x) + [net.region.t]
    grid = np.array(np.meshgrid(*[np.unique(b) for b in box], indexing="ij"))
    pts = grid.reshape(len(box), -1).T
    return np.ascontiguousarray(pts[:, :-1]), np.ascontiguousarray(pts[:, -1])


def interaction_bound(net: SignedNetwork, *, vertices: bool = True) -> InteractionBound:
    """``Gamma = max |a_ij| b_ij`` over pairs ``i < j`` (0 without pairs).

    Taken over the sample points plus, for small systems, the corners of the
    region box. Still sampled, so it can only under-estimate the supremum.
    """
    per = {}
    corners = _vertices(net) if vertices and net.pairs else None
    for (i, j) in sorted(net.pairs):
        # |a_ij| b_ij = |a_ij| (-a_ji / a_ij) = -sign(a_ij) a_ji
        vals = [-np.sign(net.values[:, i - 1, j - 1]) * net.values[:, j - 1, i - 1]]
        if corners is not None:
            A = evaluate_many([net.a(i, j), net.a(j, i)], *corners, net.n)
            vals.append(-np.sign(A[:, 0]) * A[:, 1])
        per[f"{i},{j}"] = float(max(0.0, max(float(v.max()) for v in vals)))
    return InteractionBound(max(per.values(), default=0.0), per)


@dataclass(frozen=True)
class NodeRequirement:
    node: int
    required: float  # max over samples of the threshold
    actual: float  # min over samples of alpha_i
    margin: float  # min over samples of alpha_i - threshold
    satisfied: bool
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {"node": self.node, "required": self.required, "actual": self.actual,
                "margin": self.margin, "satisfied": self.satisfied, "witness": self.witness}


@dataclass(frozen=True)
class NyquistResult:
    peak: float
    omega: float
    certified: bool

    def to_dict(self) -> dict:
        return {"peak": self.peak, "omega": self.omega, "certified": self.certified}


@dataclass(frozen=True)
class DelayCertificate:
    satisfied: bool
    gamma: float
    gamma_pairs: dict
    coupling: dict  # "i,j" -> sampled c for delayed pairs
    nodes: tuple[NodeRequirement, ...]
    safety: float
    nyquist: NyquistResult | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "gamma": self.gamma,
            "gamma_pairs": self.gamma_pairs,
            "gamma_is_sampled_lower_bound": True,
            "safety": self.safety,
            "coupling": self.coupling,
            "nodes": [r.to_dict() for r in self.nodes],
            "nyquist": None if self.nyquist is None else self.nyquist.to_dict(),
            "notes": list(self.notes),
        }


def _delayed_pairs(net: SignedNetwork, delays: DelaySpec) -> set[tuple[int, int]]:
    out = set()
    for (i, j), T in delays.delays.items():
        key = (min(i, j), max(i, j))
        if T > 0 and key in net.pairs:
            out.add(key)
    return out


def delay_robust_rates(net: SignedNetwork, dyn: DynamicsSpec, delays: DelaySpec, *,
                       safety: float = SAFETY, gamma: float | None = None,
                       margin: float = POSITIVITY_MARGIN) -> DelayCertificate:
    """Node-wise rate requirements that certify contraction for any delay values.

    ``gamma`` overrides the sampled coupling bound of every delayed pair with
    a user-supplied uniform bound on ``|a_ij| b_ij`` (then ``c = sup d_j * gamma``
    for the pair ``i < j``).
    """
    bound = interaction_bound(net)
    X, T = net.X, net.T
    m = len(T)
    delayed = _delayed_pairs(net, delays)
    notes = []
    if find_long_cycles(net).cycles:
        raise ValueError("the network has cycles of length 3 or more; no chain metric exists")
    dec = decompose_chains(net)
    weight = np.ones((m, net.n))
    wdot = np.zeros((m, net.n))
    for ch in dec.chains:
        metric = build_chain_metric(ch, net)
        idx = np.asarray(metric.order) - 1
        weight[:, idx] = metric.evaluate(X, T, net.n)
        wdot[:, idx] = metric.evaluate_derivative(dyn.f, X, T, net.n)
        if len(ch.order) > 2 and any(frozenset(p) in {frozenset(q) for q in delayed}
                                     for p in ch.pairs):
            notes.append(f"{ch.label}: chain-level delayed requirement is the node-wise "
                         "extension of the two-node bound")
    # scale-free: divide each chain's weights by their largest sampled value
    for ch in dec.chains:
        idx = np.asarray(ch.order) - 1
        c = weight[:, idx].max()
        weight[:, idx] /= c
        wdot[:, idx] /= c

    extra = np.zeros(net.n)
    coupling = {}
    for (i, j) in sorted(delayed):
        if gamma is None:
            c = float(np.max(weight[:, i - 1] * np.abs(net.values[:, i - 1, j - 1])))
        else:
            c = float(np.max(weight[:, j - 1])) * float(gamma)
        coupling[f"{i},{j}"] = c
        extra[i - 1] += safety * c
        extra[j - 1] += safety * c

    alpha = -np.stack([net.values[:, k, k] for k in range(net.n)], axis=1)
    thr = (0.5 * wdot + extra[None, :]) / weight
    gap = alpha - thr
    nodes = []
    for k in range(net.n):
        w = int(np.argmin(gap[:, k]))
        ok = bool(gap[w, k] >= margin)
        wit = None if ok else {"alpha": float(alpha[w, k]), "required": float(thr[w, k]),
                               "x": [float(v) for v in X[w]], "t": float(T[w])}
        nodes.append(NodeRequirement(k + 1, float(thr[:, k].max()), float(alpha[:, k].min()),
                                     float(gap[w, k]), ok, wit))
    for (i, j), Td in sorted(delays.delays.items()):
        key = (min(i, j), max(i, j))
        if Td > 0 and key not in net.pairs and (i, j) in net.edges:
            notes.append(f"delay on one-directional edge x{j}->x{i} does not affect the "
                         "cascade certificate")

    nyq = None
    if net.n == 2 and (1, 2) in net.pairs and _lti(net):
        a12 = float(net.values[0, 0, 1])
        b12 = float(-net.values[0, 1, 0] / a12)
        nyq = lti_nyquist_margin(-float(net.values[0, 0, 0]), -float(net.values[0, 1, 1]),
                                 a12, b12)
    return DelayCertificate(all(r.satisfied for r in nodes), bound.gamma, bound.pairs,
                            coupling, tuple(nodes), safety, nyq, tuple(notes))


def _lti(net: SignedNetwork) -> bool:
    return all(is_constant(e) for row in net.jacobian for e in row)


def two_node_thresholds(gamma: float, b12: float, bdot12: float = 0.0,
                        safety: float = 1.0) -> tuple[float, float]:
    """Rates ``alpha_1, alpha_2`` must exceed ``((0.5 bdot + s Gamma) / b, s Gamma)``."""
    g = safety * gamma
    return (0.5 * bdot12 + g) / b12, g


def lti_nyquist_margin(alpha1: float, alpha2: float, a12: float, b12: float,
                       omega_grid: Sequence[float] | None = None) -> NyquistResult:
    """Peak of ``|L(i w)| = |a12 a21| / (|i w + alpha1| |i w + alpha2|)``.

    ``a21 = -b12 a12``, so the loop gain numerator is ``b12 a12^2``. A peak
    below one certifies stability for every pair of delays.
    """
    w = OMEGA_GRID if omega_grid is None else np.asarray(omega_grid, dtype=float)
    if w.size == 0 or np.any(w < 0):
        raise ValueError("omega grid must be non-empty and non-negative")
    if 0.0 not in w:
        w = np.concatenate(([0.0], w))
    num = abs(a12 * (b12 * a12))
    mag = num / (np.abs(1j * w + alpha1) * np.abs(1j * w + alpha2))
    k = int(np.argmax(mag))
    return NyquistResult(float(mag[k]), float(w[k]), bool(mag[k] < 1.0))
