"""Random feedback-chain systems for property tests and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from signstab.model import DynamicsSpec


@dataclass(frozen=True)
class GeneratedChain:
    dyn: DynamicsSpec
    pairs: frozenset  # frozensets {i, j}
    alphas: tuple[float, ...]
    asym: dict  # (i, j) -> b_ij for both orientations
    coupling: dict  # (i, j) -> constant part of a_ij
    time_factor: str | None

    @property
    def n(self) -> int:
        return self.dyn.n


def random_tree_pairs(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Random spanning tree on ``1..n``: each new node attaches to one earlier node."""
    perm = [int(v) + 1 for v in rng.permutation(n)]
    out = []
    for k in range(1, n):
        p = perm[int(rng.integers(0, k))]
        out.append((p, perm[k]))
    return out


def _term(coef: float, var: int, factor: str | None) -> str:
    s = f"({coef!r})*x{var}"
    return f"{s}*({factor})" if factor else s


def chain_system(n: int, pairs, alphas, asym, coupling, factor: str | None = None,
                 extra_edges=()) -> DynamicsSpec:
    """Linear-in-state dynamics ``f_i = -alpha_i x_i + sum_j a_ij x_j``.

    ``extra_edges`` lists ``(src, dst, weight)`` one-directional couplings.
    """
    terms = {i: [f"-({float(alphas[i - 1])!r})*x{i}"] for i in range(1, n + 1)}
    for (i, j), a in sorted(coupling.items()):
        terms[i].append(_term(a, j, factor))
    for src, dst, w in extra_edges:
        terms[dst].append(f"({float(w)!r})*x{src}")
    return DynamicsSpec.from_strings([" + ".join(terms[i]) for i in range(1, n + 1)])


def random_chain(rng: np.random.Generator, n: int | None = None, *, n_max: int = 8,
                 time_varying: bool = False) -> GeneratedChain:
    """Random feedback chain with constant asymmetries.

    Rates ``alpha_i`` in [0.1, 5], asymmetries in [0.1, 10], coupling
    magnitudes in [0.5, 3] with random sign. ``time_varying`` multiplies both
    entries of each pair by ``1.2 + sin(t)``, which leaves ``b`` constant.
    """
    if n is None:
        n = int(rng.integers(2, n_max + 1))
    pairs = random_tree_pairs(n, rng)
    alphas = tuple(float(v) for v in rng.uniform(0.1, 5.0, n))
    asym, coupling = {}, {}
    for p, c in pairs:
        k = float(rng.uniform(0.5, 3.0)) * (1.0 if rng.random() < 0.5 else -1.0)
        b = float(rng.uniform(0.1, 10.0))
        # a_pc = k, a_cp = -b_pc * a_pc with b_pc = -a_cp / a_pc
        coupling[(p, c)] = k
        coupling[(c, p)] = -b * k
        asym[(p, c)] = b
        asym[(c, p)] = 1.0 / b
    factor = "1.2 + sin(t)" if time_varying else None
    dyn = chain_system(n, pairs, alphas, asym, coupling, factor)
    return GeneratedChain(dyn, frozenset(frozenset(p) for p in pairs), alphas, asym,
                          coupling, factor)
