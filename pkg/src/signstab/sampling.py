"""Seeded low-discrepancy sampling of region boxes."""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc


def sample_region(region, samples: int, seed: int = 42) -> tuple[np.ndarray, np.ndarray]:
    """Scrambled Halton points over ``region.x`` x ``region.t``.

    Returns ``(X, T)`` with ``X`` of shape ``(samples, n)`` and ``T`` of shape
    ``(samples,)``. Same region, count and seed give bitwise-equal points.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    lo = np.array([b[0] for b in region.x] + [region.t[0]], dtype=float)
    hi = np.array([b[1] for b in region.x] + [region.t[1]], dtype=float)
    d = len(lo)
    unit = qmc.Halton(d=d, scramble=True, seed=np.random.default_rng(seed)).random(samples)
    pts = lo + unit * (hi - lo)
    return np.ascontiguousarray(pts[:, :-1]), np.ascontiguousarray(pts[:, -1])
