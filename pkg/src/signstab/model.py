"""Dynamics specifications, regions, delays, and the JSON model file.

Model file layout (UTF-8 JSON)::

    {
      "n": 3,
      "f": ["-x1 - x1*x2", "x1^2 - x2 - x2*x3", "x2^2 - x3"],
      "region": {"x": [[-0.9, 3], [-0.9, 3], [-0.9, 3]], "t": [0, 10]},
      "modules": [[1], [2, 3]],            # optional partition
      "block_metrics": [[[1]], [[1, 0], [0, 1]]],   # optional, one per module
      "delays": [[1, 2, 5.0], [2, 1, 5.0]],  # optional: x2 in f1 read at t-5 ...
      "history": [1.0, 0.5],                # optional constant history / x0
      "name": "triad"                       # optional
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from signstab.expr import Expr, parse_expression


class ModelError(ValueError):
    """Invalid model file or specification."""


@dataclass(frozen=True)
class Region:
    x: tuple[tuple[float, float], ...]
    t: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        xs = tuple((float(lo), float(hi)) for lo, hi in self.x)
        t = (float(self.t[0]), float(self.t[1]))
        for k, (lo, hi) in enumerate(xs, start=1):
            if not lo <= hi:
                raise ModelError(f"region bound for x{k} has lo > hi")
        if not t[0] <= t[1]:
            raise ModelError("region time interval has t0 > t1")
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return len(self.x)

    @classmethod
    def box(cls, n: int, lo: float, hi: float, t: tuple[float, float] = (0.0, 0.0)) -> "Region":
        return cls(tuple((lo, hi) for _ in range(n)), t)

    def contains(self, xs, t=None) -> bool:
        ok = all(lo <= v <= hi for v, (lo, hi) in zip(xs, self.x))
        return ok and (t is None or self.t[0] <= t <= self.t[1])

    def to_dict(self) -> dict:
        return {"x": [list(b) for b in self.x], "t": list(self.t)}


@dataclass(frozen=True)
class DynamicsSpec:
    n: int
    f: tuple[Expr, ...]
    modules: tuple[tuple[int, ...], ...] | None = None
    source: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("n must be a positive integer")
        if len(self.f) != self.n:
            raise ModelError(f"expected {self.n} expressions, got {len(self.f)}")
        object.__setattr__(self, "f", tuple(self.f))
        if self.modules is not None:
            blocks = tuple(tuple(int(i) for i in b) for b in self.modules)
            seen = [i for b in blocks for i in b]
            if any(len(b) == 0 for b in blocks):
                raise ModelError("module blocks must be nonempty")
            if sorted(seen) != list(range(1, self.n + 1)):
                raise ModelError("module blocks must be disjoint and cover 1..n")
            object.__setattr__(self, "modules", blocks)

    @classmethod
    def from_strings(cls, f: Sequence[str], modules=None) -> "DynamicsSpec":
        n = len(f)
        return cls(n, tuple(parse_expression(s, n) for s in f), modules, tuple(f))

    @property
    def has_blocks(self) -> bool:
        return self.modules is not None and any(len(b) > 1 for b in self.modules)


@dataclass(frozen=True)
class DelaySpec:
    """Per-edge constant delays: ``delays[(i, j)] = T`` reads ``x_j`` in ``f_i``
    at ``t - T``. History is the constant vector ``history`` on ``[t0 - max T, t0]``.
    """

    delays: dict = field(default_factory=dict)
    history: tuple[float, ...] | None = None

    def __post_init__(self):
        clean = {}
        for (i, j), T in self.delays.items():
            T = float(T)
            if T < 0 or not np.isfinite(T):
                raise ModelError(f"delay on edge x{j}->x{i} must be finite and >= 0")
            if i == j:
                raise ModelError("self-delays are not supported")
            clean[(int(i), int(j))] = T
        object.__setattr__(self, "delays", clean)
        if self.history is not None:
            object.__setattr__(self, "history", tuple(float(v) for v in self.history))

    @property
    def max_delay(self) -> float:
        return max(self.delays.values(), default=0.0)

    def with_values(self, values: Sequence[float]) -> "DelaySpec":
        """Replace delay values in declaration order (one value broadcasts)."""
        keys = list(self.delays)
        if len(values) == 1:
            values = list(values) * len(keys)
        if len(values) != len(keys):
            raise ModelError(f"expected {len(keys)} delay values, got {len(values)}")
        return DelaySpec(dict(zip(keys, values)), self.history)


@dataclass(frozen=True)
class Model:
    dyn: DynamicsSpec
    region: Region | None = None
    delays: DelaySpec | None = None
    block_metrics: tuple[np.ndarray, ...] | None = None
    history: tuple[float, ...] | None = None
    name: str = ""


def model_from_dict(data: dict) -> Model:
    if not isinstance(data, dict):
        raise ModelError("model must be a JSON object")
    try:
        n = data["n"]
        f = data["f"]
    except KeyError as err:
        raise ModelError(f"missing field {err.args[0]!r}") from None
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ModelError("'n' must be a positive integer")
    if not isinstance(f, list) or not all(isinstance(s, str) for s in f):
        raise ModelError("'f' must be a list of expression strings")
    if len(f) != n:
        raise ModelError(f"'f' has {len(f)} entries, expected {n}")
    exprs = tuple(parse_expression(s, n) for s in f)
    dyn = DynamicsSpec(n, exprs, data.get("modules"), tuple(f))

    region = None
    if "region" in data:
        r = data["region"]
        try:
            xs = r["x"]
            if len(xs) != n:
                raise ModelError(f"region.x has {len(xs)} intervals, expected {n}")
            region = Region(tuple(tuple(b) for b in xs), tuple(r.get("t", (0.0, 0.0))))
        except (KeyError, TypeError, ValueError) as err:
            if isinstance(err, ModelError):
                raise
            raise ModelError(f"malformed region: {err}") from None

    history = None
    if "history" in data:
        history = tuple(float(v) for v in data["history"])
        if len(history) != n:
            raise ModelError("history must have n entries")

    delays = None
    if data.get("delays"):
        try:
            entries = {(int(i), int(j)): float(T) for i, j, T in data["delays"]}
        except (TypeError, ValueError):
            raise ModelError("delays must be a list of [i, j, T] triples") from None
        for (i, j) in entries:
            if not (1 <= i <= n and 1 <= j <= n):
                raise ModelError(f"delay edge ({i}, {j}) out of range")
        delays = DelaySpec(entries, history)

    metrics = None
    if "block_metrics" in data:
        if dyn.modules is None:
            raise ModelError("block_metrics requires a module partition")
        raw = data["block_metrics"]
        if len(raw) != len(dyn.modules):
            raise ModelError("one block metric per module is required")
        mats = []
        for blk, m in zip(dyn.modules, raw):
            M = np.asarray(m, dtype=float)
            if M.shape != (len(blk), len(blk)):
                raise ModelError(f"block metric for module {list(blk)} has shape {M.shape}")
            mats.append(M)
        metrics = tuple(mats)

    return Model(dyn, region, delays, metrics, history, str(data.get("name", "")))


def load_model(path) -> Model:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ModelError(f"cannot read {path}: {err}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ModelError(f"invalid JSON in {path}: {err}") from None
    return model_from_dict(data)
