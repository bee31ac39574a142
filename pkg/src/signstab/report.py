"""JSON and text rendering of analysis results.

JSON output is deterministic: keys keep insertion order, floats use ``repr``
and non-finite floats become the strings ``"nan"``, ``"inf"``, ``"-inf"``.
"""

from __future__ import annotations

import json
import math

import numpy as np

from signstab.verify import SCHEMA, StabilityReport


def clean(obj):
    """Recursively convert to JSON-safe builtins."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def to_json(obj) -> str:
    return json.dumps(clean(obj), indent=2, allow_nan=False) + "\n"


def _yes(ok) -> str:
    return "satisfied" if ok else "violated"


def structural_text(name: str, cond_i, cycles) -> str:
    lines = [f"model: {name}" if name else "model: (unnamed)"]
    lines.append(f"condition (i)   reciprocal signs opposite: {_yes(cond_i.satisfied)}")
    for key, a in cond_i.detail.get("asymmetries", {}).items():
        lines.append(f"  b{key.replace(',', '')} = {a['b']}  range [{a['min']:.6g}, {a['max']:.6g}]")
    for w in cond_i.witnesses:
        lines.append(f"  witness pair {w['pair']}: {w['reason']} at x={w.get('x')} t={w.get('t')}")
    lines.append(f"condition (iii) no cycles of length >= 3: {_yes(not cycles.cycles)}")
    for c in cycles.cycles:
        lines.append("  cycle " + " -> ".join(f"x{k}" for k in c + (c[0],)))
    if cycles.truncated:
        lines.append("  (cycle list truncated)")
    if cond_i.satisfied and not cycles.cycles:
        lines.append("sign pattern admissible")
    else:
        lines.append("sign pattern not admissible")
    return "\n".join(lines) + "\n"


def verdict_text(rep: StabilityReport, name: str = "") -> str:
    d = rep.to_dict()
    lines = [f"model: {name or '(unnamed)'}",
             f"region: x={d['sampling']['region']['x']} t={d['sampling']['region']['t']}",
             f"samples: {rep.samples}  seed: {rep.seed}"]
    c = d["conditions"]
    lines.append(f"condition (i):   {_yes(c['i']['satisfied'])}")
    for w in c["i"]["witnesses"]:
        lines.append(f"  witness {w}")
    if c["ii"] is not None:
        lines.append(f"condition (ii):  {_yes(c['ii']['satisfied'])}")
        for m in c["ii"]["nodes"]:
            lines.append(f"  x{m['node']}: worst margin {m['margin']:.6g}"
                         + ("" if m["satisfied"] else f"  witness {m['witness']}"))
    lines.append(f"condition (iii): {_yes(c['iii']['satisfied'])}")
    for cyc in c["iii"]["cycles"]:
        lines.append("  cycle " + " -> ".join(f"x{k}" for k in cyc + cyc[:1]))
    if rep.constant_shortcut:
        lines.append("constant asymmetries: shortcut alpha_i > 0 applies")
    for label, m in d["metrics"].items():
        ws = ", ".join(f"d{k}={v['weight']}" for k, v in m.items())
        lmi = d["lmi"][label]
        lines.append(f"{label}: D = diag({ws}); max eig of L = {lmi['max_eig']:.6g}")
    if d.get("modules"):
        mod = d["modules"]
        lines.append(f"modules: compatibility {_yes(mod['compatibility']['satisfied'])}")
    lines.append(f"certificate: {d['certificate']}")
    for note in rep.notes:
        lines.append(f"note: {note}")
    lines.append(f"verdict: {d['verdict']}")
    return "\n".join(lines) + "\n"


def structural_dict(name: str, region, samples: int, seed: int, cond_i, cycles) -> dict:
    return {
        "schema": SCHEMA,
        "model": name,
        "sampling": {"region": region.to_dict(), "samples": samples, "seed": seed},
        "condition_i": {"satisfied": cond_i.satisfied, "witnesses": list(cond_i.witnesses),
                        **cond_i.detail},
        "condition_iii": {"satisfied": not cycles.cycles,
                          "cycles": [list(c) for c in cycles.cycles],
                          "truncated": cycles.truncated},
        "admissible": cond_i.satisfied and not cycles.cycles,
    }


def delay_text(cert, name: str = "") -> str:
    lines = [f"model: {name or '(unnamed)'}",
             f"Gamma (sampled): {cert.gamma:.6g}  safety factor {cert.safety}"]
    for r in cert.nodes:
        lines.append(f"  x{r.node}: rate {r.actual:.6g} vs required {r.required:.6g}  "
                     f"{_yes(r.satisfied)}")
    if cert.nyquist is not None:
        ny = cert.nyquist
        lines.append(f"LTI loop gain peak {ny.peak:.6g} at w={ny.omega:.6g}: "
                     f"{'certified' if ny.certified else 'not certified'}")
    for note in cert.notes:
        lines.append(f"note: {note}")
    lines.append("delay-independent certificate: " + ("yes" if cert.satisfied else "no"))
    return "\n".join(lines) + "\n"
