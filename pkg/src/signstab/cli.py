"""Command-line interface: ``signstab {check,verify,simulate,delay}``.

Exit status: 0 certified or completed, 1 negative verdict, 2 input or usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from signstab.delay import delay_robust_rates
from signstab.expr import ExpressionError
from signstab.graph import build_network, check_condition_i, find_long_cycles
from signstab.metric import BlockMetric, MetricError
from signstab.model import DelaySpec, Model, ModelError, Region, load_model, model_from_dict
from signstab.report import (
    delay_text,
    structural_dict,
    structural_text,
    to_json,
    verdict_text,
)
from signstab.sim import (
    contraction_rate,
    fast_asymmetry_sweep,
    integrate,
    integrate_delayed,
    sweep_csv,
    trajectory_csv,
)
from signstab.verify import VerificationError, sign_stability_verdict

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def bundled_models() -> list[str]:
    root = resources.files("signstab") / "models"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_model(source: str) -> Model:
    """Load a model file, or a bundled model by name (e.g. ``triad``)."""
    path = Path(source)
    if path.exists():
        return load_model(path)
    if source in bundled_models():
        text = (resources.files("signstab") / "models" / f"{source}.json").read_text("utf-8")
        return model_from_dict(json.loads(text))
    raise ModelError(f"no such model file: {source}")


def _floats(text: str | None, what: str) -> list[float] | None:
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{what} expects comma-separated numbers") from None
    if not vals:
        raise UsageError(f"--{what} is empty")
    return vals


def _region(args, model: Model) -> Region:
    if args.region:
        try:
            r = json.loads(args.region)
            return Region(tuple(tuple(b) for b in r["x"]), tuple(r.get("t", (0.0, 0.0))))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
            raise UsageError(f"--region: {err}") from None
    if model.region is None:
        raise UsageError("model has no region; pass --region '{\"x\": [[lo, hi], ...], \"t\": [t0, t1]}'")
    return model.region


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(args) -> Model:
    if not args.input:
        raise UsageError("--input is required")
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    return resolve_model(args.input)


def cmd_check(args) -> int:
    model = _load(args)
    region = _region(args, model)
    net = build_network(model.dyn, region, args.samples, args.seed)
    cond_i = check_condition_i(net)
    cycles = find_long_cycles(net)
    ok = cond_i.satisfied and not cycles.cycles
    if args.format == "json":
        _emit(args, to_json(structural_dict(model.name, region, args.samples, args.seed,
                                            cond_i, cycles)))
    else:
        _emit(args, structural_text(model.name, cond_i, cycles))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    model = _load(args)
    region = _region(args, model)
    metric = None
    if model.block_metrics is not None:
        metric = BlockMetric(model.dyn.modules, model.block_metrics)
    rep = sign_stability_verdict(model.dyn, region, args.samples, args.seed, block_metric=metric)
    if args.format == "text":
        _emit(args, verdict_text(rep, model.name))
    else:
        _emit(args, to_json({"model": model.name, **rep.to_dict()}))
        if args.output:
            sys.stdout.write(verdict_text(rep, model.name))
    return EXIT_OK if rep.verdict else EXIT_FAIL


def _delays(args, model: Model) -> DelaySpec | None:
    if model.delays is None:
        return None
    vals = _floats(args.delays, "delays")
    return model.delays if vals is None else model.delays.with_values(vals)


def cmd_simulate(args) -> int:
    if args.sweep:
        alphas = _floats(args.alphas, "alphas") or [0.05, 0.09]
        omegas = _floats(args.omegas, "omegas") or [0.5, 1.0, 1.1]
        x0 = _floats(args.x0, "x0") or [1.0, 0.5]
        if len(x0) != 2:
            raise UsageError("--x0 needs two values for the sweep")
        rows = fast_asymmetry_sweep(alphas, omegas, args.t_end or 2000.0, args.dt or 1e-2, x0,
                              workers=args.workers)
        if args.format == "json":
            _emit(args, to_json({"schema": 1, "rows": [r.__dict__ for r in rows]}))
        else:
            _emit(args, sweep_csv(rows))
        return EXIT_OK
    model = _load(args)
    n = model.dyn.n
    x0 = _floats(args.x0, "x0") or (list(model.history) if model.history else None)
    if x0 is None:
        raise UsageError("--x0 is required (or a 'history' entry in the model)")
    if len(x0) != n:
        raise UsageError(f"--x0 needs {n} values")
    dt = args.dt or 1e-3
    t_end = args.t_end or 10.0
    delays = _delays(args, model)
    if delays is not None:
        traj = integrate_delayed(model.dyn, delays, x0, 0.0, t_end, dt)
    else:
        traj = integrate(model.dyn, x0, 0.0, t_end, dt)
    if args.format == "json":
        _emit(args, to_json({"schema": 1, "t": traj.t, "x": traj.X,
                             "diverged": traj.diverged, "error": traj.error}))
    else:
        _emit(args, trajectory_csv(traj))
    if args.compare:
        xb = _floats(args.compare, "compare")
        if len(xb) != n:
            raise UsageError(f"--compare needs {n} values")
        other = (integrate_delayed(model.dyn, delays, xb, 0.0, t_end, dt) if delays is not None
                 else integrate(model.dyn, xb, 0.0, t_end, dt))
        est = contraction_rate(traj, other)
        sys.stderr.write(f"contraction rate {est.rate:.6g} (fit residual {est.residual:.3g})\n")
    if traj.diverged:
        sys.stderr.write(f"diverged at t={traj.t[-1]:.6g}\n")
    if traj.error:
        sys.stderr.write(f"stopped: {traj.error}\n")
        return EXIT_FAIL
    sys.stderr.write(f"final norm {float(np.linalg.norm(traj.final)):.6g}\n")
    return EXIT_OK


def cmd_delay(args) -> int:
    model = _load(args)
    if model.delays is None or not model.delays.delays:
        raise UsageError("model declares no delays; add \"delays\": [[i, j, T], ...] to the model file")
    region = _region(args, model)
    net = build_network(model.dyn, region, args.samples, args.seed)
    cert = delay_robust_rates(net, model.dyn, _delays(args, model), safety=args.safety)
    if args.format == "json":
        _emit(args, to_json({"schema": 1, "model": model.name, "delay": cert.to_dict()}))
    else:
        _emit(args, delay_text(cert, model.name))
    return EXIT_OK if cert.satisfied else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", "-i", help="model JSON file or bundled model name")
    common.add_argument("--samples", type=int, default=256, help="sample points (default 256)")
    common.add_argument("--seed", type=int, default=42, help="sampling seed (default 42)")
    common.add_argument("--region", help="region override as JSON {\"x\": [[lo, hi], ...], \"t\": [t0, t1]}")
    common.add_argument("--output", "-o", help="write the report or CSV here")
    common.add_argument("--dt", type=float, help="RK4 step")
    common.add_argument("--t-end", type=float, dest="t_end", help="end time")
    common.add_argument("--workers", type=int, default=1, help="processes for sweeps")
    common.add_argument("--delays", help="delay values (CSV) replacing those in the model")

    p = argparse.ArgumentParser(prog="signstab", description="Sign-stability analysis of networked dynamics.")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", parents=[common], help="structural conditions (i) and (iii)")
    c.add_argument("--format", choices=["json", "text"], default="text")
    v = sub.add_parser("verify", parents=[common], help="full verdict with metric certificate")
    v.add_argument("--format", choices=["json", "text"], default="json")
    s = sub.add_parser("simulate", parents=[common], help="integrate a model or run the sweep")
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.add_argument("--x0", help="initial state (CSV); also the constant history")
    s.add_argument("--compare", help="second initial state; prints the contraction rate")
    s.add_argument("--sweep", action="store_true", help="alpha/omega sweep of the fast-asymmetry example")
    s.add_argument("--alphas", help="sweep rates (CSV)")
    s.add_argument("--omegas", help="sweep frequencies (CSV)")
    d = sub.add_parser("delay", parents=[common], help="delay-independent certificate")
    d.add_argument("--format", choices=["json", "text"], default="text")
    d.add_argument("--safety", type=float, default=1.1, help="inflation of the sampled bound")
    return p


COMMANDS = {"check": cmd_check, "verify": cmd_verify, "simulate": cmd_simulate, "delay": cmd_delay}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        sys.stderr.write(f"signstab {args.command}: {err}\n")
        return EXIT_USAGE
    except (ModelError, ExpressionError, MetricError, VerificationError, OSError) as err:
        sys.stderr.write(f"signstab {args.command}: error: {err}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
