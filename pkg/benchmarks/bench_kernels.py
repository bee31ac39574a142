"""Compare the compiled and pure-Python kernel backends.

Times batch Jacobian evaluation on a random chain and a long RK4 run of the
periodic-asymmetry system, checks the backends agree bitwise, and prints a
small table. Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import time

import numpy as np

from signstab import kernels
from signstab.generators import random_chain
from signstab.graph import build_network
from signstab.model import Region
from signstab.sampling import sample_region
from signstab.sim import fast_asymmetry_system, integrate


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def jacobian_case(samples):
    ch = random_chain(np.random.default_rng(1), n=8, time_varying=True)
    region = Region.box(ch.n, -1, 1, (0, 10))
    net = build_network(ch.dyn, region, 4)
    exprs = [e for row in net.jacobian for e in row]
    X, T = sample_region(region, samples, seed=3)
    return lambda backend: kernels.evaluate_many(exprs, X, T, ch.n, backend=backend)


def rk4_case(t_end, dt):
    dyn = fast_asymmetry_system(0.05, 1.0)
    return lambda backend: integrate(dyn, [1.0, 0.5], 0.0, t_end, dt, backend=backend).X


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--samples", type=int, default=20000)
    ap.add_argument("--t-end", type=float, default=200.0)
    args = ap.parse_args(argv)

    backends = sorted(kernels.available_backends())
    cases = {
        f"jacobian 8x8 at {args.samples} samples": jacobian_case(args.samples),
        f"rk4 periodic system, {int(args.t_end / 1e-2)} steps": rk4_case(args.t_end, 1e-2),
    }
    print(f"{'case':<40} " + " ".join(f"{b:>10}" for b in backends) + "   speedup  bitwise")
    for name, fn in cases.items():
        timings, outs = {}, {}
        for b in backends:
            timings[b], outs[b] = best_of(lambda: fn(b), args.repeat)
        same = all(np.array_equal(outs[backends[0]], outs[b]) for b in backends)
        speed = (timings["python"] / timings["cython"]) if "cython" in timings else float("nan")
        cols = " ".join(f"{timings[b]:>9.4f}s" for b in backends)
        print(f"{name:<40} {cols}   {speed:7.1f}x  {'yes' if same else 'NO'}")


if __name__ == "__main__":
    main()
