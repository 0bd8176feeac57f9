"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is timed under both backends on the same inputs, and the outputs
are checked for agreement before any timing is reported. A short end-to-end
simulation is timed too, since that is where the kernels are used.
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from freecontrol import kernels
from freecontrol.sde import SimConfig, ZeroPolicy, simulate


def cases(rng):
    n = 100
    z = rng.standard_normal((64, n * n))
    a = rng.normal(size=(64, n, n)) + 1j * rng.normal(size=(64, n, n))
    b = rng.normal(size=(64, n, n)) + 1j * rng.normal(size=(64, n, n))
    lam = np.sort(rng.normal(size=(1, 400)), axis=1)
    cfg = SimConfig(n=50, d=2, T=0.05, steps=10, beta_c=0.5, beta_f=1.0, paths=64, seed=0)
    x0 = np.zeros((2, 50, 50))
    return {
        "hermitian_from_normals (64 x n=100)": lambda: kernels.hermitian_from_normals(z, n, 0.01),
        "trace_prod (64 x n=100)": lambda: kernels.trace_prod(a, b),
        "dyson_repulsion (n=400)": lambda: kernels.dyson_repulsion(lam),
        "simulate (64 paths, n=50, d=2, 10 steps)": lambda: simulate(cfg, "identity", ZeroPolicy(), x0,
                                                                     keep_final=True).final,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the timings to this file")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    jobs = cases(rng)
    before = kernels.BACKEND
    rows = []
    try:
        for name, fn in jobs.items():
            out, best = {}, {}
            for backend in ("python", "cython"):
                kernels.use_backend(backend)
                out[backend] = fn()
                best[backend] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            ref, got = out["python"], out["cython"]
            if isinstance(ref, tuple):
                agree = all(np.allclose(np.asarray(x), np.asarray(y), rtol=1e-10) for x, y in zip(ref, got))
            else:
                agree = np.allclose(np.asarray(ref), np.asarray(got), rtol=1e-10)
            rows.append({"kernel": name, "python_s": best["python"], "cython_s": best["cython"],
                         "speedup": best["python"] / best["cython"], "outputs_agree": bool(agree)})
    finally:
        kernels.use_backend(before)

    width = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':{width}s}  {'python [ms]':>12s}  {'cython [ms]':>12s}  {'speedup':>8s}  agree")
    for r in rows:
        print(f"{r['kernel']:{width}s}  {1e3 * r['python_s']:12.3f}  {1e3 * r['cython_s']:12.3f}  "
              f"{r['speedup']:8.2f}  {r['outputs_agree']}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r["outputs_agree"] for r in rows) else 1


if __name__ == "__main__":
    raise SystemExit(main())
