"""Fit the bias constants used by the Monte Carlo tolerances.

``c1`` (time step) comes from a weighted least-squares fit of the mean Ito
discrepancy ``D(dt) = a + c1 dt`` over ``dt`` in {4e-3, 2e-3, 1e-3} at a fixed
horizon. ``c2`` (finite n) is the exact excess of the proxy average over the
free Laplacian, evaluated at n in {50, 100, 200}.

Usage::

    python scripts/calibrate_bias.py [--out tests/fixtures/bias_constants.json] [--paths 500]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from freecontrol.cli import ito_policies
from freecontrol.freecalc import free_laplacian_mc_bias
from freecontrol.hjb import ito_check
from freecontrol.sde import SimConfig
from freecontrol.suites import ito_functions, laplacian_functions, reference_state, static

DTS = (4e-3, 2e-3, 1e-3)
NS = (50, 100, 200)
HORIZON = 0.02


def fit_c1(n: int, paths: int, seed: int) -> dict:
    funcs = ito_functions(2)
    names = list(funcs)
    Us = [static(funcs[k]) for k in names]
    x0 = reference_state(2, n, seed)
    out = {k: {} for k in names}
    for pname, pol in ito_policies(2, n, seed).items():
        rows = {k: [] for k in names}
        for dt in DTS:
            steps = int(round(HORIZON / dt))
            cfg = SimConfig(n=n, d=2, T=HORIZON, steps=steps, beta_c=1.0, beta_f=1.0, paths=paths, seed=seed)
            for r in ito_check(Us, cfg, pol, x0, names=names):
                rows[r.function].append((dt, r.difference.mean, r.difference.stderr))
        for k, data in rows.items():
            dt, y, se = map(np.array, zip(*data))
            A = np.stack([np.ones_like(dt), dt], axis=1) / se[:, None]
            coef, *_ = np.linalg.lstsq(A, y / se, rcond=None)
            cov = np.linalg.inv(A.T @ A)
            out[k][pname] = {"intercept": float(coef[0]), "c1": float(coef[1]),
                             "c1_stderr": float(np.sqrt(cov[1, 1])), "points": [list(map(float, p)) for p in data]}
    return out


def c2_table(seed: int) -> dict:
    table = {}
    suites = {**{f"ito:{k}": v for k, v in ito_functions(2).items()},
              **{f"laplacian:{k}": v for k, v in laplacian_functions(2).items()}}
    for name, U in suites.items():
        vals = [float(free_laplacian_mc_bias(U, reference_state(2, n, seed))) for n in NS]
        a = np.abs(vals)
        ratio = float(a.max() / a.min()) if a.min() > 0 else (1.0 if a.max() == 0 else float("inf"))
        table[name] = {"n": list(NS), "c2": vals, "max_ratio": ratio}
    return table


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="tests/fixtures/bias_constants.json")
    ap.add_argument("--paths", type=int, default=500)
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args(argv)

    fits = fit_c1(args.n, args.paths, args.seed)
    c1 = {k: max(abs(v["c1"]) for v in per.values()) for k, per in fits.items()}
    record = {"dt": list(DTS), "horizon": HORIZON, "n_c1": args.n, "paths": args.paths, "seed": args.seed,
              "c1": c1, "c1_fits": fits, "c2": c2_table(args.seed)}
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    for k, v in c1.items():
        print(f"c1[{k}] = {v:.4g}")
    for k, v in record["c2"].items():
        print(f"c2[{k}] = {', '.join(f'{x:.4g}' for x in v['c2'])}  (max ratio {v['max_ratio']:.3g})")


if __name__ == "__main__":
    main()
