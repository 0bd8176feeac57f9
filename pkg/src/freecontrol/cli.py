"""Command line experiment runner.

Usage::

    freecontrol run EXPERIMENT.json [--out DIR] [--threads N] [--check]
    freecontrol check EXPERIMENT.json [--out DIR] [--threads N]
    freecontrol list-experiments
    freecontrol describe KIND

Each run writes ``results.json``, CSV tables and ``manifest.json`` into the
output directory, chosen by ``--out``, then ``$FREECONTROL_OUTPUT_DIR``, then
the ``output`` field of the experiment file, then ``runs/<kind>-<seed>``.

Exit codes: 0 success, 1 failed checks in ``--check`` mode, 2 invalid
experiment file, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .control import (LQFeedbackPolicy, LQSpec, RiccatiBlowUp, eikonal_scalar_diagnostics,
                      eikonal_value, finite_n_correction, first_variation, hopf_lax, lq_cylinder,
                      lq_gradient, lq_value, solve_riccati)
from .freecalc import (CylinderFunction, HamiltonianSpec, LinearOuter, free_laplacian, free_laplacian_mc,
                       free_laplacian_mc_bias)
from .hjb import NARROWING, hjb_residual, ito_check
from .ncpoly import catalan, letters
from .randmat import (MatrixTuple, SpectralMeasure, gue_batch, gue_tuple, semicircle_quantiles,
                      spectral_measure, stream, wasserstein2_1d)
from .sde import (ConstantPolicy, SimConfig, SimulationError, ZeroPolicy, dyson_simulate, estimate_cost,
                  path_costs, quadratic_control_cost, simulate)
from .suites import ito_functions, laplacian_functions, reference_control, reference_state, static

log = logging.getLogger("freecontrol")

OUTPUT_ENV = "FREECONTROL_OUTPUT_DIR"
KINDS = ("lq", "eikonal", "vonneumann", "ito-check", "laplacian", "dyson", "gue-moments")

EXIT_OK, EXIT_CHECK, EXIT_SCHEMA, EXIT_NUMERIC = 0, 1, 2, 3


class SchemaError(ValueError):
    pass


# -- configuration ---------------------------------------------------------

def load_schema(name: str) -> dict:
    return json.loads(resources.files("freecontrol").joinpath("schemas", f"{name}.json").read_text())


def _fill_defaults(params: dict, schema: dict) -> dict:
    out = dict(params)
    for key, sub in schema.get("properties", {}).items():
        if key not in out and "default" in sub:
            out[key] = sub["default"]
        if key in out and sub.get("type") == "object" and isinstance(out[key], dict) and "properties" in sub:
            out[key] = _fill_defaults(out[key], sub)
    return out


def validate(config: dict) -> dict:
    """Validate an experiment dict and return it with defaults filled in."""
    try:
        jsonschema.validate(config, load_schema("experiment"))
        params = config.get("params", {})
        schema = load_schema(config["kind"])
        jsonschema.validate(params, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path)
        raise SchemaError(f"{where or '<root>'}: {exc.message}") from None
    out = dict(config)
    out["params"] = _fill_defaults(params, schema)
    return out


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _check(value, tolerance, passed=None, **extra) -> dict:
    value = float(value)
    tolerance = float(tolerance)
    ok = bool(abs(value) <= tolerance) if passed is None else bool(passed)
    return {"value": value, "tolerance": tolerance, "passed": ok, **extra}


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in r))
    return "\n".join(lines) + "\n"


# -- experiments -------------------------------------------------------------

def _random_state(d, n, rng, radius):
    X = gue_tuple(d, n, rng, 1.0).data
    X = X / math.sqrt(float(np.sum(np.abs(X) ** 2) / n)) * radius * rng.uniform(0.1, 1.0)
    return MatrixTuple(X)


def run_lq(p, seed, threads):
    spec = LQSpec(np.array(p["G0"], dtype=float), np.array(p["G1"], dtype=float),
                  p["beta_c"], p["beta_f"], p["T"])
    sol = solve_riccati(spec, p["riccati_steps"])
    res = {"a0_t0": sol.a0[0].tolist(), "a1_t0": sol.a1[0].tolist(), "e_t0": float(sol.e[0]),
           "closed_form_error": sol.closed_form_error()}
    checks = {"riccati_closed_form": _check(sol.closed_form_error(), 1e-8)}
    files = {"riccati.csv": sol.trajectory_csv()}

    cyl = lq_cylinder(sol)
    ham = HamiltonianSpec("quadratic-with-potential")
    worst, worst_term = 0.0, 0.0
    rows = []
    rng = stream(seed, 0, "aux")
    times = rng.uniform(0, spec.T, p["residual_times"])
    for i, t in enumerate(times):
        for k in range(p["residual_states"]):
            X = _random_state(spec.d, p["residual_n"], rng, p["state_norm"])
            r = hjb_residual(cyl, ham, spec.beta_c, spec.beta_f, float(t), X, g=spec.terminal_cost)
            worst = max(worst, abs(r.residual))
            worst_term = max(worst_term, r.terminal_error)
            rows.append((float(t), k, r.state["norm2"], r.residual))
    if rows:
        res["residual_max"] = worst
        res["terminal_error_max"] = worst_term
        checks["hjb_residual"] = _check(worst, 1e-6, samples=len(rows))
        checks["terminal_condition"] = _check(worst_term, 1e-12)
        files["lq_residuals.csv"] = _csv(["t", "state", "norm2", "residual"], rows)

    mc = p.get("mc")
    if mc:
        res["mc"] = lq_monte_carlo(sol, mc["n"], mc["paths"], mc["steps"], seed, mc["perturbations"], threads,
                                   mc["perturbation_paths"])
        m = res["mc"]
        checks["closed_loop_cost"] = _check(m["optimal"]["mean"] - m["value"], m["tolerance"])
        if mc["perturbations"]:
            worst_gap = min(c["gap"]["mean"] for c in m["perturbed"].values())
            checks["optimal_below_perturbed"] = _check(worst_gap, 0.0, passed=worst_gap >= 0,
                                                       candidates=len(m["perturbed"]))
        files["lq_policies.csv"] = _csv(["policy", "mean", "stderr", "gap", "gap_stderr"], [
            ("optimal", m["optimal"]["mean"], m["optimal"]["stderr"], 0.0, 0.0)] + [
            (k, v["mean"], v["stderr"], v["gap"]["mean"], v["gap"]["stderr"]) for k, v in sorted(m["perturbed"].items())])
    return res, checks, files


def lq_perturbations(sol, x0: MatrixTuple, seed: int) -> dict:
    """Twenty suboptimal policies: scaled and time-shifted feedback and constants."""
    T = sol.spec.T
    pols = {}
    for s in (0.5, 0.7, 0.85, 1.2, 1.4, 1.7, 2.0):
        pols[f"scaled_{s:g}"] = LQFeedbackPolicy(sol, scale=s)
    for sh in (-0.5, -0.3, -0.15, 0.15, 0.3, 0.5):
        pols[f"shifted_{sh:+g}"] = LQFeedbackPolicy(sol, shift=sh * T)
    a0 = -lq_gradient(sol, sol.times[0], x0.data)
    pols["constant_initial_feedback"] = ConstantPolicy(a0)
    pols["constant_half_feedback"] = ConstantPolicy(0.5 * a0)
    pols["zero"] = ZeroPolicy()
    for k, sc in enumerate((0.05, 0.1, 0.2, 0.4)):
        pols[f"constant_random_{k}"] = ConstantPolicy(a0 + reference_control(x0.d, x0.n, seed + k, sc).data)
    return pols


def lq_monte_carlo(sol, n, paths, steps, seed, perturbations=True, threads=1, perturbation_paths=100) -> dict:
    """Closed-loop cost of the optimal feedback, plus perturbed policies under common random numbers.

    The held-control Euler scheme overpays by ``O(dt)``, so the continuous-time
    closed-loop cost is estimated by Richardson extrapolation
    ``2 M(dt/2) - M(dt)`` from two independent runs with ``steps`` and
    ``2 steps``. Perturbed policies are compared with the optimal feedback on
    the first ``perturbation_paths`` paths of the ``steps`` run, so the paths
    share their noise.
    """
    spec = sol.spec
    x0 = reference_state(spec.d, n, seed)
    cfg = SimConfig(n=n, d=spec.d, t0=float(sol.times[0]), T=spec.T, steps=steps, beta_c=spec.beta_c,
                    beta_f=spec.beta_f, paths=paths, seed=seed, thin=steps)

    def costs(pol, c, index=None):
        b = simulate(c, "identity", pol, x0, running_cost=quadratic_control_cost, keep_final=True,
                     path_index=index, threads=threads)
        return path_costs(b, terminal_cost=spec.terminal_cost)

    def est(v):
        v = v[np.isfinite(v)]
        return {"mean": float(v.mean()), "stderr": float(v.std(ddof=1) / math.sqrt(v.size)), "samples": int(v.size)}

    value = lq_value(sol, cfg.t0, x0)
    c2 = abs(finite_n_correction(sol, cfg.t0))
    coarse = costs(LQFeedbackPolicy(sol), cfg)
    fine = costs(LQFeedbackPolicy(sol), cfg.replace(steps=2 * steps, thin=2 * steps, seed=seed + 1))
    ec, ef = est(coarse), est(fine)
    rich = {"mean": 2 * ef["mean"] - ec["mean"], "stderr": math.hypot(2 * ef["stderr"], ec["stderr"]),
            "samples": ec["samples"] + ef["samples"]}
    out = {"value": float(value), "c2": float(c2), "n": n, "dt": cfg.dt, "seed": seed,
           "optimal_coarse": ec, "optimal_fine": ef, "optimal": rich,
           "tolerance": float(3 * rich["stderr"] + c2 / n ** 2), "perturbed": {}}
    if perturbations:
        m = min(perturbation_paths, paths)
        base = coarse[:m]
        out["optimal_subset"] = est(base)
        for name, pol in lq_perturbations(sol, x0, seed).items():
            v = costs(pol, cfg.replace(paths=m))
            e = est(v)
            e["gap"] = est(v - base)
            out["perturbed"][name] = e
    return out


def run_eikonal(p, seed, threads):
    T, t = p["T"], p["t"]
    rng = stream(seed, 0, "aux")
    m = p["atoms"]
    viol, worst = 0, -np.inf
    for _ in range(p["pairs"]):
        mu = SpectralMeasure(rng.normal(rng.normal(), rng.uniform(0.1, 2.0), m))
        nu = SpectralMeasure(rng.normal(rng.normal(), rng.uniform(0.1, 2.0), m))
        bar = SpectralMeasure(rng.normal(0.0, rng.uniform(0.1, 2.0), m))
        tt = rng.uniform(t, T)
        lhs = abs(eikonal_value(tt, mu, bar, T) - eikonal_value(tt, nu, bar, T))
        rhs = wasserstein2_1d(mu, nu)
        worst = max(worst, lhs - rhs)
        if lhs > rhs + 1e-12:
            viol += 1
    mu_bar = SpectralMeasure(p["mu_bar"]) if "mu_bar" in p else SpectralMeasure(rng.normal(0, 1, m))
    g = p["x_grid"]
    xs = np.linspace(g["lo"], g["hi"], g["points"])
    rows, slope_err = [], 0.0
    h = 1e-7
    for x in xs:
        dg = eikonal_scalar_diagnostics(float(x), mu_bar)
        fd = None
        if np.min(np.abs(mu_bar.atoms - x)) > 10 * h:
            fd = (eikonal_scalar_diagnostics(x + h, mu_bar)["abs_moment"]
                  - eikonal_scalar_diagnostics(x - h, mu_bar)["abs_moment"]) / (2 * h)
            slope_err = max(slope_err, abs(fd - dg["signed_mass"]))
        rows.append((float(x), dg["abs_moment"], dg["signed_mass"], dg["w2"],
                     eikonal_value(t, SpectralMeasure.point_mass(float(x)), mu_bar, T),
                     "" if fd is None else repr(float(fd))))
    res = {"lipschitz_violations": viol, "lipschitz_worst_excess": float(worst), "pairs": p["pairs"],
           "slope_max_error": float(slope_err)}
    checks = {"lipschitz": _check(viol, 0), "slope_identity": _check(slope_err, 1e-6)}
    files = {"eikonal_scalar.csv": _csv(["x", "abs_moment", "signed_mass", "w2", "value_point_mass", "fd_slope"],
                                        rows)}
    return res, checks, files


def vonneumann_example():
    X = MatrixTuple(np.array([[[1, 0], [0, -1]], [[0, 1], [1, 0]]], dtype=complex))
    x = letters(2)
    g = CylinderFunction([(x[0] * x[1] + x[1] * x[0]) * 0.5], LinearOuter((1.0,)))
    return X, g


def random_perturbation(d, n, rng, t, T, modes=3):
    """``xi(s) = sum_m sin(pi m (s - t)/(T - t)) B_m`` with random Hermitian ``B_m``."""
    Bs = [gue_tuple(d, n, rng, 1.0).data for _ in range(modes)]

    def xi(s):
        u = (s - t) / (T - t)
        return sum(math.sin(math.pi * (m + 1) * u) * Bs[m] for m in range(modes))
    return xi


def run_vonneumann(p, seed, threads):
    X, g = vonneumann_example()
    if "X" in p:
        X = MatrixTuple.from_json(p["X"])
    if "g" in p:
        g = CylinderFunction.from_json(p["g"])
    t, T = p["t"], p["T"]
    r = hopf_lax(t, X, g, T, starts=p["starts"], seed=seed, max_iter=p["max_iter"], threads=threads)
    cfg = SimConfig(n=X.n, d=X.d, t0=t, T=T, steps=p["steps"], paths=1, seed=seed)
    b = simulate(cfg, "commutator", ConstantPolicy(r.alpha), X, running_cost=quadratic_control_cost,
                 keep_states=True, keep_final=True)
    sim_cost = estimate_cost(b, terminal_cost=g.value).mean
    rng = stream(seed, 0, "aux")
    worst = 0.0
    for _ in range(p["perturbations"]):
        fv = first_variation(t, X, g, T, r.alpha, random_perturbation(X.d, X.n, rng, t, T), steps=p["steps"])
        worst = max(worst, abs(fv["derivative"]) / fv["xi_dot_norm"])
    spec_inv = CylinderFunction([q * q for q in letters(X.d)], LinearOuter(tuple(1.0 for _ in range(X.d))))
    r0 = hopf_lax(t, X, spec_inv, T, starts=2, seed=seed, max_iter=p["max_iter"])
    res = {"value": r.value, "argmin": r.alpha.to_json(), "converged": r.converged, "grad_norm": r.grad_norm,
           "simulated_cost": float(sim_cost), "stationarity_max": float(worst),
           "spectral_invariant": {"value": r0.value, "g_at_x": float(spec_inv.value(X.data)),
                                  "alpha_max_abs": float(np.abs(r0.alpha.data).max())}}
    checks = {
        "value_vs_trajectory": _check(r.value - sim_cost, 1e-4),
        "first_variation": _check(worst, 1e-4, perturbations=p["perturbations"]),
        "spectral_invariant_alpha_zero": _check(np.abs(r0.alpha.data).max(), 0.0),
        "spectral_invariant_value": _check(r0.value - spec_inv.value(X.data), 0.0),
        "optimizer_converged": _check(r.grad_norm, 1e-6, passed=r.converged),
    }
    traj = [(float(tk), float(g.value(b.states[0, k])), float(b.running_cost_snap[0, k]))
            for k, tk in enumerate(b.times)]
    files = {"vonneumann_trajectory.csv": _csv(["t", "g_of_state", "running_cost"], traj),
             "vonneumann_starts.csv": _csv(["start", "value", "grad_norm", "iterations", "converged"], [
                 (s["start"], s["value"], s.get("grad_norm", 0.0), s.get("iterations", 0), s["converged"]) for s in r.starts])}
    return res, checks, files


def ito_policies(d, n, seed):
    spec = LQSpec(np.array([[1.0, 0.3], [0.3, 0.5]]), np.array([[0.2, 0.0], [0.0, 0.1]]), 0.5, 0.5, 1.0)
    sol = solve_riccati(spec, 1000)
    return {"zero": ZeroPolicy(),
            "constant": ConstantPolicy(reference_control(d, n, seed)),
            "lq-feedback": LQFeedbackPolicy(sol)}


def run_ito(p, seed, threads, c1_table=None):
    n, d = p["n"], 2
    funcs = ito_functions(d)
    names = list(p["functions"])
    Us = [static(funcs[k]) for k in names]
    x0 = reference_state(d, n, seed)
    pols = ito_policies(d, n, seed)
    rows, res, checks = [], {}, {}
    for bc, bf in p["noise"]:
        for pname in p["policies"]:
            cfg = SimConfig(n=n, d=d, t0=0.0, T=p["steps"] * p["dt"], steps=p["steps"], beta_c=bc, beta_f=bf,
                            paths=p["paths"], seed=seed)
            c1 = [p["c1"] if c1_table is None else c1_table.get(k, p["c1"]) for k in names]
            reps = ito_check(Us, cfg, pols[pname], x0, names=names, c1=c1, threads=threads)
            for r in reps:
                key = f"{r.function}|{pname}|bc={bc:g}|bf={bf:g}"
                res[key] = {"lhs": r.lhs.mean, "rhs": r.rhs.mean, "difference": r.difference.mean,
                            "stderr": r.difference.stderr, "bias_allowance": r.bias_allowance, "c2": r.c2}
                checks[key] = _check(r.difference.mean, r.tolerance)
                rows.append((r.function, pname, bc, bf, r.lhs.mean, r.rhs.mean, r.difference.mean,
                             r.difference.stderr, r.bias_allowance, int(r.passed)))
    files = {"ito.csv": _csv(["function", "policy", "beta_c", "beta_f", "lhs", "rhs", "difference", "stderr",
                              "bias_allowance", "passed"], rows)}
    res["narrowing"] = NARROWING
    return res, checks, files


def laplacian_study(ns, samples, names, seed):
    funcs = laplacian_functions(2)
    names = list(names) if names else list(funcs)
    rows, out = [], {}
    for name in names:
        U = funcs[name]
        per_n = []
        for n in ns:
            X = reference_state(2, n, seed)
            exact = float(free_laplacian(U, X))
            mc = free_laplacian_mc(U, X, samples, stream(seed, n, "proxy"))
            c2 = float(free_laplacian_mc_bias(U, X))
            fitted = (mc.mean - exact) * n ** 2
            ok = abs(mc.mean - exact) <= 3 * mc.stderr + abs(c2) / n ** 2
            per_n.append({"n": n, "exact": exact, "mc": mc.mean, "stderr": mc.stderr, "c2": c2,
                          "c2_fitted": fitted, "passed": bool(ok)})
            rows.append((name, n, exact, mc.mean, mc.stderr, c2, fitted, int(ok)))
        c2s = np.array([abs(r["c2"]) for r in per_n])
        stable = bool(c2s.max() <= 1e-12 or (c2s.min() > 0 and c2s.max() / c2s.min() <= 2.0))
        out[name] = {"per_n": per_n, "c2_stable": stable}
    return out, rows


def run_laplacian(p, seed, threads):
    out, rows = laplacian_study(p["n"], p["samples"], p.get("functions"), seed)
    unknown = set(p.get("functions") or ()) - set(laplacian_functions(2))
    if unknown:
        raise SchemaError(f"params/functions: unknown {sorted(unknown)}")
    checks = {}
    for name, r in out.items():
        for e in r["per_n"]:
            checks[f"{name}|n={e['n']}"] = _check(e["mc"] - e["exact"], 3 * e["stderr"] + abs(e["c2"]) / e["n"] ** 2)
        checks[f"{name}|c2_stable"] = _check(0.0, 0.0, passed=r["c2_stable"])
    files = {"laplacian.csv": _csv(["function", "n", "exact", "mc", "stderr", "c2", "c2_fitted", "passed"], rows)}
    return out, checks, files


def dyson_comparison(n, T, steps, beta_c, beta_f, seed, start="zero"):
    atoms = np.zeros(n) if start == "zero" else semicircle_quantiles(n, 2.0).atoms
    cfg = SimConfig(n=n, d=1, T=T, steps=steps, beta_c=beta_c, beta_f=beta_f, paths=1, seed=seed)
    dy = dyson_simulate(cfg, SpectralMeasure(atoms))
    if dy.failed:
        raise SimulationError(dy.failed[0])
    x0 = MatrixTuple(np.diag(atoms).astype(complex)[None])
    b = simulate(cfg, "identity", ZeroPolicy(), x0, keep_final=True)
    lam_p = dy.measure(0, -1)
    lam_m = spectral_measure(b.final[0, 0])
    shift = float(beta_c * b.common_increments[0].sum())
    w = wasserstein2_1d(lam_p, lam_m)
    # sampling scale: distance of one matrix sample from its deterministic limit
    ref = semicircle_quantiles(n, 2.0 * beta_f * math.sqrt(T)).atoms + shift if start == "zero" else None
    mc = wasserstein2_1d(lam_m, SpectralMeasure(ref)) if ref is not None else 0.0
    common_gap = float(np.abs(dy.common_increments[0] - b.common_increments[0]).max())
    return {"w2": w, "mc_error": mc, "common_noise_max_diff": common_gap, "substeps": int(dy.substeps[0]),
            "particles": lam_p.atoms, "matrix": lam_m.atoms}


def run_dyson(p, seed, threads):
    r = dyson_comparison(p["n"], p["T"], p["steps"], p["beta_c"], p["beta_f"], seed, p["start"])
    res = {k: v for k, v in r.items() if k not in ("particles", "matrix")}
    checks = {"w2_particles_vs_matrix": _check(r["w2"], 0.05 + r["mc_error"]),
              "matched_common_noise": _check(r["common_noise_max_diff"], 0.0)}
    files = {"dyson.csv": _csv(["index", "particle", "matrix"],
                               [(i, a, b) for i, (a, b) in enumerate(zip(r["particles"], r["matrix"]))])}
    return res, checks, files


def gue_moment_table(n, samples, kmax, seed, batch=50):
    rng = stream(seed, 0, "aux")
    acc = []
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        lam = np.linalg.eigvalsh(gue_batch(n, 1.0, rng, m))
        acc.append(np.stack([np.mean(lam ** (2 * k), axis=-1) for k in range(kmax + 1)], axis=-1))
        done += m
    vals = np.concatenate(acc)
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(samples)
    return [{"k": k, "mean": float(mean[k]), "stderr": float(se[k]), "catalan": catalan(k)} for k in range(kmax + 1)]


def run_gue(p, seed, threads):
    n = p["n"]
    table = gue_moment_table(n, p["samples"], p["kmax"], seed)
    checks = {f"k={r['k']}": _check(r["mean"] - r["catalan"], 3 * r["stderr"] + 5.0 / n) for r in table}
    files = {"gue_moments.csv": _csv(["k", "mean", "stderr", "catalan"],
                                     [(r["k"], r["mean"], r["stderr"], r["catalan"]) for r in table])}
    return {"table": table}, checks, files


RUNNERS = {"lq": run_lq, "eikonal": run_eikonal, "vonneumann": run_vonneumann, "ito-check": run_ito,
           "laplacian": run_laplacian, "dyson": run_dyson, "gue-moments": run_gue}


# -- driver ----------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def execute(config: dict, out_dir: Path, threads: int = 1) -> dict:
    """Run a validated experiment and write its artifacts; returns the results record."""
    kind, seed = config["kind"], int(config["seed"])
    res, checks, files = RUNNERS[kind](config["params"], seed, threads)
    record = {"kind": kind, "version": __version__, "seed": seed, "params": config["params"],
              "results": res, "checks": checks, "passed": all(c["passed"] for c in checks.values())}
    out_dir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n"
    (out_dir / "results.json").write_text(text)
    hashes = {"results.json": hashlib.sha256(text.encode()).hexdigest()}
    for name, body in sorted(files.items()):
        (out_dir / name).write_text(body)
        hashes[name] = hashlib.sha256(body.encode()).hexdigest()
    manifest = {"version": __version__, "kind": kind, "seed": seed, "config_hash": config_hash(config),
                "files": hashes}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return record


def _output_dir(args, config) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    if config.get("output"):
        return Path(config["output"])
    return Path("runs") / f"{config['kind']}-{config['seed']}"


def _cmd_run(args, check_mode) -> int:
    try:
        raw = json.loads(Path(args.experiment).read_text())
        config = validate(raw)
    except (OSError, json.JSONDecodeError, SchemaError) as exc:
        print(f"error: invalid experiment file: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    out = _output_dir(args, config)
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            record = execute(config, out, args.threads)
    except SchemaError as exc:
        print(f"error: invalid experiment file: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (RiccatiBlowUp, SimulationError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    failed = [k for k, c in record["checks"].items() if not c["passed"]]
    print(f"{config['kind']}: {len(record['checks']) - len(failed)}/{len(record['checks'])} checks passed; "
          f"results in {out}")
    for k in failed:
        c = record["checks"][k]
        print(f"  FAIL {k}: value {c['value']:.3e} tolerance {c['tolerance']:.3e}")
    if check_mode and failed:
        return EXIT_CHECK
    return EXIT_OK


def _cmd_list(args) -> int:
    for k in KINDS:
        print(f"{k:12s} {load_schema(k)['description']}")
    return EXIT_OK


def _cmd_describe(args) -> int:
    if args.kind not in KINDS:
        print(f"error: unknown kind {args.kind!r}; choose from {', '.join(KINDS)}", file=sys.stderr)
        return EXIT_SCHEMA
    s = load_schema(args.kind)
    print(s["description"])
    print("parameters:")
    for name, sub in s["properties"].items():
        req = " (required)" if name in s.get("required", []) else ""
        default = f" default={json.dumps(sub['default'])}" if "default" in sub else ""
        print(f"  {name}: {sub.get('type', 'enum' if 'enum' in sub else 'object')}{default}{req}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freecontrol", description="Free stochastic control experiments.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, hlp in (("run", "run an experiment file"), ("check", "run and fail (exit 1) on any failed check")):
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("experiment", help="path to the experiment JSON file")
        sp.add_argument("--out", help=f"output directory (overrides ${OUTPUT_ENV} and the file's 'output')")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (results do not depend on this)")
        if name == "run":
            sp.add_argument("--check", action="store_true", help="exit 1 if any acceptance check fails")
    sub.add_parser("list-experiments", help="list experiment kinds")
    sp = sub.add_parser("describe", help="show the parameters of one experiment kind")
    sp.add_argument("kind")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return _cmd_run(args, args.check)
    if args.command == "check":
        return _cmd_run(args, True)
    if args.command == "list-experiments":
        return _cmd_list(args)
    return _cmd_describe(args)


if __name__ == "__main__":
    sys.exit(main())
