"""Verification harness: HJB residual, Monte Carlo Ito identity and dynamic programming.

All checks run on finite matrix representations ``M_n(C)^d``; the supremum
over every tracial representation that defines the limiting objects is
narrowed to this surrogate, and every report carries that caveat in its
``narrowing`` field.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .freecalc import (HamiltonianSpec, MCEstimate, TimeCylinder, common_laplacian, drift as drift_of,
                       free_laplacian, free_laplacian_mc_bias, grad, hamiltonian)
from .freecalc import _StaticTimeCylinder as _Static
from .ncpoly import WordEvaluator, as_stack
from .randmat import MatrixTuple, inner
from .sde import ControlPolicy, SimConfig, simulate

NARROWING = ("finite-n matrix representation only: suprema over all tracial "
             "representations are narrowed to M_n(C)^d")


def _descriptor(X) -> dict:
    X = as_stack(X)
    return {"d": int(X.shape[-3]), "n": int(X.shape[-1]), "norm2": float(np.sqrt(inner(X, X)))}


# -- HJB residual ---------------------------------------------------------

@dataclass
class ResidualReport:
    t: float
    state: dict
    dt_u: float
    hamiltonian: float
    delta: float
    theta: float
    beta_c: float
    beta_f: float
    residual: float
    tolerance: float
    terminal_error: float | None = None
    narrowing: str = NARROWING

    @staticmethod
    def combine(dt_u, ham, delta, theta, beta_c, beta_f) -> float:
        return -dt_u + ham - 0.5 * beta_c ** 2 * delta - 0.5 * beta_f ** 2 * theta

    def recompute(self) -> float:
        return self.combine(self.dt_u, self.hamiltonian, self.delta, self.theta, self.beta_c, self.beta_f)

    @property
    def passed(self) -> bool:
        ok = abs(self.residual) <= self.tolerance
        if self.terminal_error is not None:
            ok = ok and self.terminal_error <= self.tolerance
        return ok

    def to_json(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def hjb_residual(U: TimeCylinder, spec: HamiltonianSpec, beta_c: float, beta_f: float, t: float, X,
                 g: Callable | None = None, tolerance: float = 1e-6) -> ResidualReport:
    """``-d_t U + H(X, -grad U) - (beta_C^2/2) Delta U - (beta_F^2/2) Theta U`` at ``(t, X)``.

    When ``g`` is given, ``|U(T, X) - g(X)|`` at the last time node of ``U``
    is reported as ``terminal_error``.
    """
    X = as_stack(X)
    if X.ndim != 3:
        raise ValueError("hjb_residual takes a single tuple")
    Ut = U.at(t)
    dtu = float(U.time_derivative(t, X))
    P = -grad(Ut, X)
    ham = float(hamiltonian(spec, X, P))
    delta = float(common_laplacian(Ut, X))
    theta = float(free_laplacian(Ut, X))
    res = ResidualReport.combine(dtu, ham, delta, theta, beta_c, beta_f)
    term = None
    if g is not None:
        T = float(U.times[-1])
        term = float(abs(U.value(T, X) - g(X)))
    return ResidualReport(float(t), _descriptor(X), dtu, ham, delta, theta, float(beta_c), float(beta_f),
                          float(res), float(tolerance), term)


# -- Ito identity ------------------------------------------------------------

class GeneratorIntegrand:
    """``(t, X, alpha) -> (batch, 2m)``: generator values then finite-n bias densities.

    Column ``o`` holds ``d_t U_o + <grad U_o, b(X, alpha)> + (beta_C^2/2) Delta U_o
    + (beta_F^2/2) Theta U_o``; column ``m + o`` holds
    ``(beta_F^2/2) n^2 x`` the exact finite-n excess of the free-noise term,
    so its time integral divided by ``n^2`` is the bias of the identity.
    The state-only parts are cached per state array, since the trapezoid
    rule evaluates each state with two controls.
    """

    def __init__(self, Us: Sequence[TimeCylinder], beta_c: float, beta_f: float, drift: str = "identity"):
        self.Us = list(Us)
        self.beta_c, self.beta_f, self.drift = beta_c, beta_f, drift
        self._key = None
        self._val = None

    def _state_terms(self, t, X):
        key = (t, id(X))
        if self._key is not None and self._key[0] == key and self._key[1] is X:
            return self._val
        grads, base, bias = [], [], []
        ev = WordEvaluator(X)
        for U in self.Us:
            Ut = U.at(t)
            grads.append(_LazyGrad(Ut, X, ev))
            b = U.dt(t).value(X) if not isinstance(U, _Static) else 0.0
            if self.beta_c:
                b = b + 0.5 * self.beta_c ** 2 * common_laplacian(Ut, X, ev)
            if self.beta_f:
                b = b + 0.5 * self.beta_f ** 2 * free_laplacian(Ut, X, ev)
                bias.append(0.5 * self.beta_f ** 2 * free_laplacian_mc_bias(Ut, X, ev))
            else:
                bias.append(np.zeros(X.shape[:-3]))
            base.append(b)
        self._key = (key, X)
        self._val = (grads, base, bias)
        return self._val

    def __call__(self, t, X, alpha):
        grads, base, bias = self._state_terms(t, X)
        if np.any(alpha):
            b = drift_of(self.drift, X, alpha)
            cols = [base[o] + inner(grads[o].value, b) for o in range(len(self.Us))]
        else:
            cols = base
        return np.stack([np.broadcast_to(c, X.shape[:-3]) for c in cols + bias], axis=-1)


class _LazyGrad:
    """Gradient computed on first use (skipped entirely for zero controls)."""

    def __init__(self, U, X, ev):
        self.U, self.X, self.ev = U, X, ev
        self._value = None

    @property
    def value(self):
        if self._value is None:
            self._value = grad(self.U, self.X, self.ev)
        return self._value


@dataclass
class ItoReport:
    function: str
    lhs: MCEstimate
    rhs: MCEstimate
    difference: MCEstimate
    bias_allowance: float
    c1: float
    c2: float
    dt: float
    n: int
    passed: bool
    seed: int
    narrowing: str = NARROWING

    @property
    def tolerance(self) -> float:
        return 3 * self.difference.stderr + self.bias_allowance

    def to_json(self) -> dict:
        out = asdict(self)
        out["tolerance"] = self.tolerance
        return out


def ito_check(Us, config: SimConfig, policy: ControlPolicy, x0, drift: str = "identity", *,
              names: Sequence[str] | None = None, c1: float | Sequence[float] = 0.0,
              chunk: int = 64, threads: int | None = 1) -> list[ItoReport]:
    """Monte Carlo check of ``E U(t, X_t) - U(t0, x0) = E int generator``.

    ``Us`` may be one time-dependent function or a list; all share the same
    simulated paths. The estimator works with the per-path difference of the
    two sides, so correlated noise cancels in the standard error. The
    allowance is ``c1 dt + c2 / n^2`` where ``c2`` is the size of the exact
    finite-n excess integrated along the simulated paths.
    """
    single = isinstance(Us, TimeCylinder)
    Us = [Us] if single else list(Us)
    names = list(names) if names is not None else [f"U{o + 1}" for o in range(len(Us))]
    m = len(Us)
    c1s = np.broadcast_to(np.asarray(c1, dtype=float), (m,))
    x0 = x0 if isinstance(x0, MatrixTuple) else MatrixTuple(x0)
    cfg = config.replace(thin=config.steps)
    integrand = GeneratorIntegrand(Us, cfg.beta_c, cfg.beta_f, drift)

    def observe(t, X, alpha):
        return np.stack([np.broadcast_to(U.value(t, X), X.shape[:-3]) for U in Us], axis=-1)

    batch = simulate(cfg, drift, policy, x0, running_cost=integrand, observers={"U": observe},
                     chunk=chunk, threads=threads)
    ok = batch.ok
    Uvals = batch.observations["U"][ok]
    U0 = np.array([float(U.value(cfg.t0, x0.data)) for U in Us])
    integ = batch.running_cost[ok]
    n = cfg.n
    reports = []
    for o in range(m):
        lhs_s = Uvals[:, -1, o] - U0[o]
        rhs_s = integ[:, o]
        diff_s = lhs_s - rhs_s
        c2 = float(abs(np.mean(integ[:, m + o])))
        allowance = float(c1s[o] * cfg.dt + c2 / n ** 2)
        est = [_mc(v) for v in (lhs_s, rhs_s, diff_s)]
        passed = abs(est[2].mean) <= 3 * est[2].stderr + allowance
        reports.append(ItoReport(names[o], est[0], est[1], est[2], allowance, float(c1s[o]), c2,
                                 cfg.dt, n, bool(passed), cfg.seed))
    return reports[0] if single else reports


def _mc(v) -> MCEstimate:
    v = np.asarray(v, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return MCEstimate(float(v.mean()), se, int(v.size))


# -- dynamic programming ---------------------------------------------------

@dataclass
class DPPReport:
    v0: float
    t0: float
    t1: float
    candidates: dict = field(default_factory=dict)
    sub_violations: list = field(default_factory=list)
    best: str | None = None
    gap: float = 0.0
    gap_tolerance: float = 0.0
    gap_within_tolerance: bool = True
    bias: float = 0.0
    narrowing: str = NARROWING

    @property
    def sub_ok(self) -> bool:
        return not self.sub_violations

    def to_json(self) -> dict:
        out = asdict(self)
        out["sub_ok"] = self.sub_ok
        return out


def dpp_check(V: Callable, config: SimConfig, policies: Mapping[str, ControlPolicy], x0,
              running_cost: Callable, drift: str = "identity", bias: float = 0.0,
              chunk: int = 64, threads: int | None = 1) -> DPPReport:
    """Sub- and super-dynamic-programming checks between ``config.t0`` and ``config.T``.

    Parameters
    ----------
    V : callable ``(t, X) -> (batch,)``
        Value surrogate evaluable on stacks.
    policies : mapping name -> policy
        Candidate controls on ``[t0, t1]``; all share the same noise.
    bias : float
        Allowance for time discretization and finite-n effects.

    Notes
    -----
    Sub-check: ``V(t0, x0) <= E[int L + V(t1, X_t1)] + 3 SE + bias`` for each
    candidate. Super-check: ``min_candidates E[...] - V(t0, x0)`` is reported
    as a gap, flagged against ``3 SE + bias`` of the best candidate; a finite
    candidate set cannot establish the infimum, so the flag is informative.
    """
    x0 = x0 if isinstance(x0, MatrixTuple) else MatrixTuple(x0)
    v0 = float(np.asarray(V(config.t0, x0.data[None]))[0])
    rep = DPPReport(v0, config.t0, config.T, bias=float(bias))
    for name, pol in policies.items():
        b = simulate(config.replace(thin=config.steps), drift, pol, x0, running_cost=running_cost,
                     keep_final=True, chunk=chunk, threads=threads)
        ok = b.ok
        vals = b.running_cost[ok] + np.asarray(V(config.T, b.final[ok]), dtype=float)
        est = _mc(vals)
        slack = est.mean + 3 * est.stderr + bias - v0
        rep.candidates[name] = {"mean": est.mean, "stderr": est.stderr, "samples": est.samples,
                                "sub_slack": float(slack)}
        if slack < 0:
            rep.sub_violations.append(name)
    if rep.candidates:
        best = min(rep.candidates, key=lambda k: rep.candidates[k]["mean"])
        rep.best = best
        c = rep.candidates[best]
        rep.gap = float(c["mean"] - v0)
        rep.gap_tolerance = float(3 * c["stderr"] + bias)
        rep.gap_within_tolerance = abs(rep.gap) <= rep.gap_tolerance
    return rep


def dpp_trivial(V: Callable, t: float, x0) -> DPPReport:
    """``t0 = t1``: both sides are ``V(t0, x0)`` and the gap is zero."""
    x0 = x0 if isinstance(x0, MatrixTuple) else MatrixTuple(x0)
    v0 = float(np.asarray(V(t, x0.data[None]))[0])
    return DPPReport(v0, t, t, {"identity": {"mean": v0, "stderr": 0.0, "samples": 1, "sub_slack": 0.0}},
                     [], "identity", 0.0, 0.0, True)
