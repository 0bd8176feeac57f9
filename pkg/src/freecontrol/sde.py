"""Controlled matrix SDE with common and GUE noise, plus the Dyson particle model.

The state of a batch of paths is a ``(paths, d, n, n)`` stack. One Euler step
for the additive drift is::

    X <- X + alpha dt + beta_C * dW0 * 1 + beta_F * dW

with one scalar ``dW0`` per path shared by all components and an independent
GUE increment ``dW`` per component. The commutator drift ``i[X, alpha]`` is
integrated exactly over each step by conjugation,
``X <- exp(-i alpha dt) X exp(i alpha dt)``, which keeps spectra fixed.

Every path owns two Philox streams (common and free noise) keyed by
``(seed, path)``, so results do not depend on chunking or thread count.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import kernels
from .freecalc import MCEstimate, TimeCylinder, grad
from .ncpoly import as_stack
from .randmat import MatrixTuple, SpectralMeasure, hermitian_part, inner, stream

log = logging.getLogger(__name__)

DRIFTS = ("identity", "commutator")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Grid, noise levels and Monte Carlo size of one simulation."""

    n: int
    d: int = 1
    t0: float = 0.0
    T: float = 1.0
    steps: int = 100
    beta_c: float = 0.0
    beta_f: float = 0.0
    paths: int = 1
    seed: int = 0
    thin: int = 1

    def __post_init__(self):
        if not self.t0 < self.T:
            raise ValueError("need t0 < T")
        if self.steps < 1 or self.paths < 1 or self.n < 1 or self.d < 1 or self.thin < 1:
            raise ValueError("steps, paths, n, d, thin must be >= 1")
        if self.beta_c < 0 or self.beta_f < 0:
            raise ValueError("noise coefficients must be >= 0")

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    @property
    def snapshot_steps(self) -> np.ndarray:
        k = np.arange(0, self.steps + 1, self.thin)
        if k[-1] != self.steps:
            k = np.append(k, self.steps)
        return k

    def replace(self, **kw) -> "SimConfig":
        from dataclasses import replace
        return replace(self, **kw)

    def to_json(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


# -- policies ---------------------------------------------------------------

class ControlPolicy:
    """Map ``(t, X) -> alpha`` on ``(batch, d, n, n)`` stacks.

    Policies see only the current time and state; they never receive future
    noise.
    """

    name = "policy"

    def __call__(self, t: float, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ZeroPolicy(ControlPolicy):
    name = "zero"

    def __call__(self, t, X):
        return np.zeros_like(X)


class ConstantPolicy(ControlPolicy):
    name = "constant"

    def __init__(self, alpha):
        self.alpha = as_stack(alpha)

    def __call__(self, t, X):
        return np.broadcast_to(self.alpha, X.shape)


class OpenLoopPolicy(ControlPolicy):
    """Deterministic time-dependent control ``alpha(t)``."""

    name = "open-loop"

    def __init__(self, fn: Callable[[float], object]):
        self.fn = fn

    def __call__(self, t, X):
        return np.broadcast_to(as_stack(self.fn(t)), X.shape)


class FeedbackPolicy(ControlPolicy):
    name = "feedback"

    def __init__(self, fn: Callable[[float, np.ndarray], np.ndarray], name: str | None = None):
        self.fn = fn
        if name:
            self.name = name

    def __call__(self, t, X):
        return hermitian_part(np.asarray(self.fn(t, X), dtype=complex))


class GradientFeedback(ControlPolicy):
    """``alpha = -scale * grad U(t, X)``."""

    name = "gradient-feedback"

    def __init__(self, U: TimeCylinder, scale: float = 1.0):
        self.U = U
        self.scale = scale

    def __call__(self, t, X):
        return -self.scale * grad(self.U.at(t), X)


# -- running costs --------------------------------------------------------

def quadratic_control_cost(t, X, alpha):
    """``L = (1/2) ||alpha||^2``."""
    return 0.5 * inner(alpha, alpha)


def constant_cost(c: float):
    def cost(t, X, alpha):
        return np.full(X.shape[:-3], float(c))
    return cost


def potential_cost(phi, control_weight: float = 0.5):
    """``L = control_weight ||alpha||^2 + phi(X)``."""
    def cost(t, X, alpha):
        return control_weight * inner(alpha, alpha) + phi(X)
    return cost


# -- trajectories --------------------------------------------------------

@dataclass
class TrajectoryBatch:
    config: SimConfig
    drift: str
    path_index: np.ndarray
    times: np.ndarray
    common_increments: np.ndarray
    trace1: np.ndarray
    trace2: np.ndarray
    running_cost: np.ndarray
    running_cost_snap: np.ndarray
    observations: dict = field(default_factory=dict)
    states: np.ndarray | None = None
    final: np.ndarray | None = None
    failed: dict = field(default_factory=dict)
    policy: ControlPolicy | None = None

    @property
    def ok(self) -> np.ndarray:
        mask = np.ones(self.path_index.size, dtype=bool)
        for p in self.failed:
            mask[np.flatnonzero(self.path_index == p)] = False
        return mask

    def summary_csv(self) -> str:
        """Rows ``seed, path, t, tr_x_j..., tr_x2_j..., running_cost``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.config.d
        w.writerow(["seed", "path", "t"] + [f"tr_x{j}" for j in range(1, d + 1)]
                   + [f"tr_x{j}_sq" for j in range(1, d + 1)] + ["running_cost"])
        for r, p in enumerate(self.path_index):
            for s, t in enumerate(self.times):
                w.writerow([self.config.seed, int(p), repr(float(t))]
                           + [repr(float(v)) for v in self.trace1[r, s]]
                           + [repr(float(v)) for v in self.trace2[r, s]]
                           + [repr(float(self.running_cost_snap[r, s]))])
        return buf.getvalue()


def _conjugation_step(X, alpha, dt):
    lam, V = np.linalg.eigh(alpha)
    U = (V * np.exp(-1j * dt * lam)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    return U @ X @ np.conj(np.swapaxes(U, -1, -2))


def _traces(X):
    n = X.shape[-1]
    t1 = np.real(np.trace(X, axis1=-2, axis2=-1)) / n
    # per-matrix kernel: the summation order must not depend on the batch size
    t2 = np.real(kernels.trace_prod(X, X)) / n
    return t1, t2


def _run_chunk(cfg, drift, policy, x0, paths, running_cost, observers, keep_states, keep_final, out):
    b = len(paths)
    d, n, dt = cfg.d, cfg.n, cfg.dt
    sqdt = math.sqrt(dt)
    snaps = cfg.snapshot_steps
    snap_pos = {int(k): s for s, k in enumerate(snaps)}
    rows = np.asarray([out["row_of"][p] for p in paths])

    common = np.zeros((b, cfg.steps))
    free_gens = []
    for r, p in enumerate(paths):
        if cfg.beta_c > 0:
            common[r] = sqdt * stream(cfg.seed, p, "common").standard_normal(cfg.steps)
        free_gens.append(stream(cfg.seed, p, "free") if cfg.beta_f > 0 else None)
    out["common_increments"][rows] = common

    X = np.array(np.broadcast_to(x0, (b, d, n, n)), dtype=complex)
    diag = np.arange(n)
    cost = np.zeros((b,) + out["running_cost"].shape[1:])
    alive = np.ones(b, dtype=bool)
    t = cfg.t0
    alpha = policy(t, X)

    def record(k, t, X, alpha):
        s = snap_pos[k]
        t1, t2 = _traces(X)
        out["trace1"][rows, s] = t1
        out["trace2"][rows, s] = t2
        out["running_cost_snap"][rows, s] = cost
        for name, fn in observers.items():
            out["observations"][name][rows, s] = fn(t, X, alpha)
        if keep_states:
            out["states"][rows, s] = X

    record(0, t, X, alpha)
    L_prev = running_cost(t, X, alpha) if running_cost is not None else None
    for k in range(cfg.steps):
        if drift == "identity":
            Xn = X + dt * alpha
            if cfg.beta_c > 0:
                Xn[..., diag, diag] += (cfg.beta_c * common[:, k])[:, None, None]
            if cfg.beta_f > 0:
                z = np.concatenate([g.standard_normal((d, n * n)) for g in free_gens])
                dW = kernels.hermitian_from_normals(z, n, dt / n).reshape(b, d, n, n)
                dW *= cfg.beta_f
                Xn += dW
        else:
            Xn = _conjugation_step(X, alpha, dt)
        Xn = hermitian_part(Xn)
        t = cfg.t0 + (k + 1) * dt
        finite = np.isfinite(Xn).all(axis=(1, 2, 3))
        newly = alive & ~finite
        for r in np.flatnonzero(newly):
            msg = f"non-finite state at step {k + 1} (t={t:.6g})"
            out["failed"][int(paths[r])] = msg
            log.warning("path %d aborted: %s", paths[r], msg)
        alive &= finite
        X = Xn if alive.all() else np.where(alive[:, None, None, None], Xn, 0.0)
        if running_cost is not None:
            # control held on [t_k, t_k+1): trapezoid in the state
            cost = cost + 0.5 * dt * (L_prev + running_cost(t, X, alpha))
        alpha = policy(t, X)
        if running_cost is not None:
            L_prev = running_cost(t, X, alpha)
        if k + 1 in snap_pos:
            record(k + 1, t, X, alpha)
    out["running_cost"][rows] = cost
    if keep_final:
        out["final"][rows] = X


def simulate(config: SimConfig, drift: str, policy: ControlPolicy, x0, *,
             running_cost=None, observers: Mapping[str, Callable] | None = None,
             keep_states: bool = False, keep_final: bool = False,
             path_index=None, chunk: int = 64, threads: int | None = 1) -> TrajectoryBatch:
    """Euler-Maruyama simulation of ``config.paths`` paths.

    Parameters
    ----------
    drift : {"identity", "commutator"}
        ``b(X, alpha) = alpha`` or ``i[X, alpha]``.
    running_cost : callable ``(t, X, alpha) -> (batch,)`` or ``(batch, k)``, optional
        Accumulated along each path by the trapezoid rule with the control held
        over each step. Vector-valued integrands accumulate componentwise.
    observers : mapping name -> ``(t, X, alpha) -> (batch, ...)``
        Evaluated at snapshot times; stored in ``batch.observations``.
    path_index : sequence of int, optional
        Simulate only these paths (used for replay).
    """
    if drift not in DRIFTS:
        raise ValueError(f"drift must be one of {DRIFTS}")
    if drift == "commutator" and (config.beta_c or config.beta_f):
        raise ValueError("commutator drift is deterministic: set beta_c = beta_f = 0")
    x0 = x0 if isinstance(x0, MatrixTuple) else MatrixTuple(x0)
    if (x0.d, x0.n) != (config.d, config.n):
        raise ValueError(f"x0 is (d={x0.d}, n={x0.n}), config wants (d={config.d}, n={config.n})")
    x0 = x0.data
    observers = dict(observers or {})
    paths = np.arange(config.paths) if path_index is None else np.asarray(path_index, dtype=int)
    P, S = paths.size, config.snapshot_steps.size
    d, n = config.d, config.n

    # probe observer output shapes
    probe_alpha = policy(config.t0, x0[None])
    obs_shapes = {k: np.shape(fn(config.t0, x0[None], probe_alpha))[1:] for k, fn in observers.items()}
    cost_shape = () if running_cost is None else np.shape(running_cost(config.t0, x0[None], probe_alpha))[1:]
    out = {
        "row_of": {int(p): r for r, p in enumerate(paths)},
        "common_increments": np.zeros((P, config.steps)),
        "trace1": np.zeros((P, S, d)),
        "trace2": np.zeros((P, S, d)),
        "running_cost": np.zeros((P,) + cost_shape),
        "running_cost_snap": np.zeros((P, S) + cost_shape),
        "observations": {k: np.zeros((P, S) + shp) for k, shp in obs_shapes.items()},
        "states": np.zeros((P, S, d, n, n), dtype=complex) if keep_states else None,
        "final": np.zeros((P, d, n, n), dtype=complex) if keep_final else None,
        "failed": {},
    }
    chunks = [paths[i:i + chunk] for i in range(0, P, chunk)]
    job = lambda ps: _run_chunk(config, drift, policy, x0, [int(p) for p in ps],  # noqa: E731
                                running_cost, observers, keep_states, keep_final, out)
    if threads is not None and threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(job, chunks))
    else:
        for ps in chunks:
            job(ps)
    return TrajectoryBatch(
        config=config, drift=drift, path_index=paths,
        times=config.times[config.snapshot_steps],
        common_increments=out["common_increments"], trace1=out["trace1"], trace2=out["trace2"],
        running_cost=out["running_cost"], running_cost_snap=out["running_cost_snap"],
        observations=out["observations"], states=out["states"], final=out["final"],
        failed=dict(sorted(out["failed"].items())), policy=policy,
    )


def replay(batch: TrajectoryBatch, path: int, x0, *, running_cost=None) -> TrajectoryBatch:
    """Re-simulate one path of ``batch`` from its seed."""
    return simulate(batch.config, batch.drift, batch.policy, x0, running_cost=running_cost,
                    keep_states=batch.states is not None, keep_final=batch.final is not None,
                    path_index=[path])


def _mc(values) -> MCEstimate:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise SimulationError("no surviving paths")
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return MCEstimate(float(np.mean(values)), se, int(values.size))


def path_costs(batch: TrajectoryBatch, running_cost=None, terminal_cost=None) -> np.ndarray:
    """Per-path ``int L dt + g(X_T)``; failed paths are ``nan``.

    See :func:`estimate_cost` for the meaning of the arguments.
    """
    cfg = batch.config
    if running_cost is None:
        run = batch.running_cost.copy()
    else:
        if batch.states is None or cfg.thin != 1:
            raise SimulationError("recomputing running cost needs every state (keep_states, thin=1)")
        run = np.zeros(batch.path_index.size)
        X = batch.states
        times = batch.times
        for k in range(cfg.steps):
            alpha = batch.policy(times[k], X[:, k])
            run += 0.5 * cfg.dt * (running_cost(times[k], X[:, k], alpha)
                                   + running_cost(times[k + 1], X[:, k + 1], alpha))
    total = run
    if terminal_cost is not None:
        final = batch.final if batch.final is not None else (
            batch.states[:, -1] if batch.states is not None else None)
        if final is None:
            raise SimulationError("terminal cost needs keep_final or keep_states")
        total = total + np.asarray(terminal_cost(final), dtype=float)
    total = np.array(total, dtype=float)
    total[~batch.ok] = np.nan
    return total


def estimate_cost(batch: TrajectoryBatch, running_cost=None, terminal_cost=None) -> MCEstimate:
    """Monte Carlo mean and standard error of ``int L dt + g(X_T)``.

    Without ``running_cost`` the cost accumulated during :func:`simulate` is
    used. With it, the cost is recomputed from stored states, which requires
    ``keep_states=True`` and ``thin=1``.
    """
    return _mc(path_costs(batch, running_cost, terminal_cost)[batch.ok])


# -- Dyson particle system ------------------------------------------------

@dataclass
class DysonPaths:
    times: np.ndarray
    eigenvalues: np.ndarray  # (paths, snapshots, n)
    common_increments: np.ndarray
    substeps: np.ndarray
    failed: dict = field(default_factory=dict)

    def measure(self, path: int = 0, snapshot: int = -1) -> SpectralMeasure:
        return SpectralMeasure(self.eigenvalues[path, snapshot])


def _spread_ties(lam, eps=1e-9):
    lam = np.sort(np.asarray(lam, dtype=float))
    out = lam.copy()
    i = 0
    while i < lam.size:
        j = i
        while j + 1 < lam.size and lam[j + 1] - lam[i] < eps:
            j += 1
        if j > i:
            k = np.arange(j - i + 1)
            out[i:j + 1] = lam[i] + eps * (k - k.mean())
        i = j + 1
    return out


def dyson_simulate(config: SimConfig, x0: SpectralMeasure, drift: Callable | None = None,
                   theta: float = 0.25, max_substeps: int = 1024) -> DysonPaths:
    """Eigenvalue particles for ``d = 1``::

        dl_i = a(t, l_i) dt + beta_C dW0 + beta_F dB_i / sqrt(n)
               + (beta_F^2 / n) sum_{j != i} dt / (l_i - l_j)

    Each grid step is split into at most ``max_substeps`` substeps, chosen so
    that the deterministic displacement stays below ``theta`` times the
    smallest gap when possible. Where it does not, each particle's drift
    displacement is capped at ``theta`` times its own nearest-neighbour gap.
    The common increment of a grid step is spread over its substeps, so with
    ``beta_F = 0`` all particles translate together.
    """
    if config.d != 1:
        raise ValueError("the particle model is for d = 1")
    n = config.n
    if x0.size != n:
        raise ValueError(f"x0 has {x0.size} atoms, need n={n}")
    lam0 = _spread_ties(x0.atoms)
    snaps = config.snapshot_steps
    snap_pos = {int(k): s for s, k in enumerate(snaps)}
    eig = np.zeros((config.paths, snaps.size, n))
    commons = np.zeros((config.paths, config.steps))
    nsub = np.zeros(config.paths, dtype=int)
    failed = {}
    dt = config.dt
    h_floor = dt / max_substeps
    rep_coef = config.beta_f ** 2 / n
    for p in range(config.paths):
        if config.beta_c > 0:
            commons[p] = math.sqrt(dt) * stream(config.seed, p, "common").standard_normal(config.steps)
        gen = stream(config.seed, p, "free")
        lam = lam0.copy()
        eig[p, 0] = lam
        t = config.t0
        try:
            for k in range(config.steps):
                rem = dt
                while rem > 1e-15 * dt:
                    if n > 1:
                        force, gap = kernels.dyson_repulsion(lam)
                        if not gap > 0:
                            raise SimulationError(f"particle collision at t={t:.6g}")
                        vel = rep_coef * force
                    else:
                        vel, gap = np.zeros(1), np.inf
                    if drift is not None:
                        vel = vel + np.asarray(drift(t, lam), dtype=float)
                    vmax = float(np.abs(vel).max())
                    h = rem if vmax == 0 else min(rem, max(h_floor, theta * gap / vmax))
                    step = vel * h
                    if n > 1 and vmax * h > theta * gap:
                        gaps = np.diff(lam)
                        local = np.minimum(np.append(gaps, np.inf), np.insert(gaps, 0, np.inf))
                        cap = theta * local
                        step = np.clip(step, -cap, cap)
                    lam = lam + step
                    if config.beta_f > 0:
                        lam = lam + config.beta_f * math.sqrt(h / n) * gen.standard_normal(n)
                    if config.beta_c > 0:
                        lam = lam + config.beta_c * commons[p, k] * (h / dt)
                    lam.sort()
                    if not np.all(np.isfinite(lam)):
                        raise SimulationError(f"non-finite particle at t={t:.6g}")
                    rem -= h
                    t += h
                    nsub[p] += 1
                t = config.t0 + (k + 1) * dt
                if k + 1 in snap_pos:
                    eig[p, snap_pos[k + 1]] = lam
        except SimulationError as exc:
            failed[p] = str(exc)
            log.warning("dyson path %d aborted: %s", p, exc)
            eig[p] = np.nan
    return DysonPaths(config.times[snaps], eig, commons, nsub, failed)


@dataclass
class PicardResult:
    states: np.ndarray  # (steps + 1, d, n, n)
    iterations: int
    increments: list


def picard_iterate(config: SimConfig, drift: str, policy: ControlPolicy, x0, path: int = 0,
                   tol: float = 1e-12, max_iter: int = 200) -> PicardResult:
    """Fixed-point iteration ``X^{m+1}_t = x0 + sum_s b(X^m_s) dt + noise_t`` on one path.

    Validation mode for state-dependent drifts. With the left-point sum the
    fixed point is the explicit Euler path produced by :func:`simulate` with
    the same seed; convergence is reached in at most ``steps + 1`` sweeps.
    Only the identity drift is supported here.
    """
    if drift != "identity":
        raise ValueError("Picard validation is implemented for the identity drift")
    x0 = (x0 if isinstance(x0, MatrixTuple) else MatrixTuple(x0)).data
    cfg = config
    d, n, dt = cfg.d, cfg.n, cfg.dt
    noise = np.zeros((cfg.steps, d, n, n), dtype=complex)
    if cfg.beta_c > 0:
        dw0 = math.sqrt(dt) * stream(cfg.seed, path, "common").standard_normal(cfg.steps)
        noise += cfg.beta_c * dw0[:, None, None, None] * np.eye(n)
    if cfg.beta_f > 0:
        gen = stream(cfg.seed, path, "free")
        for k in range(cfg.steps):
            z = gen.standard_normal((d, n * n))
            noise[k] += cfg.beta_f * kernels.hermitian_from_normals(z, n, dt / n).reshape(d, n, n)
    times = cfg.times
    X = np.broadcast_to(x0, (cfg.steps + 1, d, n, n)).astype(complex)
    history = []
    for it in range(1, max_iter + 1):
        alpha = np.stack([policy(times[k], X[k:k + 1])[0] for k in range(cfg.steps)])
        incr = dt * alpha + noise
        Xn = np.empty_like(X)
        Xn[0] = x0
        Xn[1:] = x0 + np.cumsum(incr, axis=0)
        Xn = hermitian_part(Xn)
        delta = float(np.abs(Xn - X).max())
        history.append(delta)
        X = Xn
        if delta <= tol:
            return PicardResult(X, it, history)
    raise SimulationError(f"Picard iteration did not converge in {max_iter} sweeps (last change {delta:.3g})")
