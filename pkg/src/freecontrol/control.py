"""Worked control problems: linear-quadratic, Eikonal and the von Neumann flow.

Linear-quadratic
----------------
Terminal cost ``g(X) = sum_ij G0_ij tr_n(X^i X^j) + sum_ij G1_ij tr_n(X^i) tr_n(X^j)``
with running cost ``|alpha|^2 / 2``. The value function has the form

    U(t, X) = e(t) + sum_ij a0_ij tr_n(X^i X^j) + sum_ij a1_ij tr_n(X^i) tr_n(X^j)

with, integrating backwards from ``a0(T) = G0``, ``a1(T) = G1``, ``e(T) = 0``::

    a0' = 2 a0 a0
    a1' = 2 (a0 a1 + a1 a0 + a1 a1)
    e'  = -beta_C^2 sum_ij (a0 + a1)_ij - beta_F^2 sum_i a0_ii

Both ``a0`` and ``b = a0 + a1`` solve ``y' = 2 y^2``, so
``y(t) = (I + 2 (T - t) y(T))^{-1} y(T)`` gives closed forms for each.

Von Neumann flow
----------------
``dX = i[X, alpha] dt`` with constant ``alpha`` gives
``X_T = exp(-i alpha s) X exp(i alpha s)``, ``s = T - t``; the Hopf-Lax value
is the infimum over constant Hermitian ``alpha`` of
``s |alpha|^2 / 2 + g(X_T)``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .freecalc import CylinderFunction, QuadraticOuter, TimeCylinder
from .ncpoly import NCPolynomial, as_stack
from .randmat import MatrixTuple, SpectralMeasure, inner, stream, wasserstein2_1d

log = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e6


class RiccatiBlowUp(ArithmeticError):
    """Backward Riccati flow left every bounded set before the initial time."""

    def __init__(self, time: float, message: str):
        super().__init__(message)
        self.time = time


# -- linear-quadratic -------------------------------------------------------

@dataclass(frozen=True)
class LQSpec:
    G0: np.ndarray
    G1: np.ndarray
    beta_c: float = 0.0
    beta_f: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        G0 = np.atleast_2d(np.asarray(self.G0, dtype=float))
        G1 = np.atleast_2d(np.asarray(self.G1, dtype=float))
        object.__setattr__(self, "G0", G0)
        object.__setattr__(self, "G1", G1)
        if G0.shape != G1.shape or G0.shape[0] != G0.shape[1]:
            raise ValueError("G0 and G1 must be square matrices of the same size")
        for name, G in (("G0", G0), ("G1", G1)):
            if not np.allclose(G, G.T, atol=1e-14, rtol=0):
                raise ValueError(f"{name} must be symmetric")
        if self.beta_c < 0 or self.beta_f < 0:
            raise ValueError("noise coefficients must be >= 0")
        if not self.T > 0:
            raise ValueError("need T > 0")

    @property
    def d(self) -> int:
        return self.G0.shape[0]

    def terminal_cost(self, X):
        return _quadratic_value(self.G0, self.G1, 0.0, as_stack(X))

    def to_json(self) -> dict:
        return {"G0": self.G0.tolist(), "G1": self.G1.tolist(),
                "beta_c": self.beta_c, "beta_f": self.beta_f, "T": self.T}

    @classmethod
    def from_json(cls, obj) -> "LQSpec":
        return cls(np.array(obj["G0"], dtype=float), np.array(obj["G1"], dtype=float),
                   float(obj.get("beta_c", 0.0)), float(obj.get("beta_f", 0.0)), float(obj.get("T", 1.0)))


def _riccati_rhs(spec: LQSpec, a0, a1):
    da0 = 2 * a0 @ a0
    da1 = 2 * (a0 @ a1 + a1 @ a0 + a1 @ a1)
    de = -spec.beta_c ** 2 * np.sum(a0 + a1) - spec.beta_f ** 2 * np.trace(a0)
    return da0, da1, de


def _rk4_step(spec, a0, a1, e, h):
    k1 = _riccati_rhs(spec, a0, a1)
    k2 = _riccati_rhs(spec, a0 + 0.5 * h * k1[0], a1 + 0.5 * h * k1[1])
    k3 = _riccati_rhs(spec, a0 + 0.5 * h * k2[0], a1 + 0.5 * h * k2[1])
    k4 = _riccati_rhs(spec, a0 + h * k3[0], a1 + h * k3[1])
    out = []
    for y, i in ((a0, 0), (a1, 1), (e, 2)):
        out.append(y + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]))
    a0n, a1n, en = out
    return 0.5 * (a0n + a0n.T), 0.5 * (a1n + a1n.T), float(en)


def riccati_closed_form(G, tau):
    """``(I + 2 tau G)^{-1} G`` for each ``tau = T - t``; ``nan`` where singular."""
    G = np.asarray(G, dtype=float)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    eye = np.eye(G.shape[0])
    out = np.full((tau.size,) + G.shape, np.nan)
    for k, s in enumerate(tau):
        M = eye + 2 * s * G
        if np.linalg.cond(M) < 1e12:
            y = np.linalg.solve(M, G)
            out[k] = 0.5 * (y + y.T)
    return out


@dataclass
class RiccatiSolution:
    spec: LQSpec
    times: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    e: np.ndarray
    da0: np.ndarray
    da1: np.ndarray
    de: np.ndarray
    a0_closed: np.ndarray
    b_closed: np.ndarray
    _splines: tuple = field(default=None, repr=False)

    def __post_init__(self):
        self._splines = tuple(CubicHermiteSpline(self.times, y, dy, axis=0)
                              for y, dy in ((self.a0, self.da0), (self.a1, self.da1), (self.e, self.de)))

    def _check(self, t):
        if not (self.times[0] - 1e-12 <= t <= self.times[-1] + 1e-12):
            raise ValueError(f"t={t} outside the solved range [{self.times[0]}, {self.times[-1]}]")

    def at(self, t):
        """``(a0, a1, e)`` at ``t``; exact grid values at nodes, cubic Hermite between."""
        self._check(t)
        k = np.searchsorted(self.times, t)
        if k < self.times.size and abs(self.times[k] - t) <= 1e-14 * max(1.0, abs(t)):
            return self.a0[k], self.a1[k], float(self.e[k])
        a0, a1, e = (s(t) for s in self._splines)
        return 0.5 * (a0 + a0.T), 0.5 * (a1 + a1.T), float(e)

    def closed_form_error(self) -> float:
        """Max deviation of RK4 ``a0`` and ``a0 + a1`` from their closed forms."""
        errs = [np.nanmax(np.abs(self.a0 - self.a0_closed)) if np.isfinite(self.a0_closed).any() else 0.0,
                np.nanmax(np.abs(self.a0 + self.a1 - self.b_closed)) if np.isfinite(self.b_closed).any() else 0.0]
        return float(max(errs))

    def trajectory_csv(self) -> str:
        d = self.spec.d
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        idx = [(i, j) for i in range(d) for j in range(i, d)]
        w.writerow(["t"] + [f"a0_{i + 1}{j + 1}" for i, j in idx]
                   + [f"a1_{i + 1}{j + 1}" for i, j in idx] + ["e"])
        for k, t in enumerate(self.times):
            w.writerow([repr(float(t))] + [repr(float(self.a0[k, i, j])) for i, j in idx]
                       + [repr(float(self.a1[k, i, j])) for i, j in idx] + [repr(float(self.e[k]))])
        return buf.getvalue()


def _blowup_time(spec, a0, a1, e, t_start, t_end):
    """Locate the threshold crossing with an adaptive integrator and an event,
    restarting from the terminal data."""
    d = spec.d

    def rhs(t, y):
        b0, b1 = y[:d * d].reshape(d, d), y[d * d:2 * d * d].reshape(d, d)
        da0, da1, de = _riccati_rhs(spec, b0, b1)
        return np.concatenate([da0.ravel(), da1.ravel(), [de]])

    def event(t, y):
        return BLOWUP_THRESHOLD - np.abs(y[:2 * d * d]).max()
    event.terminal = True

    y0 = np.concatenate([a0.ravel(), a1.ravel(), [e]])
    res = solve_ivp(rhs, (t_start, t_end), y0, method="DOP853", rtol=1e-12, atol=1e-12, events=event)
    if res.t_events[0].size:
        return float(res.t_events[0][0])
    return float(res.t[-1])


def solve_riccati(spec: LQSpec, grid=1000, t0: float = 0.0) -> RiccatiSolution:
    """Backward RK4 on the joint system for ``(a0, a1, e)``.

    Parameters
    ----------
    grid : int or array_like
        Number of uniform steps on ``[t0, T]``, or an increasing array of
        times ending at ``T``.

    Raises
    ------
    RiccatiBlowUp
        When ``|a0|`` or ``|a1|`` exceeds ``BLOWUP_THRESHOLD``; ``exc.time``
        locates the crossing by bisection.
    """
    if np.ndim(grid) == 0:
        times = np.linspace(t0, spec.T, int(grid) + 1)
    else:
        times = np.asarray(grid, dtype=float)
        if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("grid must be increasing with at least two points")
        if times[-1] != spec.T:
            raise ValueError("grid must end at T")
    N = times.size
    d = spec.d
    a0 = np.zeros((N, d, d))
    a1 = np.zeros((N, d, d))
    e = np.zeros(N)
    a0[-1], a1[-1], e[-1] = spec.G0, spec.G1, 0.0
    for k in range(N - 2, -1, -1):
        h = times[k] - times[k + 1]
        a0[k], a1[k], e[k] = _rk4_step(spec, a0[k + 1], a1[k + 1], e[k + 1], h)
        bad = not (np.all(np.isfinite(a0[k])) and np.all(np.isfinite(a1[k])))
        if bad or max(np.abs(a0[k]).max(), np.abs(a1[k]).max()) > BLOWUP_THRESHOLD:
            tb = _blowup_time(spec, spec.G0, spec.G1, 0.0, spec.T, times[0] - 1.0)
            raise RiccatiBlowUp(tb, f"Riccati solution exceeds {BLOWUP_THRESHOLD:g} near t={tb:.10g}")
    derivs = [_riccati_rhs(spec, a0[k], a1[k]) for k in range(N)]
    da0 = np.stack([x[0] for x in derivs])
    da1 = np.stack([x[1] for x in derivs])
    de = np.array([x[2] for x in derivs], dtype=float)
    tau = spec.T - times
    return RiccatiSolution(spec, times, a0, a1, e, da0, da1, de,
                           riccati_closed_form(spec.G0, tau), riccati_closed_form(spec.G0 + spec.G1, tau))


def _quadratic_value(a0, a1, e, X):
    n = X.shape[-1]
    tr = np.real(np.trace(X, axis1=-2, axis2=-1)) / n
    gram = np.real(np.einsum("...iab,...jba->...ij", X, X)) / n
    return e + np.einsum("ij,...ij->...", a0, gram) + np.einsum("ij,...i,...j->...", a1, tr, tr)


def lq_value(sol: RiccatiSolution, t: float, X):
    """``U(t, X)``; equals the terminal cost exactly at ``t = T``."""
    a0, a1, e = sol.at(t)
    v = _quadratic_value(a0, a1, e, as_stack(X))
    return float(v) if np.ndim(v) == 0 else v


def lq_gradient(sol: RiccatiSolution, t: float, X):
    """``grad^j U = 2 sum_i a0_ij X^i + 2 sum_i a1_ij tr_n(X^i) 1``."""
    a0, a1, _ = sol.at(t)
    X = as_stack(X)
    n = X.shape[-1]
    tr = np.real(np.trace(X, axis1=-2, axis2=-1)) / n
    d = a0.shape[0]
    G = np.zeros(X.shape, dtype=complex)
    shift = 2 * (tr @ a1)
    idx = np.arange(n)
    for j in range(d):
        for i in range(d):
            if a0[i, j]:
                G[..., j, :, :] += (2 * a0[i, j]) * X[..., i, :, :]
        G[..., j, idx, idx] += shift[..., j, None]
    return G


def lq_feedback(sol: RiccatiSolution, t: float, X):
    """Optimal feedback ``alpha* = -grad U(t, X)``."""
    out = -lq_gradient(sol, t, X)
    return MatrixTuple(out) if isinstance(X, MatrixTuple) else out


class LQFeedbackPolicy:
    """``alpha = -scale * grad U(t_eff, X)`` with ``t_eff = clip(t + shift)``.

    ``scale = 1`` and ``shift = 0`` give the optimal feedback; other values
    are the scaled and time-shifted perturbations used in optimality checks.
    """

    def __init__(self, sol: RiccatiSolution, scale: float = 1.0, shift: float = 0.0):
        self.sol, self.scale, self.shift = sol, float(scale), float(shift)
        self.name = "lq-feedback" if (scale, shift) == (1.0, 0.0) else f"lq-feedback(x{scale:g}, {shift:+g})"

    def __call__(self, t, X):
        te = min(max(t + self.shift, self.sol.times[0]), self.sol.times[-1])
        G = lq_gradient(self.sol, te, X)
        G *= -self.scale
        return G


def finite_n_correction(sol: RiccatiSolution, t: float = None) -> np.ndarray | float:
    """Coefficient ``c(t)`` in ``V_n = U + c(t)/n^2`` for the matrix model.

    ``tr_n`` of a GUE increment has variance ``dt/n^2``, which adds
    ``beta_F^2 sum_i a1_ii / n^2`` to the generator; integrated from ``t`` to
    ``T`` (cubic Hermite quadrature on the Riccati grid). Returns the array over the grid when
    ``t`` is None.
    """
    src = sol.spec.beta_f ** 2 * np.trace(sol.a1, axis1=1, axis2=2)
    dsrc = sol.spec.beta_f ** 2 * np.trace(sol.da1, axis1=1, axis2=2)
    h = np.diff(sol.times)
    pieces = h * (src[:-1] + src[1:]) / 2 + h ** 2 * (dsrc[:-1] - dsrc[1:]) / 12
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    if t is None:
        return tail
    sol._check(t)
    return float(np.interp(t, sol.times, tail))


def lq_cylinder(sol: RiccatiSolution) -> TimeCylinder:
    """The value function as a time-dependent cylinder function.

    Inner functions are ``x_i`` (``i = 1..d``) followed by the symmetrized
    products ``(x_i x_j + x_j x_i)/2`` for ``i <= j``; the outer function is
    quadratic in the first block and linear in the second.
    """
    d = sol.spec.d
    xs = [NCPolynomial.letter(i, d) for i in range(1, d + 1)]
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    inner_polys = xs + [(xs[i] * xs[j] + xs[j] * xs[i]) * 0.5 for i, j in pairs]
    m = len(inner_polys)

    def pack(a0, a1, e):
        return np.concatenate([a0[np.triu_indices(d)], a1[np.triu_indices(d)], [e]])

    def make_outer(theta):
        theta = np.asarray(theta, dtype=float)
        k = len(pairs)
        a0 = np.zeros((d, d))
        a1 = np.zeros((d, d))
        a0[np.triu_indices(d)] = theta[:k]
        a1[np.triu_indices(d)] = theta[k:2 * k]
        a1 = a1 + np.triu(a1, 1).T
        Q = np.zeros((m, m))
        Q[:d, :d] = a1
        c = np.zeros(m)
        for p, (i, j) in enumerate(pairs):
            c[d + p] = a0[i, j] * (1.0 if i == j else 2.0)
        return QuadraticOuter(Q, c, float(theta[-1]))

    theta = np.stack([pack(sol.a0[k], sol.a1[k], sol.e[k]) for k in range(sol.times.size)])
    dtheta = np.stack([pack(sol.da0[k], sol.da1[k], sol.de[k]) for k in range(sol.times.size)])
    return TimeCylinder(inner_polys, make_outer, sol.times, theta, dtheta)


# -- Eikonal ------------------------------------------------------------------

def eikonal_value(t: float, mu: SpectralMeasure, mu_bar: SpectralMeasure, T: float) -> float:
    """``max(T - t, W2(mu_bar, mu))``."""
    return max(T - t, wasserstein2_1d(mu_bar, mu))


def eikonal_scalar_diagnostics(x: float, mu_bar: SpectralMeasure) -> dict:
    """First-power distance, its slope field and ``W2(delta_x, mu_bar)``.

    Returns
    -------
    dict
        ``abs_moment``: ``int |x - y| dmu_bar``; ``signed_mass``:
        ``mu_bar((-inf, x)) - mu_bar((x, inf))``, the derivative of
        ``abs_moment`` away from atoms; ``w2``: ``sqrt(int (x - y)^2 dmu_bar)``.
    """
    y = mu_bar.atoms
    return {
        "abs_moment": float(np.mean(np.abs(x - y))),
        "signed_mass": float(mu_bar.mass_below(x) - mu_bar.mass_above(x)),
        "w2": float(math.sqrt(np.mean((x - y) ** 2))),
    }


# -- von Neumann flow: Hopf-Lax ----------------------------------------------

def conjugate(X, alpha, s: float):
    """``exp(-i alpha s) X exp(i alpha s)`` componentwise; exact identity at ``alpha = 0``."""
    X = as_stack(X)
    alpha = as_stack(alpha)
    if s == 0 or not np.any(alpha):
        return X.copy()
    lam, V = np.linalg.eigh(alpha)
    U = (V * np.exp(-1j * s * lam)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    Y = U @ X @ np.conj(np.swapaxes(U, -1, -2))
    return 0.5 * (Y + np.conj(np.swapaxes(Y, -1, -2)))


def hermitian_basis(d: int, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Orthonormal basis ``(d n^2, d, n, n)`` of Hermitian tuples for ``sum_j Re tr_n``.

    With ``rng`` the standard basis is rotated by a random orthogonal matrix.
    """
    mats = []
    s = math.sqrt(n)
    for j in range(d):
        for a in range(n):
            for b in range(a, n):
                E = np.zeros((d, n, n), dtype=complex)
                if a == b:
                    E[j, a, a] = s
                    mats.append(E)
                else:
                    E[j, a, b] = E[j, b, a] = s / math.sqrt(2)
                    mats.append(E)
                    F = np.zeros((d, n, n), dtype=complex)
                    F[j, a, b] = 1j * s / math.sqrt(2)
                    F[j, b, a] = -1j * s / math.sqrt(2)
                    mats.append(F)
    B = np.stack(mats)
    if rng is not None:
        Q, R = np.linalg.qr(rng.standard_normal((B.shape[0], B.shape[0])))
        Q = Q * np.sign(np.diag(R))
        B = np.einsum("kl,l...->k...", Q, B)
    return B


@dataclass
class HopfLaxResult:
    value: float
    alpha: MatrixTuple
    converged: bool
    grad_norm: float
    iterations: int
    starts: list = field(default_factory=list)
    message: str = ""

    def to_json(self) -> dict:
        return {"value": self.value, "argmin": self.alpha.to_json(), "diagnostics": {
            "converged": self.converged, "grad_norm": self.grad_norm, "iterations": self.iterations,
            "starts": self.starts, "message": self.message}}


class _HLObjective:
    def __init__(self, X, g: CylinderFunction, s: float, basis: np.ndarray, fd_step: float):
        self.X, self.g, self.s, self.B, self.h = X, g, s, basis, fd_step

    def alpha(self, c):
        return np.tensordot(c, self.B, axes=1)

    def terminal(self, c):
        return float(self.g.value(conjugate(self.X, self.alpha(c), self.s)))

    def value(self, c):
        return 0.5 * self.s * float(c @ c) + self.terminal(c)

    def grad(self, c):
        # central differences for the conjugation term, exact for the penalty
        h = self.h
        out = self.s * c.copy()
        for k in range(c.size):
            e = np.zeros_like(c)
            e[k] = h
            out[k] += (self.terminal(c + e) - self.terminal(c - e)) / (2 * h)
        return out


def _bfgs(obj: _HLObjective, c0, tol, max_iter):
    c = c0.copy()
    f = obj.value(c)
    g = obj.grad(c)
    H = np.eye(c.size) / max(obj.s, 1e-12)
    it = 0
    while it < max_iter and np.linalg.norm(g) >= tol:
        it += 1
        p = -H @ g
        if g @ p >= 0:
            H = np.eye(c.size) / max(obj.s, 1e-12)
            p = -H @ g
        step = 1.0
        while True:
            cn = c + step * p
            fn = obj.value(cn)
            if fn <= f + 1e-4 * step * (g @ p) or step < 1e-14:
                break
            step *= 0.5
        if step < 1e-14:
            break
        gn = obj.grad(cn)
        sk, yk = cn - c, gn - g
        sy = sk @ yk
        if sy > 1e-16:
            rho = 1.0 / sy
            I = np.eye(c.size)
            H = (I - rho * np.outer(sk, yk)) @ H @ (I - rho * np.outer(yk, sk)) + rho * np.outer(sk, sk)
        c, f, g = cn, fn, gn
    return c, f, float(np.linalg.norm(g)), it


def hopf_lax(t: float, X, g: CylinderFunction, T: float, *, starts: int = 8, seed: int = 0,
             tol: float = 1e-6, max_iter: int = 500, fd_step: float = 1e-5, init_scale: float = 1.0,
             threads: int | None = 1) -> HopfLaxResult:
    """Minimize ``s |alpha|^2 / 2 + g(exp(-i alpha s) X exp(i alpha s))`` over Hermitian tuples.

    Runs BFGS with Armijo backtracking from ``alpha = 0`` and from ``starts``
    random initial points (each from its own seeded stream). The best value
    is returned; values within ``1e-12`` of it are resolved in favour of the
    smallest ``|alpha|``. ``converged`` refers to the returned start.
    """
    X = X if isinstance(X, MatrixTuple) else MatrixTuple(X)
    s = T - t
    if s < 0:
        raise ValueError("need t <= T")
    d, n = X.d, X.n
    if s == 0:
        return HopfLaxResult(float(g.value(X.data)), MatrixTuple.zeros(d, n), True, 0.0, 0,
                             [{"start": 0, "value": float(g.value(X.data)), "converged": True}],
                             "zero horizon")
    basis = hermitian_basis(d, n, stream(seed, 0, "aux"))
    obj = _HLObjective(X.data, g, s, basis, fd_step)
    inits = [np.zeros(basis.shape[0])]
    for k in range(starts):
        inits.append(init_scale * stream(seed, k + 1, "start").standard_normal(basis.shape[0]))

    def run(c0):
        return _bfgs(obj, c0, tol, max_iter)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            runs = list(ex.map(run, inits))
    else:
        runs = [run(c0) for c0 in inits]
    best_val = min(r[1] for r in runs)
    near = [k for k, r in enumerate(runs) if r[1] <= best_val + 1e-12]
    kbest = min(near, key=lambda k: (np.linalg.norm(runs[k][0]), k))
    c, f, gn, it = runs[kbest]
    summary = [{"start": k, "value": float(r[1]), "grad_norm": r[2], "iterations": r[3],
                "converged": bool(r[2] < tol)} for k, r in enumerate(runs)]
    converged = gn < tol
    msg = "converged" if converged else f"gradient norm {gn:.3g} above tolerance after {it} iterations"
    if not converged:
        log.warning("hopf_lax: %s (best iterate returned)", msg)
    return HopfLaxResult(float(f), MatrixTuple(obj.alpha(c)), bool(converged), gn, it, summary, msg)


def von_neumann_cost(X, g: CylinderFunction, controls, dt: float) -> float:
    """Cost of piecewise-constant controls ``controls[k]`` on steps of ``dt``."""
    Y = as_stack(X)
    run = 0.0
    for a in controls:
        Y = conjugate(Y, a, dt)
        run += 0.5 * dt * float(inner(a, a))
    return run + float(g.value(Y))


def first_variation(t: float, X, g: CylinderFunction, T: float, alpha, xi, steps: int = 200,
                    eps: float = 1e-4) -> dict:
    """Directional derivative of the cost at constant ``alpha`` along ``alpha + eps xi'``.

    ``xi`` maps times to Hermitian tuples with ``xi(t) = xi(T) = 0``; its
    derivative is discretized as ``(xi(t_k+1) - xi(t_k)) / dt``.

    Returns
    -------
    dict
        ``derivative`` (central difference in ``eps``), ``xi_dot_norm``
        (``L2`` norm of the discrete derivative), ``penalty_variation``
        (``int <xi', alpha> dt``).
    """
    alpha = as_stack(alpha)
    dt = (T - t) / steps
    grid = t + dt * np.arange(steps + 1)
    xs = np.stack([as_stack(xi(s)) for s in grid])
    xdot = np.diff(xs, axis=0) / dt
    plus = von_neumann_cost(X, g, alpha + eps * xdot, dt)
    minus = von_neumann_cost(X, g, alpha - eps * xdot, dt)
    return {
        "derivative": (plus - minus) / (2 * eps),
        "xi_dot_norm": float(math.sqrt(dt * np.sum(inner(xdot, xdot)))),
        "penalty_variation": float(dt * np.sum(inner(xdot, alpha))),
    }


def hopf_lax_problem_from_json(obj) -> dict:
    """Parse ``{t, T, X, g, starts?, seed?}`` into keyword arguments of :func:`hopf_lax`."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    out = {"t": float(obj["t"]), "T": float(obj["T"]), "X": MatrixTuple.from_json(obj["X"]),
           "g": CylinderFunction.from_json(obj["g"])}
    for k in ("starts", "seed", "max_iter"):
        if k in obj:
            out[k] = int(obj[k])
    return out
