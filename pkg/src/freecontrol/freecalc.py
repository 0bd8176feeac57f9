"""Cylindrical test functions ``U(X) = g(tr_n phi_1(X), ..., tr_n phi_m(X))``.

Provides the gradient, the Hessian bilinear form, the common-noise Laplacian
``Delta U = Hess U[1, 1]``, the free-noise Laplacian
``Theta U = sum_i (tr ⊗ tr)(d_{x_i} (grad U)^i)`` and its Monte Carlo
counterpart against GUE proxies, the arctan functional calculus, and the
closed-form Hamiltonians of the worked examples.

All evaluators accept a :class:`~freecontrol.randmat.MatrixTuple` or a raw
``(..., d, n, n)`` stack; leading axes are a batch and results carry them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import kernels
from .ncpoly import (
    DimensionError,
    NCPolynomial,
    WordEvaluator,
    as_stack,
    cyclic_diff,
    evaluate,
    free_diff,
    tensor_contract,
)
from .randmat import MatrixTuple, gue_batch, hermitian_part, inner

GAUSS_LEGENDRE_POINTS = 64


class UnsupportedOperation(ValueError):
    """Operation not defined for this kind of cylinder function."""


def _wrap_like(X, stack):
    if isinstance(X, MatrixTuple) and stack.ndim == 3:
        return MatrixTuple(hermitian_part(stack))
    return stack


def _real(x):
    x = np.real(x)
    return x[()] if np.ndim(x) == 0 else x


# -- outer functions ----------------------------------------------------

class OuterFunction:
    """Scalar function of ``m`` real variables with gradient and Hessian.

    Subclasses are linear in their coefficient vector, which is what makes
    time derivatives of time-dependent families available in closed form.
    """

    kind = "abstract"
    m: int

    def value(self, v):
        raise NotImplementedError

    def grad(self, v):
        raise NotImplementedError

    def hess(self, v):
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearOuter(OuterFunction):
    """``g(v) = const + c . v``."""

    coeffs: tuple
    const: float = 0.0
    kind = "linear"

    @property
    def m(self):
        return len(self.coeffs)

    def value(self, v):
        return self.const + np.asarray(v) @ np.asarray(self.coeffs, dtype=float)

    def grad(self, v):
        v = np.asarray(v)
        return np.broadcast_to(np.asarray(self.coeffs, dtype=float), v.shape)

    def hess(self, v):
        v = np.asarray(v)
        return np.zeros(v.shape + (self.m,))

    def to_json(self):
        return {"family": "linear", "coeffs": list(self.coeffs), "const": self.const}


@dataclass(frozen=True)
class QuadraticOuter(OuterFunction):
    """``g(v) = const + c . v + v^T Q v``."""

    Q: tuple
    coeffs: tuple | None = None
    const: float = 0.0
    kind = "quadratic"

    @property
    def m(self):
        return len(self.Q)

    def _q(self):
        return np.asarray(self.Q, dtype=float)

    def _c(self):
        return np.zeros(self.m) if self.coeffs is None else np.asarray(self.coeffs, dtype=float)

    def value(self, v):
        v = np.asarray(v)
        return self.const + v @ self._c() + np.einsum("...o,oq,...q->...", v, self._q(), v)

    def grad(self, v):
        q = self._q()
        return self._c() + np.asarray(v) @ (q + q.T)

    def hess(self, v):
        q = self._q()
        v = np.asarray(v)
        return np.broadcast_to(q + q.T, v.shape + (self.m,))

    def to_json(self):
        return {
            "family": "quadratic",
            "Q": [list(r) for r in self.Q],
            "coeffs": None if self.coeffs is None else list(self.coeffs),
            "const": self.const,
        }


@dataclass(frozen=True)
class PolynomialOuter(OuterFunction):
    """User polynomial ``g(v) = sum_k c_k prod_o v_o^{e_ko}``."""

    exponents: tuple  # tuple of m-tuples
    coeffs: tuple
    kind = "polynomial"

    @property
    def m(self):
        return len(self.exponents[0]) if self.exponents else 0

    def _terms(self):
        return zip(np.asarray(self.exponents, dtype=int), self.coeffs)

    def value(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape[:-1])
        for e, c in self._terms():
            out = out + c * np.prod(v ** e, axis=-1)
        return out

    def grad(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape)
        for e, c in self._terms():
            for o in range(self.m):
                if e[o]:
                    e2 = e.copy()
                    e2[o] -= 1
                    out[..., o] += c * e[o] * np.prod(v ** e2, axis=-1)
        return out

    def hess(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape + (self.m,))
        for e, c in self._terms():
            for o, q in itertools.product(range(self.m), repeat=2):
                e2 = e.copy()
                f = e2[o]
                e2[o] -= 1
                f = f * e2[q]
                if f:
                    e2[q] -= 1
                    out[..., o, q] += c * f * np.prod(v ** e2, axis=-1)
        return out

    def to_json(self):
        return {"family": "polynomial",
                "exponents": [list(e) for e in self.exponents],
                "coeffs": list(self.coeffs)}


def outer_from_json(obj) -> OuterFunction:
    fam = obj["family"]
    if fam == "linear":
        return LinearOuter(tuple(obj["coeffs"]), float(obj.get("const", 0.0)))
    if fam == "quadratic":
        c = obj.get("coeffs")
        return QuadraticOuter(tuple(tuple(r) for r in obj["Q"]),
                              None if c is None else tuple(c), float(obj.get("const", 0.0)))
    if fam == "polynomial":
        return PolynomialOuter(tuple(tuple(e) for e in obj["exponents"]), tuple(obj["coeffs"]))
    raise ValueError(f"unknown outer family {fam!r}")


# -- cylinder functions ----------------------------------------------------

class CylinderFunction:
    """``U(X) = g(tr_n phi_1(psi(X)), ..., tr_n phi_m(psi(X)))``.

    ``psi`` is the identity, or ``arctan`` applied to each component when
    ``arctan=True``. Inner polynomials must be self-adjoint.
    """

    def __init__(self, inner: Sequence[NCPolynomial], outer: OuterFunction, arctan: bool = False):
        inner = list(inner)
        if not inner:
            raise ValueError("need at least one inner polynomial")
        dims = {p.dims for p in inner}
        if len(dims) != 1:
            raise DimensionError("inner polynomials disagree on letter count")
        for p in inner:
            if not p.is_self_adjoint(tol=1e-12):
                raise ValueError(f"inner polynomial {p!r} is not self-adjoint")
        if outer.m != len(inner):
            raise DimensionError(f"outer takes {outer.m} arguments, have {len(inner)} inner")
        self.inner = inner
        self.outer = outer
        self.arctan = arctan
        self.dims = inner[0].dims
        self._grad_polys = [[cyclic_diff(p, j) for j in range(1, self.dims + 1)] for p in inner]
        self._hess_polys = None

    @property
    def m(self):
        return len(self.inner)

    def with_outer(self, outer: OuterFunction) -> "CylinderFunction":
        """Same inner polynomials (and derivative caches), new outer function."""
        if outer.m != self.m:
            raise DimensionError(f"outer takes {outer.m} arguments, have {self.m} inner")
        new = object.__new__(CylinderFunction)
        new.__dict__.update(self.__dict__)
        new.outer = outer
        return new

    def hess_polys(self):
        """``[o][i][j] -> d_{x_i} D_{x_j} phi_o`` (tensor polynomials)."""
        if self._hess_polys is None:
            self._hess_polys = [
                [[free_diff(Dj, i) for Dj in Do] for i in range(1, self.dims + 1)]
                for Do in self._grad_polys
            ]
        return self._hess_polys

    def _evaluator(self, X, cache=None):
        stack = as_stack(X)
        if stack.shape[-3] != self.dims:
            raise DimensionError(f"function has {self.dims} letters, tuple has {stack.shape[-3]}")
        if cache is not None and not self.arctan:
            return cache, stack
        if self.arctan:
            return WordEvaluator(arctan_apply(stack)), stack
        return WordEvaluator(stack), stack

    def inner_values(self, X, cache=None):
        ev = cache if cache is not None else self._evaluator(X)[0]
        vals = [np.real(sum((c * ev.trace(w) for w, c in p.items()),
                            np.zeros(ev.batch_shape, dtype=complex))) for p in self.inner]
        return np.stack(vals, axis=-1)

    def value(self, X):
        return _real(self.outer.value(self.inner_values(X)))

    __call__ = value

    def to_json(self) -> dict:
        return {"inner": [p.to_json() for p in self.inner], "dims": self.dims,
                "outer": self.outer.to_json(), "arctan": self.arctan}

    @classmethod
    def from_json(cls, obj) -> "CylinderFunction":
        dims = obj.get("dims")
        inner = [NCPolynomial.from_json(p, dims) for p in obj["inner"]]
        if dims is None:
            dims = max(p.dims for p in inner)
            inner = [NCPolynomial(p.terms, dims) for p in inner]
        return cls(inner, outer_from_json(obj["outer"]), bool(obj.get("arctan", False)))

    @classmethod
    def trace_of(cls, p: NCPolynomial) -> "CylinderFunction":
        """``tr_n p(X)``."""
        return cls([p], LinearOuter((1.0,)))


def _unsupported_arctan(U, what):
    if U.arctan:
        raise UnsupportedOperation(f"{what} is not available for arctan-composed functions")


def grad(U: CylinderFunction, X, cache: WordEvaluator | None = None):
    """Gradient as a Hermitian tuple: ``sum_o g_o D_{x_j} phi_o``, chained
    through the arctan derivative when ``U.arctan``.

    ``cache`` may be a :class:`WordEvaluator` of ``X`` shared between calls.
    """
    ev, stack = U._evaluator(X, cache)
    g = U.outer.grad(U.inner_values(X, ev))
    out = np.zeros(ev.batch_shape + (U.dims, ev.n, ev.n), dtype=complex)
    for j in range(U.dims):
        acc = out[..., j, :, :]
        for o in range(U.m):
            if U._grad_polys[o][j]:
                acc += g[..., o, None, None] * evaluate(U._grad_polys[o][j], None, ev)
        if U.arctan:
            out[..., j, :, :] = hermitian_part(arctan_diff_apply(stack[..., j, :, :], acc))
    # cyclic gradients of self-adjoint polynomials are self-adjoint
    return _wrap_like(X, out)


def _directional_sums(U, ev, A):
    """``s_o(A) = sum_j <D_{x_j} phi_o(X), A^j>`` for each ``o``; shape ``(..., m)``."""
    out = []
    for o in range(U.m):
        acc = 0.0
        for j in range(U.dims):
            Dj = U._grad_polys[o][j]
            if Dj:
                acc = acc + np.real(kernels.trace_prod(evaluate(Dj, None, ev), A[..., j, :, :])) / ev.n
        out.append(np.broadcast_to(acc, np.broadcast_shapes(ev.batch_shape, A.shape[:-3])))
    return np.stack(out, axis=-1)


def hess_apply(U: CylinderFunction, X, A, B, cache: WordEvaluator | None = None):
    """``Hess U(X)[A, B]``: outer-Hessian term plus the tensor term
    ``sum_o g_o sum_ij <d_{x_i} D_{x_j} phi_o(X) # A^i, B^j>``."""
    _unsupported_arctan(U, "Hessian")
    ev, _ = U._evaluator(X, cache)
    A = as_stack(A)
    B = as_stack(B)
    v = U.inner_values(X, ev)
    g = U.outer.grad(v)
    G = U.outer.hess(v)
    sA = _directional_sums(U, ev, A)
    sB = sA if B is A else _directional_sums(U, ev, B)
    total = np.einsum("...o,...oq,...q->...", sA, G, sB)
    hp = U.hess_polys()
    for o in range(U.m):
        for i in range(U.dims):
            Ai = A[..., i, :, :]
            if not np.any(Ai):
                continue
            for j in range(U.dims):
                T = hp[o][i][j]
                if not len(T):
                    continue
                Bj = B[..., j, :, :]
                M = tensor_contract(T, None, Ai, ev)
                total = total + g[..., o] * np.real(np.sum(M * np.swapaxes(Bj, -1, -2), axis=(-1, -2))) / ev.n
    return _real(total)


def common_laplacian(U: CylinderFunction, X, cache: WordEvaluator | None = None):
    """``Hess U(X)[1, 1]``, evaluated through word traces only."""
    _unsupported_arctan(U, "Delta")
    ev, _ = U._evaluator(X, cache)
    v = U.inner_values(X, ev)
    g = U.outer.grad(v)
    G = U.outer.hess(v)
    if np.any(G):
        s = np.stack(
            [np.real(sum((c * ev.trace(w) for Dj in Do for w, c in Dj.items()),
                         np.zeros(ev.batch_shape, dtype=complex))) for Do in U._grad_polys],
            axis=-1,
        )
        total = np.einsum("...o,...oq,...q->...", s, G, s)
    else:
        total = np.zeros(ev.batch_shape)
    hp = U.hess_polys()
    for o in range(U.m):
        acc = np.zeros(ev.batch_shape, dtype=complex)
        for i in range(U.dims):
            for j in range(U.dims):
                for (a, b), c in hp[o][i][j].items():
                    acc = acc + c * ev.trace(a + b)
        total = total + g[..., o] * np.real(acc)
    return _real(total)


def free_laplacian(U: CylinderFunction, X, cache: WordEvaluator | None = None):
    """``Theta U(X) = sum_o g_o sum_i (tr ⊗ tr)(d_{x_i} D_{x_i} phi_o)(X)``.

    The outer-Hessian tensor term vanishes against free semicirculars and is
    not computed.
    """
    _unsupported_arctan(U, "Theta")
    ev, _ = U._evaluator(X, cache)
    g = U.outer.grad(U.inner_values(X, ev))
    hp = U.hess_polys()
    total = np.zeros(ev.batch_shape)
    for o in range(U.m):
        acc = np.zeros(ev.batch_shape, dtype=complex)
        for i in range(U.dims):
            for (a, b), c in hp[o][i][i].items():
                acc = acc + c * ev.trace(a) * ev.trace(b)
        total = total + g[..., o] * np.real(acc)
    return _real(total)


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    samples: int

    def __iter__(self):
        return iter((self.mean, self.stderr))


def free_laplacian_mc(U: CylinderFunction, X, samples: int, rng: np.random.Generator,
                      batch: int = 64) -> MCEstimate:
    """Average of ``sum_l Hess U(X)[S^l e^l, S^l e^l]`` over GUE(n) proxies ``S``."""
    stack = as_stack(X)
    if stack.ndim != 3:
        raise DimensionError("free_laplacian_mc takes a single tuple")
    d, n = stack.shape[0], stack.shape[-1]
    vals = []
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        S = gue_batch(n, 1.0, rng, b * d).reshape(b, d, n, n)
        tot = np.zeros(b)
        for l in range(d):
            E = np.zeros((b, d, n, n), dtype=complex)
            E[:, l] = S[:, l]
            tot = tot + hess_apply(U, stack, E, E)
        vals.append(tot)
        done += b
    vals = np.concatenate(vals)
    se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else float("nan")
    return MCEstimate(float(vals.mean()), se, int(vals.size))


def free_laplacian_mc_bias(U: CylinderFunction, X, cache: WordEvaluator | None = None):
    """Exact finite-n bias of :func:`free_laplacian_mc` for GUE proxies.

    For fixed ``D`` and GUE ``S`` with ``E|S_ij|^2 = 1/n``,
    ``E[tr_n(DS) tr_n(ES)] = tr_n(DE)/n^2`` while the tensor term is unbiased,
    so the bias is ``n^-2 sum_l sum_oq g_oq tr_n(D^l_o D^l_q)``. Returns the
    coefficient ``c2`` of ``1/n^2``.
    """
    _unsupported_arctan(U, "bias")
    ev, _ = U._evaluator(X, cache)
    G = U.outer.hess(U.inner_values(X, ev))
    total = np.zeros(ev.batch_shape)
    if not np.any(G):
        return _real(total)
    for l in range(U.dims):
        mats = [evaluate(U._grad_polys[o][l], None, ev) for o in range(U.m)]
        for o, q in itertools.product(range(U.m), repeat=2):
            tr = np.real(kernels.trace_prod(mats[o], mats[q])) / ev.n
            total = total + G[..., o, q] * tr
    return _real(total)


# -- arctan functional calculus ----------------------------------------------

def arctan_apply(X):
    """``arctan`` of Hermitian matrices (batched) by eigendecomposition."""
    X = np.asarray(X, dtype=complex)
    lam, V = np.linalg.eigh(X)
    return (V * np.arctan(lam)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def _gl_nodes(k=GAUSS_LEGENDRE_POINTS):
    x, w = np.polynomial.legendre.leggauss(k)
    return 0.5 * (x + 1.0), 0.5 * w


def arctan_diff_apply(X, A, points: int = GAUSS_LEGENDRE_POINTS):
    """Directional derivative of ``arctan`` at ``X`` along ``A``.

    Gauss-Legendre quadrature over ``t in [0, 1]`` of
    ``(1/2)[R_+ A R_+ + R_- A R_-]`` with ``R_± = (1 ± i t X)^{-1}``, carried
    out in the eigenbasis of ``X`` where the resolvents are diagonal.
    """
    X = np.asarray(X, dtype=complex)
    A = np.asarray(A, dtype=complex)
    lam, V = np.linalg.eigh(X)
    Vh = np.conj(np.swapaxes(V, -1, -2))
    At = Vh @ A @ V
    t, w = _gl_nodes(points)
    li = lam[..., :, None]
    lj = lam[..., None, :]
    K = np.zeros(np.broadcast_shapes(li.shape, lj.shape))
    for tk, wk in zip(t, w):
        K += wk * np.real(1.0 / ((1.0 + 1j * tk * li) * (1.0 + 1j * tk * lj)))
    return V @ (K * At) @ Vh


def arctan_divided_difference(lam):
    """``(arctan l_i - arctan l_j)/(l_i - l_j)`` with ``1/(1+l^2)`` on ties."""
    lam = np.asarray(lam, dtype=float)
    li, lj = lam[:, None], lam[None, :]
    diff = li - lj
    same = np.abs(diff) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        dd = (np.arctan(li) - np.arctan(lj)) / diff
    return np.where(same, 1.0 / (1.0 + li * lj), dd)


# -- Hamiltonians ------------------------------------------------------------

HAMILTONIAN_KINDS = ("quadratic-with-potential", "eikonal-L2", "eikonal-L1", "commutator-quadratic")


@dataclass(frozen=True)
class HamiltonianSpec:
    """Closed-form Hamiltonian of one of the worked examples.

    ``potential`` is the state part ``phi`` of the running cost
    ``L(X, a) = L0(a) + phi(X)``; it enters every kind as ``- phi(X)``.
    """

    kind: str
    potential: CylinderFunction | None = None

    def __post_init__(self):
        if self.kind not in HAMILTONIAN_KINDS:
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}")


def _abs_trace(P):
    lam = np.linalg.eigvalsh(P)
    return np.abs(lam).mean(axis=-1)


def _commutator(a, b):
    return a @ b - b @ a


def _potential(spec, X):
    if spec.potential is None:
        return 0.0
    return spec.potential.value(X)


def hamiltonian(spec: HamiltonianSpec, X, P):
    """``sup_a {<b(X, a), P> - L(X, a)}`` in closed form."""
    Xs, Ps = as_stack(X), as_stack(P)
    if Xs.shape[-3:] != Ps.shape[-3:]:
        raise DimensionError("X and P shapes differ")
    if spec.kind == "quadratic-with-potential":
        h = 0.5 * inner(Ps, Ps)
    elif spec.kind == "eikonal-L2":
        h = np.sqrt(np.maximum(inner(Ps, Ps), 0.0))
    elif spec.kind == "eikonal-L1":
        h = _abs_trace(Ps).sum(axis=-1)
    else:
        C = _commutator(Ps, Xs)
        h = 0.5 * inner(C, C)
    return _real(h - _potential(spec, X))


def drift(kind: str, X, alpha):
    """Drift ``b(X, a)``: ``a`` for additive kinds, ``i[X, a]`` for the commutator."""
    if kind == "commutator-quadratic" or kind == "commutator":
        return 1j * _commutator(as_stack(X), as_stack(alpha))
    return as_stack(alpha)


def control_cost(kind: str, alpha):
    """Control part ``L0(a)``; eikonal kinds carry only the constraint."""
    a = as_stack(alpha)
    if kind in ("quadratic-with-potential", "commutator-quadratic"):
        return 0.5 * inner(a, a)
    return np.zeros(a.shape[:-3])


def admissible(kind: str, alpha, tol: float = 1e-12) -> bool:
    a = as_stack(alpha)
    if kind == "eikonal-L2":
        return bool(np.all(np.sqrt(inner(a, a)) <= 1 + tol))
    if kind == "eikonal-L1":
        return bool(np.all(np.abs(np.linalg.eigvalsh(a)) <= 1 + tol))
    return True


def hamiltonian_objective(spec: HamiltonianSpec, X, P, alpha):
    """``<b(X, a), P> - L(X, a)`` for one candidate control."""
    b = drift(spec.kind, X, alpha)
    return _real(inner(b, as_stack(P)) - control_cost(spec.kind, alpha) - _potential(spec, X))


def hamiltonian_maximizer(spec: HamiltonianSpec, X, P):
    """Analytic maximizer of :func:`hamiltonian_objective`."""
    Ps = as_stack(P)
    if spec.kind == "quadratic-with-potential":
        a = Ps
    elif spec.kind == "eikonal-L2":
        nrm = np.sqrt(inner(Ps, Ps))
        a = Ps / np.where(nrm > 0, nrm, 1.0)[..., None, None, None]
    elif spec.kind == "eikonal-L1":
        lam, V = np.linalg.eigh(Ps)
        a = (V * np.sign(lam)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    else:
        a = 1j * _commutator(Ps, as_stack(X))
    return _wrap_like(X, hermitian_part(a))


# -- time-dependent cylinder functions ---------------------------------------

@dataclass
class TimeCylinder:
    """Cylinder function whose outer coefficients move in time.

    ``make_outer(theta)`` must be linear in ``theta``; then the time derivative
    of ``U`` is the cylinder function with outer ``make_outer(dtheta/dt)``.
    ``theta`` and ``dtheta`` are given on ``times``; values in between come
    from cubic Hermite interpolation using both.
    """

    inner: list
    make_outer: Callable[[np.ndarray], OuterFunction]
    times: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    arctan: bool = False
    _spline: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.dtheta = np.asarray(self.dtheta, dtype=float)
        if self.times.size >= 2:
            self._spline = CubicHermiteSpline(self.times, self.theta, self.dtheta, axis=0)
            self._dspline = self._spline.derivative()
        self._template = CylinderFunction(self.inner, self.make_outer(self.theta[-1]), self.arctan)

    @classmethod
    def static(cls, U: CylinderFunction) -> "TimeCylinder":
        return _StaticTimeCylinder(U)

    def _check_t(self, t):
        if not (self.times[0] - 1e-12 <= t <= self.times[-1] + 1e-12):
            raise ValueError(f"t={t} outside [{self.times[0]}, {self.times[-1]}]")

    def coefficients(self, t):
        self._check_t(t)
        idx = np.searchsorted(self.times, t)
        if idx < self.times.size and self.times[idx] == t:
            return self.theta[idx], self.dtheta[idx]
        return self._spline(t), self._dspline(t)

    def at(self, t) -> CylinderFunction:
        th, _ = self.coefficients(t)
        return self._template.with_outer(self.make_outer(th))

    def dt(self, t) -> CylinderFunction:
        _, dth = self.coefficients(t)
        return self._template.with_outer(self.make_outer(dth))

    def value(self, t, X):
        return self.at(t).value(X)

    def time_derivative(self, t, X):
        return self.dt(t).value(X)


class _StaticTimeCylinder(TimeCylinder):
    def __init__(self, U: CylinderFunction):
        self._U = U
        self._zero = CylinderFunction(U.inner, LinearOuter(tuple(0.0 for _ in U.inner)), U.arctan)
        self.inner = U.inner
        self.arctan = U.arctan
        self.times = np.array([-np.inf, np.inf])

    def at(self, t):
        return self._U

    def dt(self, t):
        return self._zero

    def time_derivative(self, t, X):
        ev = as_stack(X)
        return np.zeros(ev.shape[:-3])[()] if ev.ndim == 3 else np.zeros(ev.shape[:-3])
