"""Finite-n matrix models: Hermitian tuples, GUE sampling, spectral measures.

GUE normalization: off-diagonal entries are complex Gaussians with
``E|W_ij|^2 = dt/n`` and diagonal entries are real with variance ``dt/n``, so
``E tr_n(W^2) = dt`` and the spectrum of ``W/sqrt(dt)`` fills ``[-2, 2]``.

Random streams are counter-based (Philox) and keyed by
``(master_seed, path, source)``; see :func:`stream`.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import optimize

from . import kernels
from .ncpoly import DimensionError, WordEvaluator

HERMITIAN_TOL = 1e-12

SOURCES = {"common": 0, "free": 1, "x0": 2, "proxy": 3, "start": 4, "aux": 5}


def stream(master_seed: int, path: int = 0, source: str | int = "aux") -> np.random.Generator:
    """Independent generator for one path and one noise source."""
    tag = SOURCES[source] if isinstance(source, str) else int(source)
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(path), tag))
    return np.random.Generator(np.random.Philox(seq))


class NotHermitianError(ValueError):
    pass


def hermitian_part(a):
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


@dataclass(frozen=True, eq=False)
class MatrixTuple:
    """``d`` Hermitian ``n x n`` matrices stored as a ``(d, n, n)`` array."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.complex128)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or data.shape[1] != data.shape[2]:
            raise DimensionError(f"expected (d, n, n), got {data.shape}")
        scale = max(1.0, float(np.abs(data).max(initial=0.0)))
        dev = np.abs(data - np.conj(np.swapaxes(data, -1, -2))).max(initial=0.0)
        if dev > HERMITIAN_TOL * scale:
            raise NotHermitianError(f"component deviates from its adjoint by {dev:.3g}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_matrices(cls, mats) -> "MatrixTuple":
        return cls(np.stack([np.asarray(m, dtype=np.complex128) for m in mats]))

    @classmethod
    def zeros(cls, d: int, n: int) -> "MatrixTuple":
        return cls(np.zeros((d, n, n), dtype=np.complex128))

    @classmethod
    def identity(cls, d: int, n: int) -> "MatrixTuple":
        return cls(np.broadcast_to(np.eye(n), (d, n, n)))

    @property
    def d(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def __getitem__(self, j):
        return self.data[j]

    def __len__(self):
        return self.d

    def __iter__(self):
        return iter(self.data)

    def _other(self, other):
        other = other.data if isinstance(other, MatrixTuple) else np.asarray(other)
        if other.shape != self.data.shape:
            raise DimensionError(f"shape {other.shape} vs {self.data.shape}")
        return other

    def __add__(self, other):
        return MatrixTuple(self.data + self._other(other))

    def __sub__(self, other):
        return MatrixTuple(self.data - self._other(other))

    def __mul__(self, c):
        return MatrixTuple(self.data * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return MatrixTuple(-self.data)

    def inner(self, other) -> float:
        """``<X, Y> = sum_j Re tr_n(X_j^* Y_j)``."""
        return inner(self.data, self._other(other))

    def norm2(self) -> float:
        """``L^2`` norm ``(sum_j tr_n X_j^2)^{1/2}``."""
        return float(np.sqrt(self.inner(self)))

    def norm_inf(self) -> float:
        """Max over components of the spectral radius."""
        return float(max(np.abs(np.linalg.eigvalsh(x)).max() for x in self.data))

    def conjugate_by(self, u) -> "MatrixTuple":
        """``U X_j U^*`` for a single unitary or one unitary per component."""
        u = np.asarray(u, dtype=np.complex128)
        return MatrixTuple(hermitian_part(u @ self.data @ np.conj(np.swapaxes(u, -1, -2))))

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "re": self.data.real.tolist(),
            "im": self.data.imag.tolist(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "MatrixTuple":
        re = np.asarray(obj["re"], dtype=np.float64)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=np.float64)
        data = re + 1j * im
        if data.ndim == 2:
            data = data[None]
        if "d" in obj and data.shape[0] != obj["d"]:
            raise DimensionError("declared d does not match data")
        return cls(data)

    def eigenvalue_csv(self) -> str:
        """CSV rows ``component,index,eigenvalue`` for plotting."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component", "index", "eigenvalue"])
        for j, x in enumerate(self.data, start=1):
            for i, lam in enumerate(np.linalg.eigvalsh(x)):
                w.writerow([j, i, repr(float(lam))])
        return buf.getvalue()

    def __repr__(self):
        return f"MatrixTuple(d={self.d}, n={self.n})"


def inner(a, b):
    """Real ``L^2(tr_n)`` inner product over the last three axes ``(d, n, n)``.

    Works on any broadcastable batch of stacks; returns ``sum_j Re tr_n(a_j^* b_j)``.
    """
    a = _unbroadcast(np.asarray(a, dtype=np.complex128))
    b = _unbroadcast(np.asarray(b, dtype=np.complex128))
    n = a.shape[-1]
    # Re(conj(a) b) summed = dot product of the interleaved real views
    af = np.ascontiguousarray(a).view(np.float64).reshape(a.shape[:-3] + (1, -1))
    bf = np.ascontiguousarray(b).view(np.float64).reshape(b.shape[:-3] + (-1, 1))
    return (af @ bf)[..., 0, 0] / n


def _unbroadcast(a):
    """Drop leading axes that are stride-0 broadcasts (no copy)."""
    while a.ndim > 3 and a.strides[0] == 0:
        a = a[0]
    return a


# -- sampling -------------------------------------------------------------

def gue_batch(n: int, dt: float, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """``size`` independent GUE increments, shape ``(size, n, n)``."""
    if n < 1 or dt <= 0:
        raise ValueError("need n >= 1 and dt > 0")
    z = rng.standard_normal((size, n * n))
    return kernels.hermitian_from_normals(z, n, dt / n)


def gue_increment(n: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """One Hermitian Gaussian increment with ``E tr_n(dW^2) = dt``."""
    return gue_batch(n, dt, rng, 1)[0]


def sample_free_semicircular_proxy(X, rng: np.random.Generator) -> MatrixTuple:
    """``d`` fresh GUE(n) matrices at unit time, as finite-n stand-ins for a
    semicircular family free from ``X``."""
    d, n = (X.d, X.n) if isinstance(X, MatrixTuple) else (X[0], X[1])
    return MatrixTuple(gue_batch(n, 1.0, rng, d))


def gue_tuple(d: int, n: int, rng: np.random.Generator, t: float = 1.0) -> MatrixTuple:
    return MatrixTuple(gue_batch(n, t, rng, d))


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


# -- spectral measures ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Empirical measure with uniform weights on sorted atoms."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.sort(np.asarray(self.atoms, dtype=np.float64).ravel())
        if a.size == 0:
            raise ValueError("empty measure")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite atoms")
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    @property
    def size(self) -> int:
        return self.atoms.size

    def moment(self, k: int) -> float:
        return float(np.mean(self.atoms ** k))

    def quantile(self, u) -> np.ndarray:
        """Left-continuous quantile function of the empirical measure."""
        u = np.asarray(u, dtype=np.float64)
        idx = np.clip(np.ceil(u * self.size).astype(int) - 1, 0, self.size - 1)
        return self.atoms[idx]

    def mass_above(self, x: float) -> float:
        return float(np.count_nonzero(self.atoms > x)) / self.size

    def mass_below(self, x: float) -> float:
        return float(np.count_nonzero(self.atoms < x)) / self.size

    @classmethod
    def point_mass(cls, a: float = 0.0, size: int = 1) -> "SpectralMeasure":
        return cls(np.full(size, float(a)))


def spectral_measure(x) -> SpectralMeasure:
    """Eigenvalues of a single Hermitian matrix, sorted."""
    x = np.asarray(x, dtype=np.complex128)
    try:
        lam = np.linalg.eigvalsh(x)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    return SpectralMeasure(lam)


def wasserstein2_1d(mu: SpectralMeasure, nu: SpectralMeasure) -> float:
    """Quadratic Wasserstein distance through the monotone (quantile) coupling.

    Unequal sizes are handled on the common refinement of the two quantile
    grids ``{i/m}`` and ``{j/k}``, where both quantile functions are constant.
    """
    a, b = mu.atoms, nu.atoms
    m, k = a.size, b.size
    if m == k:
        return float(np.sqrt(np.mean((a - b) ** 2)))
    cuts = np.union1d(np.arange(m + 1) / m, np.arange(k + 1) / k)
    widths = np.diff(cuts)
    mids = 0.5 * (cuts[1:] + cuts[:-1])
    ia = np.minimum((mids * m).astype(int), m - 1)
    ib = np.minimum((mids * k).astype(int), k - 1)
    return float(np.sqrt(np.sum(widths * (a[ia] - b[ib]) ** 2)))


def semicircle_cdf(x, radius: float = 2.0):
    x = np.clip(np.asarray(x, dtype=np.float64) / radius * 2.0, -2.0, 2.0)
    return 0.5 + x * np.sqrt(4.0 - x * x) / (4.0 * np.pi) + np.arcsin(x / 2.0) / np.pi


def semicircle_density(x, radius: float = 2.0):
    x = np.asarray(x, dtype=np.float64)
    r2 = radius * radius
    return np.where(np.abs(x) < radius, 2.0 / (np.pi * r2) * np.sqrt(np.maximum(r2 - x * x, 0)), 0.0)


def semicircle_quantiles(m: int, radius: float = 2.0) -> SpectralMeasure:
    """``m`` atoms at the mid-quantiles ``(i + 1/2)/m`` of the semicircle law."""
    out = np.empty(m)
    for i in range(m):
        u = (i + 0.5) / m
        out[i] = optimize.brentq(lambda x: semicircle_cdf(x, radius) - u, -radius, radius,
                                 xtol=1e-14)
    return SpectralMeasure(out)


# -- moments -------------------------------------------------------------

class MomentVector(dict):
    """Map from word to ``tr_n`` of that word, up to a degree cap."""

    def __init__(self, values=(), degree_cap: int = 0, dims: int = 1):
        super().__init__(values)
        self.degree_cap = degree_cap
        self.dims = dims

    def distance(self, other: "MomentVector") -> float:
        """Heuristic Euclidean distance between shared moment coordinates.

        Not a metric on laws; for diagnostics only.
        """
        keys = set(self) & set(other)
        return float(np.sqrt(sum(abs(self[k] - other[k]) ** 2 for k in keys)))


def moments(X, degree_cap: int) -> MomentVector:
    """All word moments ``tr_n(X_{i1} ... X_{ik})`` with ``k <= degree_cap``."""
    if degree_cap < 0:
        raise ValueError("degree_cap must be >= 0")
    ev = WordEvaluator(X)
    out = MomentVector(degree_cap=degree_cap, dims=ev.dims)
    letters = range(1, ev.dims + 1)
    for k in range(degree_cap + 1):
        for word in itertools.product(letters, repeat=k):
            out[word] = complex(ev.trace(word))
    return out
