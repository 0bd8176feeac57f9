"""Non-commutative polynomials in ``d`` self-adjoint letters.

Words are tuples of 1-based letter indices, so ``(1, 2, 1)`` is ``x1 x2 x1``
and ``()`` is the unit. Polynomials are sparse maps from words to complex
coefficients. The free difference quotient takes values in
:class:`TensorPolynomial`, kept as explicit sums of elementary tensors of
monomials so that both ``#``-contraction against a matrix and the
``tr ⊗ tr`` trace are direct.

Evaluation accepts a :class:`freecontrol.randmat.MatrixTuple` or any array
whose last three axes are ``(d, n, n)``; leading axes are treated as a batch.
"""

from __future__ import annotations

import numbers
from collections import defaultdict
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import kernels

Word = tuple


class DimensionError(ValueError):
    """Letter count or matrix shape mismatch."""


def _check_word(word, dims):
    word = tuple(int(i) for i in word)
    for i in word:
        if not 1 <= i <= dims:
            raise DimensionError(f"letter index {i} outside 1..{dims}")
    return word


def _check_letter(j, dims):
    if not isinstance(j, numbers.Integral) or not 1 <= j <= dims:
        raise DimensionError(f"letter index {j!r} outside 1..{dims}")
    return int(j)


def _fmt_coeff(c):
    c = complex(c)
    if c.imag == 0:
        r = c.real
        return repr(int(r)) if r == int(r) else repr(r)
    return repr(c)


def _fmt_word(word):
    return "".join(f"x{i}" for i in word) if word else "1"


class NCPolynomial:
    """Sparse element of ``C<x1, ..., xd>``.

    Parameters
    ----------
    terms : mapping of word -> coefficient, optional
    dims : int
        Number of letters ``d``.
    """

    __slots__ = ("_terms", "dims", "_hash")

    def __init__(self, terms: Mapping | None = None, dims: int = 1):
        if dims < 1:
            raise DimensionError("dims must be >= 1")
        self.dims = int(dims)
        clean = {}
        for word, c in (terms or {}).items():
            c = complex(c)
            if c != 0:
                w = _check_word(word, self.dims)
                clean[w] = clean.get(w, 0) + c
        self._terms = {w: c for w, c in clean.items() if c != 0}
        self._hash = None

    # -- constructors -------------------------------------------------
    @classmethod
    def _raw(cls, terms, dims):
        obj = cls.__new__(cls)
        obj.dims = dims
        obj._terms = {w: c for w, c in terms.items() if c != 0}
        obj._hash = None
        return obj

    @classmethod
    def letter(cls, j: int, dims: int) -> "NCPolynomial":
        return cls({(_check_letter(j, dims),): 1.0}, dims)

    @classmethod
    def constant(cls, c, dims: int) -> "NCPolynomial":
        return cls({(): c}, dims)

    @classmethod
    def monomial(cls, word: Sequence[int], coeff=1.0, dims: int = 1) -> "NCPolynomial":
        return cls({tuple(word): coeff}, dims)

    @classmethod
    def zero(cls, dims: int) -> "NCPolynomial":
        return cls({}, dims)

    # -- container protocol --------------------------------------------
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def coeff(self, word) -> complex:
        return self._terms.get(tuple(word), 0j)

    @property
    def degree(self) -> int:
        return max((len(w) for w in self._terms), default=-1)

    # -- arithmetic ------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, NCPolynomial):
            if other.dims != self.dims:
                raise DimensionError(f"letter counts differ: {self.dims} vs {other.dims}")
            return other
        if isinstance(other, numbers.Number):
            return NCPolynomial.constant(other, self.dims)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for w, c in other._terms.items():
            out[w] = out.get(w, 0) + c
        return NCPolynomial._raw(out, self.dims)

    __radd__ = __add__

    def __neg__(self):
        return NCPolynomial._raw({w: -c for w, c in self._terms.items()}, self.dims)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, numbers.Number):
            c = complex(other)
            return NCPolynomial._raw({w: c * v for w, v in self._terms.items()}, self.dims)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = defaultdict(complex)
        for w1, c1 in self._terms.items():
            for w2, c2 in other._terms.items():
                out[w1 + w2] += c1 * c2
        return NCPolynomial._raw(out, self.dims)

    def __rmul__(self, other):
        if isinstance(other, numbers.Number):
            return self * other
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, numbers.Number):
            return self * (1.0 / complex(other))
        return NotImplemented

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        out = NCPolynomial.constant(1.0, self.dims)
        for _ in range(k):
            out = out * self
        return out

    def adjoint(self) -> "NCPolynomial":
        """Reverse every word and conjugate its coefficient."""
        return NCPolynomial._raw(
            {w[::-1]: c.conjugate() for w, c in self._terms.items()}, self.dims
        )

    def is_self_adjoint(self, tol: float = 0.0) -> bool:
        for w, c in self._terms.items():
            if abs(self._terms.get(w[::-1], 0) - c.conjugate()) > tol:
                return False
        return True

    def compose(self, subs: Sequence["NCPolynomial"]) -> "NCPolynomial":
        """Substitute ``subs[j-1]`` for every letter ``x_j``."""
        if len(subs) != self.dims:
            raise DimensionError(f"need {self.dims} substitutions, got {len(subs)}")
        dims = subs[0].dims
        out = NCPolynomial.zero(dims)
        for w, c in self._terms.items():
            term = NCPolynomial.constant(c, dims)
            for i in w:
                term = term * subs[i - 1]
            out = out + term
        return out

    # -- comparison ----------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, numbers.Number):
            other = NCPolynomial.constant(other, self.dims)
        if not isinstance(other, NCPolynomial):
            return NotImplemented
        return self.dims == other.dims and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.dims, frozenset(self._terms.items())))
        return self._hash

    def isclose(self, other: "NCPolynomial", atol: float = 1e-12) -> bool:
        words = set(self._terms) | set(other._terms)
        return all(abs(self.coeff(w) - other.coeff(w)) <= atol for w in words)

    def __repr__(self):
        if not self._terms:
            return "0"
        parts = [f"{_fmt_coeff(c)}*{_fmt_word(w)}" for w, c in sorted(self._terms.items())]
        return " + ".join(parts)

    # -- serialization ---------------------------------------------------
    def to_json(self) -> list:
        return [
            {"word": list(w), "re": float(c.real), "im": float(c.imag)}
            for w, c in sorted(self._terms.items())
        ]

    @classmethod
    def from_json(cls, data, dims: int | None = None) -> "NCPolynomial":
        """Inverse of :meth:`to_json`. Also accepts ``{"dims": d, "terms": [...]}``."""
        if isinstance(data, Mapping):
            dims = data.get("dims", dims)
            data = data["terms"]
        terms = {}
        for entry in data:
            w = tuple(entry["word"])
            terms[w] = terms.get(w, 0) + complex(entry.get("re", 0.0), entry.get("im", 0.0))
        if dims is None:
            dims = max((max(w) for w in terms if w), default=1)
        return cls(terms, dims)


def letters(dims: int) -> list[NCPolynomial]:
    """``[x1, ..., xd]``."""
    return [NCPolynomial.letter(j, dims) for j in range(1, dims + 1)]


class TensorPolynomial:
    """Element of ``NCP_d ⊗ NCP_d`` as a sum of monomial pairs.

    Multiplication follows ``(a⊗b)(c⊗e) = (ac)⊗(eb)``.
    """

    __slots__ = ("_terms", "dims")

    def __init__(self, terms: Mapping | None = None, dims: int = 1):
        self.dims = int(dims)
        clean = defaultdict(complex)
        for (wl, wr), c in (terms or {}).items():
            clean[(_check_word(wl, dims), _check_word(wr, dims))] += complex(c)
        self._terms = {k: c for k, c in clean.items() if c != 0}

    @classmethod
    def _raw(cls, terms, dims):
        obj = cls.__new__(cls)
        obj.dims = dims
        obj._terms = {k: c for k, c in terms.items() if c != 0}
        return obj

    @classmethod
    def tensor(cls, p: NCPolynomial, q: NCPolynomial) -> "TensorPolynomial":
        """Elementary tensor ``p ⊗ q`` expanded into monomial pairs."""
        if p.dims != q.dims:
            raise DimensionError("letter counts differ")
        out = defaultdict(complex)
        for wl, cl in p.items():
            for wr, cr in q.items():
                out[(wl, wr)] += cl * cr
        return cls._raw(out, p.dims)

    @classmethod
    def unit(cls, dims: int) -> "TensorPolynomial":
        return cls._raw({((), ()): 1.0 + 0j}, dims)

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def elementary(self) -> Iterator[tuple[NCPolynomial, NCPolynomial, complex]]:
        """Yield ``(left, right, coeff)`` with monomial ``left`` and ``right``."""
        for (wl, wr), c in self._terms.items():
            yield (NCPolynomial._raw({wl: 1.0 + 0j}, self.dims),
                   NCPolynomial._raw({wr: 1.0 + 0j}, self.dims), c)

    def _check(self, other):
        if other.dims != self.dims:
            raise DimensionError("letter counts differ")

    def __add__(self, other):
        if not isinstance(other, TensorPolynomial):
            return NotImplemented
        self._check(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0) + c
        return TensorPolynomial._raw(out, self.dims)

    def __neg__(self):
        return TensorPolynomial._raw({k: -c for k, c in self._terms.items()}, self.dims)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, numbers.Number):
            c = complex(other)
            return TensorPolynomial._raw({k: c * v for k, v in self._terms.items()}, self.dims)
        if not isinstance(other, TensorPolynomial):
            return NotImplemented
        self._check(other)
        out = defaultdict(complex)
        for (a, b), c1 in self._terms.items():
            for (c, e), c2 in other._terms.items():
                out[(a + c, e + b)] += c1 * c2
        return TensorPolynomial._raw(out, self.dims)

    def __rmul__(self, other):
        if isinstance(other, numbers.Number):
            return self * other
        return NotImplemented

    def left_mul(self, p: NCPolynomial) -> "TensorPolynomial":
        """``p · T``, i.e. ``(p⊗1) T``."""
        return TensorPolynomial.tensor(p, NCPolynomial.constant(1, p.dims)) * self

    def right_mul(self, q: NCPolynomial) -> "TensorPolynomial":
        """``T · q``, i.e. ``(1⊗q) T``."""
        return TensorPolynomial.tensor(NCPolynomial.constant(1, q.dims), q) * self

    def adjoint(self) -> "TensorPolynomial":
        return TensorPolynomial._raw(
            {(a[::-1], b[::-1]): c.conjugate() for (a, b), c in self._terms.items()}, self.dims
        )

    def flip_multiply(self) -> NCPolynomial:
        """Apply ``a⊗b ↦ b a``."""
        out = defaultdict(complex)
        for (a, b), c in self._terms.items():
            out[b + a] += c
        return NCPolynomial._raw(out, self.dims)

    def substitute(self, subs: Sequence[NCPolynomial]) -> "TensorPolynomial":
        """Compose both tensor legs with ``subs``."""
        dims = subs[0].dims
        out = TensorPolynomial._raw({}, dims)
        for (a, b), c in self._terms.items():
            left = NCPolynomial._raw({a: c}, self.dims).compose(subs)
            right = NCPolynomial._raw({b: 1.0 + 0j}, self.dims).compose(subs)
            out = out + TensorPolynomial.tensor(left, right)
        return out

    def __eq__(self, other):
        if not isinstance(other, TensorPolynomial):
            return NotImplemented
        return self.dims == other.dims and self._terms == other._terms

    __hash__ = None

    def isclose(self, other: "TensorPolynomial", atol: float = 1e-12) -> bool:
        keys = set(self._terms) | set(other._terms)
        return all(abs(self._terms.get(k, 0) - other._terms.get(k, 0)) <= atol for k in keys)

    def __repr__(self):
        if not self._terms:
            return "0"
        return " + ".join(
            f"{_fmt_coeff(c)}*({_fmt_word(a)}⊗{_fmt_word(b)})"
            for (a, b), c in sorted(self._terms.items())
        )


# -- derivatives -----------------------------------------------------------

def free_diff(p: NCPolynomial, j: int) -> TensorPolynomial:
    """Free difference quotient: split each monomial at every occurrence of x_j."""
    j = _check_letter(j, p.dims)
    out = defaultdict(complex)
    for w, c in p.items():
        for k, letter in enumerate(w):
            if letter == j:
                out[(w[:k], w[k + 1:])] += c
    return TensorPolynomial._raw(out, p.dims)


def cyclic_diff(p: NCPolynomial, j: int) -> NCPolynomial:
    """Cyclic derivative: free difference quotient followed by ``a⊗b ↦ b a``."""
    j = _check_letter(j, p.dims)
    out = defaultdict(complex)
    for w, c in p.items():
        for k, letter in enumerate(w):
            if letter == j:
                out[w[k + 1:] + w[:k]] += c
    return NCPolynomial._raw(out, p.dims)


def cyclic_gradient(p: NCPolynomial) -> list[NCPolynomial]:
    return [cyclic_diff(p, j) for j in range(1, p.dims + 1)]


# -- evaluation --------------------------------------------------------------

def as_stack(X) -> np.ndarray:
    """Return the ``(..., d, n, n)`` complex array behind ``X``."""
    data = getattr(X, "data", X)
    data = np.asarray(data)
    if data.ndim < 3 or data.shape[-1] != data.shape[-2]:
        raise DimensionError(f"expected (..., d, n, n) array, got shape {data.shape}")
    if data.dtype != np.complex128:
        data = data.astype(np.complex128)
    return data


def _canonical_rotation(word):
    if len(word) < 2:
        return word
    return min(word[k:] + word[:k] for k in range(len(word)))


class WordEvaluator:
    """Memoized products and normalized traces of words at a fixed tuple.

    Traces use cyclic invariance: a word is rotated to its least rotation and
    split in half, and ``tr(AB)`` is taken in O(n^2) without forming ``AB``.
    """

    def __init__(self, X):
        self.stack = as_stack(X)
        self.dims = self.stack.shape[-3]
        self.n = self.stack.shape[-1]
        self.batch_shape = self.stack.shape[:-3]
        self._prod = {}
        self._trace = {}
        self._letters = {}

    def letter(self, j):
        got = self._letters.get(j)
        if got is None:
            got = self._letters[j] = np.ascontiguousarray(self.stack[..., j - 1, :, :])
        return got

    def identity(self):
        return np.broadcast_to(np.eye(self.n, dtype=np.complex128),
                               self.batch_shape + (self.n, self.n))

    def product(self, word) -> np.ndarray:
        word = tuple(word)
        if not word:
            return self.identity()
        got = self._prod.get(word)
        if got is None:
            if len(word) == 1:
                got = self.letter(word[0])
            else:
                got = self.product(word[:-1]) @ self.letter(word[-1])
            self._prod[word] = got
        return got

    def trace(self, word) -> np.ndarray:
        word = _canonical_rotation(tuple(word))
        got = self._trace.get(word)
        if got is None:
            if not word:
                got = np.ones(self.batch_shape, dtype=np.complex128)
            elif len(word) == 1:
                got = np.trace(self.letter(word[0]), axis1=-2, axis2=-1) / self.n
            else:
                h = len(word) // 2
                got = kernels.trace_prod(self.product(word[:h]), self.product(word[h:])) / self.n
            self._trace[word] = got
        return got

    def check_dims(self, dims):
        if dims != self.dims:
            raise DimensionError(f"polynomial has {dims} letters, tuple has {self.dims}")


def _evaluator(X, cache):
    if cache is not None:
        return cache
    return X if isinstance(X, WordEvaluator) else WordEvaluator(X)


def evaluate(p: NCPolynomial, X, cache: WordEvaluator | None = None) -> np.ndarray:
    """Substitute ``X_j`` for ``x_j``; returns ``(..., n, n)``."""
    ev = _evaluator(X, cache)
    ev.check_dims(p.dims)
    items = list(p.items())
    if len(items) == 1 and items[0][0]:
        w, c = items[0]
        return c * ev.product(w)
    out = np.zeros(ev.batch_shape + (ev.n, ev.n), dtype=np.complex128)
    for w, c in items:
        if w:
            out += c * ev.product(w)
        else:
            out[..., np.arange(ev.n), np.arange(ev.n)] += c
    return out


def trace_eval(p: NCPolynomial, X, cache: WordEvaluator | None = None):
    """Normalized trace ``tr_n p(X)``; a scalar for unbatched input."""
    ev = _evaluator(X, cache)
    ev.check_dims(p.dims)
    out = np.zeros(ev.batch_shape, dtype=np.complex128)
    for w, c in p.items():
        out = out + c * ev.trace(w)
    return out[()] if out.ndim == 0 else out


def tensor_contract(T: TensorPolynomial, X, A, cache: WordEvaluator | None = None) -> np.ndarray:
    """``T(X) # A = sum c · a(X) A b(X)``."""
    ev = _evaluator(X, cache)
    ev.check_dims(T.dims)
    A = np.asarray(A, dtype=np.complex128)
    if A.shape[-2:] != (ev.n, ev.n):
        raise DimensionError(f"direction has shape {A.shape}, expected (..., {ev.n}, {ev.n})")
    by_left = defaultdict(list)
    for (a, b), c in T.items():
        by_left[a].append((b, c))
    shape = np.broadcast_shapes(ev.batch_shape, A.shape[:-2]) + (ev.n, ev.n)
    out = np.zeros(shape, dtype=np.complex128)
    for a, rights in by_left.items():
        right = sum(c * ev.product(b) for b, c in rights)
        left = A if not a else ev.product(a) @ A
        out = out + left @ right
    return out


def tensor_trace(T: TensorPolynomial, X, cache: WordEvaluator | None = None):
    """``(tr_n ⊗ tr_n)(T(X)) = sum c · tr_n a(X) · tr_n b(X)``."""
    ev = _evaluator(X, cache)
    ev.check_dims(T.dims)
    out = np.zeros(ev.batch_shape, dtype=np.complex128)
    for (a, b), c in T.items():
        out = out + c * ev.trace(a) * ev.trace(b)
    return out[()] if out.ndim == 0 else out


# -- semicircular moments ----------------------------------------------------

@lru_cache(maxsize=None)
def _nc_pairings(colors: tuple) -> int:
    if not colors:
        return 1
    if len(colors) % 2:
        return 0
    first = colors[0]
    total = 0
    for k in range(1, len(colors), 2):
        if colors[k] == first:
            inside = _nc_pairings(colors[1:k])
            if inside:
                total += inside * _nc_pairings(colors[k + 1:])
    return total


def semicircle_moment(colors: Iterable[int]) -> int:
    """Number of color-respecting non-crossing pairings of ``colors``.

    Equals ``tau(S_{i1} ... S_{ik})`` for a free standard semicircular family.
    """
    return _nc_pairings(tuple(int(c) for c in colors))


def catalan(k: int) -> int:
    from math import comb
    return comb(2 * k, k) // (k + 1)
