"""Backend selection for the hot inner loops.

The compiled extension ``freecontrol._ckernels`` is used when it imports;
otherwise (or when ``FREECONTROL_PURE_PYTHON=1``) the numpy fallback in
``freecontrol._kernels_py`` is used. Both expose:

``hermitian_from_normals(z, n, var)``
    batch of Hermitian matrices from ``(batch, n*n)`` standard normals, with
    diagonal variance ``var`` and off-diagonal ``E|h_ij|^2 = var``.
``trace_prod(a, b)``
    batched unnormalized ``tr(a @ b)`` without forming the product.
``dyson_repulsion(lam)``
    pairwise ``sum_{j != i} 1/(lam_i - lam_j)`` per row plus the minimal gap.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("FREECONTROL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py


def hermitian_from_normals(z, n, var):
    z = np.ascontiguousarray(z, dtype=np.float64)
    return _impl.hermitian_from_normals(z, int(n), float(var))


def trace_prod(a, b):
    """``tr(a @ b)`` over arbitrary leading batch axes (unnormalized)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    n, m = a.shape[-2:]
    if b.shape[-2:] != (m, n):
        raise ValueError(f"cannot form tr(a @ b) for {a.shape} and {b.shape}")
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    a = np.broadcast_to(a, lead + (n, m))
    b = np.broadcast_to(b, lead + (m, n))
    af = np.ascontiguousarray(a.reshape((-1, n, m)))
    bf = np.ascontiguousarray(b.reshape((-1, m, n)))
    return _impl.trace_prod(af, bf).reshape(lead)


def dyson_repulsion(lam):
    lam = np.asarray(lam, dtype=np.float64)
    squeeze = lam.ndim == 1
    lam2 = np.ascontiguousarray(np.atleast_2d(lam))
    force, gap = _impl.dyson_repulsion(lam2)
    force, gap = np.asarray(force), np.asarray(gap)
    if squeeze:
        return force[0], gap[0]
    return force, gap


def use_backend(name):
    """Switch backend at runtime (``"cython"`` or ``"python"``); for benchmarks."""
    global _impl, BACKEND
    if name == "python":
        _impl, BACKEND = _kernels_py, "python"
    elif name == "cython":
        from . import _ckernels
        _impl, BACKEND = _ckernels, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")
