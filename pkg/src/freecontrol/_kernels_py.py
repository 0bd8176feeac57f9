"""Pure-numpy versions of the compiled kernels in ``_ckernels.pyx``.

Each function has the same signature and output layout as its compiled twin.
"""

import numpy as np


_TRIU_CACHE = {}


def _triu(n):
    idx = _TRIU_CACHE.get(n)
    if idx is None:
        idx = np.triu_indices(n, k=1)
        _TRIU_CACHE[n] = idx
    return idx


def hermitian_from_normals(z, n, var):
    z = np.asarray(z, dtype=np.float64)
    batch = z.shape[0]
    out = np.zeros((batch, n, n), dtype=np.complex128)
    diag = np.arange(n)
    out[:, diag, diag] = np.sqrt(var) * z[:, :n]
    pairs = z[:, n:].reshape(batch, -1, 2)
    upper = np.sqrt(0.5 * var) * (pairs[..., 0] + 1j * pairs[..., 1])
    iu, ju = _triu(n)
    out[:, iu, ju] = upper
    out[:, ju, iu] = upper.conj()
    return out


def trace_prod(a, b):
    return np.einsum("sij,sji->s", a, b)


def dyson_repulsion(lam):
    lam = np.asarray(lam, dtype=np.float64)
    diff = lam[:, :, None] - lam[:, None, :]
    n = lam.shape[1]
    eye = np.eye(n, dtype=bool)
    diff[:, eye] = np.inf
    force = (1.0 / diff).sum(axis=2)
    gap = np.abs(diff).min(axis=(1, 2)) if n > 1 else np.full(lam.shape[0], np.inf)
    return force, gap
