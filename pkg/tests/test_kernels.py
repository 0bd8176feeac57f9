import os
import subprocess
import sys

import numpy as np
import pytest

from freecontrol import _kernels_py, kernels

ckernels = pytest.importorskip("freecontrol._ckernels")


@pytest.fixture
def restore_backend():
    before = kernels.BACKEND
    yield
    kernels.use_backend(before)


def test_compiled_backend_is_default():
    if os.environ.get("FREECONTROL_PURE_PYTHON"):
        pytest.skip("pure-Python backend forced by environment")
    assert kernels.BACKEND == "cython"


def test_environment_forces_fallback():
    code = "from freecontrol import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, FREECONTROL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("n", [1, 2, 7, 32])
def test_hermitian_from_normals_backends_agree(n):
    z = np.random.default_rng(n).standard_normal((5, n * n))
    a = ckernels.hermitian_from_normals(np.ascontiguousarray(z), n, 0.3)
    b = _kernels_py.hermitian_from_normals(z, n, 0.3)
    np.testing.assert_array_equal(np.asarray(a), b)
    np.testing.assert_array_equal(b, np.conj(np.swapaxes(b, -1, -2)))


def test_hermitian_from_normals_variances():
    n, var = 30, 0.7
    z = np.random.default_rng(0).standard_normal((400, n * n))
    H = kernels.hermitian_from_normals(z, n, var)
    assert np.mean(np.abs(np.diagonal(H, axis1=1, axis2=2)) ** 2) == pytest.approx(var, rel=0.02)
    off = H[:, 0, 1:]
    assert np.mean(np.abs(off) ** 2) == pytest.approx(var, rel=0.02)


def test_trace_prod_backends_agree(restore_backend):
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 4, 6, 5)) + 1j * rng.normal(size=(3, 4, 6, 5))
    b = rng.normal(size=(3, 4, 5, 6)) + 1j * rng.normal(size=(3, 4, 5, 6))
    expect = np.trace(a @ b, axis1=-2, axis2=-1)
    for name in ("cython", "python"):
        kernels.use_backend(name)
        np.testing.assert_allclose(kernels.trace_prod(a, b), expect, rtol=1e-12)


def test_dyson_repulsion_backends_agree(restore_backend):
    lam = np.sort(np.random.default_rng(2).normal(size=(4, 50)), axis=1)
    out = {}
    for name in ("cython", "python"):
        kernels.use_backend(name)
        out[name] = kernels.dyson_repulsion(lam)
    np.testing.assert_allclose(out["cython"][0], out["python"][0], rtol=1e-10)
    np.testing.assert_allclose(out["cython"][1], out["python"][1], rtol=0)
    f, g = kernels.dyson_repulsion(np.array([0.0, 1.0, 3.0]))
    np.testing.assert_allclose(f, [-1 - 1 / 3, 1 - 0.5, 1 / 3 + 0.5])
    assert g == 1.0


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_simulation_identical_under_both_backends(restore_backend):
    from freecontrol.sde import SimConfig, ZeroPolicy, simulate
    cfg = SimConfig(n=6, d=2, T=0.1, steps=5, beta_c=0.5, beta_f=1.0, paths=3, seed=4)
    x0 = np.zeros((2, 6, 6))
    finals = []
    for name in ("cython", "python"):
        kernels.use_backend(name)
        finals.append(simulate(cfg, "identity", ZeroPolicy(), x0, keep_final=True).final)
    np.testing.assert_array_equal(finals[0], finals[1])
