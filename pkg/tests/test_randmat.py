import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from freecontrol.ncpoly import DimensionError, semicircle_moment
from freecontrol.randmat import (MatrixTuple, NotHermitianError, SpectralMeasure, gue_batch, gue_increment,
                                 gue_tuple, haar_unitary, moments, sample_free_semicircular_proxy,
                                 semicircle_quantiles, spectral_measure, stream, wasserstein2_1d)

from conftest import random_hermitian


def _tr(a):
    return np.real(np.trace(a, axis1=-2, axis2=-1)) / a.shape[-1]


# -- MatrixTuple -------------------------------------------------------------------

def test_tuple_rejects_non_hermitian():
    with pytest.raises(NotHermitianError):
        MatrixTuple(np.array([[0, 1], [0, 0]], dtype=complex))


def test_tuple_rejects_bad_shape():
    with pytest.raises(DimensionError):
        MatrixTuple(np.zeros((2, 3, 4)))


def test_tuple_json_round_trip(rng):
    X = MatrixTuple(random_hermitian(rng, 2, 3))
    Y = MatrixTuple.from_json(X.to_json())
    np.testing.assert_array_equal(X.data, Y.data)


def test_tuple_norms(rng):
    X = MatrixTuple(random_hermitian(rng, 2, 5))
    assert X.norm2() == pytest.approx(np.sqrt(sum(np.trace(x @ x).real / 5 for x in X.data)))
    assert X.norm_inf() == pytest.approx(max(np.abs(np.linalg.eigvalsh(x)).max() for x in X.data))


def test_eigenvalue_csv(rng):
    X = MatrixTuple(random_hermitian(rng, 2, 3))
    lines = X.eigenvalue_csv().strip().splitlines()
    assert len(lines) == 1 + 2 * 3


# -- streams ----------------------------------------------------------------------

def test_streams_are_reproducible_and_separate():
    a = stream(7, 3, "free").standard_normal(5)
    np.testing.assert_array_equal(a, stream(7, 3, "free").standard_normal(5))
    assert not np.array_equal(a, stream(7, 3, "common").standard_normal(5))
    assert not np.array_equal(a, stream(7, 4, "free").standard_normal(5))
    assert not np.array_equal(a, stream(8, 3, "free").standard_normal(5))


# -- GUE ------------------------------------------------------------------------------

def test_gue_is_hermitian():
    W = gue_increment(6, 0.3, stream(0))
    np.testing.assert_allclose(W, W.conj().T, atol=0)


def test_gue_second_moment_normalization():
    W = gue_batch(50, 1.0, stream(1), 10_000)
    m2 = _tr(W @ W)
    se = m2.std(ddof=1) / np.sqrt(m2.size)
    assert abs(m2.mean() - 1.0) <= 3 * se
    m1 = _tr(W)
    assert abs(m1.mean()) <= 3 * m1.std(ddof=1) / np.sqrt(m1.size)


def test_gue_entry_variances():
    n, dt = 8, 0.5
    W = gue_batch(n, dt, stream(2), 20_000)
    off = W[:, 0, 1]
    diag = W[:, 2, 2]
    assert np.mean(np.abs(off) ** 2) == pytest.approx(dt / n, rel=0.05)
    assert np.var(diag.real) == pytest.approx(dt / n, rel=0.05)
    assert np.abs(diag.imag).max() == 0


def test_gue_fourth_moment():
    n = 200
    W = gue_batch(n, 1.0, stream(3), 200)
    W2 = W @ W
    m4 = _tr(W2 @ W2)
    se = m4.std(ddof=1) / np.sqrt(m4.size)
    assert abs(m4.mean() - semicircle_moment([1] * 4)) <= 3 * se + 2.0 / n ** 2 + 1e-3


def test_gue_moment_error_decays_like_one_over_n():
    # E tr W^4 = 2 + 1/n^2 exactly, so the error must shrink as n grows
    errs = []
    for n in (25, 50, 100):
        W = gue_batch(n, 1.0, stream(4, n), 400)
        W2 = W @ W
        m4 = _tr(W2 @ W2).mean()
        errs.append(abs(m4 - 2.0))
    assert max(errs) < 0.05


def test_semicircle_proxy_examples():
    n = 200
    rng = stream(5)
    X = MatrixTuple(np.eye(n)[None].astype(complex))
    S = sample_free_semicircular_proxy(X, rng).data[0]
    assert _tr(X.data[0] @ S @ X.data[0] @ S) == pytest.approx(1.0, abs=0.05)
    C = np.diag(np.linspace(-1, 1, n)).astype(complex)
    vals = [_tr(sample_free_semicircular_proxy(MatrixTuple(C[None]), rng).data[0] @ C) for _ in range(1000)]
    assert abs(np.mean(vals)) <= 3 * np.std(vals) / np.sqrt(1000)
    S = sample_free_semicircular_proxy(MatrixTuple(C[None]), rng).data[0]
    assert abs(_tr(S @ C @ S @ C)) < 0.05


# -- spectral measures -----------------------------------------------------------------

def test_spectral_measure_examples():
    np.testing.assert_array_equal(spectral_measure(np.eye(3)).atoms, [1, 1, 1])
    np.testing.assert_allclose(spectral_measure(np.diag([1.0, -1.0, 0.0])).atoms, [-1, 0, 1], atol=1e-15)


def test_spectral_second_moment(rng):
    x = random_hermitian(rng, 1, 30)[0]
    assert spectral_measure(x).moment(2) == pytest.approx(_tr(x @ x), abs=1e-10)


def test_gue_spectrum_close_to_semicircle():
    W = gue_increment(400, 1.0, stream(6))
    assert wasserstein2_1d(spectral_measure(W), semicircle_quantiles(400)) <= 0.08


def test_semicircle_quantiles_moments():
    q = semicircle_quantiles(2000)
    assert q.moment(2) == pytest.approx(1.0, abs=1e-3)
    assert q.moment(4) == pytest.approx(2.0, abs=5e-3)
    assert semicircle_quantiles(1000, 4.0).moment(2) == pytest.approx(4.0, abs=1e-2)


def test_empty_measure_rejected():
    with pytest.raises(ValueError):
        SpectralMeasure([])


# -- Wasserstein ---------------------------------------------------------------------

def test_w2_examples():
    mu = SpectralMeasure([0.3, -1.0, 2.0])
    assert wasserstein2_1d(mu, mu) == 0
    assert wasserstein2_1d(SpectralMeasure([0.0]), SpectralMeasure([-2.5])) == 2.5
    assert wasserstein2_1d(SpectralMeasure([-1, 1]), SpectralMeasure([0, 2])) == 1.0


def test_w2_unequal_sizes():
    # {0} vs {-1, 1}: every unit of mass moves by 1
    assert wasserstein2_1d(SpectralMeasure([0.0]), SpectralMeasure([-1.0, 1.0])) == pytest.approx(1.0)
    a = SpectralMeasure([0.0, 1.0])
    b = SpectralMeasure([0.0, 0.0, 1.0, 1.0])
    assert wasserstein2_1d(a, b) == pytest.approx(0.0, abs=1e-15)


def test_w2_metric_axioms():
    rng = np.random.default_rng(7)
    for _ in range(100):
        m = int(rng.integers(1, 20))
        a, b, c = (SpectralMeasure(rng.normal(size=m) * rng.uniform(0.1, 3)) for _ in range(3))
        ab, bc, ac = wasserstein2_1d(a, b), wasserstein2_1d(b, c), wasserstein2_1d(a, c)
        assert ab == wasserstein2_1d(b, a)
        assert ac <= ab + bc + 1e-12
        assert wasserstein2_1d(a, a) == 0


@given(arrays(float, st.integers(1, 12), elements=st.floats(-10, 10)),
       st.floats(-5, 5))
def test_w2_of_translation_is_shift(atoms, shift):
    mu = SpectralMeasure(atoms)
    nu = SpectralMeasure(atoms + shift)
    assert wasserstein2_1d(mu, nu) == pytest.approx(abs(shift), abs=1e-9)


# -- moments --------------------------------------------------------------------------

def test_moment_vector_examples(rng):
    X = random_hermitian(rng, 2, 4)
    X[0] -= _tr(X[0]) * np.eye(4)
    mv = moments(X, 3)
    assert mv[()] == 1
    assert abs(mv[(1,)]) < 1e-14
    assert len(mv) == 1 + 2 + 4 + 8


def test_moments_conjugation_invariant_and_reversal_symmetric(rng):
    X = random_hermitian(rng, 2, 5)
    U = haar_unitary(5, rng)
    Y = U @ X @ U.conj().T
    a, b = moments(X, 4), moments(Y, 4)
    for w in a:
        assert abs(a[w] - b[w]) <= 1e-10
        assert abs(a[w[::-1]] - np.conj(a[w])) <= 1e-12
    assert a.distance(b) < 1e-9


def test_haar_unitary_is_unitary(rng):
    U = haar_unitary(6, rng)
    np.testing.assert_allclose(U @ U.conj().T, np.eye(6), atol=1e-12)


def test_gue_tuple_shape(rng):
    X = gue_tuple(3, 4, stream(0))
    assert X.data.shape == (3, 4, 4)
