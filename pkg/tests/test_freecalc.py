import numpy as np
import pytest

from freecontrol.freecalc import (CylinderFunction, HamiltonianSpec, LinearOuter, PolynomialOuter,
                                  QuadraticOuter, TimeCylinder, UnsupportedOperation, admissible,
                                  arctan_apply, arctan_diff_apply, arctan_divided_difference,
                                  common_laplacian, free_laplacian, free_laplacian_mc, free_laplacian_mc_bias,
                                  grad, hamiltonian, hamiltonian_maximizer, hamiltonian_objective, hess_apply,
                                  outer_from_json)
from freecontrol.ncpoly import DimensionError, letters
from freecontrol.randmat import MatrixTuple, gue_tuple, haar_unitary, inner, stream
from freecontrol.suites import laplacian_functions

from conftest import random_hermitian, random_poly, self_adjoint

(z,) = letters(1)
x, y = letters(2)
tr_x2 = CylinderFunction.trace_of(z * z)
tr_x = CylinderFunction.trace_of(z)
tr_x_sq = CylinderFunction([z], QuadraticOuter(((1.0,),)))
tr_x4 = CylinderFunction.trace_of(z ** 4)


def _tr(a):
    return np.real(np.trace(a, axis1=-2, axis2=-1)) / a.shape[-1]


def random_cylinder(rng, d=2, m=3, degree=4):
    inner_polys = [self_adjoint(random_poly(rng, d, degree, terms=4)) for _ in range(m)]
    Q = rng.normal(size=(m, m)) * 0.3
    return CylinderFunction(inner_polys, QuadraticOuter(tuple(map(tuple, Q)), tuple(rng.normal(size=m))))


# -- construction ---------------------------------------------------------------------

def test_inner_must_be_self_adjoint():
    with pytest.raises(ValueError):
        CylinderFunction.trace_of(x * y)


def test_outer_arity_checked():
    with pytest.raises(DimensionError):
        CylinderFunction([z, z * z], LinearOuter((1.0,)))


def test_json_round_trip(rng):
    U = laplacian_functions()["mixed"]
    V = CylinderFunction.from_json(U.to_json())
    X = random_hermitian(rng, 2, 4)
    assert V.value(X) == pytest.approx(U.value(X), abs=1e-14)
    for outer in (LinearOuter((1.0, 2.0), 0.5), QuadraticOuter(((1.0, 0.0), (0.0, 2.0))),
                  PolynomialOuter(((1, 2), (0, 1)), (1.0, -1.0))):
        assert outer_from_json(outer.to_json()) == outer


def test_value_unitary_invariant(rng):
    for _ in range(10):
        U = random_cylinder(rng)
        X = random_hermitian(rng, 2, 5)
        V = haar_unitary(5, rng)
        assert abs(U.value(V @ X @ V.conj().T) - U.value(X)) <= 1e-10 * max(1, abs(U.value(X)))


# -- gradient -----------------------------------------------------------------------------

def test_gradient_examples(rng):
    X = random_hermitian(rng, 1, 4)
    np.testing.assert_allclose(grad(tr_x2, X), 2 * X, atol=1e-14)
    np.testing.assert_allclose(grad(tr_x, X), np.eye(4)[None], atol=1e-14)
    np.testing.assert_allclose(grad(tr_x_sq, X), 2 * _tr(X[0]) * np.eye(4)[None], atol=1e-14)


def test_gradient_is_hermitian_tuple(rng):
    U = random_cylinder(rng)
    G = grad(U, MatrixTuple(random_hermitian(rng, 2, 4)))
    assert isinstance(G, MatrixTuple)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(10)
    h = 1e-5
    worst = 0.0
    for _ in range(200):
        U = random_cylinder(rng, m=2, degree=4)
        X = random_hermitian(rng, 2, 5)
        A = random_hermitian(rng, 2, 5)
        A /= np.sqrt(inner(A, A))
        fd = (U.value(X + h * A) - U.value(X - h * A)) / (2 * h)
        ex = inner(grad(U, X), A)
        worst = max(worst, abs(fd - ex) / max(1.0, abs(ex)))
    assert worst <= 1e-6


def test_batched_gradient(rng):
    U = random_cylinder(rng)
    Xs = np.stack([random_hermitian(rng, 2, 3) for _ in range(5)])
    G = grad(U, Xs)
    for k in range(5):
        np.testing.assert_allclose(G[k], grad(U, Xs[k]), atol=1e-12)


# -- Hessian ----------------------------------------------------------------------------

def test_hessian_examples(rng):
    X = random_hermitian(rng, 1, 4)
    A, B = random_hermitian(rng, 1, 4), random_hermitian(rng, 1, 4)
    assert hess_apply(tr_x2, X, A, B) == pytest.approx(2 * _tr(A[0] @ B[0]))
    assert hess_apply(tr_x, X, A, B) == 0


def test_hessian_symmetric_and_matches_second_differences():
    rng = np.random.default_rng(11)
    h = 1e-4
    for _ in range(50):
        U = random_cylinder(rng, m=2, degree=4)
        X = random_hermitian(rng, 2, 4)
        A, B = random_hermitian(rng, 2, 4), random_hermitian(rng, 2, 4)
        assert hess_apply(U, X, A, B) == pytest.approx(hess_apply(U, X, B, A), rel=1e-10, abs=1e-12)
        fd = (U.value(X + h * A) - 2 * U.value(X) + U.value(X - h * A)) / h ** 2
        ex = hess_apply(U, X, A, A)
        assert abs(fd - ex) <= 1e-5 * max(1.0, abs(ex))


def test_hessian_lipschitz_constant_stable_across_n():
    # |Hess U(X)[A,B] - Hess U(Y)[A,B]| <= K |X-Y|_2 |A|_2 |B|_inf on |X|_inf <= R
    Us = [CylinderFunction.trace_of(self_adjoint(x ** 4 + x * y * x * y)),
          CylinderFunction([x * x, self_adjoint(x * y)], QuadraticOuter(((0.5, 0.1), (0.1, -0.3))))]

    def sample(n, shifts):
        # shifted GUE keeps traces O(1), so the ratios have an n-independent limit
        G = gue_tuple(2, n, gen, 1.0).data * 0.4
        return G + shifts[:, None, None] * np.eye(n)

    for U in Us:
        K = {}
        for n in (10, 50):
            gen = stream(15, n, "aux")
            srng = np.random.default_rng(16)
            ratios = []
            for _ in range(40):
                X, A, B = (sample(n, srng.uniform(-0.5, 0.5, 2)) for _ in range(3))
                Y = X + sample(n, srng.uniform(-0.5, 0.5, 2)) * 0.3
                num = abs(hess_apply(U, X, A, B) - hess_apply(U, Y, A, B))
                den = (np.sqrt(inner(X - Y, X - Y)) * np.sqrt(inner(A, A))
                       * max(np.abs(np.linalg.eigvalsh(b)).max() for b in B))
                ratios.append(num / den)
            K[n] = max(ratios)
        assert 0.5 <= K[50] / K[10] <= 2.0


# -- Laplacians -------------------------------------------------------------------------------

def test_common_laplacian_examples(rng):
    X = random_hermitian(rng, 1, 4)
    assert common_laplacian(tr_x2, X) == pytest.approx(2.0)
    assert common_laplacian(tr_x, X) == 0


def test_common_laplacian_is_hessian_at_identity(rng):
    for U in laplacian_functions().values():
        X = random_hermitian(rng, 2, 4)
        one = np.broadcast_to(np.eye(4), (2, 4, 4))
        assert common_laplacian(U, X) == pytest.approx(hess_apply(U, X, one, one), rel=1e-10, abs=1e-12)


def test_free_laplacian_examples():
    X = np.diag([1.0, -1.0, 1.0, -1.0]).astype(complex)[None]
    assert free_laplacian(tr_x2, X) == pytest.approx(2.0)
    assert free_laplacian(tr_x4, X) == pytest.approx(8.0)
    assert free_laplacian(tr_x, X) == 0


def test_free_laplacian_of_quartic_general_formula(rng):
    X = random_hermitian(rng, 1, 6)
    t1, t2 = _tr(X[0]), _tr(X[0] @ X[0])
    assert free_laplacian(tr_x4, X) == pytest.approx(8 * t2 + 4 * t1 ** 2)


def test_free_laplacian_mc_examples():
    X = np.diag(np.linspace(-1, 1, 20)).astype(complex)[None]
    # tr(x^2) has Theta = 2 tr(S^2)-averages with E tr(S^2) = 1 exactly
    est = free_laplacian_mc(tr_x2, X, 200, stream(0))
    assert abs(est.mean - 2.0) <= 3 * est.stderr
    assert free_laplacian_mc(tr_x, X, 10, stream(0)).mean == 0


def test_free_laplacian_mc_quartic_on_gue_sample():
    n = 200
    X = gue_tuple(1, n, stream(1)).data
    est = free_laplacian_mc(tr_x4, X, 100, stream(2))
    exact = free_laplacian(tr_x4, X)
    assert abs(est.mean - exact) <= 3 * est.stderr + free_laplacian_mc_bias(tr_x4, X) / n ** 2 + 1e-12


def test_mc_bias_constant_matches_outer_hessian():
    X = np.diag(np.linspace(-1, 1, 10)).astype(complex)[None]
    # tr(x)^2: g'' = 2 and D = 1, so the bias constant is 2
    assert free_laplacian_mc_bias(tr_x_sq, X) == pytest.approx(2.0)
    assert free_laplacian_mc_bias(tr_x4, X) == 0


def test_mc_bias_is_exact_for_square_of_trace():
    # E over GUE of Hess[S, S] for tr(x)^2 is 2 E tr(S)^2 = 2/n^2 exactly
    n = 10
    X = np.zeros((1, n, n), dtype=complex)
    est = free_laplacian_mc(tr_x_sq, X, 20000, stream(3))
    assert abs(est.mean - 2.0 / n ** 2) <= 3 * est.stderr


def test_arctan_theta_unsupported():
    U = CylinderFunction([z], LinearOuter((1.0,)), arctan=True)
    X = np.eye(2)[None].astype(complex)
    with pytest.raises(UnsupportedOperation):
        free_laplacian(U, X)
    with pytest.raises(UnsupportedOperation):
        hess_apply(U, X, X, X)


# -- arctan -------------------------------------------------------------------------------------

def test_arctan_at_zero():
    Z = np.zeros((3, 3), dtype=complex)
    A = random_hermitian(np.random.default_rng(0), 1, 3)[0]
    np.testing.assert_allclose(arctan_apply(Z), Z, atol=0)
    np.testing.assert_allclose(arctan_diff_apply(Z, A), A, atol=1e-14)


def test_arctan_derivative_divided_differences(rng):
    lam = np.array([-1.5, 0.2, 0.9, 3.0])
    X = np.diag(lam).astype(complex)
    A = random_hermitian(rng, 1, 4)[0]
    np.testing.assert_allclose(arctan_diff_apply(X, A), arctan_divided_difference(lam) * A, atol=1e-8)


def test_arctan_derivative_commuting_direction(rng):
    X = random_hermitian(rng, 1, 5)[0]
    A = X @ X - 0.5 * X
    expect = np.linalg.solve(np.eye(5) + X @ X, A)
    np.testing.assert_allclose(arctan_diff_apply(X, A), expect, atol=1e-10)


def test_arctan_derivative_matches_finite_differences(rng):
    X = random_hermitian(rng, 1, 5, scale=2)[0]
    A = random_hermitian(rng, 1, 5)[0]
    h = 1e-6
    fd = (arctan_apply(X + h * A) - arctan_apply(X - h * A)) / (2 * h)
    np.testing.assert_allclose(arctan_diff_apply(X, A), fd, atol=1e-8)


def test_arctan_cylinder_gradient(rng):
    U = CylinderFunction([self_adjoint(x * x * y + x)], LinearOuter((1.0,)), arctan=True)
    X = random_hermitian(rng, 2, 4, scale=2)
    A = random_hermitian(rng, 2, 4)
    h = 1e-6
    fd = (U.value(X + h * A) - U.value(X - h * A)) / (2 * h)
    assert inner(grad(U, X), A) == pytest.approx(fd, abs=1e-8)


# -- Hamiltonians ----------------------------------------------------------------------------------

def test_hamiltonian_examples(rng):
    X = random_hermitian(rng, 2, 3)
    P0 = np.zeros_like(X)
    assert hamiltonian(HamiltonianSpec("quadratic-with-potential"), X, P0) == 0
    P = random_hermitian(rng, 2, 3)
    P /= np.sqrt(inner(P, P))
    assert hamiltonian(HamiltonianSpec("eikonal-L2"), X, P) == pytest.approx(1.0)
    D = np.stack([np.diag([1.0, 2.0, 3.0]), np.diag([0.0, 1.0, -1.0])]).astype(complex)
    assert hamiltonian(HamiltonianSpec("commutator-quadratic"), D, D[::-1] * 2) == 0


def test_hamiltonian_subtracts_potential(rng):
    X = random_hermitian(rng, 1, 3)
    P = random_hermitian(rng, 1, 3)
    for kind in ("quadratic-with-potential", "eikonal-L2", "eikonal-L1", "commutator-quadratic"):
        h0 = hamiltonian(HamiltonianSpec(kind), X, P)
        h1 = hamiltonian(HamiltonianSpec(kind, tr_x2), X, P)
        assert h0 - h1 == pytest.approx(tr_x2.value(X))


def test_unknown_hamiltonian_kind():
    with pytest.raises(ValueError):
        HamiltonianSpec("nope")


def _sample_admissible(kind, rng, N, d, n):
    a = np.stack([random_hermitian(rng, d, n, scale=rng.uniform(0.1, 3)) for _ in range(N)])
    if kind == "eikonal-L2":
        nrm = np.sqrt(inner(a, a))
        a = a / np.maximum(nrm, 1.0)[:, None, None, None] * rng.uniform(0, 1, N)[:, None, None, None]
    elif kind == "eikonal-L1":
        lam, V = np.linalg.eigh(a)
        a = (V * np.clip(lam, -1, 1)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    return a


@pytest.mark.parametrize("kind", ["quadratic-with-potential", "eikonal-L2", "eikonal-L1", "commutator-quadratic"])
def test_hamiltonian_sup_consistency(kind):
    rng = np.random.default_rng(13)
    d, n = 2, 3
    spec = HamiltonianSpec(kind)
    X = random_hermitian(rng, d, n)
    P = random_hermitian(rng, d, n)
    H = hamiltonian(spec, X, P)
    alphas = _sample_admissible(kind, rng, 10_000, d, n)
    assert all(admissible(kind, a) for a in alphas[:50])
    sampled = hamiltonian_objective(spec, X, P, alphas)
    assert sampled.max() <= H + 1e-8
    best = hamiltonian_maximizer(spec, X, P)
    assert admissible(kind, best)
    assert abs(hamiltonian_objective(spec, X, P, best) - H) <= 1e-3


def test_hamiltonian_monotonicity_bound():
    # phi(X) = tr arctan(x1) + tr arctan(x2) is sqrt(2)-Lipschitz in |.|_2
    rng = np.random.default_rng(14)
    phi = CylinderFunction([x + y], LinearOuter((1.0,)), arctan=True)
    spec = HamiltonianSpec("quadratic-with-potential", phi)
    C2, Cbar = np.sqrt(2.0), 0.0
    for _ in range(500):
        X, Y = random_hermitian(rng, 2, 4, 2.0), random_hermitian(rng, 2, 4, 2.0)
        gamma = rng.uniform(1, 10)
        P = gamma * (X - Y)
        lhs = hamiltonian(spec, X, P) - hamiltonian(spec, Y, P)
        dist2 = inner(X - Y, X - Y)
        assert lhs >= -((2 * Cbar + C2 ** 2) / 2) * gamma * dist2 - 1 / (2 * gamma)


# -- time-dependent cylinders --------------------------------------------------------------

def test_time_cylinder_interpolates_and_differentiates(rng):
    times = np.linspace(0, 1, 11)
    theta = np.stack([np.sin(times), np.cos(times)], axis=1)
    dtheta = np.stack([np.cos(times), -np.sin(times)], axis=1)
    U = TimeCylinder([z, z * z], lambda th: LinearOuter(tuple(th)), times, theta, dtheta)
    X = random_hermitian(rng, 1, 3)
    t = 0.537
    expect = np.sin(t) * _tr(X[0]) + np.cos(t) * _tr(X[0] @ X[0])
    assert U.value(t, X) == pytest.approx(expect, abs=1e-6)
    dexp = np.cos(t) * _tr(X[0]) - np.sin(t) * _tr(X[0] @ X[0])
    assert U.time_derivative(t, X) == pytest.approx(dexp, abs=1e-4)
    # exact at nodes
    assert U.value(0.3, X) == pytest.approx(np.sin(0.3) * _tr(X[0]) + np.cos(0.3) * _tr(X[0] @ X[0]), abs=1e-14)
    with pytest.raises(ValueError):
        U.value(1.5, X)


def test_static_time_cylinder(rng):
    U = TimeCylinder.static(tr_x4)
    X = random_hermitian(rng, 1, 3)
    assert U.value(7.0, X) == tr_x4.value(X)
    assert U.time_derivative(0.0, X) == 0
