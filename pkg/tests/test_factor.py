import numpy as np
import pytest
from scipy.linalg import hilbert as scipy_hilbert

from matbiorth import kernels as K
from matbiorth.errors import QuasidefinitenessFailure
from matbiorth.factor import (cd_kernel, cd_kernel_poly_y, factorize, gauss_borel, jacobi_matrices,
                              mixed_cd_kernel, quasidet_H, second_kind, theta_star)
from matbiorth.matpoly import MatPoly

from conftest import random_diagonal, random_discrete, rel


def test_identity_gram():
    F = gauss_borel(np.eye(6), 2)
    assert np.allclose(F.S1, np.eye(6)) and np.allclose(F.S2, np.eye(6))
    assert np.allclose(F.H, np.eye(2)[None].repeat(3, 0))


def test_hilbert_two_by_two():
    F = gauss_borel(scipy_hilbert(2), 1)
    assert np.isclose(F.H[0, 0, 0], 1) and np.isclose(F.H[1, 0, 0], 1 / 3 - 1 / 4)
    assert np.allclose(F.P1(1).coeffs[:, 0, 0], [-0.5, 1])


def test_zero_leading_block():
    with pytest.raises(QuasidefinitenessFailure) as e:
        gauss_borel(np.array([[0.0, 1.0], [1.0, 1.0]]), 1)
    assert e.value.k == 1


@pytest.mark.parametrize("p", [1, 2, 3])
def test_reconstruction_and_biorthogonality(p):
    k = random_discrete(p, 9, 20 + p, complex_weights=True)
    n = 5
    F = factorize(k, n)
    assert F.reconstruction_residual() < 1e-12
    for i in range(n):
        for j in range(n):
            want = F.H[i] if i == j else np.zeros((p, p))
            assert np.allclose(K.pair(k, F.P1(i), F.P2(j)), want, atol=1e-10)


def test_theta_star_identity_lead(rng):
    B, C, D = rng.normal(size=(2, 2)), rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    M = np.block([[np.eye(2), B], [C, D]])
    assert np.allclose(theta_star(M, 2), D - C @ B)


def test_theta_star_scalars():
    assert np.isclose(theta_star(np.array([[2.0, 1.0], [1.0, 1.0]]), 1)[0, 0], 0.5)


def test_theta_star_matches_factorization_hilbert():
    G = scipy_hilbert(8)
    F = gauss_borel(G, 1)
    for j in range(8):
        assert np.isclose(quasidet_H(G, 1, j)[0, 0], F.H[j, 0, 0], rtol=1e-8)


# ------------------------------------------------------------- CD kernels

def test_cd_kernel_order_zero(rng):
    F = factorize(random_discrete(2, 6, 30), 3)
    assert np.allclose(cd_kernel(F, 0, 0.3, -0.2), np.linalg.inv(F.H[0]))


def test_cd_reproducing_hilbert():
    k = K.hilbert()
    n = 5
    F = factorize(k, n + 1)
    z = 0.37
    poly = cd_kernel_poly_y(F, n, [F.P1(j)(z) for j in range(n + 1)])  # K_n(z, y) in y
    assert np.allclose(poly(0.81), cd_kernel(F, n, z, 0.81))
    for l in range(n + 1):
        got = K.pair(k, MatPoly.monomial(l, 1), poly.T)
        assert abs(got[0, 0] - z ** l) < 1e-10


def test_hankel_cd_formula(rng):
    p, n = 2, 5
    k = random_diagonal(p, 12, 31)
    F = factorize(k, n + 1)
    Hi = np.linalg.inv(F.H[n - 1])
    for x, y in rng.normal(size=(20, 2)) + 1j * rng.normal(size=(20, 2)):
        lhs = (x - y) * cd_kernel(F, n - 1, x, y)
        rhs = F.P2(n - 1)(y).T @ Hi @ F.P1(n)(x) - F.P2(n)(y).T @ Hi @ F.P1(n - 1)(x)
        assert np.linalg.norm(lhs - rhs) < 1e-9 * max(1.0, np.linalg.norm(rhs))


def test_mixed_cd_kernel_is_cauchy_transform_of_cd(rng):
    k = random_discrete(2, 6, 32)
    F = factorize(k, 4)
    C1, _ = second_kind(F, k)
    x, y = 2.1 + 0.3j, 0.4
    # K^(pc)_n(x, y) = <K_n(., y) in the first slot, 1/(x - y')>
    want = sum(F.P2(j)(y).T @ np.linalg.solve(F.H[j], K.cauchy_transform(k, F.P1(j), 1)(x)) for j in range(4))
    assert np.allclose(mixed_cd_kernel(F, 3, x, y, C1), want)


# --------------------------------------------------------- Jacobi matrices

def test_jacobi_hankel_structure():
    p, n = 2, 6
    F = factorize(random_diagonal(p, 12, 33), n)
    J1, J2 = jacobi_matrices(F)
    for kk in range(n):
        for l in range(kk + 2, n):
            assert np.abs(J1[kk * p:(kk + 1) * p, l * p:(l + 1) * p]).max() < 1e-9
    Hi = np.kron(np.eye(n), np.eye(p)).astype(complex)
    for j in range(n):
        Hi[j * p:(j + 1) * p, j * p:(j + 1) * p] = np.linalg.inv(F.H[j])
    m = (n - 1) * p
    assert np.allclose((Hi @ J1)[:m, :m], (J2.T @ Hi)[:m, :m], atol=1e-9)


def test_jacobi_recursion(rng):
    p, n = 2, 5
    F = factorize(random_discrete(p, 8, 34), n)
    J1, _ = jacobi_matrices(F)
    x = 0.3 + 0.2j
    Pv = np.vstack([F.P1(j)(x) for j in range(n)])
    m = (n - 1) * p
    assert np.allclose((J1 @ Pv)[:m], x * Pv[:m])


@pytest.mark.parametrize("nodes", [[-1.0, 1.0], [-1.0, -0.5, 0.5, 1.0]])
def test_symmetric_measure_zero_diagonal(nodes):
    m = len(nodes)
    F = factorize(K.diagonal(nodes, [1.0 / m] * m), m)
    J1, _ = jacobi_matrices(F)
    assert np.abs(np.diag(J1)).max() < 1e-12


# -------------------------------------------------------- second kind

def test_second_kind_single_node():
    k = K.discrete([0.0], [0.0], [[1.0]])
    C1, _ = second_kind(factorize(k, 1), k)
    assert np.isclose(C1[0](3.0)[0, 0], 1 / 3.0)


def test_second_kind_leading_laurent_coefficient():
    p, n = 2, 4
    k = random_discrete(p, 7, 35)
    F = factorize(k, n)
    C1, C2 = second_kind(F, k)
    # coefficient of z^{-j-1} by trapezoid rule on |z| = 3
    M = 256
    zs = 3 * np.exp(2j * np.pi * np.arange(M) / M)
    for j in range(n):
        lead = sum(z ** (j + 1) * C1[j](z) for z in zs) / M
        assert rel(lead, F.H[j]) < 1e-10
        assert rel(C1[j].laurent_at_infinity(j + 1)[j], F.H[j]) < 1e-10
        lead2 = sum(z ** (j + 1) * C2[j](z) for z in zs) / M
        assert rel(lead2, F.H[j].T) < 1e-10


def test_second_kind_poles_on_support_and_masses():
    from matbiorth.matpoly import spectral_data
    from matbiorth.transforms import mass_term
    k = random_discrete(1, 5, 36)
    W = MatPoly(np.array([[[-2.0]], [[1.0]]]))
    sd = spectral_data(W)
    kg = K.geronimus_kernel(k, W, (mass_term(sd, 0, 0, 0, [(2.0, 0, [0.5])]),))
    F = factorize(kg, 3)
    C1, _ = second_kind(F, kg)
    allowed = set(np.round(k.ys, 12)) | {2.0}
    for c in C1:
        assert set(np.round(c.pole_points(), 12)) <= allowed
