import numpy as np
import pytest

from matbiorth.errors import NonMonic, SingularQ
from matbiorth.matpoly import (MatPoly, adjugate_det, aux_matrices, eval, eval_at_matrix, from_chains,
                               jordan_triple_Y, monic_from_jordan_pair, spectral_data, spectral_jet,
                               spectrum, w_polys)
from matbiorth import kernels as K


def linear(D):
    D = np.asarray(D, dtype=complex)
    return MatPoly(np.array([-D, np.eye(D.shape[0])]))


def scalar(*c):
    return MatPoly(np.array(c, dtype=complex)[:, None, None])


# ------------------------------------------------------------------ evaluation

def test_eval_constant_term():
    W = linear(np.diag([1.0, 2.0]))
    assert np.allclose(eval(W, 0), -np.diag([1.0, 2.0]))


def test_eval_at_matrix_identity_poly(rng):
    A = rng.normal(size=(3, 3))
    assert np.allclose(eval_at_matrix(MatPoly.identity(3), A), np.eye(3))


def test_eval_at_matrix_scalar_root():
    assert np.allclose(eval_at_matrix(scalar(2, -3, 1), np.array([[2.0]])), 0)


def test_eval_at_matrix_against_explicit_powers(rng):
    A = rng.normal(size=(2, 2))
    C = rng.normal(size=(3, 2, 2))
    # right evaluation: sum C_k A^k
    want = C[0] + C[1] @ A + C[2] @ A @ A
    assert np.allclose(eval_at_matrix(MatPoly(C), A), want)


def test_arithmetic_matches_pointwise(rng):
    P = MatPoly(rng.normal(size=(3, 2, 2)))
    Q = MatPoly(rng.normal(size=(2, 2, 2)))
    for z in (0.3, -1.2 + 0.5j):
        assert np.allclose((P @ Q)(z), P(z) @ Q(z))
        assert np.allclose((P + Q)(z), P(z) + Q(z))
        assert np.allclose(P.T(z), P(z).T)


def test_right_division_exact(rng):
    Q = MatPoly(rng.normal(size=(3, 2, 2)))
    D = linear(rng.normal(size=(2, 2)))
    q, r = (Q @ D).right_divmod(D)
    assert q.allclose(Q)
    assert r.norm() < 1e-10


# -------------------------------------------------------------- adjugate

def test_adjugate_scalar():
    W = scalar(1.0, -2.0, 3.0)
    adj, det = adjugate_det(W)
    assert np.allclose(adj.coeffs[:1], 1) and adj.degree == 0
    assert np.allclose(det, [1, -2, 3])


def test_adjugate_unit_upper():
    px = [0.5, -1.0, 2.0]
    c = np.zeros((3, 2, 2))
    c[:, 0, 1] = px
    c[0] += np.eye(2)
    adj, det = adjugate_det(MatPoly(c))
    want = -c.copy()
    want[0] += 2 * np.eye(2)
    assert np.allclose(adj.coeffs, want[: adj.coeffs.shape[0]])
    assert np.allclose(det[0], 1) and np.allclose(det[1:], 0)


def test_adjugate_pointwise_product(rng):
    W = MatPoly(rng.normal(size=(3, 2, 2)) + 1j * rng.normal(size=(3, 2, 2)))
    adj, det = adjugate_det(W)
    for z in rng.normal(size=7) + 1j * rng.normal(size=7):
        d = np.polyval(det[::-1], z)
        assert np.allclose(W(z) @ adj(z), d * np.eye(2), atol=1e-10)


# --------------------------------------------------------------- spectrum

def _eigs(spec):
    return sorted((complex(l).real, m) for l, m in spec)


def test_spectrum_scalar_quadratic():
    assert np.allclose(_eigs(spectrum(scalar(-1, 0, 1))), [(-1, 1), (1, 1)])


def test_spectrum_diagonal_linear():
    assert np.allclose(_eigs(spectrum(linear(np.diag([1.0, 2.0])))), [(1, 1), (2, 1)])


def test_spectrum_product_against_det_roots():
    W = linear(np.diag([1.0, 2.0])) @ linear(np.diag([3.0, 4.0]))
    # det W as the product of its diagonal entries, roots by numpy
    d = np.polymul(np.poly([1, 3]), np.poly([2, 4]))
    want = sorted(np.roots(d).real)
    got = _eigs(spectrum(W))
    assert [m for _, m in got] == [1, 1, 1, 1]
    assert np.allclose([l for l, _ in got], want)


def test_spectrum_requires_invertible_lead():
    W = MatPoly(np.array([np.eye(2), np.diag([1.0, 0.0])]))
    with pytest.raises(NonMonic):
        spectrum(W)


# ----------------------------------------------------------- Jordan pairs

def test_monic_from_pair_degree_one(rng):
    L0 = rng.normal(size=(3, 3))
    W = monic_from_jordan_pair(np.eye(3), L0)
    assert W.degree == 1 and np.allclose(W.coeffs[0], -L0) and np.allclose(W.coeffs[1], np.eye(3))


def test_monic_from_pair_scalar_quadratic():
    W = monic_from_jordan_pair([[1, 1]], np.diag([1.0, 2.0]))
    assert np.allclose(W.coeffs[:, 0, 0], [2, -3, 1])


def test_monic_from_pair_singular():
    with pytest.raises(SingularQ):
        monic_from_jordan_pair([[1, 1]], np.diag([1.0, 1.0]))


def test_triple_Y_trivial():
    W = scalar(-0.7, 1)
    Y = jordan_triple_Y(W, np.array([[1.0]]), np.array([[0.7]]))
    assert np.allclose(Y, [[1]])
    sd = spectral_data(W)
    assert np.allclose(aux_matrices(W, sd).R, [[1]])


def test_triple_Y_scalar_quadratic():
    W = scalar(2, -3, 1)
    Y = jordan_triple_Y(W, np.array([[1.0, 1.0]]), np.diag([1.0, 2.0]))
    # [[1, 1], [1, 2]] Y = [0, 1]
    assert np.allclose(Y.ravel(), np.linalg.solve([[1, 1], [1, 2]], [0, 1]))
    assert np.allclose(Y.ravel(), [-1, 1])


@pytest.mark.parametrize("case", ["semisimple", "chain"])
def test_RBQ_identity(case, rng):
    if case == "semisimple":
        W = MatPoly(np.concatenate([rng.normal(size=(2, 2, 2)), np.eye(2)[None]]))
        sd = spectral_data(W)
    else:
        W, sd = from_chains([(0.5, [np.array([[1.0, 0.3], [0.2, -0.4]])]), (-1.0, [np.array([[0.0, 1.0]])]),
                             (2.0, [np.array([[1.0, 1.0]])])])
    aux = aux_matrices(W, sd)
    assert np.linalg.norm(aux.R @ aux.B @ aux.Q - np.eye(W.degree * W.p)) < 1e-10


def test_from_chains_pair_equation(rng):
    chains = [(0.5, [np.array([[1.0, 0.3], [0.2, -0.4]])]), (-1.0, [np.array([[0.0, 1.0]])]),
              (2.0, [np.array([[1.0, 1.0]])])]
    W, sd = from_chains(chains)
    # Jordan chain relation: sum_j W^(j)(x0)/j! r_{k-j} = 0
    T = W.taylor(0.5, 2)
    r = chains[0][1][0]
    assert np.allclose(T[0] @ r[0], 0) and np.allclose(T[0] @ r[1] + T[1] @ r[0], 0)


# ----------------------------------------------------------- spectral jets

def test_plain_jet_of_identity_monomial():
    a = 0.7
    sd = spectral_data(linear(a * np.eye(2)))
    jet = spectral_jet(MatPoly(np.array([np.zeros((2, 2)), np.eye(2)])), sd, root=False)
    assert np.allclose(jet, np.hstack([a * np.eye(2), np.eye(2)]))


def test_root_jet_of_W_vanishes(rng):
    W, sd = from_chains([(0.5, [np.array([[1.0, 0.3], [0.2, -0.4]])]), (-1.0, [np.array([[0.0, 1.0]])]),
                         (2.0, [np.array([[1.0, 1.0]])])])
    assert np.abs(spectral_jet(W, sd)).max() < 1e-10


def test_jet_of_geometric_kernel():
    z0, a = 2.5, 0.4
    _, sd = from_chains([(a, [np.array([[1.0], [0.0]])])])
    # Cauchy transform of a unit y-node at z0 is 1/(x - z0); negate for 1/(z0 - x)
    f = K.cauchy_transform(K.discrete([0.0], [z0], [[1.0]]), MatPoly.identity(1), 1) * -1.0
    jet = spectral_jet(f, sd)
    assert np.allclose(jet.ravel(), [1 / (z0 - a), 1 / (z0 - a) ** 2])


def test_w_polys_coupling_is_square():
    W, sd = from_chains([(0.5, [np.array([[1.0, 0.3], [0.2, -0.4]])]), (-1.0, [np.array([[0.0, 1.0]])]),
                         (2.0, [np.array([[1.0, 1.0]])])])
    quot, Wmat = w_polys(W, sd)
    assert Wmat.shape == (4, 4)
    assert set(quot) == {(0, 0, 0), (1, 0, 0), (2, 0, 0)}
