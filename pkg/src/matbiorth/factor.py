"""Block Gauss-Borel factorization, quasideterminants and the induced biorthogonal families."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import tol
from .errors import QuasidefinitenessFailure, SingularLeadingBlock
from .kernels import cauchy_transform, gram
from .matpoly import MatPoly


@dataclass
class Factorization:
    """G = S1^{-1} H S2^{-T} on an n x n block truncation."""
    S1: np.ndarray
    S2: np.ndarray
    H: np.ndarray
    p: int
    G: np.ndarray = None

    @property
    def n(self):
        return self.H.shape[0]

    def _row_poly(self, S, k):
        p = self.p
        return MatPoly(S[k * p:(k + 1) * p, : (k + 1) * p].reshape(p, k + 1, p).transpose(1, 0, 2))

    def P1(self, k):
        return self._row_poly(self.S1, k)

    def P2(self, k):
        return self._row_poly(self.S2, k)

    @property
    def families(self):
        return [self.P1(k) for k in range(self.n)], [self.P2(k) for k in range(self.n)]

    def Hinv(self, k):
        return np.linalg.inv(self.H[k])

    def reconstruction_residual(self):
        p, n = self.p, self.n
        I = np.eye(n * p)
        S1i = solve_triangular(self.S1, I, lower=True, unit_diagonal=True)
        S2i = solve_triangular(self.S2, I, lower=True, unit_diagonal=True)
        Hb = np.zeros((n * p, n * p), dtype=complex)
        for k in range(n):
            Hb[k * p:(k + 1) * p, k * p:(k + 1) * p] = self.H[k]
        R = S1i @ Hb @ S2i.T - self.G
        return np.linalg.norm(R) / max(np.linalg.norm(self.G), 1e-300)

    def to_json(self):
        def cz(a):
            a = np.asarray(a, dtype=complex)
            return np.stack([a.real, a.imag], axis=-1).tolist()
        return {
            "n": int(self.n), "p": int(self.p), "H": cz(self.H),
            "H_rcond": [tol.rcond(h) for h in self.H],
            "reconstruction_residual": float(self.reconstruction_residual()) if self.G is not None else None,
        }


def gauss_borel(G, p):
    """Block LDU elimination without pivoting; returns S1 = L^{-1}, S2 = U^{-T}, H = D."""
    G = np.asarray(G, dtype=complex)
    n = G.shape[0] // p
    A = G.copy()
    L = np.eye(n * p, dtype=complex)
    U = np.eye(n * p, dtype=complex)
    H = np.zeros((n, p, p), dtype=complex)
    tau = tol.get("sing")
    for k in range(n):
        s = slice(k * p, (k + 1) * p)
        rest = slice((k + 1) * p, n * p)
        Hk = A[s, s].copy()
        if tol.rcond(Hk) < tau:
            raise QuasidefinitenessFailure(k + 1)
        H[k] = Hk
        Lk = np.linalg.solve(Hk.T, A[rest, s].T).T
        Uk = np.linalg.solve(Hk, A[s, rest])
        L[rest, s] = Lk
        U[s, rest] = Uk
        A[rest, rest] -= Lk @ A[s, rest]
    I = np.eye(n * p)
    S1 = solve_triangular(L, I, lower=True, unit_diagonal=True)
    S2 = solve_triangular(U, I, lower=False, unit_diagonal=True).T
    return Factorization(S1, S2, H, p, G)


def factorize(k, n):
    return gauss_borel(gram(k, n), k.p)


def theta_star(M, rows, cols=None):
    """Last quasideterminant D - C A^{-1} B, with D the trailing rows x cols block."""
    M = np.asarray(M, dtype=complex)
    cols = rows if cols is None else cols
    A = M[:-rows, :-cols] if rows else M[:, :-cols]
    B = M[:-rows, -cols:]
    C = M[-rows:, :-cols]
    D = M[-rows:, -cols:]
    return theta_star_blocks(A, B, C, D)


def theta_star_blocks(A, B, C, D):
    A = np.asarray(A, dtype=complex)
    if A.size == 0:
        return np.asarray(D, dtype=complex)
    if A.shape[0] != A.shape[1]:
        raise SingularLeadingBlock(f"leading block of shape {A.shape} is not square")
    if tol.rcond(A) < tol.get("sing"):
        raise SingularLeadingBlock("leading block is singular")
    return D - C @ np.linalg.solve(A, B)


def quasidet_H(G, p, k):
    """H_k as the last quasideterminant of the (k+1)-block truncation."""
    m = (k + 1) * p
    return theta_star(np.asarray(G)[:m, :m], p)


def cd_kernel(F, n, x, y):
    """K_n(x, y) = sum_{k<=n} P2_k(y)^T H_k^{-1} P1_k(x)."""
    if n >= F.n:
        raise ValueError(f"kernel order {n} needs a factorization of size > {n}")
    return sum(F.P2(k)(y).T @ np.linalg.solve(F.H[k], F.P1(k)(x)) for k in range(n + 1))


def mixed_cd_kernel(F, n, x, y, C1):
    """K^(pc)_n(x, y) = sum_{k<=n} P2_k(y)^T H_k^{-1} C1_k(x)."""
    return sum(F.P2(k)(y).T @ np.linalg.solve(F.H[k], C1[k](x)) for k in range(n + 1))


def cd_kernel_poly_y(F, n, coeff_rows):
    """sum_{k<=n} P2_k(y)^T H_k^{-1} M_k as a polynomial in y, for constant blocks M_k."""
    out = None
    for k in range(n + 1):
        term = F.P2(k).T @ np.linalg.solve(F.H[k], coeff_rows[k])
        out = term if out is None else out + term
    return out


def shift_matrix(n, p):
    """Block shift Lambda on n blocks."""
    return np.kron(np.eye(n, k=1), np.eye(p))


def jacobi_matrices(F):
    """Truncations of S1 Lambda S1^{-1} and S2 Lambda S2^{-1}."""
    n, p = F.n, F.p
    Lam = shift_matrix(n, p)
    I = np.eye(n * p)
    S1i = solve_triangular(F.S1, I, lower=True, unit_diagonal=True)
    S2i = solve_triangular(F.S2, I, lower=True, unit_diagonal=True)
    return F.S1 @ Lam @ S1i, F.S2 @ Lam @ S2i


def second_kind(F, k):
    """Second kind functions C1_n = <P1_n(x), I/(z-y)> and C2_n with C2_n^T = <I/(z-x), P2_n(y)>."""
    P1, P2 = F.families
    C1 = [cauchy_transform(k, P, 1) for P in P1]
    C2 = [cauchy_transform(k, P, 2).T for P in P2]
    return C1, C2
