"""Matrix polynomials and their spectral data (Jordan pairs, root polynomials, jets)."""

from dataclasses import dataclass, field
from math import comb

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import tol
from .errors import ClusterAmbiguous, NonMonic, NonzeroRemainder, SingularQ


class MatPoly:
    """Polynomial sum_k A_k x^k with (possibly rectangular) complex matrix coefficients.

    Coefficients are stored as an array of shape (N+1, rows, cols); index = degree.
    """

    __slots__ = ("coeffs",)
    __array_ufunc__ = None  # let ndarray @ MatPoly reach __rmatmul__

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=complex)
        if c.ndim == 0:
            c = c.reshape(1, 1, 1)
        elif c.ndim == 2:
            c = c[None]
        if c.ndim != 3 or c.shape[0] == 0:
            raise ValueError("coefficients must have shape (N+1, rows, cols)")
        last = c.shape[0]
        while last > 1 and not np.any(c[last - 1]):
            last -= 1
        c = c[:last].copy()
        c.setflags(write=False)
        self.coeffs = c

    # construction helpers
    @classmethod
    def const(cls, M):
        return cls(np.atleast_2d(np.asarray(M, dtype=complex))[None])

    @classmethod
    def identity(cls, p):
        return cls(np.eye(p)[None])

    @classmethod
    def monomial(cls, k, p):
        c = np.zeros((k + 1, p, p), dtype=complex)
        c[k] = np.eye(p)
        return cls(c)

    @classmethod
    def scalar(cls, coeffs, p=1):
        """c(x) I_p for ascending scalar coefficients c."""
        c = np.asarray(coeffs, dtype=complex)
        return cls(c[:, None, None] * np.eye(p)[None])

    @property
    def degree(self):
        return self.coeffs.shape[0] - 1

    @property
    def shape(self):
        return self.coeffs.shape[1:]

    @property
    def p(self):
        return self.coeffs.shape[1]

    @property
    def lead(self):
        return self.coeffs[-1]

    def is_monic(self, tau=None):
        tau = tol.get("id") if tau is None else tau
        r, c = self.shape
        if r != c:
            return False
        return np.linalg.norm(self.lead - np.eye(r)) <= tau * max(1.0, np.linalg.norm(self.coeffs))

    monic = property(is_monic)

    def __call__(self, z):
        out = self.coeffs[-1].copy()
        for A in self.coeffs[-2::-1]:
            out = out * z + A
        return out

    def eval_at_matrix(self, A):
        """Right evaluation sum_k A_k M^k."""
        A = np.asarray(A, dtype=complex)
        if A.shape != (self.shape[1], self.shape[1]):
            raise ValueError(f"matrix of shape {A.shape} does not match polynomial of shape {self.shape}")
        out = self.coeffs[-1].copy()
        for C in self.coeffs[-2::-1]:
            out = out @ A + C
        return out

    # algebra
    def _pad(self, n):
        c = np.zeros((n,) + self.shape, dtype=complex)
        c[: self.coeffs.shape[0]] = self.coeffs
        return c

    def __add__(self, other):
        if not isinstance(other, MatPoly):
            other = MatPoly.const(other)
        n = max(self.coeffs.shape[0], other.coeffs.shape[0])
        return MatPoly(self._pad(n) + other._pad(n))

    __radd__ = __add__

    def __neg__(self):
        return MatPoly(-self.coeffs)

    def __sub__(self, other):
        return self + (-other if isinstance(other, MatPoly) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        if isinstance(s, MatPoly):
            return self @ s
        return MatPoly(self.coeffs * s)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, MatPoly):
            a, b = self.coeffs, other.coeffs
            out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1], b.shape[2]), dtype=complex)
            for i in range(a.shape[0]):
                out[i: i + b.shape[0]] += np.einsum("ij,kjl->kil", a[i], b)
            return MatPoly(out)
        return MatPoly(np.einsum("kij,jl->kil", self.coeffs, np.asarray(other, dtype=complex)))

    def __rmatmul__(self, M):
        return MatPoly(np.einsum("ij,kjl->kil", np.asarray(M, dtype=complex), self.coeffs))

    @property
    def T(self):
        return MatPoly(np.transpose(self.coeffs, (0, 2, 1)))

    def deriv(self, k=1):
        c = self.coeffs
        if k > self.degree:
            return MatPoly(np.zeros((1,) + self.shape))
        f = np.array([np.prod(np.arange(j - k + 1, j + 1)) for j in range(k, c.shape[0])], dtype=float)
        return MatPoly(c[k:] * f[:, None, None])

    def shift(self, a):
        """Coefficients in powers of (x - a)."""
        c = self.coeffs.copy()
        n = c.shape[0]
        # repeated synthetic division (Horner's scheme for Taylor shift)
        for i in range(n):
            for j in range(n - 2, i - 1, -1):
                c[j] = c[j] + a * c[j + 1]
        return c

    def taylor(self, a, m):
        """First m Taylor coefficients f^(k)(a)/k!, shape (m, rows, cols)."""
        s = self.shift(a)
        out = np.zeros((m,) + self.shape, dtype=complex)
        k = min(m, s.shape[0])
        out[:k] = s[:k]
        return out

    def right_divmod(self, D):
        """P = Q D + R with deg R < deg D; D must have an invertible leading coefficient."""
        D = D if isinstance(D, MatPoly) else MatPoly.const(D)
        nd = D.degree
        lead_inv = np.linalg.inv(D.lead)
        r = self.coeffs.copy()
        nq = max(r.shape[0] - nd, 1)
        q = np.zeros((nq,) + (self.shape[0], D.shape[0]), dtype=complex)
        for k in range(r.shape[0] - 1, nd - 1, -1):
            qk = r[k] @ lead_inv
            q[k - nd] = qk
            r[k - nd: k + 1] -= np.einsum("ij,kjl->kil", qk, D.coeffs)
        rem = r[:nd] if nd > 0 else np.zeros((1,) + self.shape, dtype=complex)
        return MatPoly(q), MatPoly(rem)

    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    def allclose(self, other, tau=1e-10):
        n = max(self.coeffs.shape[0], other.coeffs.shape[0])
        d = np.linalg.norm(self._pad(n) - other._pad(n))
        return d <= tau * max(1.0, self.norm(), other.norm())

    def to_json(self):
        return {"p": int(self.p), "coeffs": [[[[z.real, z.imag] for z in row] for row in A] for A in self.coeffs]}

    @classmethod
    def from_json(cls, obj):
        c = np.array(obj["coeffs"], dtype=float)
        if c.ndim == 4:
            c = c[..., 0] + 1j * c[..., 1]
        return cls(c)

    def __repr__(self):
        return f"MatPoly(degree={self.degree}, shape={self.shape})"


def eval(P, z):
    return P(z)


def eval_at_matrix(P, A):
    return P.eval_at_matrix(A)


def _round_coeffs(c, tau):
    scale = np.max(np.abs(c)) if c.size else 0.0
    c = c.copy()
    c[np.abs(c) <= tau * scale] = 0
    return c


def _adj_det_matrix(A):
    p = A.shape[0]
    if p == 1:
        return np.ones((1, 1), dtype=complex), A[0, 0]
    adj = np.empty((p, p), dtype=complex)
    idx = np.arange(p)
    for i in range(p):
        for j in range(p):
            minor = A[np.ix_(idx != j, idx != i)]
            adj[i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return adj, np.linalg.det(A)


def adjugate_det(W, radius=1.0):
    """Adjugate matrix polynomial and scalar determinant (ascending coefficients).

    Both are interpolated from values at roots of unity scaled to `radius`.
    """
    p, N = W.p, W.degree
    K = N * p + 1
    zs = radius * np.exp(2j * np.pi * np.arange(K) / K)
    adjs = np.empty((K, p, p), dtype=complex)
    dets = np.empty(K, dtype=complex)
    for k, z in enumerate(zs):
        adjs[k], dets[k] = _adj_det_matrix(W(z))
    scale = radius ** -np.arange(K)
    det = np.fft.fft(dets) / K * scale
    adj = np.fft.fft(adjs, axis=0) / K * scale[:, None, None]
    tau = tol.get("round")
    return MatPoly(_round_coeffs(adj, tau)), _round_coeffs(det, tau)


def companion(W):
    """Block companion matrix of a monic matrix polynomial."""
    p, N = W.p, W.degree
    C = np.zeros((N * p, N * p), dtype=complex)
    C[: (N - 1) * p, p:] = np.eye((N - 1) * p)
    C[(N - 1) * p:, :] = -np.hstack(list(W.coeffs[:N]))
    return C


def normalized(W):
    """A_N^{-1} W, or NonMonic if A_N is singular."""
    if W.is_monic():
        return W
    if tol.rcond(W.lead) < tol.get("sing"):
        raise NonMonic("leading coefficient is singular")
    return np.linalg.inv(W.lead) @ W


def _cluster(vals, tau):
    groups = []
    for v in vals:
        for g in groups:
            if abs(v - np.mean(g)) <= tau * max(1.0, abs(v)):
                g.append(v)
                break
        else:
            groups.append([v])
    centers = [complex(np.mean(g)) for g in groups]
    for i in range(len(centers)):
        for j in range(i):
            if abs(centers[i] - centers[j]) < 10 * tau * max(1.0, abs(centers[i])):
                raise ClusterAmbiguous(f"eigenvalue clusters near {centers[i]} overlap")
    out = sorted(zip(centers, [len(g) for g in groups]), key=lambda t: (round(t[0].real, 9), round(t[0].imag, 9)))
    return out


def spectrum(W, normalize=True):
    """Eigenvalues of W with algebraic multiplicities, via companion linearization."""
    if not W.is_monic():
        if not normalize:
            raise NonMonic("polynomial is not monic")
        W = normalized(W)
    if W.degree == 0:
        return []
    vals = np.linalg.eigvals(companion(W))
    return _cluster(vals, tol.get("clust"))


@dataclass
class SpectralData:
    """Eigenvalues, Jordan chains (right and left) and the Jordan triple (X, J, Y).

    right[a][j] has shape (kappa, p): chain vectors r_{j,0..kappa-1}.
    left[a][j] has shape (kappa, p): coefficients of the left root polynomial
    in powers of (x - x_a).
    """

    eigenvalues: list
    right: list
    left: list
    X: np.ndarray
    J: np.ndarray
    Y: np.ndarray
    qcond: float = field(default=1.0)

    @property
    def p(self):
        return self.X.shape[0]

    @property
    def N(self):
        return self.X.shape[1] // self.p

    @property
    def kappas(self):
        return [[c.shape[0] for c in chains] for chains in self.right]

    @property
    def multiplicities(self):
        return [sum(k) for k in self.kappas]

    def blocks(self):
        """Yield (a, j, eigenvalue, kappa, column offset) in X-column order."""
        off = 0
        for a, lam in enumerate(self.eigenvalues):
            for j, ch in enumerate(self.right[a]):
                k = ch.shape[0]
                yield a, j, lam, k, off
                off += k


def jordan_pair(eig_chains):
    """Assemble (X, J) from [(eigenvalue, [chain arrays of shape (kappa, p)]), ...]."""
    cols, sizes, lams = [], [], []
    for lam, chains in eig_chains:
        for ch in chains:
            ch = np.atleast_2d(np.asarray(ch, dtype=complex))
            cols.append(ch.T)
            sizes.append(ch.shape[0])
            lams.append(lam)
    X = np.hstack(cols)
    J = np.zeros((X.shape[1], X.shape[1]), dtype=complex)
    off = 0
    for lam, k in zip(lams, sizes):
        J[off: off + k, off: off + k] = lam * np.eye(k) + np.eye(k, k=1)
        off += k
    return X, J


def _stacked_Q(X, J, N):
    blocks, XJ = [], X.astype(complex)
    for _ in range(N):
        blocks.append(XJ)
        XJ = XJ @ J
    return np.vstack(blocks), XJ


def monic_from_jordan_pair(X, J):
    """Unique monic W with A_0 X + ... + A_{N-1} X J^{N-1} + X J^N = 0."""
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    J = np.atleast_2d(np.asarray(J, dtype=complex))
    p = X.shape[0]
    if X.shape[1] % p:
        raise ValueError("X must have N*p columns")
    N = X.shape[1] // p
    Q, XJN = _stacked_Q(X, J, N)
    if tol.rcond(Q) < tol.get("sing"):
        raise SingularQ("stacked matrix [X; XJ; ...] is singular")
    A = np.linalg.solve(Q.T, -XJN.T).T
    coeffs = np.concatenate([A.reshape(p, N, p).transpose(1, 0, 2), np.eye(p)[None]])
    return MatPoly(coeffs)


def jordan_triple_Y(W, X, J):
    """Y with [X; XJ; ...; XJ^{N-1}] Y = [0; ...; 0; I]."""
    p, N = W.p, W.degree
    Q, _ = _stacked_Q(X, J, N)
    if tol.rcond(Q) < tol.get("sing"):
        raise SingularQ("stacked matrix [X; XJ; ...] is singular")
    rhs = np.zeros((N * p, p), dtype=complex)
    rhs[-p:] = np.eye(p)
    return np.linalg.solve(Q, rhs)


def _left_from_Y(Y, sizes):
    """Left root polynomial coefficients from reversed rows of each Y block."""
    out, off = [], 0
    for k in sizes:
        out.append(Y[off: off + k][::-1].copy())
        off += k
    return out


def pair_residual(W, X, J):
    """Relative Frobenius norm of A_0 X + A_1 X J + ... + A_N X J^N."""
    acc = np.zeros_like(X, dtype=complex)
    XJ = X.astype(complex)
    for A in W.coeffs:
        acc += A @ XJ
        XJ = XJ @ J
    return np.linalg.norm(acc) / max(1.0, W.norm() * np.linalg.norm(X))


def spectral_data_from_chains(W, eig_chains, left=None):
    """SpectralData for monic W from user-supplied right Jordan chains.

    Left root polynomials default to the reversed rows of the triple completion Y.
    """
    X, J = jordan_pair(eig_chains)
    if X.shape != (W.p, W.degree * W.p):
        raise ValueError("chains do not account for all N*p eigenvalues")
    if pair_residual(W, X, J) > 1e3 * tol.get("res"):
        raise NonzeroRemainder("chains are not Jordan chains of W")
    Q, _ = _stacked_Q(X, J, W.degree)
    Y = jordan_triple_Y(W, X, J)
    right, lefts, eigs = [], [], []
    for lam, chains in eig_chains:
        eigs.append(complex(lam))
        right.append([np.atleast_2d(np.asarray(c, dtype=complex)) for c in chains])
    if left is None:
        flat = _left_from_Y(Y, [c.shape[0] for ch in right for c in ch])
        it = iter(flat)
        lefts = [[next(it) for _ in ch] for ch in right]
    else:
        lefts = [[np.atleast_2d(np.asarray(c, dtype=complex)) for c in ch] for ch in left]
    return SpectralData(eigs, right, lefts, X, J, Y, qcond=1.0 / max(tol.rcond(Q), 1e-300))


def from_chains(eig_chains):
    """Forward construction: monic W and its SpectralData from prescribed chains."""
    X, J = jordan_pair(eig_chains)
    W = monic_from_jordan_pair(X, J)
    return W, spectral_data_from_chains(W, eig_chains)


def spectral_data(W):
    """Backward construction for semisimple spectra (all partial multiplicities 1)."""
    if not W.is_monic():
        raise NonMonic("spectral data requires a monic polynomial")
    p = W.p
    eig_chains = []
    for lam, alpha in spectrum(W):
        _, s, vh = np.linalg.svd(W(lam))
        null = vh[p - alpha:].conj()
        if alpha > 1 and s[p - alpha] > 1e3 * tol.get("clust") * max(1.0, s[0]):
            raise ClusterAmbiguous(f"eigenvalue {lam} is defective; supply Jordan chains")
        eig_chains.append((lam, [v[None, :] for v in null]))
    return spectral_data_from_chains(W, eig_chains)


def block_B(W):
    """Block Hankel matrix with (i, j) block A_{i+j+1}."""
    p, N = W.p, W.degree
    B = np.zeros((N * p, N * p), dtype=complex)
    for i in range(N):
        for j in range(N - i):
            B[i * p:(i + 1) * p, j * p:(j + 1) * p] = W.coeffs[i + j + 1]
    return B


@dataclass
class AuxMatrices:
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    J: np.ndarray
    Y: np.ndarray

    def R_n(self, n):
        """[Y, JY, ..., J^{n-1} Y]."""
        cols, JY = [], self.Y
        for _ in range(n):
            cols.append(JY)
            JY = self.J @ JY
        if not cols:
            return np.zeros((self.Y.shape[0], 0), dtype=complex)
        return np.hstack(cols)


def aux_matrices(W, sd):
    Q, _ = _stacked_Q(sd.X, sd.J, W.degree)
    aux = AuxMatrices(block_B(W), Q, None, sd.J, sd.Y)
    aux.R = aux.R_n(W.degree)
    return aux


def _taylor_of(f, a, m, p):
    if hasattr(f, "taylor"):
        return f.taylor(a, m)
    M = np.atleast_2d(np.asarray(f, dtype=complex))
    out = np.zeros((m,) + M.shape, dtype=complex)
    out[0] = M
    return out


def spectral_jet(f, sd, root=True):
    """Spectral jet of f at the eigenvalues in sd.

    root=True gives the root jet [(f r_j)^(k)/k!] with one column per chain entry;
    root=False gives the plain jet [f(x_a), f'(x_a), ..., f^(alpha-1)(x_a)/(alpha-1)!].
    """
    cols = []
    if root:
        for a, lam in enumerate(sd.eigenvalues):
            chains = sd.right[a]
            kmax = max(c.shape[0] for c in chains)
            T = _taylor_of(f, lam, kmax, sd.p)
            for ch in chains:
                for k in range(ch.shape[0]):
                    cols.append(sum(T[k - i] @ ch[i] for i in range(k + 1))[:, None])
    else:
        for a, lam in enumerate(sd.eigenvalues):
            alpha = sum(c.shape[0] for c in sd.right[a])
            T = _taylor_of(f, lam, alpha, sd.p)
            cols.extend(T[k] for k in range(alpha))
    return np.hstack(cols)


def w_polys(W, sd):
    """Quotients w_ij = l_i W r_j / (x - x_a)^max(kappa_i, kappa_j) and the assembled coupling matrix.

    Returns (dict keyed by (a, i, j) of ascending coefficients in powers of x - x_a, matrix).
    Rows of the matrix follow (a, i, m) and columns (a, j, k), both in chain order.
    """
    size = sum(sum(k) for k in sd.kappas)
    Wmat = np.zeros((size, size), dtype=complex)
    quot = {}
    offs = {}
    for a, j, lam, k, o in sd.blocks():
        offs[(a, j)] = o
    tau = tol.get("res")
    for a, lam in enumerate(sd.eigenvalues):
        Ws = W.shift(lam)
        for i, l in enumerate(sd.left[a]):
            lW = np.zeros((l.shape[0] + Ws.shape[0] - 1, W.p), dtype=complex)
            for t in range(l.shape[0]):
                lW[t: t + Ws.shape[0]] += np.einsum("j,kjl->kl", l[t], Ws)
            for j, r in enumerate(sd.right[a]):
                prod = np.zeros(lW.shape[0] + r.shape[0] - 1, dtype=complex)
                for u in range(r.shape[0]):
                    prod[u: u + lW.shape[0]] += lW @ r[u]
                ki, kj = l.shape[0], r.shape[0]
                km = max(ki, kj)
                scale = np.abs(l).sum() * np.abs(Ws).sum() * np.abs(r).sum()
                if np.max(np.abs(prod[:km])) > 1e3 * tau * max(scale, 1e-300):
                    raise NonzeroRemainder(f"l W r does not vanish to order {km} at {lam}")
                w = prod[km:]
                quot[(a, i, j)] = w
                ro, co = offs[(a, i)], offs[(a, j)]
                for m in range(ki):
                    for kk in range(kj):
                        idx = m + kk + 1 - km
                        if 0 <= idx < w.shape[0]:
                            Wmat[ro + m, co + kk] = w[idx]
    return quot, Wmat


def scalar_polymul(a, b):
    return npoly.polymul(a, b)


def binom(n, k):
    return comb(n, k) if 0 <= k <= n else 0
