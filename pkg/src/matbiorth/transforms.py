"""Christoffel, Geronimus, Geronimus-Uvarov and Uvarov transformations.

Every formula route is paired with a direct route that perturbs the kernel and
refactorizes; the direct route is the reference the others are compared with.

Conventions: a Geronimus-Uvarov transformation maps u to uh with
uh W_G(y) = W_C(x) u (plus masses annihilated by W_G). W_C = I is a pure
Geronimus transformation, W_G = I a pure Christoffel one.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import qr, solve_triangular

from . import tol
from .errors import (NoPoisedSet, NonMonic, NonzeroDivisionRemainder, SingularJetBlock,
                     SingularPoisedCandidate, SingularUvarovMatrix, WindowTooSmall)
from .factor import factorize
from .kernels import (MassTerm, cauchy_transform, christoffel_kernel, functional,
                      geronimus_kernel, geronimus_uvarov_kernel, gram, uvarov_kernel)
from .matpoly import (MatPoly, adjugate_det, aux_matrices, normalized, spectral_data,
                      spectral_jet, w_polys)


@dataclass
class TransformResult:
    route: str
    n: int
    P1: MatPoly
    H: np.ndarray
    P2: MatPoly = None
    P2A: MatPoly = None
    extras: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_json(self):
        def cz(a):
            a = np.asarray(a, dtype=complex)
            return np.stack([a.real, a.imag], axis=-1).tolist()
        out = {"route": self.route, "n": int(self.n), "P1": self.P1.to_json(), "H": cz(self.H),
               "P2": self.P2.to_json() if self.P2 is not None else None,
               "P2A": self.P2A.to_json() if self.P2A is not None else None,
               "residuals": {k: (None if v is None else float(v)) for k, v in self.residuals.items()},
               "flags": list(self.flags)}
        if "poised" in self.extras:
            out["poised"] = [int(i) for i in self.extras["poised"]]
        return out


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _poly_rel(P, Q):
    n = max(P.coeffs.shape[0], Q.coeffs.shape[0])
    return _rel(P._pad(n), Q._pad(n))


def deviation(res, ref):
    """Relative deviations of P1, H and P2 between two results."""
    out = {"P1": _poly_rel(res.P1, ref.P1), "H": _rel(res.H, ref.H)}
    if res.P2 is not None and ref.P2 is not None:
        out["P2"] = _poly_rel(res.P2, ref.P2)
    out["max"] = max(out.values())
    return out


# ------------------------------------------------------------------ masses

def mass_term(sd, a, i, m, items, lead=None):
    """Mass of order m on chain i of eigenvalue a.

    sd describes the monic normalization of W_G; pass W_G's leading coefficient as
    lead when W_G itself is not monic.
    """
    items = tuple((complex(t), int(d), np.asarray(c, dtype=complex).ravel()) for t, d, c in items)
    left = sd.left[a][i]
    if lead is not None:
        left = left @ np.linalg.inv(lead)
    return MassTerm(sd.eigenvalues[a], m, left, items, key=(a, i))


def diagonal_masses(sd, a, i, xis, lead=None):
    """Masses supported on the diagonal at x_a: xis[m] is the p-vector for order m."""
    lam = sd.eigenvalues[a]
    kap = len(xis)
    return [mass_term(sd, a, i, k, [(lam, d, xis[k + d]) for d in range(kap - k)], lead)
            for k in range(kap)]


def _offsets(sd):
    return {(a, j): off for a, j, lam, k, off in sd.blocks()}


def xi_row(P, masses, sd):
    """<P, xi> as a p x Np matrix ordered by (eigenvalue, chain, order)."""
    out = np.zeros((P.shape[0], sd.X.shape[1]), dtype=complex)
    offs = _offsets(sd)
    for ms in masses:
        col = offs[ms.key] + ms.order
        out[:, col] += functional(P, ms.items)[:, 0]
    return out


# ------------------------------------------------------------- poised sets

def is_poised(rows, cols):
    sub = np.asarray(rows)[:, list(cols)]
    return sub.shape[0] == sub.shape[1] and tol.rcond(sub) > tol.get("sing")


def poised_set_search(rows, need=None):
    """Column indices of a nonsingular square submatrix, by column-pivoted QR."""
    rows = np.asarray(rows, dtype=complex)
    need = rows.shape[0] if need is None else need
    if need == 0:
        return []
    if rows.shape[1] < need:
        raise NoPoisedSet("fewer columns than required")
    _, perm = qr(rows, mode="r", pivoting=True)
    sel = sorted(int(i) for i in perm[:need])
    if not is_poised(rows, sel):
        raise NoPoisedSet("rows are rank deficient")
    return sel


# ------------------------------------------------------------ small helpers

def _coef_row(P, deg):
    """p x (deg+1)p block row [P_0, ..., P_deg]."""
    c = np.zeros((deg + 1,) + P.shape, dtype=complex)
    c[: P.coeffs.shape[0]] = P.coeffs
    return np.hstack(list(c))


def _from_coef_row(M, p):
    k = M.shape[1] // p
    return MatPoly(M.reshape(M.shape[0], k, p).transpose(1, 0, 2))


def _combine(c, polys, p):
    """sum_k c_k P_k for a p x (len p) block row c."""
    out = None
    for k, P in enumerate(polys):
        term = c[:, k * p:(k + 1) * p] @ P
        out = term if out is None else out + term
    return out


def _solve_row(lead, last):
    """Row vector z with z lead = -last, via the transposed system."""
    if lead.size == 0:
        return np.zeros((last.shape[0], 0), dtype=complex)
    if tol.rcond(lead) < tol.get("sing"):
        raise SingularJetBlock("stacked jet matrix is singular")
    return -np.linalg.solve(lead.T, last.T).T


def _v_jet(Wn, sd):
    """Root jet in x of V(x, y) = sum_j A_j sum_{i<j} x^i y^{j-1-i}, as a polynomial in y."""
    N, p = Wn.degree, Wn.p
    XJ = [sd.X]
    for _ in range(N):
        XJ.append(XJ[-1] @ sd.J)
    coeffs = np.zeros((max(N, 1), p, sd.X.shape[1]), dtype=complex)
    for j in range(1, N + 1):
        for i in range(j):
            coeffs[j - 1 - i] += Wn.coeffs[j] @ XJ[i]
    return MatPoly(coeffs)


def _kernel_rows(F, n, rows, W):
    """W(y) sum_{k<n} P2_k(y)^T H_k^{-1} rows[k] as a polynomial matrix."""
    acc = None
    for k in range(n):
        term = F.P2(k).T @ np.linalg.solve(F.H[k], rows[k])
        acc = term if acc is None else acc + term
    return W @ acc


def _need(F, m):
    if F.n < m:
        raise WindowTooSmall(f"factorization of size {F.n} but {m} blocks are needed")


# ----------------------------------------------------------------- direct

def _direct_result(kp, n, route="direct"):
    Fp = factorize(kp, n + 1)
    return TransformResult(route, n, Fp.P1(n), Fp.H[n].copy(), Fp.P2(n),
                           extras={"factorization": Fp})


def geronimus_direct(k, W_G, masses=(), n=0, sd=None):
    """Perturb the kernel by W_G(y)^{-1} plus masses, refactorize."""
    return _direct_result(geronimus_kernel(k, W_G, masses, sd), n)


def christoffel_direct(k, W_C, n):
    return _direct_result(christoffel_kernel(k, W_C), n)


def geronimus_uvarov_direct(k, W_C, W_G, masses=(), n=0, sd=None):
    return _direct_result(geronimus_uvarov_kernel(k, W_C, W_G, masses, sd), n)


def uvarov_direct(k, terms, n):
    return _direct_result(uvarov_kernel(k, terms), n)


# ---------------------------------------------------- spectral data plumbing

@dataclass
class _Side:
    """Perturbing polynomial split as lead @ monic, with its spectral data."""
    W: MatPoly
    lead: np.ndarray
    monic: MatPoly
    sd: object
    N: int


def _side(W, sd=None):
    if W.degree == 0:
        return _Side(W, W.lead, MatPoly.identity(W.p), None, 0)
    Wn = normalized(W)
    return _Side(W, W.lead, Wn, spectral_data(Wn) if sd is None else sd, W.degree)


def _jets(polys, side):
    p = polys[0].shape[0]
    if side.N == 0:
        return [np.zeros((p, 0), dtype=complex) for _ in polys]
    return [spectral_jet(P, side.sd) for P in polys]


def _geronimus_rows(C1, P1, side, masses, Wmat):
    """Rows J_{C1_k} - <P1_k, xi> W for the Geronimus side."""
    if side.N == 0:
        return [np.zeros((P1[0].shape[0], 0), dtype=complex) for _ in P1]
    rows = []
    for Ck, Pk in zip(C1, P1):
        r = spectral_jet(Ck, side.sd)
        if masses:
            r = r - xi_row(Pk, masses, side.sd) @ Wmat
        rows.append(r)
    return rows


def _normalized_masses(masses, lead):
    """Masses for uh A_G, the kernel matching the monic normalization of W_G."""
    if np.allclose(lead, np.eye(lead.shape[0])):
        return tuple(masses)
    return tuple(replace(m, left=np.atleast_2d(m.left) @ lead) for m in masses)


# ------------------------------------------------- Geronimus-Uvarov: spectral

def geronimus_uvarov_spectral(F, k, W_C, W_G, masses=(), n=0, C1=None, sd_C=None, sd_G=None):
    """Spectral route: jets of P1 at sigma(W_C) and of C1 at sigma(W_G)."""
    p = F.p
    C, G = _side(W_C, sd_C), _side(W_G, sd_G)
    NC, NG = C.N, G.N
    if tol.rcond(C.lead) < tol.get("sing") or tol.rcond(G.lead) < tol.get("sing"):
        raise NonMonic("spectral route needs nonsingular leading coefficients")
    top = n + NC
    _need(F, top + 1)
    P1 = [F.P1(j) for j in range(top + 1)]
    if C1 is None:
        C1 = [cauchy_transform(k, P, 1) for P in P1]
    masses_n = _normalized_masses(masses, G.lead)
    Wmat = w_polys(G.monic, G.sd)[1] if (masses_n and NG) else None
    jc = _jets(P1, C)
    rg = _geronimus_rows(C1[: top + 1], P1, G, masses_n, Wmat)

    if n >= NG:
        lo = n - NG
        Phi = [np.hstack([jc[j], rg[j]]) for j in range(top + 1)]
        lead = np.vstack(Phi[lo:top]) if top > lo else np.zeros((0, 0))
        c = np.hstack([_solve_row(lead, Phi[top]), np.eye(p)])
        omega = C.lead @ c
        PW = _combine(omega, P1[lo:], p)
        H_norm = omega[:, :p] @ F.H[lo]
        H = H_norm @ np.linalg.inv(G.lead)
        # second family: -Theta*[Phi_lead | H_lo; 0 ; phiK | 0]
        rhs = np.zeros((lead.shape[0], p), dtype=complex)
        if lead.shape[0]:
            rhs[:p] = F.H[lo]
        nk = max(n, lo + 1)
        rowsK = [np.hstack([jc[j], rg[j]]) for j in range(nk)]
        phiK = _kernel_rows(F, nk, rowsK, G.monic)
        if NG:
            vj = _v_jet(G.monic, G.sd)
            zC = MatPoly(np.zeros((1, p, NC * p)))
            extra = MatPoly(np.concatenate([zC._pad(vj.coeffs.shape[0]), vj.coeffs], axis=2))
            phiK = extra if phiK is None else phiK + extra
        if lead.shape[0]:
            P2A_norm = phiK @ np.linalg.solve(lead, rhs)
        else:
            P2A_norm = MatPoly.identity(p)
    else:
        _gate_small_n(p, NG)
        RG = aux_matrices(G.monic, G.sd).R_n(n + 1)
        Rk = [np.hstack([jc[j], -rg[j] @ RG]) for j in range(top + 1)]
        PW, H_norm, P2A_norm, omega = _small_n(Rk, P1, n, NC, p, C.lead)
        H = H_norm @ np.linalg.inv(G.lead)
    P1hat = _divide(PW, C)
    P2T = G.lead @ P2A_norm @ np.linalg.inv(G.lead)
    res = TransformResult("spectral", n, P1hat, H, P2T.T, extras={"P1W": PW, "omega_row": omega})
    return res


SMALL_N_LIMIT = 16


def _small_n(Rk, P1, n, NC, p, lead_C):
    """Branch n < N_G from rows [J_C P1_k | R_{k,0..n}], k = 0..N_C + n."""
    top = NC + n
    width = NC * p + n * p
    lead = np.vstack([r[:, :width] for r in Rk[:top]]) if top else np.zeros((0, 0))
    c = np.hstack([_solve_row(lead, Rk[top][:, :width]), np.eye(p)])
    omega = lead_C @ c
    PW = _combine(omega, P1[: top + 1], p)
    colH = [r[:, width:width + p] for r in Rk[: top + 1]]
    H = omega @ np.vstack(colH)
    # second family: Theta* of [rows k < N_C + n ; 0 | chi_{[n+1]}(y)^T]
    if top:
        A = np.vstack([r[:, :width] for r in Rk[:top]])
        B = np.vstack([r[:, width:width + p] for r in Rk[:top]])
        z = np.linalg.solve(A, B)
        zR = z[NC * p:]
        coeffs = np.zeros((n + 1, p, p), dtype=complex)
        coeffs[n] = np.eye(p)
        for l in range(n):
            coeffs[l] = -zR[l * p:(l + 1) * p]
        P2A = MatPoly(coeffs)
    else:
        P2A = MatPoly.identity(p)
    return PW, H, P2A, omega


def _gate_small_n(p, N):
    if p * N > SMALL_N_LIMIT:
        raise ValueError(f"n < N branch limited to p N <= {SMALL_N_LIMIT} (got {p * N})")


def _divide(PW, C):
    """Exact right division of P W_C by W_C, with remainder check."""
    if C.N == 0:
        return PW @ np.linalg.inv(C.lead)
    Q, R = PW.right_divmod(C.W)
    if R.norm() > tol.get("fac") * max(PW.norm(), 1.0) * 1e2:
        raise NonzeroDivisionRemainder(f"remainder {R.norm():.3e} after dividing by W_C")
    return Q


# ---------------------------------------------------- Geronimus-Uvarov: mixed

def r_matrix(F, kp, rows, cols):
    """R_{k,l} = <P1_k(x), y^l I> against the Geronimus-perturbed kernel kp."""
    p = F.p
    _need(F, rows)
    return F.S1[: rows * p, : rows * p] @ gram(kp, rows, cols)


def geronimus_uvarov_mixed(F, k, W_C, W_G, masses=(), n=0, kp=None, sd_C=None, poised=None):
    """Mixed route: jets of P1 at sigma(W_C) plus R columns against u W_G^{-1} + masses."""
    p = F.p
    C = _side(W_C, sd_C)
    NC, NG = C.N, W_G.degree
    if tol.rcond(C.lead) < tol.get("sing"):
        raise NonMonic("mixed route needs a nonsingular leading coefficient in W_C")
    kp = geronimus_kernel(k, W_G, masses) if kp is None else kp
    top = n + NC
    R = r_matrix(F, kp, top + 1, n + 1)
    Rk = [R[j * p:(j + 1) * p] for j in range(top + 1)]
    P1 = [F.P1(j) for j in range(top + 1)]
    jc = _jets(P1, C)
    flags = []
    if n >= NG:
        lo = n - NG
        Phi = [np.hstack([jc[j], Rk[j][:, : n * p]]) for j in range(top + 1)]
        lead_full = np.vstack(Phi[lo:top]) if top > lo else np.zeros((0, Phi[top].shape[1]))
        sel = poised_set_search(lead_full) if poised is None else list(poised)
        if poised is not None and not is_poised(lead_full, sel):
            raise SingularPoisedCandidate("supplied column set is not poised")
        lead = lead_full[:, sel]
        c = np.hstack([_solve_row(lead, Phi[top][:, sel]), np.eye(p)])
        omega = C.lead @ c
        PW = _combine(omega, P1[lo:], p)
        H = omega @ np.vstack([r[:, n * p:(n + 1) * p] for r in Rk[lo:]])
        if lead.shape[0]:
            rhs = np.zeros((lead.shape[0], p), dtype=complex)
            rhs[:p] = F.H[lo]
            nk = max(n, lo + 1)
            rowsK = [np.hstack([jc[j], Rk[j][:, : n * p]]) for j in range(nk)]
            chi = np.zeros((max(n, 1), p, NC * p + n * p), dtype=complex)
            for l in range(n):
                chi[l, :, NC * p + l * p: NC * p + (l + 1) * p] = np.eye(p)
            phiK = _kernel_rows(F, nk, rowsK, W_G) - MatPoly(chi)
            P2A = MatPoly(phiK.coeffs[:, :, sel]) @ np.linalg.solve(lead, rhs)
        else:
            P2A = MatPoly.identity(p) @ W_G.lead
        if tol.rcond(W_G.lead) < tol.get("sing"):
            P2 = None
            flags.append("second family known only through P2^T A_G (singular leading coefficient)")
        else:
            P2 = (P2A @ np.linalg.inv(W_G.lead)).T
    else:
        _gate_small_n(p, NG)
        sel = None
        rows = [np.hstack([jc[j], Rk[j]]) for j in range(top + 1)]
        PW, H, P2T, omega = _small_n(rows, P1, n, NC, p, C.lead)
        P2A = P2T @ W_G.lead
        P2 = P2T.T
    P1hat = _divide(PW, C)
    return TransformResult("mixed", n, P1hat, H, P2, P2A,
                           extras={"P1W": PW, "omega_row": omega, "poised": sel}, flags=flags)


# ------------------------------------------------------- Geronimus wrappers

def geronimus_uvarov(F, k, W_C, W_G, masses=(), n=0, route="spectral", **kw):
    routes = {"spectral": geronimus_uvarov_spectral, "mixed": geronimus_uvarov_mixed}
    if route == "direct":
        return geronimus_uvarov_direct(k, W_C, W_G, masses, n)
    if route not in routes:
        raise ValueError(f"unknown route {route!r}")
    return routes[route](F, k, W_C, W_G, masses, n, **kw)


def geronimus_spectral(F, k, W_G, masses=(), n=0, C1=None, sd=None):
    I = MatPoly.identity(F.p)
    return geronimus_uvarov_spectral(F, k, I, W_G, masses, n, C1=C1, sd_G=sd)


def geronimus_nonspectral(F, k, W_G, masses=(), n=0, kp=None, poised=None):
    I = MatPoly.identity(F.p)
    res = geronimus_uvarov_mixed(F, k, I, W_G, masses, n, kp=kp, poised=poised)
    res.route = "nonspectral"
    return res


def christoffel_spectral(F, k, W_C, n, sd=None):
    I = MatPoly.identity(F.p)
    return geronimus_uvarov_spectral(F, k, W_C, I, (), n, C1=[None] * (n + W_C.degree + 1), sd_C=sd)


def bridge_residual(F, k, W_G, masses=(), kmax=None, C1=None, sd=None, kp=None):
    """|| J_{C1_k} - <P1_k, xi> W + R^(N)_k B Q || over k <= kmax, relative."""
    p = F.p
    G = _side(W_G, sd)
    kmax = F.n - 1 if kmax is None else kmax
    P1 = [F.P1(j) for j in range(kmax + 1)]
    if C1 is None:
        C1 = [cauchy_transform(k, P, 1) for P in P1]
    masses_n = _normalized_masses(masses, G.lead)
    Wmat = w_polys(G.monic, G.sd)[1] if masses_n else None
    rows = np.vstack(_geronimus_rows(C1[: kmax + 1], P1, G, masses_n, Wmat))
    kp = geronimus_kernel(k, W_G, masses) if kp is None else kp
    RN = r_matrix(F, kp, kmax + 1, G.N)
    RN = np.hstack([RN[:, l * p:(l + 1) * p] @ G.lead for l in range(G.N)])
    aux = aux_matrices(G.monic, G.sd)
    other = -RN @ aux.B @ aux.Q
    return _rel(rows, other)


# ------------------------------------------------------------ degree one

def at_matrix(f, sd):
    """Right evaluation f(A) for A = X J X^{-1}, through the root jet of f."""
    return spectral_jet(f, sd) @ np.linalg.inv(sd.X)


def geronimus_degree_one(F, k, A, n, C1=None, sd=None):
    """Closed forms for W(y) = yI - A without masses, n >= 1."""
    p = F.p
    W = MatPoly(np.stack([-np.asarray(A, dtype=complex), np.eye(p)]))
    sd = spectral_data(W) if sd is None else sd
    _need(F, n + 1)
    if C1 is None:
        C1 = [cauchy_transform(k, F.P1(j), 1) for j in range(n + 1)]
    CA = [at_matrix(C1[j], sd) for j in range(n + 1)]
    ratio = CA[n] @ np.linalg.inv(CA[n - 1])
    P1 = F.P1(n) - ratio @ F.P1(n - 1)
    H = -ratio @ F.H[n - 1]
    Kpc = None
    for j in range(n):
        term = F.P2(j).T @ np.linalg.solve(F.H[j], CA[j])
        Kpc = term if Kpc is None else Kpc + term
    P2T = (W @ Kpc + np.eye(p)) @ np.linalg.solve(CA[n - 1], F.H[n - 1])
    return TransformResult("degree-one", n, P1, H, P2T.T, extras={"C1_at_A": CA})


def geronimus_product_residual(CA, H, Hcheck):
    """C1_n(A) against (-1)^(n+1) Hc_n (H_{n-1}^{-1} Hc_{n-1}) ... (H_0^{-1} Hc_0)."""
    out = 0.0
    for n in range(len(CA)):
        prod = np.array(Hcheck[n], dtype=complex)
        for m in range(n - 1, -1, -1):
            prod = prod @ np.linalg.solve(H[m], Hcheck[m])
        out = max(out, _rel((-1) ** (n + 1) * prod, CA[n]))
    return out


def christoffel_product_residual(F, A, Hhat, nmax):
    """P1_{n+1}(A) against (-1)^(n+1) (Hh_n H_n^{-1}) ... (Hh_0 H_0^{-1})."""
    out = 0.0
    for n in range(nmax):
        prod = np.eye(F.p, dtype=complex)
        for m in range(n, -1, -1):
            prod = prod @ Hhat[m] @ np.linalg.inv(F.H[m])
        out = max(out, _rel((-1) ** (n + 1) * prod, F.P1(n + 1).eval_at_matrix(A)))
    return out


def gu_degree_one(F, k, A_C, A_G, n, C1=None):
    """Expanded quasideterminant for W_C = xI - A_C, W_G = xI - A_G (massless, n >= 1)."""
    p = F.p
    _need(F, n + 2)
    if C1 is None:
        C1 = [cauchy_transform(k, F.P1(j), 1) for j in range(n + 2)]
    sdG = spectral_data(MatPoly(np.stack([-np.asarray(A_G, dtype=complex), np.eye(p)])))
    PA = [F.P1(j).eval_at_matrix(A_C) for j in (n - 1, n, n + 1)]
    CA = [at_matrix(C1[j], sdG) for j in (n - 1, n, n + 1)]
    inv = np.linalg.inv
    t1 = CA[2] @ inv(CA[0] - PA[0] @ inv(PA[1]) @ CA[1])
    t2 = PA[2] @ inv(PA[0] - CA[0] @ inv(CA[1]) @ PA[1])
    H = -(t1 + t2) @ F.H[n - 1]
    PW = (F.P1(n + 1)
          - CA[2] @ inv(CA[1] - PA[1] @ inv(PA[0]) @ CA[0]) @ F.P1(n)
          - t1 @ F.P1(n - 1)
          - PA[2] @ inv(PA[1] - CA[1] @ inv(CA[0]) @ PA[0]) @ F.P1(n)
          - t2 @ F.P1(n - 1))
    WC = MatPoly(np.stack([-np.asarray(A_C, dtype=complex), np.eye(p)]))
    return TransformResult("degree-one", n, _divide(PW, _side(WC)), H, None, extras={"P1W": PW})


# ----------------------------------------------------------------- Uvarov

def uvarov(F, k, terms, n):
    """Additive Uvarov perturbation through Christoffel-Darboux kernel jets."""
    p = F.p
    _need(F, n + 1)
    if any(t.wc is not None for t in terms):
        raise ValueError("uvarov formulas take plain terms")
    m = len(terms)
    if m == 0:
        return TransformResult("uvarov", n, F.P1(n), F.H[n].copy(), F.P2(n))

    def brow(P):
        return np.hstack([functional(P, t.items) for t in terms])

    def y_jet(Q):
        return np.vstack([Q.T.taylor(t.point, t.order + 1)[t.order] for t in terms])

    Hinv = [np.linalg.inv(F.H[j]) for j in range(n + 1)]
    P1 = [F.P1(j) for j in range(n + 1)]
    P2 = [F.P2(j) for j in range(n + 1)]
    if n:
        Jk = [sum((y_jet(P2[j])[s * p:(s + 1) * p] @ Hinv[j]) @ P1[j] for j in range(n))
              for s in range(m)]
        Mm = np.vstack([brow(J) for J in Jk])
    else:
        Jk = [MatPoly(np.zeros((1, p, p))) for _ in range(m)]
        Mm = np.zeros((m * p, m * p), dtype=complex)
    M = np.eye(m * p) + Mm
    if tol.rcond(M) < tol.get("sing"):
        raise SingularUvarovMatrix("I + <J_K, beta> is singular")
    Jstack = MatPoly(np.concatenate([J.coeffs if J.coeffs.shape[0] == max(Ji.coeffs.shape[0] for Ji in Jk)
                                     else J._pad(max(Ji.coeffs.shape[0] for Ji in Jk)) for J in Jk], axis=1))
    b_n = brow(P1[n])
    jP2 = y_jet(P2[n])
    P1hat = P1[n] - np.linalg.solve(M.T, b_n.T).T @ Jstack
    H = F.H[n] + b_n @ np.linalg.solve(M, jP2)
    P2T = P2[n].T
    if n:
        Kb = sum(P2[j].T @ (Hinv[j] @ brow(P1[j])) for j in range(n))
        P2T = P2T - Kb @ np.linalg.solve(M, jP2)
    return TransformResult("uvarov", n, P1hat, H, P2T.T, extras={"uvarov_matrix": M})


# ---------------------------------------------------------- adjugate recast

def adjugate_recast(W, radius=1.0):
    """W = det(W) adj(W)^{-1}: returns (W_C, W_G) = (det(W) I, adj(W))."""
    adj, det = adjugate_det(W, radius)
    return MatPoly.scalar(det, W.p), adj


# ------------------------------------------------- resolvent and connection

def _shift_toeplitz(W, rows, cols, p):
    T = np.zeros((rows * p, cols * p), dtype=complex)
    for i in range(rows):
        for j, A in enumerate(W.coeffs):
            if i + j < cols:
                T[i * p:(i + 1) * p, (i + j) * p:(i + j + 1) * p] = A
    return T


def _sample_points(rng, radius, count):
    r = 1.3 * max(1.0, radius)
    ang = rng.uniform(0, 2 * np.pi, count)
    rad = r * rng.uniform(1.0, 1.5, count)
    return rad * np.exp(1j * ang)


def resolvent_and_connection(F, Fh, k, kh, W_C, W_G, seed=0, npts=20, second_kind=True):
    """omega = Sh1 W_C(Lambda) S1^{-1} with residuals of the connection identities."""
    p = F.p
    nh, NC, NG = Fh.n, W_C.degree, W_G.degree
    if F.n < nh + NC or nh <= NG:
        raise WindowTooSmall(f"need {nh + NC} original blocks and more than {NG} perturbed ones")
    m = nh + NC
    I = np.eye(m * p)
    S1inv = solve_triangular(F.S1[: m * p, : m * p], I, lower=True, unit_diagonal=True)
    omega = Fh.S1 @ _shift_toeplitz(W_C, nh, m, p) @ S1inv
    blk = lambda i, l: omega[i * p:(i + 1) * p, l * p:(l + 1) * p]
    scale = max(np.abs(omega).max(), 1.0)
    band = 0.0
    for i in range(nh):
        for l in range(m):
            if l < i - NG or l > i + NC:
                band = max(band, np.abs(blk(i, l)).max() / scale)
    oa = 0.0
    for j in range(nh - NG):
        ref = Fh.H[NG + j] @ W_G.lead @ np.linalg.inv(F.H[j])
        oa = max(oa, _rel(blk(NG + j, j), ref))
    rng = np.random.default_rng(seed)
    rad = max(k.r_x or 1.0, k.r_y or 1.0, *[abs(z) for z in kh.mass_points()] or [1.0])
    xs, ys = _sample_points(rng, rad, npts), _sample_points(rng, rad, npts)
    P1 = [F.P1(j) for j in range(m)]
    P1h = [Fh.P1(j) for j in range(nh)]
    P2h = [Fh.P2(j) for j in range(nh)]
    cp = 0.0
    for i in range(nh):
        lhs = P1h[i] @ W_C
        rhs = _combine(omega[i * p:(i + 1) * p], P1, p)
        cp = max(cp, _poly_rel(lhs, rhs))
    # Christoffel-Darboux connection at random points
    cd = 0.0
    for nn in range(1, nh - NG + 1):
        for x, y in zip(xs, ys):
            lhs = (sum(P2h[j](y).T @ np.linalg.solve(Fh.H[j], P1h[j](x)) for j in range(nn)) @ W_C(x)
                   - W_G(y) @ sum(F.P2(j)(y).T @ np.linalg.solve(F.H[j], P1[j](x)) for j in range(nn)))
            rhs = np.zeros((p, p), dtype=complex)
            for kk in range(nn + NG):
                coef = P2h[kk](y).T @ np.linalg.inv(Fh.H[kk])
                for l in range(max(0, kk - NG), min(m, kk + NC + 1)):
                    if kk < nn <= l:
                        rhs += coef @ blk(kk, l) @ P1[l](x)
                    elif l < nn <= kk:
                        rhs -= coef @ blk(kk, l) @ P1[l](x)
            cd = max(cd, np.linalg.norm(lhs - rhs) / max(np.linalg.norm(lhs), np.linalg.norm(rhs), 1e-300))
    out = {"omega": omega, "band": band, "omegaA": oa, "connection_P": cp, "cd_connection": cd,
           "connection_C": None, "cd_connection_mixed": None}
    if second_kind:
        try:
            out.update(_second_kind_connection(F, Fh, k, kh, W_G, omega, xs, ys))
        except Exception as exc:  # kernels without Cauchy transforms
            out["second_kind_skipped"] = type(exc).__name__
    return out


def _second_kind_connection(F, Fh, k, kh, W_G, omega, xs, ys):
    p, nh, NG = F.p, Fh.n, W_G.degree
    m = omega.shape[1] // p
    C1 = [cauchy_transform(k, F.P1(j), 1) for j in range(m)]
    C1h = [cauchy_transform(kh, Fh.P1(j), 1) for j in range(nh)]
    moments = Fh.S1 @ Fh.G  # rows <Ph1_i, y^l>
    blk = lambda i, l: omega[i * p:(i + 1) * p, l * p:(l + 1) * p]

    def corr(i, z):
        out = np.zeros((p, p), dtype=complex)
        for l in range(min(NG, moments.shape[1] // p)):
            pw = sum(W_G.coeffs[j] * z ** (j - 1 - l) for j in range(l + 1, NG + 1))
            out += moments[i * p:(i + 1) * p, l * p:(l + 1) * p] @ pw
        return out

    cc = 0.0
    for i in range(nh):
        for z in xs:
            lhs = C1h[i](z) @ W_G(z) - corr(i, z)
            rhs = sum(blk(i, l) @ C1[l](z) for l in range(m))
            cc = max(cc, np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300))
    cm = 0.0
    P2h = [Fh.P2(j) for j in range(nh)]
    for nn in range(max(NG, 1), nh - NG + 1):
        for x, y in zip(xs, ys):
            V = sum(W_G.coeffs[j] * sum(x ** (j - 1 - i) * y ** i for i in range(j)) for j in range(1, NG + 1)) \
                if NG else np.zeros((p, p))
            lhs = (sum(P2h[j](y).T @ np.linalg.solve(Fh.H[j], C1h[j](x)) for j in range(nn)) @ W_G(x)
                   - W_G(y) @ sum(F.P2(j)(y).T @ np.linalg.solve(F.H[j], C1[j](x)) for j in range(nn)) - V)
            rhs = np.zeros((p, p), dtype=complex)
            for kk in range(nn + NG):
                coef = P2h[kk](y).T @ np.linalg.inv(Fh.H[kk])
                for l in range(max(0, kk - NG), m):
                    if kk < nn <= l:
                        rhs += coef @ blk(kk, l) @ C1[l](x)
                    elif l < nn <= kk:
                        rhs -= coef @ blk(kk, l) @ C1[l](x)
            cm = max(cm, np.linalg.norm(lhs - rhs) / max(np.linalg.norm(lhs), np.linalg.norm(rhs), 1e-300))
    return {"connection_C": cc, "cd_connection_mixed": cm}
