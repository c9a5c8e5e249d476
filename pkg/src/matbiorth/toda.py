"""Toda and noncommutative KP flows on discrete kernels, Sato formulas and bilinear identities.

Times enter through u^t = exp(t1(x) - t2(y)) u with t(x) = sum_j t_j x^j. Every
equation is checked on exact solutions obtained by refactorizing the reweighted kernel.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, solve_triangular

from . import tol
from .errors import NonzeroT2, RadiusTooSmall, WindowTooSmall
from .factor import factorize
from .kernels import (cauchy_transform, geronimus_uvarov_kernel, miwa_shift, toda_weights)

MAX_TIMES = 8


def _times(t):
    t = [complex(v) for v in (t or [])]
    if len(t) > MAX_TIMES:
        raise ValueError(f"time vectors are capped at length {MAX_TIMES}")
    return t


def time_poly(t, z):
    return sum(tj * z ** (j + 1) for j, tj in enumerate(t))


def _bump(t, j, dh):
    """Copy of time vector t with t_{j+1} shifted by dh."""
    t = list(t) + [0j] * max(0, j + 1 - len(t))
    t[j] += dh
    return t


@dataclass
class TodaState:
    kernel: object
    t1: list
    t2: list
    F: object

    @property
    def p(self):
        return self.F.p

    @property
    def n(self):
        return self.F.n

    @property
    def H(self):
        return self.F.H

    def U(self, k):
        """First subdiagonal block of S1; U_0 = 0."""
        p = self.p
        if k == 0:
            return np.zeros((p, p), dtype=complex)
        return self.F.S1[k * p:(k + 1) * p, (k - 1) * p:k * p]

    def a(self, k):
        if k == 0:
            return np.zeros((self.p, self.p), dtype=complex)
        return self.H[k] @ np.linalg.inv(self.H[k - 1])

    def b(self, k):
        return self.U(k) - self.U(k + 1)

    def S2_tilde(self):
        """H S2^{-T}, block upper triangular."""
        p, n = self.p, self.n
        S2i = solve_triangular(self.F.S2, np.eye(n * p), lower=True, unit_diagonal=True)
        Hb = np.zeros((n * p, n * p), dtype=complex)
        for k in range(n):
            Hb[k * p:(k + 1) * p, k * p:(k + 1) * p] = self.H[k]
        return Hb @ S2i.T

    def lax_blocks(self):
        """B_eta = (L1)_+ and B_zeta = (L2)_- on the truncation, in terms of b_k and a_k."""
        p, n = self.p, self.n
        Be = np.zeros((n * p, n * p), dtype=complex)
        Bz = np.zeros_like(Be)
        for k in range(n):
            if k + 1 < n:
                Be[k * p:(k + 1) * p, k * p:(k + 1) * p] = self.b(k)
                Be[k * p:(k + 1) * p, (k + 1) * p:(k + 2) * p] = np.eye(p)
            if k:
                Bz[k * p:(k + 1) * p, (k - 1) * p:k * p] = self.a(k)
        return Be, Bz

    def baker1(self, z):
        """Psi_1(t, z) = exp(t1(z)) P1^t(z), blocks k < n."""
        e = np.exp(time_poly(self.t1, z))
        return [e * self.F.P1(k)(z) for k in range(self.n)]

    def baker2_star(self, z):
        """Psi*_2(t, z) = exp(-t2(z)) H^{-T} P2^t(z), blocks k < n."""
        e = np.exp(-time_poly(self.t2, z))
        return [e * np.linalg.solve(self.H[k].T, self.F.P2(k)(z)) for k in range(self.n)]


def evolve(k, t1=(), t2=(), n=4):
    """Reweight the kernel by exp(t1(x) - t2(y)) and refactorize n blocks."""
    t1, t2 = _times(t1), _times(t2)
    kt = toda_weights(k, t1, t2)
    return TodaState(kt, t1, t2, factorize(kt, n))


def _at(k, t1, t2, n):
    return evolve(k, t1, t2, n)


def _richardson(fn, h):
    """Evaluate a residual at h and h/2 and report their ratio."""
    r1, r2 = fn(h), fn(h / 2)
    return {"h": h, "residual_h": r1, "residual_h2": r2, "ratio": r1 / r2 if r2 > 0 else float("inf")}


# -------------------------------------------------------------- 2D Toda

def toda_residual(k, t1=(), t2=(), n=5, h=1e-3, eq="system"):
    """Central-difference residuals of the first-order Toda system (or its second-order form).

    system: d b_k / d zeta = a_k - a_{k+1} and d a_k / d eta = b_k a_k - a_k b_{k-1}
    second: d/d zeta (d H_k / d eta H_k^{-1}) + H_{k+1} H_k^{-1} - H_k H_{k-1}^{-1} = 0
    """
    t1, t2 = _times(t1), _times(t2)
    m = n + 1
    base = _at(k, t1, t2, m)

    def system(h):
        up_z, dn_z = _at(k, t1, _bump(t2, 0, h), m), _at(k, t1, _bump(t2, 0, -h), m)
        up_e, dn_e = _at(k, _bump(t1, 0, h), t2, m), _at(k, _bump(t1, 0, -h), t2, m)
        res = 0.0
        for j in range(n):
            db = (up_z.b(j) - dn_z.b(j)) / (2 * h)
            res = max(res, np.linalg.norm(db - (base.a(j) - base.a(j + 1))))
            da = (up_e.a(j) - dn_e.a(j)) / (2 * h)
            rhs = base.b(j) @ base.a(j) - (base.a(j) @ base.b(j - 1) if j else 0)
            res = max(res, np.linalg.norm(da - rhs))
        return float(res)

    def second(h):
        def logder(tz):
            up = _at(k, _bump(t1, 0, h), tz, m)
            dn = _at(k, _bump(t1, 0, -h), tz, m)
            return [(up.H[j] - dn.H[j]) / (2 * h) @ np.linalg.inv(_at(k, t1, tz, m).H[j]) for j in range(n)]
        lp, lm = logder(_bump(t2, 0, h)), logder(_bump(t2, 0, -h))
        res = 0.0
        for j in range(n):
            lhs = (lp[j] - lm[j]) / (2 * h) + base.a(j + 1) - base.a(j)
            res = max(res, np.linalg.norm(lhs))
        return float(res)

    return _richardson(system if eq == "system" else second, h)


def sato_wilson_residual(k, t1=(), t2=(), n=8, j=1, h=1e-4, flow=1):
    """Sato-Wilson equations along t_{flow, j} on interior rows of the truncation.

    flow 1: dS1 S1^{-1} = -(L1^j)_-,  dS2~ S2~^{-1} = (L1^j)_+ with L1 = S1 Lambda S1^{-1}
    flow 2: dS1 S1^{-1} = (L2^j)_-,   dS2~ S2~^{-1} = -(L2^j)_+ with L2 = S2~ Lambda^T S2~^{-1}
    """
    t1, t2 = _times(t1), _times(t2)
    if n <= j + 1:
        raise WindowTooSmall(f"need more than {j + 1} blocks for flow index {j}")
    base = _at(k, t1, t2, n)
    p = base.p
    keep = (n - j) * p
    I = np.eye(n * p)
    Lam = np.kron(np.eye(n, k=1), np.eye(p))
    S1 = base.F.S1
    S1i = solve_triangular(S1, I, lower=True, unit_diagonal=True)
    St = base.S2_tilde()
    Sti = np.linalg.inv(St)
    if flow == 1:
        L = np.linalg.matrix_power(S1 @ Lam @ S1i, j)
        rhs1, rhs2 = -_lower(L, p), _upper(L, p)
    else:
        L = np.linalg.matrix_power(St @ Lam.T @ Sti, j)
        rhs1, rhs2 = _lower(L, p), -_upper(L, p)

    def shifted(dh):
        if flow == 1:
            return _at(k, _bump(t1, j - 1, dh), t2, n)
        return _at(k, t1, _bump(t2, j - 1, dh), n)

    def res(h):
        up, dn = shifted(h), shifted(-h)
        d1 = (up.F.S1 - dn.F.S1) / (2 * h) @ S1i
        d2 = (up.S2_tilde() - dn.S2_tilde()) / (2 * h) @ Sti
        r1 = np.abs(d1 - rhs1)[:keep, :keep].max()
        r2 = np.abs(d2 - rhs2)[:keep, :keep].max()
        return float(max(r1, r2))

    out = _richardson(res, h)
    out["strict_lower_diagonal"] = float(max(np.abs(rhs1[i * p:(i + 1) * p, i * p:(i + 1) * p]).max()
                                             for i in range(n)))
    return out


def _lower(M, p):
    """Strictly lower block part."""
    n = M.shape[0] // p
    mask = np.kron(np.tril(np.ones((n, n)), -1), np.ones((p, p)))
    return M * mask


def _upper(M, p):
    return M - _lower(M, p)


# --------------------------------------------------------- Baker functions

def baker_residual(k, t1=(), t2=(), n=4, z=0.5, size=60):
    """Psi_1 = S1 V0^{t1} chi(z) against exp(t1(z)) P1^t(z), with V0 = exp(sum t_j Lambda^j)."""
    st = evolve(k, t1, t2, n)
    p = st.p
    Lam = np.eye(size, k=1)
    V0 = expm(sum((tj * np.linalg.matrix_power(Lam, j + 1) for j, tj in enumerate(st.t1)), 0 * Lam))
    chi = z ** np.arange(size)
    v = V0 @ chi
    out = 0.0
    ref = st.baker1(z)
    for i in range(n):
        psi = sum(st.F.S1[i * p:(i + 1) * p, l * p:(l + 1) * p] * v[l] for l in range(i + 1))
        out = max(out, np.linalg.norm(psi - ref[i]) / max(np.linalg.norm(ref[i]), 1e-300))
    return float(out)


# ------------------------------------------------------------- KP flows

def _kp_state(k, eta, rho, theta, t1, n):
    t = list(t1) + [0j] * max(0, 3 - len(t1))
    t = [t[0] + eta, t[1] + rho, t[2] + theta] + t[3:]
    return _at(k, t, (), n)


def _require_kp(t2):
    if any(abs(complex(v)) > 0 for v in (t2 or [])):
        raise NonzeroT2("KP reduction needs t2 = 0")


def kp_linear_residual(k, row, t1=(), t2=(), z=0.5, h=1e-3, order=2):
    """Residual of the second (order=2) or third (order=3) order linear equation for (Psi_1)_row."""
    _require_kp(t2)
    t1 = _times(t1)
    n = row + 2

    def psi(e, r, th):
        st = _kp_state(k, e, r, th, t1, n)
        return st.baker1(z)[row], st.U(row)

    def res2(h):
        P0, _ = psi(0, 0, 0)
        Pe1, Ue1 = psi(h, 0, 0)
        Pe_1, Ue_1 = psi(-h, 0, 0)
        Pr1, _ = psi(0, h, 0)
        Pr_1, _ = psi(0, -h, 0)
        dr = (Pr1 - Pr_1) / (2 * h)
        dee = (Pe1 - 2 * P0 + Pe_1) / h ** 2
        Ue = (Ue1 - Ue_1) / (2 * h)
        return float(np.linalg.norm(dr - dee + 2 * Ue @ P0))

    def res3(h):
        P = {s: psi(s * h, 0, 0) for s in (-2, -1, 0, 1, 2)}
        Pt1, _ = psi(0, 0, h)
        Pt_1, _ = psi(0, 0, -h)
        _, Ur1 = psi(0, h, 0)
        _, Ur_1 = psi(0, -h, 0)
        P0 = P[0][0]
        dth = (Pt1 - Pt_1) / (2 * h)
        de = (P[1][0] - P[-1][0]) / (2 * h)
        deee = (P[2][0] - 2 * P[1][0] + 2 * P[-1][0] - P[-2][0]) / (2 * h ** 3)
        Ue = (P[1][1] - P[-1][1]) / (2 * h)
        Uee = (P[1][1] - 2 * P[0][1] + P[-1][1]) / h ** 2
        Ur = (Ur1 - Ur_1) / (2 * h)
        rhs = deee - 3 * Ue @ de - 1.5 * (Uee + Ur) @ P0
        return float(np.linalg.norm(dth - rhs))

    return _richardson(res2 if order == 2 else res3, h)


def _kp_terms(k, row, t1, h):
    """Central differences of U_row needed by the KP equation."""
    n = row + 2
    U = {}

    def u(a, b, c):
        key = (a, b, c)
        if key not in U:
            U[key] = _kp_state(k, a * h, b * h, c * h, t1, n).U(row)
        return U[key]

    d = {}
    d["e"] = (u(1, 0, 0) - u(-1, 0, 0)) / (2 * h)
    d["r"] = (u(0, 1, 0) - u(0, -1, 0)) / (2 * h)
    d["rr"] = (u(0, 1, 0) - 2 * u(0, 0, 0) + u(0, -1, 0)) / h ** 2
    # d/deta of U_theta, of (U_eta)^2 and U_eeee
    d["et"] = (u(1, 0, 1) - u(1, 0, -1) - u(-1, 0, 1) + u(-1, 0, -1)) / (4 * h ** 2)
    ue = lambda s: (u(s + 1, 0, 0) - u(s - 1, 0, 0)) / (2 * h)
    d["e_ue2"] = (ue(1) @ ue(1) - ue(-1) @ ue(-1)) / (2 * h)
    d["eeee"] = (u(2, 0, 0) - 4 * u(1, 0, 0) + 6 * u(0, 0, 0) - 4 * u(-1, 0, 0) + u(-2, 0, 0)) / h ** 4
    return d


KP_COEFFS = (4.0, 6.0, -1.0, -3.0, -6.0)


def kp_residual(k, row, t1=(), t2=(), h=1e-2, coeffs=KP_COEFFS):
    """Noncommutative KP equation for U_row by central differences:
    d/deta (4 U_theta + 6 U_eta^2 - U_eee) - 3 U_rr - 6 [U_eta, U_rho] = 0.
    The residual is relative to the largest term; steps h and h/2 give the convergence ratio."""
    _require_kp(t2)
    t1 = _times(t1)

    def terms(h):
        d = _kp_terms(k, row, t1, h)
        comm = d["e"] @ d["r"] - d["r"] @ d["e"]
        return [c * t for c, t in zip(coeffs, (d["et"], d["e_ue2"], d["eeee"], d["rr"], comm))], comm

    def rel(h):
        ts, _ = terms(h)
        return float(np.linalg.norm(sum(ts)) / max(max(np.linalg.norm(t) for t in ts), 1e-300))

    out = _richardson(rel, h)
    ts, comm = terms(h)
    out["scale"] = float(max(np.linalg.norm(t) for t in ts))
    out["commutator"] = float(np.linalg.norm(comm))
    return out


# ----------------------------------------------------- tau ratios and Sato

def tau1(Ht, Hs, n):
    """tau^(1)_n(t, s) = H^t_n (H^s_n)^{-1} ... H^t_0 (H^s_0)^{-1}; identity for n < 0."""
    out = np.eye(Ht.shape[1], dtype=complex)
    for m in range(n + 1):
        out = Ht[m] @ np.linalg.inv(Hs[m]) @ out
    return out


def tau2(Ht, Hs, n):
    """tau^(2)_n(t, s) = (H^t_n)^{-1} H^s_n ... (H^t_0)^{-1} H^s_0; identity for n < 0."""
    out = np.eye(Ht.shape[1], dtype=complex)
    for m in range(n + 1):
        out = np.linalg.solve(Ht[m], Hs[m]) @ out
    return out


def _check_radius(k, z, var):
    r = k.r_x if var == 1 else k.r_y
    if abs(z) <= r:
        raise RadiusTooSmall(f"|z| = {abs(z)} must exceed support radius {r}")


def sato_check(k, z, n, t1=(), t2=()):
    """Residuals of the four Sato formulas for orders m < n, with exact Miwa shifts.

    P1_m(z) = z^m tau1_{m-1}(t - [z]_1, t)
    C2_m(z)^T H_m^{-1} = z^{-m-1} tau1_m(t, t + [z]_1)^{-1}
    H_m^{-1} C1_m(z) = z^{-m-1} tau2_m(t, t - [z]_2)
    P2_m(z)^T = z^m tau2_{m-1}(t + [z]_2, t)^{-1}
    """
    st = evolve(k, t1, t2, n)
    kt = st.kernel
    _check_radius(kt, z, 1)
    _check_radius(kt, z, 2)
    F = st.F
    H = {}
    for v in (1, 2):
        for s in (-1, 1):
            H[(v, s)] = factorize(miwa_shift(kt, v, z, s), n).H
    inv = np.linalg.inv
    out = {"P1": 0.0, "C2": 0.0, "C1": 0.0, "P2": 0.0}
    for m in range(n):
        C1 = cauchy_transform(kt, F.P1(m), 1)(z)
        C2T = cauchy_transform(kt, F.P2(m), 2)(z)  # side 2 already yields C2^T
        pairs = {
            "P1": (F.P1(m)(z), z ** m * tau1(H[(1, -1)], F.H, m - 1)),
            "C2": (C2T @ inv(F.H[m]), z ** (-m - 1) * inv(tau1(F.H, H[(1, 1)], m))),
            "C1": (inv(F.H[m]) @ C1, z ** (-m - 1) * tau2(F.H, H[(2, -1)], m)),
            "P2": (F.P2(m)(z).T, z ** m * inv(tau2(H[(2, 1)], F.H, m - 1))),
        }
        for key, (lhs, rhs) in pairs.items():
            out[key] = max(out[key], float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300)))
    out["tau_identity"] = float(max(np.abs(tau1(F.H, F.H, n - 1) - np.eye(st.p)).max(),
                                    np.abs(tau2(F.H, F.H, n - 1) - np.eye(st.p)).max()))
    return out


# ------------------------------------------------------ bilinear identity

def _circle(r, M):
    th = 2 * np.pi * np.arange(M) / M
    z = r * np.exp(1j * th)
    return z, 1j * z * (2 * np.pi / M)


def _contour(f, r, M):
    z, dz = _circle(r, M)
    return sum(f(zz) * w for zz, w in zip(z, dz))


def _converged(f, r, M0=256, Mmax=4096):
    """Trapezoid rule with doubling until the relative change is below 1e-10."""
    M, prev = M0, _contour(f, r, M0)
    change = None
    while M < Mmax:
        M *= 2
        cur = _contour(f, r, M)
        change = np.linalg.norm(cur - prev) / max(np.linalg.norm(cur), 1e-300)
        prev = cur
        if change < tol.get("quad"):
            break
    return prev, M, change


def bilinear_residual(k, t, tp, W_C, W_G, kk, l, r1, r2, masses=(), M=None, tau_form=False):
    """Geronimus-Uvarov bilinear identity between times t = (t1, t2) and tp = (t1', t2').

    LHS = oint_{|z|=r1} exp(t1'(z) - t1(z)) Ph1_k^{t'}(z) W_C(z) C2_l^t(z)^T dz
    RHS = oint_{|z|=r2} Ch1_k^{t'}(z) W_G(z) P2_l^t(z)^T exp(t2'(z) - t2(z)) dz
    with uh^{t'} W_G = W_C u^{t'} (+ masses). M fixes the point count, otherwise M doubles from 256.
    """
    if tau_form and masses:
        raise ValueError("the tau form needs Miwa shifts of the transformed kernel, so no masses")
    t1, t2 = _times(t[0]), _times(t[1])
    t1p, t2p = _times(tp[0]), _times(tp[1])
    size = max(kk, l) + 1
    st = evolve(k, t1, t2, size)
    stp = evolve(k, t1p, t2p, 1)
    if r1 <= st.kernel.r_x or r2 <= st.kernel.r_y:
        raise RadiusTooSmall("contour radii must exceed the support radii")
    kh = geronimus_uvarov_kernel(stp.kernel, W_C, W_G, masses)
    Fh = factorize(kh, size)
    Ph = Fh.P1(kk)
    Ch = cauchy_transform(kh, Ph, 1)
    C2T = cauchy_transform(st.kernel, st.F.P2(l), 2)
    P2 = st.F.P2(l)

    def lhs_f(z):
        return np.exp(time_poly(t1p, z) - time_poly(t1, z)) * (Ph(z) @ W_C(z) @ C2T(z))

    def rhs_f(z):
        return Ch(z) @ W_G(z) @ P2(z).T * np.exp(time_poly(t2p, z) - time_poly(t2, z))

    if M is None:
        L, ML, cl = _converged(lhs_f, r1)
        R, MR, cr = _converged(rhs_f, r2)
    else:
        L, R = _contour(lhs_f, r1, M), _contour(rhs_f, r2, M)
        L2, R2 = _contour(lhs_f, r1, 2 * M), _contour(rhs_f, r2, 2 * M)
        ML = MR = M
        cl = np.linalg.norm(L2 - L) / max(np.linalg.norm(L2), 1e-300)
        cr = np.linalg.norm(R2 - R) / max(np.linalg.norm(R2), 1e-300)
    scale = max(np.linalg.norm(L), np.linalg.norm(R), 1e-300)
    out = {"residual": float(np.linalg.norm(L - R) / scale), "lhs": L, "rhs": R,
           "M": [int(ML), int(MR)], "doubling_change": [float(cl) if cl is not None else 0.0,
                                                       float(cr) if cr is not None else 0.0]}
    if tau_form:
        out["tau_residual"] = _bilinear_tau(st, stp, kh, Fh, W_C, W_G, kk, l, r1, r2, M or 256)
    return out


def _bilinear_tau(st, stp, kh, Fh, W_C, W_G, kk, l, r1, r2, M):
    """The same identity with every family replaced by tau ratios over Miwa-shifted kernels."""
    kt = st.kernel
    t1, t2, t1p, t2p = st.t1, st.t2, stp.t1, stp.t2
    size = max(kk, l) + 1
    Hh, H = Fh.H, st.H
    inv = np.linalg.inv

    def lhs_f(z):
        Hh_m = factorize(miwa_shift(kh, 1, z, -1), size).H
        H_p = factorize(miwa_shift(kt, 1, z, 1), size).H
        return (np.exp(time_poly(t1p, z) - time_poly(t1, z)) * z ** (kk - l - 1)
                * tau1(Hh_m, Hh, kk - 1) @ W_C(z) @ inv(tau1(H, H_p, l)))

    def rhs_f(z):
        Hh_m = factorize(miwa_shift(kh, 2, z, -1), size).H
        H_p = factorize(miwa_shift(kt, 2, z, 1), size).H
        return (z ** (l - kk - 1) * tau2(Hh, Hh_m, kk) @ W_G(z) @ inv(tau2(H_p, H, l - 1))
                * np.exp(time_poly(t2p, z) - time_poly(t2, z)))

    L = _contour(lhs_f, r1, M) @ H[l]
    R = Hh[kk] @ _contour(rhs_f, r2, M)
    return float(np.linalg.norm(L - R) / max(np.linalg.norm(L), np.linalg.norm(R), 1e-300))
