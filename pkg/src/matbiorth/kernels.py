"""Matrices of generalized kernels: Hankel moments or discrete bivariate measures plus masses.

The pairing is <P, Q> = sum_kl P_k G_kl Q_l^T (transpose, not conjugate).
Functionals on the x side are finite lists of (node t, derivative order d, coefficient c)
acting as P -> sum P^(d)(t)/d! c.
"""

from dataclasses import dataclass, replace
import math
from math import comb

import numpy as np

from . import tol
from .errors import (HankelUnsupported, InsufficientMoments, NoCauchyProvider,
                     RadiusTooSmall, SpectrumHitsSupport)
from .matpoly import MatPoly, normalized, spectral_data


@dataclass(frozen=True)
class MassTerm:
    """Geronimus mass: <P, xi> (1/m!) (l(y) Q(y)^T)^(m) at y = point.

    left holds the left root polynomial coefficients in powers of (y - point);
    wc, when present, multiplies P on the right before the functional acts.
    """
    point: complex
    order: int
    left: np.ndarray
    items: tuple
    key: tuple = (0, 0)
    wc: MatPoly = None


@dataclass(frozen=True)
class UvarovTerm:
    """Uvarov mass: <P, beta> (1/m!) (Q(y)^T)^(m) at y = point, beta with p x p coefficients."""
    point: complex
    order: int
    items: tuple
    wc: MatPoly = None


@dataclass(frozen=True)
class KernelRep:
    variant: str
    p: int
    moments: np.ndarray = None
    provider: object = None
    radius: float = None
    xs: np.ndarray = None
    ys: np.ndarray = None
    weights: np.ndarray = None
    left_mult: MatPoly = None
    masses: tuple = ()
    uvarov: tuple = ()

    @property
    def r_x(self):
        if self.variant == "discrete":
            return float(np.max(np.abs(self.xs)))
        return self.radius

    @property
    def r_y(self):
        if self.variant == "discrete":
            return float(np.max(np.abs(self.ys)))
        return self.radius

    def mass_points(self):
        pts = [m.point for m in self.masses] + [u.point for u in self.uvarov]
        return sorted(set(complex(z) for z in pts), key=lambda z: (z.real, z.imag))


def hankel(moments, provider=None, radius=None):
    m = np.array(moments, dtype=complex)
    if m.ndim == 1:
        m = m[:, None, None]
    return KernelRep("hankel", m.shape[1], moments=m, provider=provider, radius=radius)


def _unit_interval_stieltjes(z, d):
    """d-th derivative of log(z / (z - 1)) = int_0^1 dy / (z - y)."""
    if d == 0:
        return np.array([[np.log(z / (z - 1))]], dtype=complex)
    c = (-1) ** (d - 1) * math.factorial(d - 1)
    return np.array([[c * (z ** -d - (z - 1) ** -d)]], dtype=complex)


def hilbert(nmom=64):
    """Lebesgue measure on [0, 1]: moments 1/(j+1), Gram matrix the Hilbert matrix."""
    return hankel(1.0 / np.arange(1, nmom + 1), provider=_unit_interval_stieltjes, radius=1.0)


def discrete(xs, ys, weights):
    """Bivariate discrete kernel sum_ij W_ij delta(x - x_i) delta(y - y_j).

    weights has shape (nx, ny, p, p) or (nx, ny) for p = 1.
    """
    xs = np.asarray(xs, dtype=complex).ravel()
    ys = np.asarray(ys, dtype=complex).ravel()
    w = np.array(weights, dtype=complex)
    if w.ndim == 2:
        w = w[:, :, None, None]
    if w.shape[:2] != (xs.size, ys.size) or xs.size == 0 or ys.size == 0:
        raise ValueError("weights must have shape (len(xs), len(ys), p, p)")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    return KernelRep("discrete", w.shape[2], xs=xs, ys=ys, weights=w)


def diagonal(nodes, weights):
    """Hankel-type discrete kernel: x and y nodes coincide and only diagonal weights are nonzero."""
    nodes = np.asarray(nodes, dtype=complex).ravel()
    w = np.array(weights, dtype=complex)
    if w.ndim == 1:
        w = w[:, None, None]
    full = np.zeros((nodes.size, nodes.size) + w.shape[1:], dtype=complex)
    full[np.arange(nodes.size), np.arange(nodes.size)] = w
    return discrete(nodes, nodes, full)


# ---------------------------------------------------------------- functionals

def _mono_taylor(kmax, t, d):
    """d-th Taylor coefficient at t of x^k, k = 0..kmax-1."""
    return np.array([comb(k, d) * t ** (k - d) if k >= d else 0.0 for k in range(kmax)], dtype=complex)


def monomial_functional(kmax, items, p, wc=None):
    """<x^k I W_C(x), functional> for k < kmax; shape (kmax, p, c)."""
    out = None
    for t, d, c in items:
        c = np.asarray(c, dtype=complex)
        c2 = c[:, None] if c.ndim == 1 else c
        if wc is None:
            contrib = _mono_taylor(kmax, t, d)[:, None, None] * c2[None]
        else:
            T = wc.taylor(t, d + 1)
            contrib = sum(_mono_taylor(kmax, t, d - s)[:, None, None] * (T[s] @ c2)[None]
                          for s in range(d + 1))
        out = contrib if out is None else out + contrib
    if out is None:
        return np.zeros((kmax, p, 1), dtype=complex)
    return out


def functional(P, items, wc=None):
    """<P, functional> = sum P^(d)(t)/d! c, with P replaced by P W_C when wc is given."""
    if wc is not None:
        P = P @ wc
    out = None
    for t, d, c in items:
        c = np.asarray(c, dtype=complex)
        c2 = c[:, None] if c.ndim == 1 else c
        v = P.taylor(t, d + 1)[d] @ c2
        out = v if out is None else out + v
    return out


def _mass_y_rows(mass, mmax):
    """Coefficient of (y - a)^m in l(y) y^l for l < mmax; shape (mmax, 1, p)."""
    a, m, left = mass.point, mass.order, np.atleast_2d(mass.left)
    rows = np.zeros((mmax, 1, left.shape[1]), dtype=complex)
    for t in range(min(m, left.shape[0] - 1) + 1):
        rows[:, 0, :] += _mono_taylor(mmax, a, m - t)[:, None] * left[t][None, :]
    return rows


# --------------------------------------------------------------------- Gram

def _base_gram(k, n, m):
    p = k.p
    if k.variant == "discrete":
        Vx = k.xs[None, :] ** np.arange(n)[:, None]
        Vy = k.ys[None, :] ** np.arange(m)[:, None]
        G = np.einsum("ki,ijab,lj->kalb", Vx, k.weights, Vy, optimize=True)
        if k.left_mult is not None:
            raise HankelUnsupported("left multipliers are folded into discrete weights")
        return G
    wc = k.left_mult
    extra = 0 if wc is None else wc.degree
    need = n + m - 1 + extra
    if k.moments.shape[0] < need:
        raise InsufficientMoments(f"need {need} moments, have {k.moments.shape[0]}")
    G = np.zeros((n, p, m, p), dtype=complex)
    for i in range(n):
        for j in range(m):
            if wc is None:
                G[i, :, j, :] = k.moments[i + j]
            else:
                G[i, :, j, :] = sum(A @ k.moments[i + s + j] for s, A in enumerate(wc.coeffs))
    return G


def gram(k, n, m=None):
    """Truncated Gram matrix <x^i I, y^j I>, i < n, j < m, as an (n p) x (m p) array."""
    m = n if m is None else m
    p = k.p
    G = _base_gram(k, n, m)
    for ms in k.masses:
        F = monomial_functional(n, ms.items, p, ms.wc)
        Lr = _mass_y_rows(ms, m)
        G += np.einsum("kac,lcb->kalb", F, Lr)
    for u in k.uvarov:
        F = monomial_functional(n, u.items, p, u.wc)
        y = _mono_taylor(m, u.point, u.order)
        G += np.einsum("kab,l->kalb", F, y)
    return G.reshape(n * p, m * p)


def _coef_stack(P, n):
    c = np.zeros((n,) + P.shape, dtype=complex)
    c[: P.coeffs.shape[0]] = P.coeffs
    return c


def pair(k, P, Q):
    """<P, Q> for matrix polynomials P (r x p) and Q (s x p)."""
    if P.shape[1] != k.p or Q.shape[1] != k.p:
        raise ValueError("polynomial width does not match kernel size")
    n, m = P.degree + 1, Q.degree + 1
    G = gram(k, n, m).reshape(n, k.p, m, k.p)
    return np.einsum("kia,kalb,ljb->ij", _coef_stack(P, n), G, _coef_stack(Q, m))


def pair_rows(k, polys, m):
    """Block matrix [<P_i, y^l I>]_{i, l<m} for a list of p x p polynomials."""
    n = max(P.degree for P in polys) + 1
    G = gram(k, n, m).reshape(n, k.p, m * k.p)
    return np.vstack([np.einsum("kia,kac->ic", _coef_stack(P, n), G) for P in polys])


# ------------------------------------------------------------ rational functions

class RationalMatrixFn:
    """poly(z) + sum c/(z - z0)^k + sum L(z) F(z) R(z), with F a Stieltjes provider.

    The provider is a callable F(z, d) returning the d-th derivative of <I, I/(z - y)>.
    """

    def __init__(self, poly, poles=None, stieltjes=()):
        self.poly = poly
        self.poles = dict(poles or {})
        self.stieltjes = tuple(stieltjes)

    @property
    def shape(self):
        return self.poly.shape

    def __call__(self, z):
        out = self.poly(z).astype(complex)
        for (z0, kk), c in self.poles.items():
            out = out + c / (z - z0) ** kk
        for L, R, F in self.stieltjes:
            out = out + L(z) @ F(z, 0) @ R(z)
        return out

    def taylor(self, a, m):
        out = self.poly.taylor(a, m)
        for (z0, kk), c in self.poles.items():
            for r in range(m):
                out[r] += (-1) ** r * comb(kk + r - 1, r) * (a - z0) ** (-kk - r) * c
        for L, R, F in self.stieltjes:
            TL, TR = L.taylor(a, m), R.taylor(a, m)
            fact = 1.0
            TF = []
            for d in range(m):
                TF.append(np.asarray(F(a, d)) / fact)
                fact *= d + 1
            for r in range(m):
                for i in range(r + 1):
                    for j in range(r - i + 1):
                        out[r] += TL[i] @ TF[j] @ TR[r - i - j]
        return out

    def pole_points(self):
        return sorted(set(z0 for z0, _ in self.poles), key=lambda z: (z.real, z.imag))

    def _combine(self, other, s):
        poles = dict(self.poles)
        for key, c in other.poles.items():
            poles[key] = poles.get(key, 0) + s * c
        st = list(self.stieltjes) + [(s * L, R, F) for L, R, F in other.stieltjes]
        return RationalMatrixFn(self.poly + s * other.poly, poles, st)

    def __add__(self, other):
        if isinstance(other, MatPoly):
            return RationalMatrixFn(self.poly + other, self.poles, self.stieltjes)
        return self._combine(other, 1)

    def __sub__(self, other):
        if isinstance(other, MatPoly):
            return RationalMatrixFn(self.poly - other, self.poles, self.stieltjes)
        return self._combine(other, -1)

    def __mul__(self, s):
        return RationalMatrixFn(self.poly * s, {k: c * s for k, c in self.poles.items()},
                                [(L * s, R, F) for L, R, F in self.stieltjes])

    __rmul__ = __mul__

    def __rmatmul__(self, M):
        M = np.asarray(M, dtype=complex)
        return RationalMatrixFn(M @ self.poly, {k: M @ c for k, c in self.poles.items()},
                                [(M @ L, R, F) for L, R, F in self.stieltjes])

    def __matmul__(self, M):
        if isinstance(M, MatPoly):
            return self.times_poly(M)
        M = np.asarray(M, dtype=complex)
        return RationalMatrixFn(self.poly @ M, {k: c @ M for k, c in self.poles.items()},
                                [(L, R @ M, F) for L, R, F in self.stieltjes])

    def times_poly(self, W):
        """f(z) W(z) as a rational function (pole parts are re-expanded exactly)."""
        poly = self.poly @ W
        poles = {}
        for (z0, kk), c in self.poles.items():
            Ws = W.shift(z0)
            # c (z-z0)^{-kk} sum_s Ws[s] (z-z0)^s
            for s in range(Ws.shape[0]):
                e = s - kk
                term = c @ Ws[s]
                if e < 0:
                    poles[(z0, -e)] = poles.get((z0, -e), 0) + term
                else:
                    poly = poly + _shifted_monomial(term, z0, e)
        st = [(L, R @ W, F) for L, R, F in self.stieltjes]
        return RationalMatrixFn(poly, poles, st)

    @property
    def T(self):
        return RationalMatrixFn(self.poly.T, {k: c.T for k, c in self.poles.items()},
                                [(R.T, L.T, _transposed(F)) for L, R, F in self.stieltjes])

    def laurent_at_infinity(self, m):
        """Coefficients of z^-1 .. z^-m for the pole part."""
        out = np.zeros((m,) + self.shape, dtype=complex)
        for (z0, kk), c in self.poles.items():
            # (z - z0)^-kk = sum_j comb(j-1, kk-1) z0^(j-kk) z^-j
            for j in range(kk, m + 1):
                out[j - 1] += comb(j - 1, kk - 1) * z0 ** (j - kk) * c
        return out


def _shifted_monomial(c, z0, e):
    """c (z - z0)^e as a MatPoly."""
    coeffs = np.array([comb(e, i) * (-z0) ** (e - i) for i in range(e + 1)], dtype=complex)
    return MatPoly(coeffs[:, None, None] * c[None])


def _transposed(F):
    return lambda z, d: np.asarray(F(z, d)).T


def _merge_pole(poles, z0, kk, c):
    key = (complex(z0), int(kk))
    poles[key] = poles.get(key, 0) + c


def cauchy_transform(k, P, side=1):
    """side 1: <P(x), I/(z - y)>; side 2: <I/(z - x), P(y)> (the transposed second-kind convention)."""
    p = k.p
    zero = MatPoly(np.zeros((1, P.shape[0] if side == 1 else p, p if side == 1 else P.shape[0])))
    poles, st = {}, []
    poly = zero
    if k.variant == "discrete":
        if side == 1:
            Px = np.array([P(x) for x in k.xs])
            for j, y in enumerate(k.ys):
                c = np.einsum("iab,ibc->ac", Px, k.weights[:, j])
                _merge_pole(poles, y, 1, c)
        else:
            Qy = np.array([P(y).T for y in k.ys])
            for i, x in enumerate(k.xs):
                c = np.einsum("jab,jbc->ac", k.weights[i], Qy)
                _merge_pole(poles, x, 1, c)
    else:
        if k.provider is None:
            raise NoCauchyProvider("Hankel moments need a Stieltjes provider for Cauchy transforms")
        wc = k.left_mult if k.left_mult is not None else MatPoly.identity(p)
        mom = k.moments
        if side == 1:
            B = P @ wc
            st.append((B, MatPoly.identity(p), k.provider))
            for kk in range(1, B.degree + 1):
                c = np.zeros((kk, B.shape[0], p), dtype=complex)
                for j in range(kk):
                    c[kk - 1 - j] += B.coeffs[kk] @ _moment(mom, j)
                poly = poly - MatPoly(c)
        else:
            st.append((wc, P.T, k.provider))
            for s, A in enumerate(wc.coeffs):
                for l, Ql in enumerate(P.T.coeffs):
                    kk = s + l
                    if kk == 0:
                        continue
                    c = np.zeros((kk, p, P.shape[0]), dtype=complex)
                    for j in range(kk):
                        c[kk - 1 - j] += A @ _moment(mom, j) @ Ql
                    poly = poly - MatPoly(c)
    for ms in k.masses:
        left = np.atleast_2d(ms.left)
        if side == 1:
            v = functional(P, ms.items, ms.wc)
            for t in range(min(ms.order, left.shape[0] - 1) + 1):
                _merge_pole(poles, ms.point, ms.order - t + 1, v @ left[t][None, :])
        else:
            row = sum(left[t][None, :] @ P.T.taylor(ms.point, ms.order + 1)[ms.order - t]
                      for t in range(min(ms.order, left.shape[0] - 1) + 1))
            for t, d, c in ms.items:
                c = np.asarray(c, dtype=complex).reshape(-1, 1)
                if ms.wc is None:
                    _merge_pole(poles, t, d + 1, c @ row)
                else:
                    T = ms.wc.taylor(t, d + 1)
                    for s in range(d + 1):
                        _merge_pole(poles, t, d - s + 1, T[s] @ c @ row)
    for u in k.uvarov:
        if side == 1:
            v = functional(P, u.items, u.wc)
            _merge_pole(poles, u.point, u.order + 1, v)
        else:
            Qm = P.T.taylor(u.point, u.order + 1)[u.order]
            for t, d, c in u.items:
                c = np.asarray(c, dtype=complex)
                if u.wc is None:
                    _merge_pole(poles, t, d + 1, c @ Qm)
                else:
                    T = u.wc.taylor(t, d + 1)
                    for s in range(d + 1):
                        _merge_pole(poles, t, d - s + 1, T[s] @ c @ Qm)
    return RationalMatrixFn(poly, poles, st)


def _moment(mom, j):
    if j >= mom.shape[0]:
        raise InsufficientMoments(f"moment {j} not available")
    return mom[j]


# ------------------------------------------------------------ perturbations

def _check_plain(k, what):
    if k.masses or k.uvarov:
        raise ValueError(f"{what} must be applied before masses are attached")


def _check_support(W, ys):
    tau = tol.get("sing")
    for y in ys:
        if tol.rcond(W(y)) < tau:
            raise SpectrumHitsSupport(f"det W vanishes at support node {y}")


def christoffel_kernel(k, W_C):
    """u -> W_C(x) u."""
    if k.variant == "discrete":
        Wx = np.array([W_C(x) for x in k.xs])
        w = np.einsum("iab,ijbc->ijac", Wx, k.weights)
        k2 = replace(k, weights=w)
    else:
        lm = W_C if k.left_mult is None else W_C @ k.left_mult
        k2 = replace(k, left_mult=lm)
    masses = tuple(replace(m, wc=W_C if m.wc is None else W_C @ m.wc) for m in k.masses)
    uv = tuple(replace(u, wc=W_C if u.wc is None else W_C @ u.wc) for u in k.uvarov)
    return replace(k2, masses=masses, uvarov=uv)


def christoffel_right_kernel(k, W):
    """u -> u W(y), on plain kernels."""
    _check_plain(k, "right christoffel")
    if k.variant == "discrete":
        Wy = np.array([W(y) for y in k.ys])
        return replace(k, weights=np.einsum("ijab,jbc->ijac", k.weights, Wy))
    if k.left_mult is not None:
        raise HankelUnsupported("right multiplication after a left multiplier is not supported")
    M, N = k.moments.shape[0], W.degree
    mom = np.array([sum(k.moments[s + j] @ W.coeffs[j] for j in range(N + 1)) for s in range(M - N)])
    return replace(k, moments=mom, provider=None)


def _hankel_geronimus_moments(k, W_G, sd=None):
    Wn = normalized(W_G)
    sd = spectral_data(Wn) if sd is None else sd
    X, J, Y = sd.X, sd.J, sd.Y @ np.linalg.inv(W_G.lead)
    F = k.provider
    # frak F = <I, X (J - x)^{-1}> realized blockwise through Taylor data of F
    frakF = np.zeros_like(X, dtype=complex)
    for a, j, lam, kap, off in sd.blocks():
        Nil = np.eye(kap, k=1)
        Xb = X[:, off: off + kap]
        fact, Nr = 1.0, np.eye(kap)
        for r in range(kap):
            frakF[:, off: off + kap] += np.asarray(F(lam, r)) / fact @ Xb @ Nr
            fact *= r + 1
            Nr = Nr @ Nil
    M = k.moments.shape[0]
    out = np.zeros_like(k.moments)
    JjY = [Y]
    for _ in range(M):
        JjY.append(J @ JjY[-1])
    XJ = [X]
    for _ in range(M):
        XJ.append(XJ[-1] @ J)
    for j in range(M):
        acc = -frakF @ JjY[j]
        for i in range(j):
            acc = acc + k.moments[j - 1 - i] @ XJ[i] @ Y
        out[j] = acc
    return out


def geronimus_kernel(k, W_G, masses=(), sd=None):
    """u -> u W_G(y)^{-1} plus masses annihilated by W_G."""
    _check_plain(k, "geronimus")
    if k.variant == "discrete":
        _check_support(W_G, k.ys)
        Winv = np.array([np.linalg.inv(W_G(y)) for y in k.ys])
        w = np.einsum("ijab,jbc->ijac", k.weights, Winv)
        k2 = replace(k, weights=w)
    else:
        if k.provider is None or k.left_mult is not None:
            raise HankelUnsupported("Geronimus on Hankel moments requires a Stieltjes provider")
        k2 = replace(k, moments=_hankel_geronimus_moments(k, W_G, sd), provider=None)
    return replace(k2, masses=tuple(masses))


def geronimus_uvarov_kernel(k, W_C, W_G, masses=(), sd=None):
    """u -> W_C(x) u W_G(y)^{-1} plus masses whose functionals act on P W_C."""
    _check_plain(k, "geronimus-uvarov")
    k2 = christoffel_kernel(geronimus_kernel(k, W_G, (), sd), W_C)
    ms = tuple(replace(m, wc=W_C) for m in masses)
    return replace(k2, masses=ms)


def uvarov_kernel(k, terms):
    return replace(k, uvarov=tuple(k.uvarov) + tuple(terms))


def _time_poly(t, z):
    return sum(tj * z ** (j + 1) for j, tj in enumerate(t))


def toda_weights(k, t1, t2):
    """Weights times exp(t1(x_i) - t2(y_j)) with t(x) = sum_j t_j x^j."""
    if k.variant != "discrete":
        raise HankelUnsupported("Toda deformation needs a discrete kernel")
    _check_plain(k, "toda")
    f = np.exp(np.array([_time_poly(t1, x) for x in k.xs])[:, None]
               - np.array([_time_poly(t2, y) for y in k.ys])[None, :])
    return replace(k, weights=k.weights * f[:, :, None, None])


def miwa_shift(k, var, z, sign):
    """Exact Miwa shift t -> t + sign [z] in time family var (1 or 2)."""
    if k.variant != "discrete":
        raise HankelUnsupported("Miwa shifts need a discrete kernel")
    _check_plain(k, "miwa")
    r = k.r_x if var == 1 else k.r_y
    if abs(z) <= r:
        raise RadiusTooSmall(f"|z| = {abs(z)} must exceed support radius {r}")
    if var == 1:
        f = 1 - k.xs / z
        f = f if sign < 0 else 1 / f
        w = k.weights * f[:, None, None, None]
    else:
        f = 1 - k.ys / z
        f = 1 / f if sign < 0 else f
        w = k.weights * f[None, :, None, None]
    return replace(k, weights=w)


def check_mass_independence(masses, p, D):
    """Full rank of the functionals' action on monomials of degree < D."""
    if not masses:
        return True
    cols = [monomial_functional(D, m.items, p, m.wc).reshape(D * p, -1) for m in masses]
    A = np.hstack(cols)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise ValueError("mass functionals are linearly dependent")
    return True


def kernel_to_json(k):
    def cz(a):
        a = np.asarray(a, dtype=complex)
        return np.stack([a.real, a.imag], axis=-1).tolist()
    if k.variant == "hankel":
        return {"variant": "hankel", "p": k.p, "moments": cz(k.moments)}
    return {"variant": "discrete", "p": k.p, "nodes_x": cz(k.xs), "nodes_y": cz(k.ys), "weights": cz(k.weights)}


def _cplx(a):
    a = np.asarray(a, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def kernel_from_json(obj):
    v = obj["variant"]
    if v == "hankel":
        return hankel(_cplx(obj["moments"]))
    if v == "discrete":
        return discrete(_cplx(obj["nodes_x"]), _cplx(obj["nodes_y"]), _cplx(obj["weights"]))
    raise ValueError(f"unknown kernel variant {v!r}")
