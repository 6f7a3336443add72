"""Frobenius structure: metric maps, products, 3-tensor, Euler field, semisimplicity.

The flat metric acts on covectors through a two-slot projection formula; its
inverse combines the annulus quotient (X - X_hat)/(z zeta') with two lower
triangular Toeplitz solves for the middle exponent band.  Products are the
two-slot projection formula on covectors, conjugated to tangent vectors by the
metric maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .config import Window
from .errors import NumericalError
from .flatchart import (Label, chi_infinity, chi_power, chi_zero, flat_tangent_frame,
                        _zeta_power_series)
from .laurent import LaurentSeries, divide_on_circle, reciprocal_onesided
from .point import (CotangentVec, PointNM, TangentVec, clip_cotangent, clip_tangent,
                    pair, tangent_diff)


# -- metric map and inverse ---------------------------------------------------------


def eta_map(p: PointNM, omega: CotangentVec) -> TangentVec:
    """Flat-metric raise T* -> T (two-slot projection formula)."""
    ap, ahp = p.a.derivative(), p.ahat.derivative()
    wsum = omega.w + omega.what
    mixed = omega.w * ap + omega.what * ahp
    x = (ap * wsum.project("<0") - mixed.project("<0")).shift(1)
    xhat = (-(ahp * wsum.project(">=0")) + mixed.project(">=0")).shift(1)
    return clip_tangent(p, x, xhat)


@dataclass(frozen=True)
class TriangularSystems:
    """The lower triangular Toeplitz blocks inverting the middle band of the metric."""

    k_upper: np.ndarray   # (N-1) x (N-1), diagonal N
    k_lower: np.ndarray   # (M+1) x (M+1), diagonal M vhat_-M

    @property
    def condition_numbers(self):
        cu = np.linalg.cond(self.k_upper) if self.k_upper.size else 1.0
        return float(cu), float(np.linalg.cond(self.k_lower))


def triangular_systems(p: PointNM) -> TriangularSystems:
    N, M = p.N, p.M
    col = np.zeros(max(N - 1, 1), dtype=np.complex128)
    if N > 1:
        col = np.array([N] + [(N - r) * p.a.coeff(N - r) for r in range(1, N - 1)],
                       dtype=np.complex128)
        ku = scipy.linalg.toeplitz(col, np.zeros(N - 1))
    else:
        ku = np.zeros((0, 0), dtype=np.complex128)
    colh = np.array([(M - r) * p.ahat.coeff(-M + r) for r in range(0, M + 1)],
                    dtype=np.complex128)
    kl = scipy.linalg.toeplitz(colh, np.zeros(M + 1))
    return TriangularSystems(ku, kl)


def eta_inverse(p: PointNM, X: TangentVec, n_samples: int = 512) -> CotangentVec:
    """Flat-metric lower T -> T*: annulus quotient plus triangular solves."""
    N, M, w = p.N, p.M, p.window
    zzp = p.zeta().derivative().shift(1)
    q = divide_on_circle(X.x - X.xhat, zzp, w.lo, w.hi, n_samples)
    w_pos = -q.project(">=0")
    what_neg = q.project("<0")

    sys = triangular_systems(p)
    if abs(p.vhat_bottom) < 1e-14:
        raise NumericalError("triangular system singular: vhat_-M = 0")
    mid = {}
    if N > 1:
        rhs = np.array([X.x.coeff(N - 1 - r) for r in range(N - 1)], dtype=np.complex128)
        sol = scipy.linalg.solve_triangular(sys.k_upper, rhs, lower=True)
        for r, val in enumerate(sol):   # omega~_{-1} .. omega~_{-N+1}
            mid[-1 - r] = val
    rhs = np.array([X.xhat.coeff(-M + r) for r in range(M + 1)], dtype=np.complex128)
    sol = scipy.linalg.solve_triangular(sys.k_lower, rhs, lower=True)
    for r, val in enumerate(sol):       # omega~_0 .. omega~_M
        mid[r] = val

    w_mid = {k: mid[k] - what_neg.coeff(k) for k in range(-N + 1, 0)}
    what_mid = {k: mid[k] - w_pos.coeff(k) for k in range(0, M + 1)}
    omega = w_pos + LaurentSeries.from_pairs(w_mid or {0: 0.0})
    what = what_neg + LaurentSeries.from_pairs(what_mid or {0: 0.0})
    return clip_cotangent(p, omega, what)


def eta_roundtrip_residual(p: PointNM, X: TangentVec) -> float:
    back = eta_map(p, eta_inverse(p, X))
    return max((back.x - X.x).norm(), (back.xhat - X.xhat).norm()) / max(X.norm(), 1e-30)


# -- bilinear forms -----------------------------------------------------------------


def metric_cotangent(p: PointNM, w1: CotangentVec, w2: CotangentVec) -> complex:
    return pair(w1, eta_map(p, w2))


def metric_generating(p: PointNM, alpha: str, beta: str, pv: complex, qv: complex) -> complex:
    """<d alpha(p), d beta(q)>* = pq/(p-q) (alpha'(p) - beta'(q)); difference quotient
    when the letters coincide and the arguments collide."""
    fa = (p.a if alpha == "a" else p.ahat).derivative()
    fb = (p.a if beta == "a" else p.ahat).derivative()
    num = fa.evaluate(np.array([pv]))[0] - fb.evaluate(np.array([qv]))[0]
    if alpha == beta and abs(pv - qv) < 1e-9:
        return pv * qv * fa.derivative().evaluate(np.array([pv]))[0]
    return pv * qv * num / (pv - qv)


def metric_tangent(p: PointNM, X1: TangentVec, X2: TangentVec, n_samples: int = 512) -> complex:
    """Circle term in the zeta-variations plus residues at infinity and zero."""
    dz1, dl1 = tangent_diff(X1)
    dz2, dl2 = tangent_diff(X2)
    zs = np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    zp = p.zeta().derivative().evaluate(zs)
    circ = -np.mean(dz1.evaluate(zs) * dz2.evaluate(zs) / (zs * zp))
    lp = p.ell().derivative()
    prod = dl1 * dl2
    depth = prod.hi - prod.lo + 4
    term_inf = (prod * reciprocal_onesided(lp, "infinity", depth)).coeff(1)
    term_zero = -(prod * reciprocal_onesided(lp, "zero", depth)).coeff(1)
    return complex(circ + term_inf + term_zero)


# -- products ------------------------------------------------------------------------


def product_cotangent(p: PointNM, w1: CotangentVec, w2: CotangentVec) -> CotangentVec:
    """Commutative associative product on covectors (two-slot projection formula)."""
    ap, ahp = p.a.derivative(), p.ahat.derivative()
    a1, a2 = w1.w * ap, w2.w * ap
    h1, h2 = w1.what * ahp, w2.what * ahp
    slot1 = (w2.w * a1.project(">=0") - w2.w * h1.project("<0")
             - w1.w * a2.project("<0") - w1.w * h2.project("<0"))
    slot2 = (w2.what * a1.project(">=0") + w2.what * h1.project(">=0")
             + w1.what * a2.project(">=0") - w1.what * h2.project("<0"))
    out_w = slot1.project((-p.N, slot1.hi)).shift(1)
    out_what = slot2.project((slot2.lo, p.M - 1)).shift(1)
    return clip_cotangent(p, out_w, out_what)


def unity_covector(p: PointNM) -> CotangentVec:
    return CotangentVec(LaurentSeries.zero(),
                        LaurentSeries.monomial(p.M, 1.0 / (p.M * p.vhat_bottom)))


def unity_vector(p: PointNM) -> TangentVec:
    return TangentVec(LaurentSeries.const(1.0), LaurentSeries.const(1.0))


def product_tangent(p: PointNM, X1: TangentVec, X2: TangentVec,
                    n_samples: int = 512) -> TangentVec:
    w1 = eta_inverse(p, X1, n_samples)
    w2 = eta_inverse(p, X2, n_samples)
    return eta_map(p, product_cotangent(p, w1, w2))


def product_generating(p: PointNM, letters, pvals) -> CotangentVec:
    """k-fold product of generating covectors in closed form:
    sum_i (prod_{j != i} alpha_j'(p_j) / (1/p_i - 1/p_j)) d alpha_i(p_i)."""
    from .point import generating_covector

    pvals = [complex(v) for v in pvals]
    primes = [(p.a if s == "a" else p.ahat).derivative().evaluate(np.array([v]))[0]
              for s, v in zip(letters, pvals)]
    out = None
    for i, (s, v) in enumerate(zip(letters, pvals)):
        coef = 1.0 + 0.0j
        for j, (s2, v2) in enumerate(zip(letters, pvals)):
            if j == i:
                continue
            coef *= primes[j] / (1.0 / v - 1.0 / v2)
        term = generating_covector(p, "a" if s == "a" else "ahat", v).scale(coef)
        out = term if out is None else out + term
    return out


# -- 3-tensor ---------------------------------------------------------------------------


def three_tensor(p: PointNM, u: Label, v: Label, w: Label, n_samples: int = 512) -> complex:
    fu = flat_tangent_frame(p, u, n_samples)
    fv = flat_tangent_frame(p, v, n_samples)
    fw = flat_tangent_frame(p, w, n_samples)
    return metric_tangent(p, product_tangent(p, fu, fv, n_samples), fw, n_samples)


def gram_flat(u: Label, v: Label, N: int, M: int) -> complex:
    """Constant Gram matrix of the flat frames (block antidiagonal form)."""
    (ku, iu), (kv, iv) = u, v
    if ku != kv:
        return 0.0
    if ku == "t":
        return -1.0 if iu + iv == -1 else 0.0
    if ku == "h":
        return 1.0 / N if iu + iv == N else 0.0
    return 1.0 / M if iu + iv == M else 0.0


def gram_flat_inverse(u: Label, v: Label, N: int, M: int) -> complex:
    (ku, iu), (kv, iv) = u, v
    if ku != kv:
        return 0.0
    if ku == "t":
        return -1.0 if iu + iv == -1 else 0.0
    if ku == "h":
        return float(N) if iu + iv == N else 0.0
    return float(M) if iu + iv == M else 0.0


def three_tensor_closed_form(p: PointNM, u: Label, v: Label, w: Label,
                             n_samples: int = 1024) -> complex:
    """The ten closed forms of the 3-tensor, by circle quadrature and residues.

    Independent of the product/metric route: everything is assembled from
    projected powers of zeta, chi, chi_hat and integrated directly.
    """
    order = {"t": 0, "h": 1, "hh": 2}
    labels = sorted([u, v, w], key=lambda l: order[l[0]])
    kinds = tuple(l[0] for l in labels)
    idx = [l[1] for l in labels]
    N, M, W = p.N, p.M, p.window
    depth = W.width
    zeta = p.zeta()
    zp = zeta.derivative()
    ell = p.ell()
    lp = ell.derivative()

    def zpow(s):
        return _zeta_power_series(p, s, n_samples)

    def zp_zpow(s):
        return (zp * zpow(s)).clip(W)

    chi = chi_infinity(ell, N, depth) if N > 1 or kinds.count("h") else None
    chih = chi_zero(ell, M, depth)

    def cpow(s):
        return chi_power(chi, s, "infinity", depth)

    def chpow(s):
        return chi_power(chih, s, "zero", depth)

    def cavg(f: LaurentSeries) -> complex:
        # (1/2 pi i) contour integral of f dz = residue coefficient
        return f.coeff(-1)

    if kinds == ("t", "h", "hh"):
        return 0.0
    if kinds == ("t", "t", "h"):
        i1, i2, j3 = idx
        g = zp_zpow(i1 + i2).project((W.lo, -2))
        hpart = (chi.derivative() * cpow(N - 1 - j3)).project(">=0")
        return -cavg((g * hpart).shift(1))
    if kinds == ("t", "h", "h"):
        i3, j1, j2 = idx[0], idx[1], idx[2]
        g = zp_zpow(i3).project("<0")
        hpart = (chi.derivative() * cpow(N - 1 - j1 - j2)).project((-1, W.hi))
        return -cavg((g * hpart).shift(1)) / N
    if kinds == ("h", "h", "hh"):
        j1, j2, k3 = idx
        hpart = (chi.derivative() * cpow(N - 1 - j1 - j2)).project((-1, W.hi))
        hhpart = (chih.derivative() * chpow(M - 1 - k3)).project("<0")
        return -cavg((hpart * hhpart).shift(1)) / N
    if kinds == ("t", "t", "hh"):
        i1, i2, k3 = idx
        g = zp_zpow(i1 + i2).project((-1, W.hi))
        hhpart = (chih.derivative() * chpow(M - 1 - k3)).project("<0")
        return cavg((g * hhpart).shift(1))
    if kinds == ("t", "hh", "hh"):
        i3, k1, k2 = idx
        g = zp_zpow(i3).project(">=0")
        hhpart = (chih.derivative() * chpow(M - 1 - k1 - k2)).project((W.lo, -2))
        return -cavg((g * hhpart).shift(1)) / M
    if kinds == ("h", "hh", "hh"):
        j3, k1, k2 = idx
        hpart = (chi.derivative() * cpow(N - 1 - j3)).project(">=0")
        hhpart = (chih.derivative() * chpow(M - 1 - k1 - k2)).project((W.lo, -2))
        return -cavg((hpart * hhpart).shift(1)) / M
    if kinds == ("h", "h", "h"):
        j1, j2, j3 = idx
        hpart = (chi.derivative() * cpow(N - 1 - j1 - j2 - j3)).project((-1, W.hi))
        term1 = -cavg((zp.project("<0") * hpart).shift(1)) / N ** 2
        rec = reciprocal_onesided(lp, "infinity", depth)
        trip = LaurentSeries.const(1.0)
        for j in (j1, j2, j3):
            trip = trip * (chi.derivative() * cpow(N - 1 - j)).project(">=0")
        term2 = -(-((trip * rec).shift(1)).coeff(-1))
        return term1 + term2
    if kinds == ("hh", "hh", "hh"):
        k1, k2, k3 = idx
        hhpart = (chih.derivative() * chpow(M - 1 - k1 - k2 - k3)).project((W.lo, -2))
        term1 = cavg((zp.project(">=0") * hhpart).shift(1)) / M ** 2
        rec = reciprocal_onesided(lp, "zero", depth)
        trip = LaurentSeries.const(1.0)
        for k in (k1, k2, k3):
            trip = trip * (chih.derivative() * chpow(M - 1 - k)).project("<0")
        term2 = ((trip * rec).shift(1)).coeff(-1)
        return term1 + term2
    if kinds == ("t", "t", "t"):
        i1, i2, i3 = idx
        pi_zp = zp.project(">=0") - zp.project("<0")
        core = (zp * zpow(i1 + i2 + i3)).clip(W) * (pi_zp.scale(0.5) - lp)
        total = cavg(core.shift(1))
        for (ia, ib, ic) in ((i1, i2, i3), (i2, i3, i1), (i3, i1, i2)):
            inner = zp_zpow(ic).pi_map()
            total -= 0.5 * cavg(((zp * zpow(ia + ib)).clip(W) * inner).shift(1))
        return total
    raise ValueError(f"unhandled label combination {kinds}")


# -- Euler field and homogeneity ----------------------------------------------------------


def euler_field(p: PointNM) -> TangentVec:
    """(a - (z/N) a', a_hat - (z/N) a_hat')."""
    x = p.a - p.a.z_derivative().scale(1.0 / p.N)
    xhat = p.ahat - p.ahat.z_derivative().scale(1.0 / p.N)
    return clip_tangent(p, x, xhat)


def euler_scaling_identity_residual(p: PointNM) -> float:
    """Exactness of (E + (z/N) d/dz) theta = theta for theta in {a, a_hat, zeta, ell}."""
    E = euler_field(p)
    res = 0.0
    for eth, th in ((E.x, p.a), (E.xhat, p.ahat),
                    (E.x - E.xhat, p.zeta()),
                    (E.x.project(">0") + E.xhat.project("<=0"), p.ell())):
        lhs = eth + th.z_derivative().scale(1.0 / p.N)
        res = max(res, (lhs - th).norm() / max(th.norm(), 1.0))
    return res


def euler_flat_components(p: PointNM, labels, n_samples: int = 512) -> dict:
    """<d(coord), E> for each label, to compare with the linear representation."""
    from .flatchart import flat_differential

    E = euler_field(p)
    return {lbl: pair(flat_differential(p, lbl, n_samples), E) for lbl in labels}


def euler_degree(label: Label, N: int, M: int) -> float:
    """Linear weight of the coordinate in the Euler field (0 for t^0 and hhat^0 shifts)."""
    kind, idx = label
    if kind == "t":
        return float(-idx)
    if kind == "h":
        return idx / N
    return idx / M if idx > 0 else 0.0


def euler_constant_shift(label: Label, N: int, M: int) -> float:
    kind, idx = label
    if kind == "t" and idx == 0:
        return -(N - 1) / N
    if kind == "hh" and idx == 0:
        return 1.0 + M / N
    return 0.0


# -- semisimplicity -------------------------------------------------------------------------


@dataclass(frozen=True)
class SemisimpleReport:
    min_abs: float
    max_abs: float
    values: np.ndarray
    passed: bool


def semisimple_diagnostic(p: PointNM, n_samples: int = 512, floor: float = 1e-6) -> SemisimpleReport:
    """Samples f(p) = -p^2 a'(p) ahat'(p) / zeta'(p) on the circle; semisimple iff nonvanishing."""
    zs = np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    ap = p.a.derivative().evaluate(zs)
    ahp = p.ahat.derivative().evaluate(zs)
    zp = p.zeta().derivative().evaluate(zs)
    small = np.abs(zp) < 1e-13
    vals = np.where(small, np.inf, -zs ** 2 * ap * ahp / np.where(small, 1.0, zp))
    finite = vals[np.isfinite(vals)]
    if len(finite) == 0:
        return SemisimpleReport(0.0, 0.0, vals, False)
    mn, mx = float(np.min(np.abs(finite))), float(np.max(np.abs(finite)))
    if np.any(~np.isfinite(vals)):
        mn = 0.0
    return SemisimpleReport(mn, mx, vals, mn > floor)


def canonical_covector(p: PointNM, pv: complex) -> CotangentVec:
    """du(p) = (ahat'(p)/zeta'(p)) da(p) - (a'(p)/zeta'(p)) dahat(p), truncated."""
    from .point import generating_covector

    arr = np.array([pv])
    ap = p.a.derivative().evaluate(arr)[0]
    ahp = p.ahat.derivative().evaluate(arr)[0]
    zp = p.zeta().derivative().evaluate(arr)[0]
    da = generating_covector(p, "a", pv).scale(ahp / zp)
    dah = generating_covector(p, "ahat", pv).scale(ap / zp)
    return da - dah


def delta_pairing_check(p: PointNM, n: int = 256, test_powers=(0, 1, -2),
                        probe_stride: int = 17) -> float:
    """Discretized structure-eigenvalue identity for the canonical covectors.

    The pairing of du(p) with du(q) is f(p) times a formal delta; smearing the
    q-slot against band-limited test functions g on an n-point grid (n at
    least the window width) must return f(p) g(p).  Returns the max residual
    relative to max |f|.
    """
    if n < p.window.width:
        raise NumericalError("delta grid must resolve the exponent window")
    zs = np.exp(2j * np.pi * np.arange(n) / n)
    ap = p.a.derivative().evaluate(zs)
    ahp = p.ahat.derivative().evaluate(zs)
    zp = p.zeta().derivative().evaluate(zs)
    fvals = -zs ** 2 * ap * ahp / zp
    scale = float(np.max(np.abs(fvals)))
    images = [eta_map(p, canonical_covector(p, z)) for z in zs]
    worst = 0.0
    for m in test_powers:
        g = zs ** m
        acc_x = acc_xh = LaurentSeries.zero()
        for j in range(n):
            wgt = zs[j] * g[j] / n
            acc_x = acc_x + images[j].x.scale(wgt)
            acc_xh = acc_xh + images[j].xhat.scale(wgt)
        smeared = TangentVec(acc_x.clip(p.window), acc_xh.clip(p.window))
        for i in range(0, n, probe_stride):
            got = pair(canonical_covector(p, zs[i]), smeared)
            worst = max(worst, abs(got - fvals[i] * zs[i] ** m) / scale)
    return worst
