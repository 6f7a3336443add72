"""Intersection form, its raise/lower maps, the flat pencil, and the
hydrodynamic bracket coefficient generators.

The intersection form is the Euler contraction of the cotangent product; its
raise map uses the same projection pattern as the flat metric with the Euler
reduced series B(f) = f - (z/N) z f' in place of the bare series.  The
delta'-coefficients of the two hydrodynamic brackets are evaluated as explicit
(p, q) generating functions and must reproduce the metric and intersection
generators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .frobstruct import euler_field, metric_generating, product_cotangent
from .laurent import LaurentSeries, divide_on_circle, reciprocal_onesided
from .point import (CotangentVec, PointNM, TangentVec, clip_cotangent, clip_tangent,
                    pair, tangent_diff)


def euler_reduced(f: LaurentSeries, N: int) -> LaurentSeries:
    """B(f) = f - (z/N) f'; the Euler pairing value of the generating covectors."""
    return f - f.z_derivative().scale(1.0 / N)


def g_map(p: PointNM, omega: CotangentVec) -> TangentVec:
    """Intersection-form raise T* -> T (four-term projection formula)."""
    ap, ahp = p.a.derivative(), p.ahat.derivative()
    ba, bah = euler_reduced(p.a, p.N), euler_reduced(p.ahat, p.N)
    wb = omega.w * ba + omega.what * bah
    mixed = omega.w * ap + omega.what * ahp
    x = (ap * wb.project("<0") - ba * mixed.project("<0")).shift(1)
    xhat = (-(ahp * wb.project(">=0")) + bah * mixed.project(">=0")).shift(1)
    return clip_tangent(p, x, xhat)


def _g_inverse_once(p: PointNM, X: TangentVec, n_samples: int) -> CotangentVec:
    wron = (p.a * p.ahat.derivative() - p.a.derivative() * p.ahat).shift(1)
    num = p.ahat.derivative() * X.x - p.a.derivative() * X.xhat
    theta = divide_on_circle(num, wron, p.window.lo, p.window.hi, n_samples)
    depth = p.window.width
    rec_a = reciprocal_onesided(p.a.derivative(), "infinity", depth)
    rec_ah = reciprocal_onesided(p.ahat.derivative(), "zero", depth)
    omega = (rec_a * theta.project(">=0")).project((-p.N + 1, p.window.hi))
    what = (-(rec_ah * theta.project("<0"))).project((p.window.lo, p.M))
    return clip_cotangent(p, omega, what)


class DenseSolver:
    """Pseudoinverse of a T* -> T map over the truncated monomial bases.

    Finite sections of these maps are exponentially ill conditioned at the
    window boundary (Toeplitz finite-section effect); the singular-value
    cutoff drops the boundary-localized near-null directions, which carry no
    mass for interior vectors with decaying coefficients.
    """

    def __init__(self, p: PointNM, apply_map, rcond: float = 1e-10):
        self.p = p
        w = p.window
        self.cov_w = list(range(-p.N + 1, w.hi + 1))
        self.cov_wh = list(range(w.lo, p.M + 1))
        self.tan_x = list(range(w.lo, p.N))
        self.tan_xh = list(range(-p.M, w.hi + 1))
        self.pinv = np.linalg.pinv(_map_matrix(p, apply_map), rcond=rcond)

    def solve(self, X: TangentVec) -> CotangentVec:
        rhs = np.array([X.x.coeff(k) for k in self.tan_x]
                       + [X.xhat.coeff(k) for k in self.tan_xh], dtype=np.complex128)
        sol = self.pinv @ rhs
        nw = len(self.cov_w)
        return CotangentVec(LaurentSeries(self.cov_w[0], sol[:nw]),
                            LaurentSeries(self.cov_wh[0], sol[nw:]))


def g_inverse(p: PointNM, X: TangentVec, n_samples: int = 512,
              tol: float = 1e-11, solver: DenseSolver | None = None) -> CotangentVec:
    """Intersection-form lower: annulus quotient Theta, then one-sided unwinding.

    At winding-one points with N >= 2 a zero of a' sits outside the unit disk
    (or one of ahat' inside), so the one-sided unwinding, while formally
    exact, loses a low-dimensional subspace numerically.  When the defect of
    the formula route exceeds ``tol`` the inverse is completed by solving the
    forward map on the truncated window directly.
    """
    omega = _g_inverse_once(p, X, n_samples)
    scale = max(X.norm(), 1e-30)
    back = g_map(p, omega)
    defect = TangentVec(X.x - back.x, X.xhat - back.xhat)
    if defect.norm() <= tol * scale:
        return omega
    if solver is None:
        solver = DenseSolver(p, g_map)
    if defect.norm() <= 1e-2 * scale:
        return omega + solver.solve(defect)
    return solver.solve(X)


def g_roundtrip_residual(p: PointNM, X: TangentVec) -> float:
    back = g_map(p, g_inverse(p, X))
    return max((back.x - X.x).norm(), (back.xhat - X.xhat).norm()) / max(X.norm(), 1e-30)


def intersection_cotangent(p: PointNM, w1: CotangentVec, w2: CotangentVec,
                           route: str = "map") -> complex:
    """(w1, w2)*: via the raise map, or as the Euler contraction of the product."""
    if route == "map":
        return pair(w1, g_map(p, w2))
    if route == "euler":
        return pair(product_cotangent(p, w1, w2), euler_field(p))
    raise ValueError(f"unknown route {route!r}")


def intersection_generating(p: PointNM, alpha: str, beta: str,
                            pv: complex, qv: complex) -> complex:
    """(d alpha(p), d beta(q))* = pq/(p-q) (alpha'(p) B(beta(q)) - B(alpha(p)) beta'(q))."""
    fa = p.a if alpha == "a" else p.ahat
    fb = p.a if beta == "a" else p.ahat
    arrp, arrq = np.array([pv]), np.array([qv])
    fap = fa.derivative().evaluate(arrp)[0]
    fbp = fb.derivative().evaluate(arrq)[0]
    bfa = euler_reduced(fa, p.N).evaluate(arrp)[0]
    bfb = euler_reduced(fb, p.N).evaluate(arrq)[0]
    if alpha == beta and abs(pv - qv) < 1e-9:
        # eliminated-denominator limit: pq d/dq [alpha'(p) B(.)(q) - B(.)(p) alpha'(q)]
        b_der = euler_reduced(fa, p.N).derivative().evaluate(arrp)[0]
        fpp = fa.derivative().derivative().evaluate(arrp)[0]
        return pv * qv * (fap * b_der - bfa * fpp) * (-1.0)
    return pv * qv * (fap * bfb - bfa * fbp) / (pv - qv)


def tangent_intersection_quadrature(p: PointNM, X1: TangentVec, X2: TangentVec,
                                    n_samples: int = 512) -> complex:
    """(X1, X2) by circle quadrature of the ratio form (independent of g_inverse)."""
    zs = np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    ap = p.a.derivative().evaluate(zs)
    ahp = p.ahat.derivative().evaluate(zs)
    av, ahv = p.a.evaluate(zs), p.ahat.evaluate(zs)
    u1 = X1.x.evaluate(zs) / ap - X1.xhat.evaluate(zs) / ahp
    u2 = X2.x.evaluate(zs) / ap - X2.xhat.evaluate(zs) / ahp
    den = av / ap - ahv / ahp
    if np.min(np.abs(den)) < 1e-12:
        raise NumericalError("ratio form denominator vanishes on the circle")
    return complex(np.mean(u1 * u2 / (den * zs)))


# -- pencil nondegeneracy ----------------------------------------------------------------


def _map_matrix(p: PointNM, apply_map) -> np.ndarray:
    """Matrix of a T* -> T map over the monomial bases of the truncated windows."""
    w = p.window
    cov_w = list(range(-p.N + 1, w.hi + 1))
    cov_wh = list(range(w.lo, p.M + 1))
    tan_x = list(range(w.lo, p.N))
    tan_xh = list(range(-p.M, w.hi + 1))
    rows = len(tan_x) + len(tan_xh)
    cols = len(cov_w) + len(cov_wh)
    mat = np.zeros((rows, cols), dtype=np.complex128)
    for jc, e in enumerate(cov_w):
        out = apply_map(p, CotangentVec(LaurentSeries.monomial(e), LaurentSeries.zero()))
        mat[: len(tan_x), jc] = [out.x.coeff(k) for k in tan_x]
        mat[len(tan_x):, jc] = [out.xhat.coeff(k) for k in tan_xh]
    for jc, e in enumerate(cov_wh):
        out = apply_map(p, CotangentVec(LaurentSeries.zero(), LaurentSeries.monomial(e)))
        mat[: len(tan_x), len(cov_w) + jc] = [out.x.coeff(k) for k in tan_x]
        mat[len(tan_x):, len(cov_w) + jc] = [out.xhat.coeff(k) for k in tan_xh]
    return mat


@dataclass
class PencilReport:
    s_values: list
    min_singular: list
    spectral_gap: float
    spectrum_distances: list
    window_width: int
    floor: float

    @property
    def ok(self) -> bool:
        return all(v > self.floor for v in self.min_singular)


def pencil_nondegeneracy(p: PointNM, s_values=None, floor: float = 1e-8) -> PencilReport:
    """Minimum singular value of g - s eta on the truncated window, over an s grid.

    The truncated pencil is strongly nonnormal and its boundary pseudospectrum
    fills the annulus of the generalized eigenvalues, so the certified grid
    lives in the spectral gap around s = 0; the report records the gap radius
    and the distance of each tested s to the computed spectrum.
    """
    import scipy.linalg as sla

    from .frobstruct import eta_map

    g_mat = _map_matrix(p, g_map)
    eta_mat = _map_matrix(p, eta_map)
    lam = sla.eigvals(g_mat, eta_mat)
    lam = lam[np.isfinite(lam)]
    lam = lam[np.abs(lam) < 1e6]
    gap = float(np.min(np.abs(lam))) if len(lam) else np.inf
    if s_values is None:
        r = 0.5 * min(gap, 1.0)
        s_values = [r * np.exp(1j * ang) for ang in (0.4, 1.9, 3.1, 4.8)]
    mins, dists = [], []
    for s in s_values:
        vals = np.linalg.svd(g_mat - s * eta_mat, compute_uv=False)
        mins.append(float(vals[-1]))
        dists.append(float(np.min(np.abs(lam - s))) if len(lam) else np.inf)
    return PencilReport(list(s_values), mins, gap, dists, p.window.width, floor)


# -- hydrodynamic bracket coefficient generators --------------------------------------------


def bracket_coefficients(p: PointNM, which: int, alpha: str, beta: str,
                         pv: complex, qv: complex,
                         dx_point: PointNM | None = None) -> tuple[complex, complex]:
    """(delta'-coefficient, delta-coefficient) of the bracket generators at (pv, qv).

    ``dx_point`` carries the x-derivative of the loop at the evaluation site;
    a constant loop (None) has vanishing delta-coefficients.  Same-letter
    coincident arguments use the eliminated-denominator limits.
    """
    fa = p.a if alpha == "a" else p.ahat
    fb = p.a if beta == "a" else p.ahat
    arrp, arrq = np.array([pv]), np.array([qv])
    ap_, bq = fa.derivative().evaluate(arrp)[0], fb.evaluate(arrq)[0]
    aval, bq_ = fa.evaluate(arrp)[0], fb.derivative().evaluate(arrq)[0]
    same = alpha == beta and abs(pv - qv) < 1e-9

    if which == 1:
        if same:
            lead = pv * qv * fa.derivative().derivative().evaluate(arrp)[0]
        else:
            lead = pv * qv * (ap_ - bq_) / (pv - qv)
    elif which == 2:
        if same:
            b_red = euler_reduced(fa, p.N)
            lead = pv * qv * (ap_ * b_red.derivative().evaluate(arrp)[0]
                              - b_red.evaluate(arrp)[0]
                              * fa.derivative().derivative().evaluate(arrp)[0]) * (-1.0)
        else:
            lead = pv * qv * ((ap_ * bq - aval * bq_) / (pv - qv) + ap_ * bq_ / p.N)
    else:
        raise ValueError("which must be 1 or 2")

    if dx_point is None:
        return complex(lead), 0.0 + 0.0j

    ga = dx_point.a if alpha == "a" else dx_point.ahat
    gb = dx_point.a if beta == "a" else dx_point.ahat
    dxa = ga.evaluate(arrp)[0]
    dxb = gb.evaluate(arrq)[0]
    dxbp = gb.derivative().evaluate(arrq)[0]
    if same:
        raise NumericalError("coincident same-letter delta-coefficient not implemented")
    if which == 1:
        sub = pv * qv * ((dxa - dxb) / (pv - qv) ** 2 - dxbp / (pv - qv))
    else:
        sub = pv * qv * ((dxa * bq - aval * dxb) / (pv - qv) ** 2
                         + (ap_ * dxb - aval * dxbp) / (pv - qv)
                         + ap_ * dxbp / p.N)
    return complex(lead), complex(sub)


def bracket_matches_pencil(p: PointNM, pv: complex, qv: complex) -> float:
    """Max mismatch of the delta'-generators against the metric/intersection forms."""
    worst = 0.0
    from .frobstruct import metric_generating

    for alpha in ("a", "ahat"):
        for beta in ("a", "ahat"):
            lead1, _ = bracket_coefficients(p, 1, alpha, beta, pv, qv)
            lead2, _ = bracket_coefficients(p, 2, alpha, beta, pv, qv)
            worst = max(worst, abs(lead1 - metric_generating(p, alpha, beta, pv, qv)))
            worst = max(worst, abs(lead2 - intersection_generating(p, alpha, beta, pv, qv)))
    return worst
