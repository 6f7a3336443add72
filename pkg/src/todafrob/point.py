"""Manifold points (a, a_hat), validity conditions, and the tangent/cotangent pairing.

A point is a pair of Laurent windows: ``a`` monic of degree N with only lower
exponents below, ``a_hat`` with nothing under z^-M.  Tangent vectors live in
z^{N-1}H^- x z^{-M}H^+, covectors in z^{-N+1}H^+ x z^{M}H^-; the pairing is the
z^0 coefficient of the slotwise products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Window
from .errors import InvalidPointError, NumericalError
from .laurent import LaurentSeries, winding_number


@dataclass(frozen=True)
class PointNM:
    N: int
    M: int
    a: LaurentSeries
    ahat: LaurentSeries
    window: Window

    def __post_init__(self):
        if self.N < 1 or self.M < 1:
            raise InvalidPointError("N and M must be positive")
        a, ah = self.a.trimmed(), self.ahat.trimmed()
        if a.hi != self.N or abs(a.coeff(self.N) - 1.0) > 0:
            raise InvalidPointError(f"a must be monic of degree N={self.N}")
        if ah.lo < -self.M:
            raise InvalidPointError(f"a_hat has exponents below -M={-self.M}")
        if a.lo < self.window.lo or ah.hi > self.window.hi:
            raise InvalidPointError("point does not fit the configured window")

    @property
    def vhat_bottom(self) -> complex:
        return self.ahat.coeff(-self.M)

    def zeta(self) -> LaurentSeries:
        return self.a - self.ahat

    def ell(self) -> LaurentSeries:
        return self.a.project(">0") + self.ahat.project("<=0")


def zeta_and_ell(p: PointNM) -> tuple[LaurentSeries, LaurentSeries]:
    return p.zeta(), p.ell()


def assemble(N: int, M: int, zeta: LaurentSeries, ell: LaurentSeries,
             window: Window | None = None) -> PointNM:
    """Rebuild the point from (zeta, ell): a = ell + zeta_{<=0}, a_hat = ell - zeta_{>0}."""
    ell = ell.trimmed()
    if ell.hi != N or ell.coeff(N) != 1.0:
        raise InvalidPointError("ell must carry the monic z^N term")
    if ell.lo < -M:
        raise InvalidPointError("ell has exponents below -M")
    window = window or Window.for_point(N, M)
    a = (ell + zeta.project("<=0")).clip(window)
    ahat = (ell - zeta.project(">0")).clip(window)
    return PointNM(N, M, a, ahat, window)


@dataclass(frozen=True)
class TangentVec:
    """(X, X_hat) with X below z^N and X_hat above z^-M."""

    x: LaurentSeries
    xhat: LaurentSeries

    def __add__(self, other):
        return TangentVec(self.x + other.x, self.xhat + other.xhat)

    def __sub__(self, other):
        return TangentVec(self.x - other.x, self.xhat - other.xhat)

    def scale(self, c):
        return TangentVec(self.x.scale(c), self.xhat.scale(c))

    def norm(self) -> float:
        return max(self.x.norm(), self.xhat.norm())


@dataclass(frozen=True)
class CotangentVec:
    """(w, w_hat) with w above z^{-N+1} and w_hat below z^M."""

    w: LaurentSeries
    what: LaurentSeries

    def __add__(self, other):
        return CotangentVec(self.w + other.w, self.what + other.what)

    def __sub__(self, other):
        return CotangentVec(self.w - other.w, self.what - other.what)

    def scale(self, c):
        return CotangentVec(self.w.scale(c), self.what.scale(c))

    def norm(self) -> float:
        return max(self.w.norm(), self.what.norm())


def clip_tangent(p: PointNM, x: LaurentSeries, xhat: LaurentSeries) -> TangentVec:
    w = p.window
    return TangentVec(x.clip(Window(w.lo, p.N - 1)), xhat.clip(Window(-p.M, w.hi)))


def clip_cotangent(p: PointNM, w_: LaurentSeries, what: LaurentSeries) -> CotangentVec:
    w = p.window
    return CotangentVec(w_.clip(Window(-p.N + 1, w.hi)), what.clip(Window(w.lo, p.M)))


def pair(omega: CotangentVec, X: TangentVec) -> complex:
    """<omega, X>: z^0 coefficient of w X + w_hat X_hat (exact convolution)."""
    return ((omega.w * X.x).circle_average() + (omega.what * X.xhat).circle_average())


def tangent_diff(X1: TangentVec) -> tuple[LaurentSeries, LaurentSeries]:
    """The induced variations (d zeta, d ell) of a tangent direction."""
    dzeta = X1.x - X1.xhat
    dell = X1.x.project(">0") + X1.xhat.project("<=0")
    return dzeta, dell


# -- validity -------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    m1: bool
    m2: bool
    m3: bool
    vhat_bottom_abs: float
    min_wronskian: float
    min_zeta_prime: float
    min_ell_prime: float
    winding: int | None
    reasons: tuple

    @property
    def ok(self) -> bool:
        return self.m1 and self.m2 and self.m3


def validate(p: PointNM, n_samples: int = 512, floor: float = 1e-8) -> ValidationReport:
    """Check (M1) bottom pole, (M2) circle nonvanishing, (M3) winding one."""
    reasons = []
    vb = abs(p.vhat_bottom)
    m1 = vb > floor
    if not m1:
        reasons.append(f"(M1) |vhat_-M|={vb:.2e} below floor")

    zs = np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    a, ah = p.a, p.ahat
    ap, ahp = a.derivative(), ah.derivative()
    wron = a.evaluate(zs) * ahp.evaluate(zs) - ap.evaluate(zs) * ah.evaluate(zs)
    zp = p.zeta().derivative().evaluate(zs)
    lp = p.ell().derivative().evaluate(zs)
    mins = [float(np.min(np.abs(v))) for v in (wron, zp, lp)]
    m2 = all(v > floor for v in mins)
    if not m2:
        names = ("a ahat' - a' ahat", "zeta'", "ell'")
        for name, v in zip(names, mins):
            if v <= floor:
                reasons.append(f"(M2) {name} min modulus {v:.2e} on the circle")

    winding = None
    m3 = False
    zvals = p.zeta().evaluate(zs)
    if float(np.min(np.abs(zvals))) > floor:
        try:
            winding = winding_number(zvals)
            m3 = winding == 1
            if not m3:
                reasons.append(f"(M3) winding {winding} != 1")
        except NumericalError as e:
            reasons.append(f"(M3) {e}")
    else:
        reasons.append("(M3) zeta vanishes on the sampled circle")

    return ValidationReport(m1, m2, m3, vb, mins[0], mins[1], mins[2], winding, tuple(reasons))


# -- generating covectors ----------------------------------------------------------


def generating_covector(p: PointNM, which: str, pval: complex) -> CotangentVec:
    """Truncated generating covectors d a(p) and d a_hat(p).

    The first expands for |z| < |p| (coefficients p^{-e}, e >= -N+1), the
    second for |z| > |p| (e <= M); geometric decay requires |p| > 1 for 'a'
    and |p| < 1 for 'ahat' on the truncated window.
    """
    w = p.window
    if which == "a":
        es = np.arange(-p.N + 1, w.hi + 1)
        series = LaurentSeries(-p.N + 1, np.power(complex(pval), -es))
        return CotangentVec(series, LaurentSeries.zero())
    if which == "ahat":
        es = np.arange(w.lo, p.M + 1)
        series = LaurentSeries(w.lo, np.power(complex(pval), -es))
        return CotangentVec(LaurentSeries.zero(), series)
    raise ValueError(f"unknown generating label {which!r}")


# -- random sampling ----------------------------------------------------------------


def random_tangent(p: PointNM, rng: np.random.Generator, decay: float = 0.35) -> TangentVec:
    w = p.window

    def band(lo, hi, edge):
        es = np.arange(lo, hi + 1)
        mag = decay ** np.abs(es - edge)
        cs = mag * (rng.standard_normal(len(es)) + 1j * rng.standard_normal(len(es)))
        return LaurentSeries(lo, cs)

    return TangentVec(band(w.lo, p.N - 1, p.N - 1), band(-p.M, w.hi, -p.M))


def random_cotangent(p: PointNM, rng: np.random.Generator, decay: float = 0.35) -> CotangentVec:
    w = p.window

    def band(lo, hi, edge):
        es = np.arange(lo, hi + 1)
        mag = decay ** np.abs(es - edge)
        cs = mag * (rng.standard_normal(len(es)) + 1j * rng.standard_normal(len(es)))
        return LaurentSeries(lo, cs)

    return CotangentVec(band(-p.N + 1, w.hi, -p.N + 1), band(w.lo, p.M, p.M))


def _tail_ok(series: LaurentSeries, window: Window, floor: float) -> bool:
    """True when the outermost window coefficients have decayed below floor."""
    scale = max(series.norm(), 1e-30)
    lo_band = [abs(series.coeff(k)) for k in range(window.lo, window.lo + 3)]
    hi_band = [abs(series.coeff(k)) for k in range(window.hi - 2, window.hi + 1)]
    return max(lo_band + hi_band) <= floor * scale


def point_conditioning(p: PointNM, n: int = 512, floor: float = 1e-11) -> dict:
    """Decay diagnostics for the annulus quotients the structure maps rely on.

    The window truncation of 1/(z zeta') and 1/(a ahat' - a' ahat) is the only
    bias source in the metric and intersection inverses; the one-sided
    reciprocals are used either at shallow residue depth or inside formally
    exact projections, so they are not checked here.
    """
    from .laurent import divide_on_circle

    w = p.window
    out = {}
    one = LaurentSeries.const(1.0)
    zzp = p.zeta().derivative().shift(1)
    try:
        q = divide_on_circle(one, zzp, w.lo, w.hi, n)
        out["inv_z_zeta_prime"] = _tail_ok(q, w, floor)
    except NumericalError:
        out["inv_z_zeta_prime"] = False
    wron = p.a * p.ahat.derivative() - p.a.derivative() * p.ahat
    try:
        q = divide_on_circle(one, wron.shift(1), w.lo, w.hi, n)
        out["inv_wronskian"] = _tail_ok(q, w, floor)
    except NumericalError:
        out["inv_wronskian"] = False
    # decay of the formal intersection inverse: growth of the one-sided
    # reciprocals must lose against the Wronskian quotient on each side
    roots_w = np.abs(np.roots(wron.trimmed().coeffs[::-1]))
    roots_a = np.abs(np.roots(p.a.derivative().trimmed().coeffs[::-1]))
    roots_ah = np.abs(np.roots(p.ahat.derivative().trimmed().coeffs[::-1]))
    upper_w = np.min(roots_w[roots_w > 1.0]) if np.any(roots_w > 1.0) else np.inf
    lower_w = np.max(roots_w[roots_w < 1.0]) if np.any(roots_w < 1.0) else 0.0
    grow_a = np.max(roots_a) if len(roots_a) else 0.0
    grow_ah = 1.0 / np.min(roots_ah) if len(roots_ah) else 0.0
    out["g_formal_decay"] = bool(grow_a < 0.97 * upper_w and lower_w * grow_ah < 0.97)
    return out


def _noise(rng, es, mag):
    return mag * (rng.standard_normal(len(es)) + 1j * rng.standard_normal(len(es)))


def random_point(N: int, M: int, rng: np.random.Generator, K: int | None = None,
                 decay: float = 0.3, amp: float = 0.1, max_tries: int = 80,
                 require_conditioning: bool = True) -> PointNM:
    """Draw a validated, well-conditioned point.

    For N = 1 the hat part is a perturbed pole c z^-M under a perturbed a = z.
    For N >= 2 winding one forbids small perturbations of z^N, so a carries a
    dominant z term; that family keeps the analytic inverse of the
    intersection map inside the decaying-coefficient window (the hat slot
    stays pole dominated), at the price of slower annulus-quotient decay,
    hence the wider default window.
    """
    if K is None:
        K = 32 if N == 1 else 48
    window = Window.for_point(N, M, K)
    # bottom-pole scale keeping the inner zeros of zeta' at radius <~ 0.4
    c0 = 0.4 ** (M + 1) / (2 * M)
    for _ in range(max_tries):
        c = c0 * (1 + 0.3 * rng.uniform(-1, 1)) * np.exp(0.4j * rng.uniform(-1, 1))
        es = np.arange(window.lo, N)
        a = LaurentSeries(window.lo, np.concatenate([_noise(rng, es, amp * decay ** (N - 1 - es)), [1.0]]))
        if N >= 2:
            a = a + LaurentSeries.monomial(1, (N + 1.3) * (1 + 0.2 * rng.uniform(0, 1)))
        es = np.arange(-M, window.hi + 1)
        vh = _noise(rng, es, 0.3 * abs(c) * decay ** (es + M))
        vh[0] = c
        ahat = LaurentSeries(-M, vh)
        try:
            p = PointNM(N, M, a.clip(window), ahat.clip(window), window)
        except InvalidPointError:
            continue
        if not validate(p).ok:
            continue
        if require_conditioning and not all(point_conditioning(p).values()):
            continue
        return p
    raise NumericalError(f"could not sample a valid point for (N,M)=({N},{M})")


def base_point(N: int = 1, M: int = 1, c: complex = 0.25, K: int = 32) -> PointNM:
    """The reference point (a, a_hat) = (z^N, c z^-M)."""
    window = Window.for_point(N, M, K)
    return PointNM(N, M, LaurentSeries.monomial(N), LaurentSeries.monomial(-M, c), window)
