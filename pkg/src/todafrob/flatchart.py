"""Flat coordinate chart: t from the circle data, h / h_hat from the merged part.

Forward chart: t^i by circle quadrature of powers of zeta (log integrand for
t^0), h^j and h_hat^k by residues of fractional powers of ell at infinity and
zero.  Inverse chart: zeta from the multiplicative factorization data by
per-sample Newton, ell by Newton on its N+M free coefficients.  The module
also provides the coordinate covector/vector frames and exact coordinate
flows used for finite differencing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .config import Window
from .errors import NumericalError
from .laurent import (CircleSamples, LaurentSeries, exp_onesided, fractional_power,
                      ipow, newton_invert_samples, reciprocal_onesided, winding_number)
from .point import (CotangentVec, PointNM, TangentVec, assemble, clip_cotangent,
                    clip_tangent, zeta_and_ell)

Label = tuple  # ("t", i) | ("h", j) | ("hh", k)


def label_str(label: Label) -> str:
    kind, idx = label
    return f"{kind}{idx}"


def parse_label(text: str) -> Label:
    for kind in ("hh", "h", "t"):
        if text.startswith(kind):
            return (kind, int(text[len(kind):]))
    raise ValueError(f"cannot parse coordinate label {text!r}")


def all_labels(N: int, M: int, t_range) -> list[Label]:
    labels = [("t", i) for i in t_range]
    labels += [("h", j) for j in range(1, N)]
    labels += [("hh", k) for k in range(0, M + 1)]
    return labels


def paired_t_range(cutoff: int) -> range:
    """t-indices closed under i -> -1-i, so the restricted Gram block is invertible."""
    return range(-cutoff - 1, cutoff + 1)


@dataclass
class FlatCoords:
    N: int
    M: int
    T_max: int
    t: dict = field(default_factory=dict)          # i -> complex, |i| <= T_max
    h: list = field(default_factory=list)          # h^1 .. h^{N-1}
    hhat: list = field(default_factory=list)       # hhat^0 .. hhat^M
    log_branch: str = "principal"

    def get(self, label: Label) -> complex:
        kind, idx = label
        if kind == "t":
            return self.t.get(idx, 0.0)
        if kind == "h":
            return self.h[idx - 1]
        return self.hhat[idx]

    def shifted(self, deltas: dict) -> "FlatCoords":
        out = FlatCoords(self.N, self.M, self.T_max, dict(self.t), list(self.h),
                         list(self.hhat), self.log_branch)
        for label, d in deltas.items():
            kind, idx = label
            if kind == "t":
                out.t[idx] = out.t.get(idx, 0.0) + d
            elif kind == "h":
                out.h[idx - 1] += d
            else:
                out.hhat[idx] += d
        return out


# -- fractional powers of the merged part -------------------------------------------


def chi_infinity(ell: LaurentSeries, N: int, depth: int) -> LaurentSeries:
    """ell^(1/N) expanded at infinity, monic top z^1."""
    return fractional_power(ell, Fraction(1, N), "infinity", depth)


def chi_zero(ell: LaurentSeries, M: int, depth: int) -> LaurentSeries:
    """ell^(1/M) expanded at zero, bottom (vhat_-M)^(1/M) z^-1."""
    return fractional_power(ell, Fraction(1, M), "zero", depth)


def chi_power(chi: LaurentSeries, s: int, anchor: str, depth: int) -> LaurentSeries:
    """Integer power chi^s, with one-sided reciprocal for negative s."""
    if s == 0:
        return LaurentSeries.const(1.0)
    if s > 0:
        out = ipow(chi, s)
    else:
        out = ipow(reciprocal_onesided(chi, anchor, depth), -s)
    # keep only the accurate depth of the one-sided expansion
    if anchor == "infinity":
        return out.project((out.hi - depth, out.hi))
    return out.project((out.lo, out.lo + depth))


# -- forward chart ---------------------------------------------------------------------


def _log_on_circle(values: np.ndarray) -> np.ndarray:
    """Continuous log of winding-zero samples, principal at the first sample."""
    if winding_number(values) != 0:
        raise NumericalError("log branch tracking failed: nonzero winding")
    phases = np.unwrap(np.angle(values))
    return np.log(np.abs(values)) + 1j * phases


def flat_coordinates(p: PointNM, T_max: int = 16, n_samples: int = 512) -> FlatCoords:
    zeta, ell = zeta_and_ell(p)
    zs = np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    zvals = zeta.evaluate(zs)

    t = {}
    for i in range(-T_max, T_max + 1):
        if i == 0:
            t[0] = complex(np.mean(_log_on_circle(zs / zvals)))
        else:
            t[i] = complex(np.mean(zvals ** (-i)) / i)

    depth = max(p.N, p.M) + 6
    h = []
    if p.N > 1:
        chi = chi_infinity(ell, p.N, depth + p.N)
        for j in range(1, p.N):
            h.append(complex(p.N / j) * ipow(chi, j).coeff(0))
    hhat = [complex(np.log(p.vhat_bottom))]
    chih = chi_zero(ell, p.M, depth + p.M)
    for k in range(1, p.M + 1):
        hhat.append(complex(p.M / k) * ipow(chih, k).coeff(0))
    return FlatCoords(p.N, p.M, T_max, t, h, hhat)


def t_via_image_curve(p: PointNM, i: int, n_samples: int = 512) -> complex:
    """t^i as the image-curve integral of zeta^(-i-1) log(z/zeta) d zeta, pulled back."""
    zs = np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    zeta = p.zeta()
    zvals = zeta.evaluate(zs)
    zpvals = zeta.derivative().evaluate(zs)
    logs = _log_on_circle(zs / zvals)
    return complex(np.mean(zvals ** (-i - 1) * logs * zpvals * zs))


# -- coordinate covectors and frames ---------------------------------------------------


def _zeta_power_series(p: PointNM, power: int, n_samples: int = 512) -> LaurentSeries:
    """zeta^power as an annulus expansion near |z| = 1."""
    zeta = p.zeta()
    if power >= 0:
        return ipow(zeta, power).clip(p.window)
    zs = np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    vals = zeta.evaluate(zs) ** power
    return CircleSamples(n_samples, vals).to_series(p.window.lo, p.window.hi)


def flat_differential(p: PointNM, label: Label, n_samples: int = 512) -> CotangentVec:
    """The covector d(coordinate)."""
    kind, idx = label
    depth = p.window.width
    if kind == "t":
        zpow = _zeta_power_series(p, -idx - 1, n_samples)
        return clip_cotangent(p, -zpow, zpow)
    if kind == "h":
        chi = chi_infinity(p.ell(), p.N, depth)
        return clip_cotangent(p, chi_power(chi, idx - p.N, "infinity", depth),
                              LaurentSeries.zero())
    chih = chi_zero(p.ell(), p.M, depth)
    return clip_cotangent(p, LaurentSeries.zero(), chi_power(chih, idx - p.M, "zero", depth))


def frame_zeta_ell(p: PointNM, label: Label, n_samples: int = 512):
    """(d zeta, d ell) of the coordinate direction; one of the two always vanishes."""
    kind, idx = label
    depth = p.window.width
    if kind == "t":
        zpow = _zeta_power_series(p, idx, n_samples)
        dzeta = (-(zpow * p.zeta().derivative()).shift(1)).clip(p.window)
        return dzeta, LaurentSeries.zero()
    if kind == "h":
        chi = chi_infinity(p.ell(), p.N, depth)
        dell = (chi_power(chi, p.N - idx - 1, "infinity", depth) * chi.derivative()).shift(1)
        return LaurentSeries.zero(), dell.project(">0")
    chih = chi_zero(p.ell(), p.M, depth)
    dell = (chi_power(chih, p.M - idx - 1, "zero", depth) * chih.derivative()).shift(1)
    return LaurentSeries.zero(), (-dell).project("<=0")


def flat_tangent_frame(p: PointNM, label: Label, n_samples: int = 512) -> TangentVec:
    """The tangent vector of the coordinate direction, via (d a, d a_hat) = linearized rebuild."""
    dzeta, dell = frame_zeta_ell(p, label, n_samples)
    return clip_tangent(p, dell + dzeta.project("<=0"), dell - dzeta.project(">0"))


# -- multiplicative factorization of the circle data ------------------------------------


def riemann_hilbert_split(fc: FlatCoords):
    """Inner/outer factors on the image-curve plane, normalized to finf = zeta + O(1).

    log f0 = -sum_{i>=0} t^i zeta^i, log(finf/zeta) = sum_{i>=1} t^-i zeta^-i;
    both returned exponentiated, truncated at T_max.
    """
    T = fc.T_max
    inner = LaurentSeries.from_pairs({i: -fc.t.get(i, 0.0) for i in range(0, T + 1)})
    outer = LaurentSeries.from_pairs({-i: fc.t.get(-i, 0.0) for i in range(1, T + 1)})
    f0 = exp_onesided(inner, "zero", T)
    finf = exp_onesided(outer, "infinity", T).shift(1)
    return f0, finf


def _z_of_zeta_eval(fc: FlatCoords):
    """Closure z(zeta) = zeta exp(sum_i t^i zeta^i) and its derivative."""
    T = fc.T_max
    idx = np.arange(-T, T + 1)
    tv = np.array([fc.t.get(int(i), 0.0) for i in idx], dtype=np.complex128)

    def s_eval(w):
        return (tv[None, :] * np.power(w[..., None], idx)).sum(axis=-1)

    def ds_eval(w):
        return (tv[None, :] * idx * np.power(w[..., None], idx - 1)).sum(axis=-1)

    def z_eval(w):
        return w * np.exp(s_eval(w))

    def dz_eval(w):
        return np.exp(s_eval(w)) * (1.0 + w * ds_eval(w))

    return z_eval, dz_eval


def reconstruct_zeta(fc: FlatCoords, window: Window, n_samples: int = 512) -> LaurentSeries:
    """Invert z(zeta) on the unit circle by continuation-seeded Newton."""
    z_eval, dz_eval = _z_of_zeta_eval(fc)
    zs = np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    sol = np.empty(n_samples, dtype=np.complex128)
    seed = zs[0] * np.exp(-fc.t.get(0, 0.0))
    for j, target in enumerate(zs):
        seed = newton_invert_samples(z_eval, dz_eval, np.array([target]),
                                     np.array([seed]))[0]
        sol[j] = seed
    if winding_number(sol) != 1:
        raise NumericalError("reconstructed circle data has wrong winding")
    return CircleSamples(n_samples, sol).to_series(window.lo, window.hi)


# -- merged-part reconstruction -----------------------------------------------------------


def _ell_coords(ell: LaurentSeries, N: int, M: int) -> np.ndarray:
    """Residual coordinates [h^1..h^{N-1}, hhat^0..hhat^M] of a candidate ell."""
    depth = max(N, M) + 6
    vals = []
    if N > 1:
        chi = chi_infinity(ell, N, depth + N)
        vals += [complex(N / j) * ipow(chi, j).coeff(0) for j in range(1, N)]
    vals.append(complex(np.log(ell.coeff(-M))))
    chih = chi_zero(ell, M, depth + M)
    vals += [complex(M / k) * ipow(chih, k).coeff(0) for k in range(1, M + 1)]
    return np.array(vals, dtype=np.complex128)


def ell_from_coords(N: int, M: int, h, hhat, seed: LaurentSeries | None = None,
                    tol: float = 1e-12, maxit: int = 50) -> LaurentSeries:
    """Newton-solve the N+M free coefficients of ell matching (h, hhat)."""
    target = np.array(list(h) + list(hhat), dtype=np.complex128)
    if seed is None:
        seed = LaurentSeries.from_pairs({N: 1.0, -M: np.exp(hhat[0])})

    def build(u):
        pairs = {N: 1.0}
        for r, j in enumerate(range(1, N)):
            pairs[j] = u[r]
        for r, j in enumerate(range(-M, 1)):
            pairs[j] = u[N - 1 + r]
        return LaurentSeries.from_pairs(pairs)

    u = np.array([seed.coeff(j) for j in range(1, N)]
                 + [seed.coeff(j) for j in range(-M, 1)], dtype=np.complex128)
    n = len(u)
    step = 1e-7
    for _ in range(maxit):
        res = _ell_coords(build(u), N, M) - target
        if np.max(np.abs(res)) < tol:
            return build(u)
        jac = np.empty((n, n), dtype=np.complex128)
        for k in range(n):
            up, um = u.copy(), u.copy()
            up[k] += step
            um[k] -= step
            jac[:, k] = (_ell_coords(build(up), N, M) - _ell_coords(build(um), N, M)) / (2 * step)
        u = u - np.linalg.solve(jac, res)
    raise NumericalError(f"ell reconstruction Newton stalled (residual {np.max(np.abs(res)):.2e})")


def point_from_flat(fc: FlatCoords, K: int = 32, n_samples: int = 512,
                    seed_ell: LaurentSeries | None = None) -> PointNM:
    """Inverse chart: rebuild (a, a_hat) from flat coordinates."""
    window = Window.for_point(fc.N, fc.M, K)
    zeta = reconstruct_zeta(fc, window, n_samples)
    ell = ell_from_coords(fc.N, fc.M, fc.h, fc.hhat, seed=seed_ell)
    return assemble(fc.N, fc.M, zeta, ell, window)


# -- exact coordinate flows (for finite differencing) --------------------------------------


def t_flow(p: PointNM, i: int, tau: complex, n_samples: int = 512) -> PointNM:
    """Finite motion along d/dt^i, via characteristics of the circle data.

    zeta moves by d zeta/d tau = -z zeta^i zeta'; along dz/d tau = z zeta^i the
    value of zeta is constant, so zeta_tau(w exp(tau zeta(w)^i)) = zeta(w).
    ell is untouched.
    """
    zeta, ell = zeta_and_ell(p)
    dz = zeta.derivative()

    def f_eval(w):
        return w * np.exp(tau * zeta.evaluate(w) ** i)

    def df_eval(w):
        zv = zeta.evaluate(w)
        return np.exp(tau * zv ** i) * (1.0 + w * tau * i * zv ** (i - 1) * dz.evaluate(w))

    zs = np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    w = newton_invert_samples(f_eval, df_eval, zs, zs)
    vals = zeta.evaluate(w)
    zeta_tau = CircleSamples(n_samples, vals).to_series(p.window.lo, p.window.hi)
    return assemble(p.N, p.M, zeta_tau, ell, p.window)


def hh_shift(p: PointNM, deltas: dict) -> PointNM:
    """Shift h / h_hat coordinates at fixed circle data, by the merged-part Newton."""
    fc = flat_coordinates(p, T_max=0)
    fc = fc.shifted({lbl: d for lbl, d in deltas.items() if lbl[0] != "t"})
    ell = ell_from_coords(p.N, p.M, fc.h, fc.hhat, seed=p.ell())
    return assemble(p.N, p.M, p.zeta(), ell, p.window)


def euler_scale(p: PointNM, tau: float) -> PointNM:
    """Finite Euler flow: coefficient r gets e^((1 - r/N) tau) on both slots."""
    def scaled(f: LaurentSeries) -> LaurentSeries:
        ks = np.arange(f.lo, f.hi + 1)
        return LaurentSeries(f.lo, f.coeffs * np.exp((1.0 - ks / p.N) * tau), f.truncated)

    return PointNM(p.N, p.M, scaled(p.a), scaled(p.ahat), p.window)


def flow_to(p: PointNM, deltas: dict, n_samples: int = 512) -> PointNM:
    """Move the point by the given coordinate increments (exact flows, composed)."""
    out = p
    hh = {lbl: d for lbl, d in deltas.items() if lbl[0] != "t"}
    for (kind, i), d in deltas.items():
        if kind == "t":
            out = t_flow(out, i, d, n_samples)
    if hh:
        out = hh_shift(out, hh)
    return out
