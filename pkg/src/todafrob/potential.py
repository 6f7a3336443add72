"""The potential: double-contour term, cross term, finite-dimensional part,
third-derivative assembly, WDVV and homogeneity checks, reduction limit.

The double contour reduces to a coefficient pairing through the expansion
log((z2-z1)/z2) = -sum (z1/z2)^m / m; the cross term is a product of two
circle averages whose second factor is evaluated both by branch-tracked
quadrature and by the coordinate bilinear sum, with the agreement enforced.
Third derivatives are taken by exact coordinate flows plus one Richardson
pass, augmented on merged-part triples by the residue formula.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .flatchart import (FlatCoords, Label, all_labels, euler_scale, flat_coordinates,
                        flow_to, frame_zeta_ell, paired_t_range)
from .frobstruct import (euler_degree, euler_scaling_identity_residual, gram_flat,
                         gram_flat_inverse, three_tensor)
from .laurent import LaurentSeries, reciprocal_onesided
from .point import PointNM, assemble, zeta_and_ell


@dataclass(frozen=True)
class PotentialValue:
    double_term: complex
    cross_term: complex
    fnm_included: bool = False
    fnm_term: complex = 0.0

    @property
    def total(self) -> complex:
        return self.double_term + self.cross_term + (self.fnm_term if self.fnm_included else 0.0)


def double_contour_term(p: PointNM) -> complex:
    """-sum_m (1/m) [ (1/2) zeta_-m zeta_m - zeta_-m ell_m + ell_-m zeta_m ]."""
    zeta, ell = zeta_and_ell(p)
    total = 0.0 + 0.0j
    m_max = min(-zeta.lo, zeta.hi)
    m_max = max(m_max, max(-ell.lo, ell.hi))
    for m in range(1, m_max + 1):
        total -= (0.5 * zeta.coeff(-m) * zeta.coeff(m)
                  - zeta.coeff(-m) * ell.coeff(m)
                  + ell.coeff(-m) * zeta.coeff(m)) / m
    return complex(total)


def double_contour_quadrature(p: PointNM, r1: float = 0.9, r2: float = 1.1,
                              n: int = 256) -> complex:
    """Trapezoid oracle for the double contour on nested circles |z1|=r1 < |z2|=r2."""
    zeta, ell = zeta_and_ell(p)
    z1 = r1 * np.exp(2j * np.pi * np.arange(n) / n)
    z2 = r2 * np.exp(2j * np.pi * np.arange(n) / n)
    f1, l1 = zeta.evaluate(z1), ell.evaluate(z1)
    f2, l2 = zeta.evaluate(z2), ell.evaluate(z2)
    kern = np.log1p(-z1[:, None] / z2[None, :])
    grid = (0.5 * f1[:, None] * f2[None, :]
            - f1[:, None] * l2[None, :] + l1[:, None] * f2[None, :]) * kern
    return complex(grid.mean())


def cross_term(p: PointNM, T_max: int = 16, n_samples: int = 512,
               agreement_tol: float = 1e-8) -> complex:
    """-(avg of zeta/2 + ell) * (avg of zeta (log(zeta/z) - 1)).

    The second factor is computed both by branch-tracked quadrature and as
    sum_{i>=0} t^i t^{-i-1}; disagreement raises.
    """
    from .flatchart import _log_on_circle

    zeta, ell = zeta_and_ell(p)
    first = 0.5 * zeta.circle_average() + ell.circle_average()

    zs = np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    zv = zeta.evaluate(zs)
    quad = complex(np.mean(zv * (_log_on_circle(zv / zs) - 1.0)))

    fc = flat_coordinates(p, T_max, n_samples)
    bilinear = sum(fc.t.get(i, 0.0) * fc.t.get(-i - 1, 0.0) for i in range(0, T_max))
    if abs(quad - bilinear) > agreement_tol * max(1.0, abs(quad)):
        raise NumericalError(
            f"cross-term routes disagree: quadrature {quad:.3e} vs bilinear {bilinear:.3e}")
    return complex(-first * quad)


def first_factor_bookkeeping(p: PointNM, n_samples: int = 512) -> tuple[complex, complex]:
    """avg(zeta/2 + ell) and its coordinate form -t^-1/2 + hhat^M."""
    zeta, ell = zeta_and_ell(p)
    val = 0.5 * zeta.circle_average() + ell.circle_average()
    fc = flat_coordinates(p, T_max=2, n_samples=n_samples)
    return complex(val), complex(-0.5 * fc.t[-1] + fc.hhat[p.M])


def potential_value(p: PointNM, include_fnm: bool = False, **kw) -> PotentialValue:
    dt = double_contour_term(p)
    ct = cross_term(p, **kw)
    return PotentialValue(dt, ct, include_fnm)


# -- finite-dimensional part --------------------------------------------------------------


def fnm_third_derivative(p: PointNM, u: Label, v: Label, w: Label) -> complex:
    """-(res_inf + res_0) of (d_u ell d_v ell d_w ell) / (z^2 ell') dz."""
    for lbl in (u, v, w):
        if lbl[0] == "t":
            raise ValueError("labels must lie in the merged-part block (h, hh)")
    prod = LaurentSeries.const(1.0)
    for lbl in (u, v, w):
        prod = prod * frame_zeta_ell(p, lbl)[1]
    lp = p.ell().derivative()
    depth = prod.hi - prod.lo + 4
    res_inf = -(prod * reciprocal_onesided(lp, "infinity", depth)).coeff(1)
    res_zero = (prod * reciprocal_onesided(lp, "zero", depth)).coeff(1)
    return complex(-(res_inf + res_zero))


# -- third derivatives by exact coordinate flows -------------------------------------------


def _phi(p: PointNM, T_max: int, n_samples: int) -> complex:
    return double_contour_term(p) + cross_term(p, T_max, n_samples)


def _fd3(p: PointNM, u: Label, v: Label, w: Label, h: float,
         T_max: int, n_samples: int) -> complex:
    total = 0.0 + 0.0j
    for s1, s2, s3 in itertools.product((1, -1), repeat=3):
        deltas: dict = {}
        for s, lbl in ((s1, u), (s2, v), (s3, w)):
            deltas[lbl] = deltas.get(lbl, 0.0) + s * h
        q = flow_to(p, deltas, n_samples)
        total += s1 * s2 * s3 * _phi(q, T_max, n_samples)
    return total / (8 * h ** 3)


def potential_third_derivative(p: PointNM, u: Label, v: Label, w: Label,
                               step: float = 1e-2, T_max: int = 16,
                               n_samples: int = 512, richardson: bool = True) -> complex:
    """Third derivative of the potential, with the residue augmentation on
    merged-part triples (where the contour terms miss exactly the F part)."""
    d_h = _fd3(p, u, v, w, step, T_max, n_samples)
    if richardson:
        d_h2 = _fd3(p, u, v, w, step / 2, T_max, n_samples)
        d_h = (4 * d_h2 - d_h) / 3
    if all(lbl[0] != "t" for lbl in (u, v, w)):
        d_h += fnm_third_derivative(p, u, v, w)
    return complex(d_h)


# -- WDVV ------------------------------------------------------------------------------------


@dataclass
class WdvvReport:
    labels: list
    inner: list
    residual: float
    tail_estimate: float
    tensor: np.ndarray
    unity_residual: float


def wdvv_check(p: PointNM, cutoff: int = 2, margin: int | None = None,
               n_samples: int = 512, tensor: np.ndarray | None = None,
               labels: list | None = None, inner: list | None = None) -> WdvvReport:
    """Associativity residual of the raised structure constants.

    The 3-tensor is banded: entries vanish unless the t-indices sum into a
    window set by the support of ell, so the contraction index must run over
    a wider paired range (cutoff + margin) than the tested quadruples
    (cutoff).  The tail estimate reports the largest structure constant that
    sticks out at the contraction boundary.
    """
    if margin is None:
        margin = cutoff + p.N + p.M + 8
    if labels is None:
        labels = all_labels(p.N, p.M, paired_t_range(cutoff + margin))
    if inner is None:
        inner = [lbl for lbl in labels
                 if lbl[0] != "t" or -cutoff - 1 <= lbl[1] <= cutoff]
    L = len(labels)
    if tensor is None:
        tensor = np.empty((L, L, L), dtype=np.complex128)
        inner_set = set(inner)
        for iu in range(L):
            for iv in range(iu, L):
                for iw in range(iv, L):
                    trip = (labels[iu], labels[iv], labels[iw])
                    # only tensor slices with >= 2 inner slots enter the commutator
                    if sum(lbl in inner_set for lbl in trip) < 2:
                        val = 0.0
                    else:
                        val = three_tensor(p, *trip, n_samples)
                    for a, b, c in itertools.permutations((iu, iv, iw)):
                        tensor[a, b, c] = val
    eta_inv = np.array([[gram_flat_inverse(x, y, p.N, p.M) for y in labels] for x in labels])
    cup = np.einsum("uve,es->uvs", tensor, eta_inv)
    sel = np.array([labels.index(lbl) for lbl in inner])
    core = cup[np.ix_(sel, sel, range(L))]             # c_{uv}^e: u, v inner, e anywhere
    wing = cup[np.ix_(range(L), sel, sel)]             # c_{ew}^s: w, s inner
    lhs = np.einsum("uve,ews->uvws", core, wing)
    residual = float(np.max(np.abs(lhs - lhs.transpose(0, 2, 1, 3))))
    e_idx = labels.index(("hh", p.M))
    unity_res = float(np.max(np.abs(cup[e_idx][np.ix_(sel, sel)] - np.eye(len(sel)))))
    ts = [i for (k, i) in labels if k == "t"]
    tail = 0.0
    if ts:
        edge = (min(ts), max(ts))
        for iu in sel:
            for iv in sel:
                for ie, lbl in enumerate(labels):
                    if lbl[0] == "t" and lbl[1] in edge:
                        tail = max(tail, float(abs(cup[iu, iv, ie])))
    return WdvvReport(labels, inner, residual, tail, tensor, unity_res)


# -- Euler homogeneity --------------------------------------------------------------------


@dataclass
class EulerReport:
    scaling_identity_residual: float
    homogeneity_residual: float
    checked: list


def euler_homogeneity_check(p: PointNM, labels: list | None = None, step: float = 1e-3,
                            n_samples: int = 512) -> EulerReport:
    """Quasi-homogeneity E(c_uvw) = (2 - deg_u - deg_v - deg_w) c_uvw by finite flow."""
    if labels is None:
        labels = all_labels(p.N, p.M, range(-2, 2))
    exact = euler_scaling_identity_residual(p)
    pp, pm = euler_scale(p, step), euler_scale(p, -step)
    worst = 0.0
    checked = []
    for trip in itertools.combinations_with_replacement(labels, 3):
        c0 = three_tensor(p, *trip, n_samples)
        cp = three_tensor(pp, *trip, n_samples)
        cm = three_tensor(pm, *trip, n_samples)
        lie = (cp - cm) / (2 * step)
        weight = 2.0 - sum(euler_degree(lbl, p.N, p.M) for lbl in trip)
        res = abs(lie - weight * c0) / max(1.0, abs(c0))
        checked.append((trip, res))
        worst = max(worst, res)
    return EulerReport(exact, worst, checked)


# -- reduction to the finite-dimensional manifold --------------------------------------------


@dataclass
class ReductionReport:
    eps_values: list
    tensor_errors: list          # max |c - fnm| over merged-part triples, per eps
    restriction_errors: list     # |potential restriction + eps res_0 ell|, per eps
    wdvv_residuals: list         # merged-part WDVV residual, per eps
    monotone: bool


def reduction_point(ell: LaurentSeries, N: int, M: int, eps: complex,
                    K: int = 32) -> PointNM:
    """The slice point (a, a_hat) = (ell, ell - eps z)."""
    from .config import Window

    return assemble(N, M, LaurentSeries.monomial(1, eps), ell, Window.for_point(N, M, K))


def reduction_limit(ell: LaurentSeries, N: int, M: int, eps_values=(1e-1, 1e-2, 1e-3),
                    n_samples: int = 512) -> ReductionReport:
    labels = all_labels(N, M, [])
    tensor_errors, restriction_errors, wdvv_residuals = [], [], []
    for eps in eps_values:
        p = reduction_point(ell, N, M, eps)
        fnm_vals = {}
        err = 0.0
        L = len(labels)
        tensor = np.empty((L, L, L), dtype=np.complex128)
        for iu in range(L):
            for iv in range(iu, L):
                for iw in range(iv, L):
                    alg = three_tensor(p, labels[iu], labels[iv], labels[iw], n_samples)
                    ref = fnm_vals.setdefault(
                        (iu, iv, iw), fnm_third_derivative(p, labels[iu], labels[iv], labels[iw]))
                    err = max(err, abs(alg - ref))
                    for a, b, c in itertools.permutations((iu, iv, iw)):
                        tensor[a, b, c] = alg
        tensor_errors.append(err)
        # restriction identity: contour part of the potential equals -eps res_0 ell
        val = double_contour_term(p) + cross_term(p, n_samples=n_samples)
        restriction_errors.append(abs(val + eps * ell.residue_zero()))
        wdvv_residuals.append(wdvv_check(p, labels=labels, tensor=tensor).residual)
    monotone = all(tensor_errors[i + 1] < tensor_errors[i]
                   for i in range(len(tensor_errors) - 1))
    return ReductionReport(list(eps_values), tensor_errors, restriction_errors,
                           wdvv_residuals, monotone)
