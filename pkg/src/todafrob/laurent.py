"""Truncated Laurent series over complex doubles.

A series is a finite coefficient window [lo, hi]; everything outside is an
implicit zero.  Arithmetic is exact on the support of the result; clipping to
a :class:`~todafrob.config.Window` is explicit and sets a ``truncated`` flag,
never silent.  The same type carries two-sided annulus expansions and the
one-sided expansions at z=0 / z=infinity that the residue calculus needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .config import Window
from .errors import NumericalError, WindowOverflowError


def _as_coeffs(values) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=np.complex128))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("coefficients must be a nonempty 1-d sequence")
    return arr


@dataclass(frozen=True)
class LaurentSeries:
    """Coefficients of z^k for k in [lo, lo + len(coeffs) - 1]."""

    lo: int
    coeffs: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs))

    # -- construction helpers -------------------------------------------------

    @classmethod
    def zero(cls) -> "LaurentSeries":
        return cls(0, [0.0])

    @classmethod
    def const(cls, c) -> "LaurentSeries":
        return cls(0, [c])

    @classmethod
    def monomial(cls, k: int, c=1.0) -> "LaurentSeries":
        return cls(k, [c])

    @classmethod
    def from_pairs(cls, pairs: dict) -> "LaurentSeries":
        if not pairs:
            return cls.zero()
        lo, hi = min(pairs), max(pairs)
        coeffs = np.zeros(hi - lo + 1, dtype=np.complex128)
        for k, c in pairs.items():
            coeffs[k - lo] = c
        return cls(lo, coeffs)

    # -- basic queries ---------------------------------------------------------

    @property
    def hi(self) -> int:
        return self.lo + len(self.coeffs) - 1

    def coeff(self, k: int) -> complex:
        if self.lo <= k <= self.hi:
            return complex(self.coeffs[k - self.lo])
        return 0.0 + 0.0j

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= tol))

    def norm(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def trimmed(self) -> "LaurentSeries":
        nz = np.nonzero(self.coeffs)[0]
        if nz.size == 0:
            return LaurentSeries(0, [0.0], self.truncated)
        return LaurentSeries(self.lo + nz[0], self.coeffs[nz[0] : nz[-1] + 1].copy(), self.truncated)

    def support(self):
        f = self.trimmed()
        return (f.lo, f.hi) if not f.is_zero() else None

    def __repr__(self):
        f = self.trimmed()
        terms = [f"{c:.4g}*z^{k}" for k, c in zip(range(f.lo, f.hi + 1), f.coeffs) if c != 0]
        body = " + ".join(terms) if terms else "0"
        return f"LaurentSeries({body}{', truncated' if self.truncated else ''})"

    # -- ring operations -------------------------------------------------------

    def __add__(self, other):
        other = _coerce(other)
        lo = min(self.lo, other.lo)
        hi = max(self.hi, other.hi)
        coeffs = np.zeros(hi - lo + 1, dtype=np.complex128)
        coeffs[self.lo - lo : self.hi - lo + 1] += self.coeffs
        coeffs[other.lo - lo : other.hi - lo + 1] += other.coeffs
        return LaurentSeries(lo, coeffs, self.truncated or other.truncated)

    __radd__ = __add__

    def __neg__(self):
        return LaurentSeries(self.lo, -self.coeffs, self.truncated)

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) + (-self)

    def __mul__(self, other):
        if np.isscalar(other):
            return self.scale(other)
        other = _coerce(other)
        coeffs = np.convolve(self.coeffs, other.coeffs)
        return LaurentSeries(self.lo + other.lo, coeffs, self.truncated or other.truncated)

    __rmul__ = __mul__

    def scale(self, c) -> "LaurentSeries":
        return LaurentSeries(self.lo, self.coeffs * complex(c), self.truncated)

    def shift(self, k: int) -> "LaurentSeries":
        """Multiply by z^k."""
        return LaurentSeries(self.lo + k, self.coeffs, self.truncated)

    # -- window handling --------------------------------------------------------

    def clip(self, window: Window, strict: bool = False) -> "LaurentSeries":
        """Restrict support to ``window``; flags (or raises) if nonzero mass is dropped."""
        lo = max(self.lo, window.lo)
        hi = min(self.hi, window.hi)
        if lo > hi:
            dropped = bool(np.any(self.coeffs != 0))
            if dropped and strict:
                raise WindowOverflowError("series lies entirely outside the window")
            return LaurentSeries(window.lo, [0.0], self.truncated or dropped)
        head = self.coeffs[: lo - self.lo]
        tail = self.coeffs[hi - self.lo + 1 :]
        dropped = bool(np.any(head != 0) or np.any(tail != 0))
        if dropped and strict:
            raise WindowOverflowError(f"support [{self.lo},{self.hi}] overflows window [{window.lo},{window.hi}]")
        return LaurentSeries(lo, self.coeffs[lo - self.lo : hi - self.lo + 1].copy(), self.truncated or dropped)

    # -- projections -------------------------------------------------------------

    def project(self, part) -> "LaurentSeries":
        """Keep the exponents selected by ``part``: '>=0', '>0', '<=0', '<0' or (a, b)."""
        if isinstance(part, tuple):
            a, b = part
        elif part == ">=0":
            a, b = 0, None
        elif part == ">0":
            a, b = 1, None
        elif part == "<=0":
            a, b = None, 0
        elif part == "<0":
            a, b = None, -1
        else:
            raise ValueError(f"unknown projection {part!r}")
        lo = self.lo if a is None else max(self.lo, a)
        hi = self.hi if b is None else min(self.hi, b)
        if lo > hi:
            return LaurentSeries(0, [0.0], self.truncated)
        return LaurentSeries(lo, self.coeffs[lo - self.lo : hi - self.lo + 1].copy(), self.truncated)

    def pi_map(self) -> "LaurentSeries":
        """f_{>=0} - f_{<0}."""
        return self.project(">=0") - self.project("<0")

    # -- calculus -----------------------------------------------------------------

    def derivative(self) -> "LaurentSeries":
        ks = np.arange(self.lo, self.hi + 1)
        return LaurentSeries(self.lo - 1, self.coeffs * ks, self.truncated).trimmed()

    def z_derivative(self) -> "LaurentSeries":
        """z * d/dz, window preserving."""
        ks = np.arange(self.lo, self.hi + 1)
        return LaurentSeries(self.lo, self.coeffs * ks, self.truncated)

    def residue_zero(self) -> complex:
        """Residue of f dz at z=0."""
        return self.coeff(-1)

    def residue_infinity(self) -> complex:
        """Residue of f dz at z=infinity (minus the z^-1 coefficient)."""
        return -self.coeff(-1)

    def circle_average(self) -> complex:
        """(1/2 pi i) contour integral of f dz/z, i.e. the z^0 coefficient."""
        return self.coeff(0)

    # -- evaluation and sampling ----------------------------------------------------

    def evaluate(self, points):
        pts = np.asarray(points, dtype=np.complex128)
        ks = np.arange(self.lo, self.hi + 1)
        return (self.coeffs[None, :] * np.power(pts[..., None], ks)).sum(axis=-1)

    def to_samples(self, n: int) -> "CircleSamples":
        if n < len(self.coeffs):
            raise WindowOverflowError(f"window width {len(self.coeffs)} exceeds {n} samples")
        wrapped = np.zeros(n, dtype=np.complex128)
        ks = np.arange(self.lo, self.hi + 1)
        np.add.at(wrapped, ks % n, self.coeffs)
        return CircleSamples(n, n * np.fft.ifft(wrapped))


def _coerce(x) -> LaurentSeries:
    if isinstance(x, LaurentSeries):
        return x
    if np.isscalar(x):
        return LaurentSeries.const(x)
    raise TypeError(f"cannot coerce {type(x)} to LaurentSeries")


@dataclass(frozen=True)
class CircleSamples:
    """Values at the n-th roots of unity, z_j = exp(2 pi i j / n)."""

    n: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.complex128))
        if len(self.values) != self.n:
            raise ValueError("sample count mismatch")

    @property
    def points(self) -> np.ndarray:
        return np.exp(2j * np.pi * np.arange(self.n) / self.n)

    def to_series(self, lo: int, hi: int) -> LaurentSeries:
        if hi - lo + 1 > self.n:
            raise WindowOverflowError("requested window wider than sample count")
        spectrum = np.fft.fft(self.values) / self.n
        ks = np.arange(lo, hi + 1)
        return LaurentSeries(lo, spectrum[ks % self.n])


def circle_transform(obj, n: int | None = None, lo: int | None = None, hi: int | None = None):
    """Discrete Fourier bridge between coefficient windows and circle samples."""
    if isinstance(obj, LaurentSeries):
        if n is None:
            raise ValueError("n_samples required for series -> samples")
        return obj.to_samples(n)
    if isinstance(obj, CircleSamples):
        if lo is None or hi is None:
            raise ValueError("target window required for samples -> series")
        return obj.to_series(lo, hi)
    raise TypeError(f"cannot transform {type(obj)}")


def arithmetic(f: LaurentSeries, g: LaurentSeries, kind: str, c=None,
               window: Window | None = None, strict: bool = False) -> LaurentSeries:
    """Dispatch form of the ring operations, with optional window clipping."""
    if kind == "add":
        out = f + g
    elif kind == "sub":
        out = f - g
    elif kind == "mul":
        out = f * g
    elif kind == "scale":
        out = f.scale(c)
    else:
        raise ValueError(f"unknown arithmetic kind {kind!r}")
    if window is not None:
        out = out.clip(window, strict=strict)
    return out


# -- one-sided expansions ------------------------------------------------------------


def _onesided_parts(f: LaurentSeries, anchor: str):
    """Split f = c * z^d * (1 + u) with u one-sided away from the anchor exponent."""
    f = f.trimmed()
    if anchor == "infinity":
        d, c = f.hi, f.coeffs[-1]
        u = f.coeffs[:-1][::-1] / c  # u[r] multiplies z^{-r-1} relative to the top
    elif anchor == "zero":
        d, c = f.lo, f.coeffs[0]
        u = f.coeffs[1:] / c
    else:
        raise ValueError(f"unknown anchor {anchor!r}")
    if c == 0:
        raise NumericalError("zero leading coefficient at the anchor")
    return d, c, u


def _binom_series(u: np.ndarray, alpha: float, depth: int) -> np.ndarray:
    """(1 + sum u_r x^r)^alpha to x^depth via the standard first-order recurrence."""
    w = np.zeros(depth + 1, dtype=np.complex128)
    w[0] = 1.0
    uu = np.zeros(depth + 1, dtype=np.complex128)
    uu[1 : 1 + min(len(u), depth)] = u[:depth]
    for m in range(1, depth + 1):
        r = np.arange(1, m + 1)
        w[m] = np.sum(((alpha + 1) * r - m) * uu[1 : m + 1] * w[m - 1 :: -1][: m]) / m
    return w


def _exp_series(u: np.ndarray, depth: int) -> np.ndarray:
    """exp(sum_{r>=1} u_r x^r) to x^depth."""
    w = np.zeros(depth + 1, dtype=np.complex128)
    w[0] = 1.0
    uu = np.zeros(depth + 1, dtype=np.complex128)
    uu[1 : 1 + min(len(u), depth)] = u[:depth]
    for m in range(1, depth + 1):
        r = np.arange(1, m + 1)
        w[m] = np.sum(r * uu[1 : m + 1] * w[m - 1 :: -1][: m]) / m
    return w


def _from_onesided(values: np.ndarray, top: int, anchor: str, trunc: bool) -> LaurentSeries:
    if anchor == "infinity":
        return LaurentSeries(top - len(values) + 1, values[::-1].copy(), trunc)
    return LaurentSeries(top, values.copy(), trunc)


def reciprocal_onesided(f: LaurentSeries, anchor: str, depth: int) -> LaurentSeries:
    """1/f as the one-sided expansion at the anchor, to the given depth."""
    d, c, u = _onesided_parts(f, anchor)
    w = _binom_series(u, -1.0, depth)
    return _from_onesided(w / c, -d, anchor, f.truncated)


def exp_onesided(f: LaurentSeries, anchor: str, depth: int) -> LaurentSeries:
    """exp(f) for f one-sided with vanishing anchor constant term allowed via prefactor."""
    f = f.trimmed()
    c0 = f.coeff(0)
    if anchor == "infinity":
        if f.hi > 0:
            raise NumericalError("exp at infinity needs exponents <= 0")
        u = np.zeros(depth + 1, dtype=np.complex128)
        for k in range(1, min(depth, -f.lo) + 1):
            u[k] = f.coeff(-k)
        w = _exp_series(u[1:], depth)
        return _from_onesided(np.exp(c0) * w, 0, "infinity", f.truncated)
    if f.lo < 0:
        raise NumericalError("exp at zero needs exponents >= 0")
    u = np.zeros(depth + 1, dtype=np.complex128)
    for k in range(1, min(depth, f.hi) + 1):
        u[k] = f.coeff(k)
    w = _exp_series(u[1:], depth)
    return _from_onesided(np.exp(c0) * w, 0, "zero", f.truncated)


def ipow(f: LaurentSeries, n: int, window: Window | None = None) -> LaurentSeries:
    """Integer power, optionally clipped to a window between multiplications."""
    if n == 0:
        return LaurentSeries.const(1.0)
    if n < 0:
        raise ValueError("use reciprocal_onesided / fractional_power for negative powers")
    out = None
    base = f
    k = n
    while k:
        if k & 1:
            out = base if out is None else out * base
            if window is not None:
                out = out.clip(window)
        k >>= 1
        if k:
            base = base * base
            if window is not None:
                base = base.clip(window)
    return out


def fractional_power(f: LaurentSeries, p: Fraction | tuple, anchor: str,
                     depth: int, check_tol: float = 1e-9) -> LaurentSeries:
    """f^p as a one-sided expansion at z=0 or z=infinity.

    The branch is fixed by the principal root of the leading coefficient, so
    for monic tops the result expands as z^{d p} + lower order.  The result is
    verified by raising it back to the inverse power.
    """
    if isinstance(p, tuple):
        p = Fraction(*p)
    else:
        p = Fraction(p)
    d, c, u = _onesided_parts(f, anchor)
    if (d * p.numerator) % p.denominator != 0:
        raise NumericalError(f"anchor exponent {d} incompatible with power {p}")
    alpha = float(p)
    w = _binom_series(u, alpha, depth)
    lead = np.exp(alpha * np.log(complex(c)))
    out = _from_onesided(lead * w, (d * p.numerator) // p.denominator, anchor, f.truncated)
    # audit: out^(1/p) on the accurate overlap should reproduce f
    back = _onesided_parts(out, anchor)
    wb = _binom_series(back[2], 1.0 / alpha, min(depth, len(u)))
    ref = np.exp((1.0 / alpha) * np.log(complex(back[1]))) * wb
    got = np.zeros_like(ref)
    got[0] = c
    take = min(len(ref) - 1, len(u))
    got[1 : take + 1] = c * u[:take]
    err = np.max(np.abs(ref - got)) / max(abs(c), 1.0)
    if err > check_tol:
        raise NumericalError(f"fractional power verification failed (err={err:.2e})")
    return out


# -- division on the circle ------------------------------------------------------------


def divide_on_circle(f: LaurentSeries, g: LaurentSeries, lo: int, hi: int,
                     n: int = 512, floor: float = 1e-13) -> LaurentSeries:
    """Annulus expansion of f/g near |z|=1 via pointwise sample division."""
    zf = f.to_samples(n).values
    zg = g.to_samples(n).values
    if np.min(np.abs(zg)) < floor:
        raise NumericalError("divisor vanishes on the sampled circle")
    return CircleSamples(n, zf / zg).to_series(lo, hi)


# -- functional inversion ---------------------------------------------------------------


def winding_number(values: np.ndarray, reject_half: bool = True) -> int:
    """Winding of a sampled closed curve around 0, from unwrapped arguments."""
    w = np.angle(np.concatenate([values, values[:1]]))
    total = float(np.unwrap(w)[-1] - w[0])
    turns = total / (2 * np.pi)
    if reject_half and abs(turns - round(turns)) > 0.25:
        raise NumericalError(f"ambiguous winding {turns:.3f}; increase samples")
    return round(turns)


def newton_invert_samples(f_eval, df_eval, targets: np.ndarray, seeds: np.ndarray,
                          tol: float = 1e-13, maxit: int = 60) -> np.ndarray:
    """Solve f(w) = target for each sample by vectorized Newton iteration."""
    w = np.array(seeds, dtype=np.complex128)
    targets = np.asarray(targets, dtype=np.complex128)
    active = np.ones(len(w), dtype=bool)
    scale = np.maximum(np.abs(targets), 1.0)
    for _ in range(maxit):
        r = f_eval(w[active]) - targets[active]
        done = np.abs(r) <= tol * scale[active]
        if np.all(done):
            active[active] = False
            break
        d = df_eval(w[active])
        if np.any(np.abs(d) < 1e-14):
            raise NumericalError("vanishing derivative during sample inversion")
        w[active] = w[active] - r / d
        idx = np.where(active)[0][done]
        active[idx] = False
        if not np.any(active):
            break
    if np.any(active):
        bad = np.where(active)[0][:5]
        raise NumericalError(f"Newton failed to invert samples at indices {bad.tolist()}")
    return w


class InverseMap:
    """Compositional inverse of an injective map on a neighborhood of |z|=1.

    Precomputes matched pairs (gamma_j, z_j) with gamma_j = f(z_j) on the unit
    circle; calls solve f(w) = target seeded from the nearest precomputed point.
    """

    def __init__(self, f_eval, df_eval, n: int = 512, tol: float = 1e-12):
        self._f = f_eval
        self._df = df_eval
        self.tol = tol
        zs = np.exp(2j * np.pi * np.arange(n) / n)
        if np.min(np.abs(df_eval(zs))) < 1e-10:
            raise NumericalError("derivative vanishes on the circle; map is not invertible there")
        self.circle = zs
        self.gamma = f_eval(zs)
        winding = winding_number(self.gamma)
        if winding != 1:
            raise NumericalError(f"image curve has winding number {winding}, expected 1")

    def __call__(self, targets) -> np.ndarray:
        targets = np.atleast_1d(np.asarray(targets, dtype=np.complex128))
        seeds = self.circle[np.argmin(np.abs(self.gamma[None, :] - targets[:, None]), axis=1)]
        return newton_invert_samples(self._f, self._df, targets, seeds, tol=self.tol)


def functional_inverse(f: LaurentSeries, n: int = 512, tol: float = 1e-12) -> InverseMap:
    """Invert a Laurent series restricted to a neighborhood of the unit circle."""
    df = f.derivative()
    return InverseMap(lambda w: f.evaluate(w), lambda w: df.evaluate(w), n=n, tol=tol)
