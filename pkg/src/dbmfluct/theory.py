"""Closed-form fluctuation statistics of the limiting Gaussian field.

``U_j = <Y_{t_j}, 1/(x - z_j)>`` has mean

    mu_j = 1/2 (2/beta - 1) h''(z_j)/h'(z_j) + <Y0, h'(z_j)/(x - h(z_j))>

and (pseudo-)covariance, for ``t_a >= t_b`` and ``v = h_{t_a}^{t_b}``,

    Lambda_ab = (2/beta) v'(z_a) S[h_{t_b}](v(z_a), z_b),

with the two-point Schwarzian ``S``. Polynomial statistics are handled by a
Laurent expansion of ``g_t(e^t/z)`` and by double contour integrals over
circles in the ``w`` plane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import measures as ms
from .errors import ContourError, DomainError
from .holoflow import FlowMap, schwarzian

CONTOUR_START = 128
CONTOUR_CAP = 2**13
CONTOUR_TOL = 1e-9
_CHUNK = 1 << 20


@dataclass(frozen=True)
class FluctQuery:
    """Times and spectral points of a resolvent fluctuation query."""

    beta: float
    entries: tuple
    y0: ms.SignedAtomicMeasure = field(default_factory=ms.SignedAtomicMeasure)

    def __post_init__(self):
        ents = tuple((float(t), complex(z)) for t, z in self.entries)
        object.__setattr__(self, "entries", ents)
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        for t, z in ents:
            if t < 0:
                raise ValueError("query times must be nonnegative")
            if z.imag == 0:
                raise ValueError("query points must lie off the real axis")


@dataclass
class TheoryResult:
    mean: np.ndarray
    cov: np.ndarray

    def to_json(self) -> dict:
        return {
            "mean": [[float(m.real), float(m.imag)] for m in self.mean],
            "cov": [[[float(c.real), float(c.imag)] for c in row] for row in self.cov],
        }

    @classmethod
    def from_json(cls, obj):
        mean = np.array([complex(*p) for p in obj["mean"]])
        cov = np.array([[complex(*p) for p in row] for row in obj["cov"]])
        return cls(mean, cov)


# -- resolvent statistics ----------------------------------------------------

def mean_stieltjes(q: FluctQuery, fm: FlowMap) -> np.ndarray:
    out = np.empty(len(q.entries), dtype=complex)
    c = 0.5 * (2.0 / q.beta - 1.0)
    for k, (t, z) in enumerate(q.entries):
        j = fm.h_jet(t, z)
        y0 = q.y0.pair(lambda x: j.d1 / (x - j.value)) if q.y0.locations else 0.0
        out[k] = c * j.d2 / j.d1 + y0
    return out


def _pair_cov(fm: FlowMap, beta, ta, za, tb, zb):
    """Covariance of ``U(ta, za)`` and ``U(tb, zb)`` with ``ta >= tb``."""
    if tb == 0:
        return 0j
    if ta == tb and za == zb:
        return schwarzian(fm.h_jet(ta, za)) / (3.0 * beta)
    wa = fm.h(ta, za)
    wb = fm.h(tb, zb)
    ga = fm.g(tb, wa)
    # h_{tb} at x = h_{ta}^{tb}(za) has preimage wa
    vprime = 1.0 if ta == tb else ga.d1 / fm.g(ta, wa).d1
    return (2.0 / beta) * vprime * fm.schwarzian2_pre(tb, wa, wb)


def cov_stieltjes(q: FluctQuery, fm: FlowMap) -> np.ndarray:
    """Pseudo-covariance matrix ``E[(U_a - mu_a)(U_b - mu_b)]`` (no conjugation)."""
    m = len(q.entries)
    out = np.empty((m, m), dtype=complex)
    for a in range(m):
        for b in range(a, m):
            (t1, z1), (t2, z2) = q.entries[a], q.entries[b]
            if (t1, z1.real, z1.imag) < (t2, z2.real, z2.imag):
                (t1, z1), (t2, z2) = (t2, z2), (t1, z1)
            out[a, b] = out[b, a] = _pair_cov(fm, q.beta, t1, z1, t2, z2)
    return out


def theory(q: FluctQuery, fm: FlowMap) -> TheoryResult:
    return TheoryResult(mean_stieltjes(q, fm), cov_stieltjes(q, fm))


def equilibrium_mean(beta, sigma, z) -> complex:
    """Stationary mean of ``<Y, 1/(x - z)>``."""
    f = complex(ms.semicircle_stieltjes(sigma, z))
    z = complex(z)
    return (2.0 / beta - 1.0) * sigma**2 * f / (z * z - 4.0 * sigma**2)


def equilibrium_cov(beta, sigma, dt, z1, z2) -> complex:
    """Stationary covariance of resolvent statistics separated by time ``dt >= 0``."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    f1 = complex(ms.semicircle_stieltjes(sigma, z1))
    f2 = complex(ms.semicircle_stieltjes(sigma, z2))
    d1 = complex(ms.semicircle_stieltjes(sigma, z1, 1))
    d2 = complex(ms.semicircle_stieltjes(sigma, z2, 1))
    e = math.exp(-dt)
    return e * 2.0 * sigma**2 * d1 * d2 / (beta * (sigma**2 * f1 * f2 * e - 1.0) ** 2)


# -- polynomial statistics ---------------------------------------------------

@dataclass(frozen=True)
class LaurentCoeffs:
    """Coefficients ``a_{-1}, ..., a_N`` of ``g_t(e^t / z) = sum a_k z^k``."""

    coefficients: np.ndarray
    time: float
    truncation: int

    def a(self, k):
        return float(self.coefficients[k + 1])


def laurent_coeffs(x0, sigma, t, N) -> LaurentCoeffs:
    if N < 1:
        raise ValueError("truncation must be at least 1")
    a = np.zeros(N + 2)
    a[0] = 1.0
    pref = -(sigma**2) * math.expm1(-2.0 * t)
    for k in range(1, N + 1):
        a[k + 1] = pref * math.exp(-(k - 1) * t) * ms.moment(x0, k - 1)
    return LaurentCoeffs(a, float(t), int(N))


def power_coeffs(lc: LaurentCoeffs, n):
    """``A_{s,n}`` for ``s = -n..n`` as an array indexed by ``s + n``."""
    p = lc.coefficients
    out = np.array([1.0])
    for _ in range(n):
        out = np.convolve(out, p)[: 2 * n + 1]
    res = np.zeros(2 * n + 1)
    res[: len(out)] = out[: 2 * n + 1]
    return res


def poly_variance(n, t, beta, x0, sigma) -> float:
    """Variance of ``<Y_t, x^n>`` by residue pairing of Laurent coefficients."""
    if n < 1:
        raise ValueError("n must be at least 1")
    A = power_coeffs(laurent_coeffs(x0, sigma, t, 2 * n), n)
    return (2.0 / beta) * math.fsum(s * A[n - s] * A[n + s] for s in range(1, n + 1))


def poly_variance_limit(n, beta, sigma) -> float:
    """Leading stationary term; zero for odd ``n``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if n % 2:
        return 0.0
    h = n // 2
    return 4.0 * sigma ** (2 * n) / beta * sum(s * math.comb(n, h + s) ** 2 for s in range(1, h + 1))


def poly_variance_equilibrium(n, beta, sigma) -> float:
    """Stationary variance of ``<Y, x^n>`` for every ``n`` (odd included)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    tot = sum(s * math.comb(n, (n + s) // 2) ** 2 for s in range(n % 2 or 2, n + 1, 2))
    return 2.0 * sigma ** (2 * n) / beta * tot


def chebyshev_variance(coeffs, beta, sigma) -> float:
    """Stationary variance of ``<Y, F>`` for ``F(x) = sum_k coeffs[k] x^k``."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    d = len(c) - 1
    if d < 1:
        return 0.0
    theta = (np.arange(d + 1) + 0.5) * np.pi / (d + 1)
    vals = np.polynomial.polynomial.polyval(2.0 * sigma * np.cos(theta), c)
    k = np.arange(1, d + 1)
    ck = (2.0 / (d + 1)) * (np.cos(np.outer(k, theta)) @ vals)
    return float(np.sum(k * ck**2) / (2.0 * beta))


# -- contour representation --------------------------------------------------

def _poly(coeffs):
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or len(c) == 0:
        raise ValueError("polynomial needs at least one coefficient")
    return c


def contour_radius(fm: FlowMap, t):
    return 2.0 * max(ms.support_bound(fm.x0) * math.exp(t), 2.0 * fm.sigma * math.exp(t)) + 1.0


def _double_trapezoid(kernel, r1, r2):
    """``sum_jk K(w1_j, w2_k) w1_j w2_k / N^2`` with node doubling on both circles."""
    prev = None
    n = CONTOUR_START
    while True:
        th = 2.0 * np.pi * np.arange(n) / n
        w1 = r1 * np.exp(1j * th)
        w2 = r2 * np.exp(1j * th)
        k2 = kernel.prepare(w2)
        rows = max(1, _CHUNK // n)
        acc = 0j
        mass = 0.0
        for s in range(0, n, rows):
            blk = w1[s:s + rows]
            terms = kernel(blk, k2) * blk[:, None] * w2[None, :]
            acc += np.sum(terms)
            mass += np.sum(np.abs(terms))
        val = acc / (n * n)
        # a vanishing integral is judged against the integrand size (roundoff floor)
        if prev is not None and abs(val - prev) <= max(CONTOUR_TOL * abs(val), 1e-12 * mass / (n * n)):
            return val
        if n >= CONTOUR_CAP:
            raise ContourError(f"double contour unconverged at {n} nodes", delta=abs(val - prev))
        prev = val
        n *= 2


class _VarKernel:
    def __init__(self, fm, F, t):
        self.fm, self.F, self.t = fm, F, t

    def prepare(self, w2):
        return w2, np.polynomial.polynomial.polyval(self.fm.g_value(self.t, w2), self.F)

    def __call__(self, w1, k2):
        w2, F2 = k2
        F1 = np.polynomial.polynomial.polyval(self.fm.g_value(self.t, w1), self.F)
        return ((F1[:, None] - F2[None, :]) / (w1[:, None] - w2[None, :])) ** 2


class _CovKernel:
    def __init__(self, fm, F1, F2, t1, t2):
        self.fm, self.F1, self.F2, self.t1, self.t2 = fm, F1, F2, t1, t2

    def prepare(self, w2):
        g2 = self.fm.g_value(self.t2, w2)
        return w2, g2, self.fm.g_prime(self.t2, w2), np.polynomial.polynomial.polyval(g2, self.F2)

    def __call__(self, w1, k2):
        w2, g2, gp2, P2 = k2
        P1 = np.polynomial.polynomial.polyval(self.fm.g_value(self.t1, w1), self.F1)
        g21 = self.fm.g_value(self.t2, w1)
        gp21 = self.fm.g_prime(self.t2, w1)
        dw = w1[:, None] - w2[None, :]
        dg = g21[:, None] - g2[None, :]
        s2 = gp21[:, None] * gp2[None, :] / dg**2 - 1.0 / dw**2
        return (P1[:, None] - P2[None, :]) ** 2 * s2


def _check_real(val, what):
    if abs(val.imag) > 1e-8 * (1.0 + abs(val.real)):
        raise ContourError(f"{what} has imaginary residue {val.imag:.3e}", delta=abs(val.imag))
    return float(val.real)


def contour_var(F, t, beta, fm: FlowMap) -> float:
    """Variance of ``<Y_t, F>`` for a real polynomial ``F`` (ascending coefficients)."""
    F = _poly(F)
    if len(np.trim_zeros(F, "b")) <= 1:
        return 0.0
    R = contour_radius(fm, t)
    val = -_double_trapezoid(_VarKernel(fm, F, t), R + 0.5, R) / beta
    return _check_real(val, "contour variance")


def contour_cov(F1, F2, t1, t2, beta, fm: FlowMap) -> float:
    """Covariance of ``<Y_{t1}, F1>`` and ``<Y_{t2}, F2>`` for ``t1 >= t2``."""
    if t1 < t2:
        raise ValueError("contour_cov needs t1 >= t2")
    F1, F2 = _poly(F1), _poly(F2)
    if len(np.trim_zeros(F1, "b")) <= 1 or len(np.trim_zeros(F2, "b")) <= 1:
        return 0.0
    R = contour_radius(fm, t1)
    val = _double_trapezoid(_CovKernel(fm, F1, F2, t1, t2), R + 0.5, R) / beta
    return _check_real(val, "contour covariance")


def contour_mean(F, t, beta, fm: FlowMap, y0: ms.SignedAtomicMeasure | None = None) -> float:
    """Mean of ``<Y_t, F>`` for a real polynomial ``F``.

    Combines the ``(2/beta - 1)`` drift term with ``Y0`` transported along
    the flow; both are single contour integrals in the ``w`` plane.
    """
    F = _poly(F)
    c = 0.5 * (2.0 / beta - 1.0)
    R = contour_radius(fm, t)
    if y0 is not None and y0.locations:
        R = max(R, 2.0 * max(abs(x) for x in y0.locations) + 1.0)

    def integrand(w):
        gw = fm.g_value(t, w)
        Fg = np.polynomial.polynomial.polyval(gw, F)
        a, cc = fm.coefficients(t)
        out = c * Fg * (-cc * fm.f(w, 2)) / fm.g_prime(t, w)
        if y0 is not None and y0.locations:
            xs = np.asarray(y0.locations)[:, None]
            ws = np.asarray(y0.weights)[:, None]
            out = out - Fg * np.sum(ws / (xs - w[None, :]), axis=0)
        return out

    prev = None
    n = 64
    while True:
        th = 2.0 * np.pi * np.arange(n) / n
        w = R * np.exp(1j * th)
        val = np.sum(integrand(w) * w) / n
        if prev is not None and abs(val - prev) < 1e-10 * (1.0 + abs(val)):
            break
        if n >= 2**14:
            raise ContourError("mean contour unconverged", delta=abs(val - prev))
        prev = val
        n *= 2
    return _check_real(val, "contour mean")


def monomial_theory(ks, t, beta, fm: FlowMap, y0=None) -> TheoryResult:
    """Mean vector and covariance matrix of ``<Y_t, x^k>`` for ``k`` in ``ks``."""
    ks = list(ks)
    mean = np.array([contour_mean(_mono(k), t, beta, fm, y0) for k in ks], dtype=complex)
    cov = np.empty((len(ks), len(ks)), dtype=complex)
    for a, ka in enumerate(ks):
        for b in range(a, len(ks)):
            kb = ks[b]
            if ka == kb:
                v = contour_var(_mono(ka), t, beta, fm)
            else:
                v = contour_cov(_mono(ka), _mono(kb), t, t, beta, fm)
            cov[a, b] = cov[b, a] = v
    return TheoryResult(mean, cov)


def _mono(k):
    c = np.zeros(k + 1)
    c[k] = 1.0
    return c
