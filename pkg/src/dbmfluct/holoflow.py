"""Characteristic flow of the limiting Stieltjes transform.

For an initial distribution ``X0`` with Stieltjes transform ``f`` and a
confinement scale ``sigma`` the explicit backward map is

    g_t(w) = exp(-t) w - sigma^2 (exp(t) - exp(-t)) f(w),

and ``h_t`` is its inverse on the half-planes. The Stieltjes transform of the
limit measure ``X_t`` is recovered as

    M(t, z) = (h_t(z) - z exp(t)) / (sigma^2 (exp(t) - exp(-t))) = exp(t) f(h_t(z)).

``h_t`` is computed by Newton's method continued in ``t`` from ``h_0 = id``.
Derivatives of ``h_t`` come from the ``g_t`` jet by implicit differentiation,
never by differencing ``h_t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from . import measures as ms
from .errors import (ContourError, CriticalPointError, DegenerateMapError,
                     DomainError, SolverError)

DIAGONAL_REL = 1e-5
DENSITY_EPS = (1e-2, 5e-3, 2.5e-3)
_CONTINUATION_CURVATURE = 2.0
_MAX_REFINE = 14
_NEWTON_ITERS = 60


@dataclass(frozen=True)
class JetAt:
    """Value and first three complex derivatives of a map at one point."""

    value: complex
    d1: complex
    d2: complex
    d3: complex


IDENTITY_JET = JetAt(0j, 1 + 0j, 0j, 0j)


def compose_jets(outer: JetAt, inner: JetAt) -> JetAt:
    """Jet of ``outer o inner`` given ``outer`` evaluated at ``inner.value``."""
    a1, a2, a3 = outer.d1, outer.d2, outer.d3
    b1, b2, b3 = inner.d1, inner.d2, inner.d3
    return JetAt(
        outer.value,
        a1 * b1,
        a2 * b1 * b1 + a1 * b2,
        a3 * b1**3 + 3 * a2 * b1 * b2 + a1 * b3,
    )


def mobius_jet(a, b, c, d, z) -> JetAt:
    """Jet of ``(a z + b) / (c z + d)`` at ``z``."""
    den = c * z + d
    det = a * d - b * c
    return JetAt((a * z + b) / den, det / den**2, -2 * c * det / den**3, 6 * c * c * det / den**4)


def schwarzian(j: JetAt) -> complex:
    """``v''' / v' - 3/2 (v'' / v')^2`` from a jet."""
    if j.d1 == 0:
        raise DegenerateMapError("Schwarzian of a map with vanishing derivative")
    r = j.d2 / j.d1
    return j.d3 / j.d1 - 1.5 * r * r


def _canonical(z1, z2):
    k1 = (z1.real, z1.imag)
    k2 = (z2.real, z2.imag)
    return (z2, z1, True) if k2 < k1 else (z1, z2, False)


def near_diagonal(z1, z2) -> bool:
    return abs(z1 - z2) < DIAGONAL_REL * (1.0 + abs(z1))


def schwarzian2_jets(z1, j1: JetAt, z2, j2: JetAt) -> complex:
    """Two-point Schwarzian from jets of ``v`` at ``z1`` and ``z2``.

    Symmetric in its arguments bit for bit; below the diagonal threshold
    the one-point limit ``Sv / 6`` is returned.
    """
    z1, z2 = complex(z1), complex(z2)
    a, b, swapped = _canonical(z1, z2)
    ja, jb = (j2, j1) if swapped else (j1, j2)
    if near_diagonal(a, b):
        return schwarzian(ja) / 6.0
    dv = ja.value - jb.value
    dz = a - b
    return ja.d1 * jb.d1 / (dv * dv) - 1.0 / (dz * dz)


def schwarzian2(v, z1, z2) -> complex:
    """Generalized Schwarzian of a map ``v`` (callable returning a :class:`JetAt`)."""
    z1, z2 = complex(z1), complex(z2)
    a, b, _ = _canonical(z1, z2)
    ja = v(a)
    if near_diagonal(a, b):
        return schwarzian(ja) / 6.0
    return schwarzian2_jets(a, ja, b, v(b))


def trapezoid_circle(fn, radius, n_start, tol, n_cap):
    """Integrate ``fn(w) dw`` over ``|w| = radius`` with node doubling.

    Returns ``(value, nodes)``; raises :class:`ContourError` if successive
    estimates still differ by more than ``tol * (1 + |value|)`` at the cap.
    """
    prev = None
    n = n_start
    while True:
        theta = 2.0 * np.pi * np.arange(n) / n
        w = radius * np.exp(1j * theta)
        val = np.sum(fn(w) * 1j * w) * (2.0 * np.pi / n)
        if prev is not None and abs(val - prev) < tol * (1.0 + abs(val)):
            return val, n
        if n >= n_cap:
            delta = abs(val - prev) if prev is not None else float("inf")
            raise ContourError(f"contour quadrature unconverged at {n} nodes", delta=delta)
        prev = val
        n *= 2


@dataclass(frozen=True)
class FlowMap:
    """Analytic flow for a fixed initial distribution and confinement scale."""

    x0: ms.AtomicMeasure | ms.SemicircleMeasure
    sigma: float
    solver_tolerance: float = 1e-13
    continuation_steps: int = 32

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not (0 < self.solver_tolerance <= 1e-8):
            raise ValueError("solver_tolerance must lie in (0, 1e-8]")
        if self.continuation_steps < 1:
            raise ValueError("continuation_steps must be positive")

    # -- scalar helpers ------------------------------------------------------

    def coefficients(self, t):
        """``(exp(-t), sigma^2 (exp(t) - exp(-t)))``."""
        return math.exp(-t), self.sigma**2 * 2.0 * math.sinh(t)

    def b(self, t):
        """``sigma^2 (exp(2t) - 1)``."""
        return self.sigma**2 * math.expm1(2.0 * t)

    def f(self, w, order=0):
        return ms.stieltjes(self.x0, w, order)

    # -- g_t -------------------------------------------------------------------

    def g(self, t, w) -> JetAt:
        a, c = self.coefficients(t)
        w = complex(w)
        f0, f1, f2, f3 = (complex(self.f(w, k)) for k in range(4))
        return JetAt(a * w - c * f0, a - c * f1, -c * f2, -c * f3)

    def g_value(self, t, w):
        """Vectorized ``g_t(w)``."""
        a, c = self.coefficients(t)
        return a * w - c * self.f(w)

    def g_prime(self, t, w):
        a, c = self.coefficients(t)
        return a - c * self.f(w, 1)

    # -- h_t -------------------------------------------------------------------

    def _newton(self, t, w, z):
        a, c = self.coefficients(t)
        tol = self.solver_tolerance * (1.0 + abs(z))
        sign = 1.0 if z.imag > 0 else -1.0

        def resid(u):
            return a * u - c * complex(self.f(u)) - z

        r = resid(w)
        for _ in range(_NEWTON_ITERS):
            if abs(r) <= tol:
                # one polishing step, kept only if it helps
                dF = a - c * complex(self.f(w, 1))
                if dF != 0:
                    u = w - r / dF
                    if u.imag * sign > 0:
                        try:
                            ru = resid(u)
                        except DomainError:
                            ru = None
                        if ru is not None and abs(ru) < abs(r):
                            return u, ru
                return w, r
            dF = a - c * complex(self.f(w, 1))
            if dF == 0:
                break
            step = -r / dF
            lam = 1.0
            accepted = False
            for _ in range(40):
                u = w + lam * step
                if u.imag * sign <= 0:
                    lam *= 0.25
                    continue
                try:
                    ru = resid(u)
                except DomainError:
                    lam *= 0.5
                    continue
                if abs(ru) < abs(r):
                    w, r = u, ru
                    accepted = True
                    break
                lam *= 0.5
            if not accepted:
                break
        if abs(r) <= tol:
            return w, r
        raise SolverError(f"Newton failed for h_t at t={t}, z={z}", last_iterate=w, residual=abs(r))

    def _predict(self, t0, t1, w):
        """Tangent predictor ``dw/dt = -(d g / d t) / g'`` with exponential step."""
        try:
            f0 = complex(self.f(w))
            dgdt = -math.exp(-t0) * w - self.sigma**2 * 2.0 * math.cosh(t0) * f0
            gp = complex(self.g_prime(t0, w))
            if gp == 0:
                return w
            u = w + math.expm1(t1 - t0) * (-dgdt / gp)
        except DomainError:
            return w
        return u if u.imag * w.imag > 0 else w

    def _advance(self, t0, t1, w, z, depth):
        try:
            return self._newton(t1, self._predict(t0, t1, w), z)[0]
        except SolverError:
            if depth >= _MAX_REFINE:
                raise
        mid = 0.5 * (t0 + t1)
        w = self._advance(t0, mid, w, z, depth + 1)
        return self._advance(mid, t1, w, z, depth + 1)

    def schedule(self, t):
        """Continuation times ``0 = t_0 < ... < t_K = t`` with geometric increments."""
        k = np.arange(self.continuation_steps + 1)
        s = np.expm1(_CONTINUATION_CURVATURE * k / self.continuation_steps) / math.expm1(_CONTINUATION_CURVATURE)
        ts = t * s
        ts[-1] = t
        return ts

    def h(self, t, z) -> complex:
        """``h_t(z)``: the preimage of ``z`` under ``g_t`` in the half-plane of ``z``."""
        return _h_cached(self, float(t), complex(z))

    def _h_uncached(self, t, z):
        if z.imag == 0:
            raise DomainError("h_t is defined off the real axis only")
        if t < 0:
            raise ValueError("t must be nonnegative")
        if t == 0:
            return z
        ts = self.schedule(t)
        w = z
        for t0, t1 in zip(ts[:-1], ts[1:]):
            w = self._advance(t0, t1, w, z, 0)
        return w

    def h_jet(self, t, z) -> JetAt:
        z = complex(z)
        if t == 0:
            return JetAt(z, 1 + 0j, 0j, 0j)
        w = self.h(t, z)
        return self._inverse_jet(t, w)

    def _inverse_jet(self, t, w) -> JetAt:
        gj = self.g(t, w)
        g1, g2, g3 = gj.d1, gj.d2, gj.d3
        if abs(g1) < 1e-12 * math.exp(-t):
            raise CriticalPointError(f"g_t' vanishes at w={w} (t={t})")
        return JetAt(w, 1.0 / g1, -g2 / g1**3, (3.0 * g2 * g2 - g1 * g3) / g1**5)

    def flow_between(self, t1, t2, z) -> JetAt:
        """Jet of ``h_{t1}^{t2} = g_{t2} o h_{t1}`` at ``z`` (``t1 >= t2``)."""
        if t1 < t2:
            raise ValueError("flow_between needs t1 >= t2")
        z = complex(z)
        if t1 == t2:
            return JetAt(z, 1 + 0j, 0j, 0j)
        inner = self.h_jet(t1, z)
        if t2 == 0:
            return inner
        return compose_jets(self.g(t2, inner.value), inner)

    def _difference_terms(self, w1, w2):
        """``F = f[w1, w2]`` and ``E1, E2`` with
        ``f'(w1) + f'(w2) - 2F = (w1 - w2)^2 E1`` and ``F^2 - f'(w1) f'(w2) = (w1 - w2)^2 E2``.

        Written so that nothing cancels as ``w2 -> w1``.
        """
        if isinstance(self.x0, ms.SemicircleMeasure):
            q = self.x0.sigma ** 2
            f1, f2 = complex(self.f(w1)), complex(self.f(w2))
            P = f1 * f2
            Q = (1 - q * f1 * f1) * (1 - q * f2 * f2)
            r = 1 - q * P
            return P / r, P * P * (1 + q * P) / (Q * r**3), -q * P**4 / (Q * r**4)
        xs, ps = self.x0.x, self.x0.w
        u = 1.0 / (xs - w1)
        v = 1.0 / (xs - w2)
        uv = u * v
        F = complex(np.sum(ps * uv))
        E1 = complex(np.sum(ps * uv * uv))
        dx = xs[:, None] - xs[None, :]
        E2 = -0.5 * complex(np.sum(ps[:, None] * ps[None, :] * dx * dx * (uv[:, None] * uv[None, :]) ** 2))
        return F, E1, E2

    def schwarzian2_pre(self, t, w1, w2) -> complex:
        """Two-point Schwarzian of ``h_t`` at ``g_t(w1), g_t(w2)``, given the preimages."""
        w1, w2 = complex(w1), complex(w2)
        x1, x2 = self.g_value(t, w1), self.g_value(t, w2)
        a_, b_, swapped = _canonical(complex(x1), complex(x2))
        if swapped:
            w1, w2 = w2, w1
        if near_diagonal(a_, b_):
            return schwarzian(self._inverse_jet(t, w1)) / 6.0
        a, c = self.coefficients(t)
        F, E1, E2 = self._difference_terms(w1, w2)
        D = a - c * F
        return (a * c * E1 + c * c * E2) / (self.g_prime(t, w1) * self.g_prime(t, w2) * D * D)

    def schwarzian2(self, t, z1, z2) -> complex:
        """Two-point Schwarzian of ``h_t`` (stable close to the diagonal)."""
        z1, z2 = complex(z1), complex(z2)
        if t == 0:
            return 0j
        return self.schwarzian2_pre(t, self.h(t, z1), self.h(t, z2))

    # -- limit measure ---------------------------------------------------------

    def M(self, t, z) -> complex:
        """Stieltjes transform of ``X_t`` at ``z``."""
        z = complex(z)
        if t == 0:
            return complex(self.f(z))
        _, c = self.coefficients(t)
        return (self.h(t, z) - z * math.exp(t)) / c

    def density(self, t, x) -> float:
        """Density of ``X_t`` by Stieltjes inversion, Richardson-extrapolated in the offset."""
        if not t > 0:
            raise ValueError("density needs t > 0")
        vals = []
        for eps in DENSITY_EPS:
            try:
                vals.append(self.M(t, complex(x, eps)).imag / math.pi)
            except SolverError as exc:
                raise SolverError(f"density solve failed at x={x}, t={t}, eps={eps}",
                                  last_iterate=exc.last_iterate, residual=exc.residual) from exc
        d1, d2, d3 = vals
        return max(0.0, (d1 - 6.0 * d2 + 8.0 * d3) / 3.0)

    def contour_radius(self, t):
        return 2.0 * max(ms.support_bound(self.x0), 2.0 * self.sigma * math.exp(t)) + 1.0

    def moment(self, t, k) -> float:
        """``k``-th moment of ``X_t`` by trapezoid quadrature in the ``w`` plane."""
        return _moment_cached(self, float(t), int(k))

    def _moment_uncached(self, t, k):
        if k < 0:
            raise ValueError("moment order must be nonnegative")
        et = math.exp(t)

        def integrand(w):
            gw = self.g_value(t, w)
            base = et * self.f(w) * self.g_prime(t, w)
            return np.stack([base, gw**k * base])

        def fn(w):
            return integrand(w)

        # both integrals share the node set; convergence is judged on the pair
        prev = None
        n = 64
        radius = self.contour_radius(t)
        while True:
            theta = 2.0 * np.pi * np.arange(n) / n
            w = radius * np.exp(1j * theta)
            vals = -np.sum(fn(w) * w, axis=1) / n
            if prev is not None and np.all(np.abs(vals - prev) < 1e-10 * (1.0 + np.abs(vals))):
                break
            if n >= 2**14:
                raise ContourError("moment contour unconverged", delta=float(np.max(np.abs(vals - prev))))
            prev = vals
            n *= 2
        m0, mk = vals
        if abs(m0 - 1.0) > 1e-9:
            raise ContourError(f"mass certificate failed: m0={m0}", delta=abs(m0 - 1.0))
        if abs(mk.imag) > 1e-9 * (1.0 + abs(mk.real)):
            raise ContourError(f"moment has imaginary residue {mk.imag}", delta=abs(mk.imag))
        return float(mk.real)

    # -- exact description of X_t via the boundary curve ------------------------

    def xt_semicircle_scale(self, t):
        """Scale of ``X_t`` when ``X0`` is a semicircle (``X_t`` stays semicircular)."""
        s0 = self.x0.sigma
        return math.sqrt(s0 * s0 * math.exp(-2 * t) - self.sigma**2 * math.expm1(-2 * t))

    def boundary_point(self, t, u):
        """Point ``w = u + i v`` on the boundary of ``h_t(upper half-plane)`` above ``u``.

        Only for atomic ``X0``. ``v = 0`` when ``u`` lies outside the curve.
        Returns ``(w, x)`` with ``x = g_t(w)`` real.
        """
        xs, ps = self.x0.x, self.x0.w
        b = self.b(t)
        d2 = (xs - u) ** 2
        with np.errstate(divide="ignore"):
            phi = np.sum(ps / d2)
        v = 0.0
        if phi > 1.0 / b:
            lo = 1e-300
            s = brentq(lambda s: np.sum(ps / (d2 + s)) - 1.0 / b, lo, b, xtol=1e-300, rtol=1e-15, maxiter=500)
            v = math.sqrt(s)
        w = complex(u, v)
        x = math.exp(-t) * (u - b * float(np.sum(ps * (xs - u) / ((xs - u) ** 2 + v * v))))
        return w, x

    def _cdf_at_u(self, t, u):
        w, x = self.boundary_point(t, u)
        xs, ps = self.x0.x, self.x0.w
        b = self.b(t)
        f0 = complex(np.sum(ps / (xs - w))) if w.imag > 0 else float(np.sum(ps / (xs - u)))
        ang = float(np.sum(ps * np.arctan2(w.imag, xs - u)))
        val = (ang - 0.5 * b * (complex(f0) ** 2).imag) / math.pi
        return min(1.0, max(0.0, val)), x, w

    def _u_range(self, t):
        rb = math.sqrt(self.b(t))
        return float(self.x0.x[0]) - rb - 1.0, float(self.x0.x[-1]) + rb + 1.0

    def xt_cdf(self, t, x) -> float:
        """Distribution function of ``X_t`` (exact up to root-finding)."""
        if isinstance(self.x0, ms.SemicircleMeasure):
            return float(ms.semicircle_cdf(self.xt_semicircle_scale(t), x))
        if t == 0:
            return float(np.sum(self.x0.w[self.x0.x <= x]))
        lo, hi = self._u_range(t)
        if x <= self.boundary_point(t, lo)[1]:
            return 0.0
        if x >= self.boundary_point(t, hi)[1]:
            return 1.0
        u = brentq(lambda u: self.boundary_point(t, u)[1] - x, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        return self._cdf_at_u(t, u)[0]

    def xt_density_exact(self, t, x) -> float:
        """Density of ``X_t`` from the boundary curve: ``Im h_t(x + i0) / (pi sigma^2 (e^t - e^-t))``."""
        if not t > 0:
            raise ValueError("density needs t > 0")
        if isinstance(self.x0, ms.SemicircleMeasure):
            s = self.xt_semicircle_scale(t)
            return math.sqrt(max(0.0, 4 * s * s - x * x)) / (2 * math.pi * s * s)
        lo, hi = self._u_range(t)
        if x <= self.boundary_point(t, lo)[1] or x >= self.boundary_point(t, hi)[1]:
            return 0.0
        u = brentq(lambda u: self.boundary_point(t, u)[1] - x, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        w, _ = self.boundary_point(t, u)
        return w.imag / (math.pi * self.coefficients(t)[1])

    def xt_quantiles(self, t, n) -> np.ndarray:
        """Midpoint quantiles ``(i - 1/2) / n`` of ``X_t``."""
        q = (np.arange(n) + 0.5) / n
        if isinstance(self.x0, ms.SemicircleMeasure):
            return ms.quantile_sample(ms.SemicircleMeasure(self.xt_semicircle_scale(t)), n)
        if t == 0:
            return ms.quantile_sample(self.x0, n)
        if len(self.x0.locations) == 1:
            # a point mass spreads into a semicircle
            s = self.sigma * math.sqrt(-math.expm1(-2 * t))
            return math.exp(-t) * self.x0.locations[0] + ms.quantile_sample(ms.SemicircleMeasure(s), n)
        lo, hi = self._u_range(t)
        out = np.empty(n)
        for i, qi in enumerate(q):
            u = brentq(lambda u: self._cdf_at_u(t, u)[0] - qi, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
            out[i] = self.boundary_point(t, u)[1]
        return np.maximum.accumulate(out)

    def xt_support(self, t, grid=4001):
        """Approximate support intervals of ``X_t`` (atomic ``X0``) as a list of ``(lo, hi)``."""
        if isinstance(self.x0, ms.SemicircleMeasure):
            s = self.xt_semicircle_scale(t)
            return [(-2 * s, 2 * s)]
        lo, hi = self._u_range(t)
        us = np.linspace(lo, hi, grid)
        inside = np.array([self.boundary_point(t, u)[0].imag > 0 for u in us])
        out = []
        i = 0
        while i < grid:
            if inside[i]:
                j = i
                while j + 1 < grid and inside[j + 1]:
                    j += 1
                out.append((self.boundary_point(t, us[max(i - 1, 0)])[1],
                            self.boundary_point(t, us[min(j + 1, grid - 1)])[1]))
                i = j + 1
            else:
                i += 1
        return out


@lru_cache(maxsize=4096)
def _h_cached(fm, t, z):
    return fm._h_uncached(t, z)


@lru_cache(maxsize=1024)
def _moment_cached(fm, t, k):
    return fm._moment_uncached(t, k)
