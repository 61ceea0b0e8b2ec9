"""Initial particle distributions and their Stieltjes transforms.

Two families are supported: finite atomic probability measures and the
Wigner semicircle law of scale ``sigma`` (density
``sqrt(4 sigma^2 - x^2) / (2 pi sigma^2)`` on ``[-2 sigma, 2 sigma]``).
Signed atomic measures of total mass zero describe initial fluctuations.

The Stieltjes transform convention throughout is ``f(w) = int dX(x) / (x - w)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError

SUPPORT_CUTOFF = 1e-14
WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite probability measure ``sum_j w_j delta_{x_j}``."""

    locations: tuple
    weights: tuple

    def __post_init__(self):
        locs = tuple(float(x) for x in self.locations)
        wts = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "weights", wts)
        problems = atomic_violations(locs, wts)
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def from_pairs(cls, atoms):
        atoms = list(atoms)
        return cls(tuple(a[0] for a in atoms), tuple(a[1] for a in atoms))

    @property
    def x(self):
        return np.asarray(self.locations)

    @property
    def w(self):
        return np.asarray(self.weights)


@dataclass(frozen=True)
class SemicircleMeasure:
    """Wigner semicircle law with variance ``sigma**2``."""

    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "sigma", float(self.sigma))
        if not self.sigma > 0:
            raise ValueError("semicircle scale must be positive")


MeasureSpec = Union[AtomicMeasure, SemicircleMeasure]


def atomic_violations(locations, weights):
    """List every invariant an atomic measure description breaks."""
    out = []
    if len(locations) == 0:
        out.append("atomic measure needs at least one atom")
        return out
    if len(locations) != len(weights):
        out.append("atom locations and weights differ in length")
        return out
    if not all(math.isfinite(x) for x in locations):
        out.append("atom locations must be finite")
    if any(not (w > 0) for w in weights):
        out.append("atomic weights must be strictly positive")
    total = math.fsum(weights)
    if abs(total - 1.0) > WEIGHT_TOL:
        out.append(f"atomic weights must sum to 1 (got {total!r})")
    if any(b <= a for a, b in zip(locations, locations[1:])):
        out.append("atom locations must be strictly increasing")
    return out


@dataclass(frozen=True)
class SignedAtomicMeasure:
    """Signed atomic measure of total mass zero (an initial fluctuation)."""

    locations: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        locs = tuple(float(x) for x in self.locations)
        wts = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "weights", wts)
        if len(locs) != len(wts):
            raise ValueError("signed measure locations and weights differ in length")
        if abs(math.fsum(wts)) > WEIGHT_TOL:
            raise ValueError("signed initial measure must have total weight 0")

    @classmethod
    def from_pairs(cls, atoms):
        atoms = list(atoms)
        return cls(tuple(a[0] for a in atoms), tuple(a[1] for a in atoms))

    def pair(self, fn):
        """Return ``sum_i w_i fn(x_i)``."""
        return sum(w * fn(x) for x, w in zip(self.locations, self.weights))


# -- serialization -----------------------------------------------------------

def measure_to_json(m: MeasureSpec) -> dict:
    if isinstance(m, AtomicMeasure):
        return {"type": "atomic", "atoms": [[x, w] for x, w in zip(m.locations, m.weights)]}
    return {"type": "semicircle", "sigma": m.sigma}


def measure_from_json(obj: dict) -> MeasureSpec:
    kind = obj.get("type")
    if kind == "atomic":
        return AtomicMeasure.from_pairs(obj["atoms"])
    if kind == "semicircle":
        return SemicircleMeasure(obj["sigma"])
    raise ValueError(f"unknown measure type {kind!r}")


# -- Stieltjes transforms ----------------------------------------------------

def _sc_root(sigma, z):
    """``sqrt(z^2 - 4 sigma^2)`` with the branch that behaves like ``z`` at infinity."""
    return z * np.sqrt(1.0 - (2.0 * sigma / z) ** 2)


def semicircle_stieltjes(sigma, z, order=0):
    """Stieltjes transform of the semicircle law and its derivatives.

    Uses ``f = -2 / (z + r)`` with ``r = z sqrt(1 - (2 sigma / z)^2)``
    (principal square root), which is the analytic continuation off
    ``[-2 sigma, 2 sigma]`` and avoids cancellation at large ``|z|``.
    """
    z = np.asarray(z, dtype=complex)
    on_support = (np.abs(z.imag) < SUPPORT_CUTOFF) & (np.abs(z.real) <= 2.0 * sigma + SUPPORT_CUTOFF)
    if np.any(on_support):
        raise DomainError(f"point on semicircle support [-{2 * sigma}, {2 * sigma}]")
    r = _sc_root(sigma, z)
    if order == 0:
        out = -2.0 / (z + r)
    elif order == 1:
        out = 2.0 / ((z + r) * r)
    elif order == 2:
        out = -2.0 / r**3
    elif order == 3:
        out = 6.0 * z / r**5
    else:
        raise ValueError("order must be in 0..3")
    return out[()] if out.ndim == 0 else out


def stieltjes(m: MeasureSpec, w, order=0):
    """``order``-th derivative of ``f(w) = int dm(x) / (x - w)``.

    ``w`` may be a scalar or an array.
    """
    if order not in (0, 1, 2, 3):
        raise ValueError("order must be in 0..3")
    if isinstance(m, SemicircleMeasure):
        return semicircle_stieltjes(m.sigma, w, order)
    w = np.asarray(w, dtype=complex)
    d = m.x.reshape((-1,) + (1,) * w.ndim) - w
    if np.any(np.abs(d) < SUPPORT_CUTOFF):
        raise DomainError("evaluation point coincides with an atom")
    wts = m.w.reshape((-1,) + (1,) * w.ndim)
    out = math.factorial(order) * np.sum(wts / d ** (order + 1), axis=0)
    return out[()] if out.ndim == 0 else out


# -- moments, placement, support ---------------------------------------------

def catalan(j):
    return math.comb(2 * j, j) // (j + 1)


def moment(m: MeasureSpec, k: int) -> float:
    """``int x^k dm``."""
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    if k == 0:
        return 1.0
    if isinstance(m, SemicircleMeasure):
        if k % 2:
            return 0.0
        return catalan(k // 2) * m.sigma**k
    return math.fsum(w * x**k for x, w in zip(m.locations, m.weights))


def semicircle_cdf(sigma, x):
    x = np.clip(np.asarray(x, dtype=float), -2.0 * sigma, 2.0 * sigma)
    u = x / (2.0 * sigma)
    out = 0.5 + (u * np.sqrt(1.0 - u * u) + np.arcsin(u)) / np.pi
    return out[()] if out.ndim == 0 else out


def semicircle_quantile(sigma, q):
    if q <= 0.0:
        return -2.0 * sigma
    if q >= 1.0:
        return 2.0 * sigma
    return brentq(lambda x: semicircle_cdf(sigma, x) - q, -2.0 * sigma, 2.0 * sigma,
                  xtol=1e-15 * sigma, rtol=4 * np.finfo(float).eps, maxiter=200)


def quantile_sample(m: MeasureSpec, n: int) -> np.ndarray:
    """Deterministic ``n``-point discretization at the midpoint quantiles ``(i - 1/2) / n``."""
    if n < 1:
        raise ValueError("n must be positive")
    q = (np.arange(n) + 0.5) / n
    if isinstance(m, SemicircleMeasure):
        # exact antisymmetry of the midpoint grid
        half = np.array([semicircle_quantile(m.sigma, qi) for qi in q[n // 2:]])
        if n % 2:
            half[0] = 0.0
            return np.concatenate([-half[:0:-1], half])
        return np.concatenate([-half[::-1], half])
    cum = np.cumsum(m.w)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, q, side="left")
    return m.x[np.minimum(idx, len(cum) - 1)]


def support_bound(m: MeasureSpec) -> float:
    """Smallest ``rho`` with ``supp m`` inside ``[-rho, rho]``."""
    if isinstance(m, SemicircleMeasure):
        return 2.0 * m.sigma
    return float(np.max(np.abs(m.x)))
