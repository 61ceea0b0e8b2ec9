"""Tridiagonal beta-Hermite model of the stationary particle law.

The matrix with ``N(0, 1)`` diagonal and ``chi_{beta(n-k)} / sqrt 2``
off-diagonal entries has eigenvalue density proportional to
``|Delta|^beta exp(-sum mu^2 / 2)``. Scaling by ``s = sigma sqrt(2/(beta n))``
gives ``|Delta|^beta exp(-beta n sum lambda^2 / (4 sigma^2))``.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sturm_counts(d, e2, x, pivmin, counts):
    """``counts[k]`` = number of eigenvalues strictly below ``x[k]``.

    The recurrences for different shifts are independent, so the inner
    loop runs across shifts and pipelines well.
    """
    m = x.shape[0]
    q = np.empty(m)
    for k in range(m):
        v = d[0] - x[k]
        if abs(v) < pivmin:
            v = -pivmin
        q[k] = v
        counts[k] = 1 if v < 0 else 0
    for i in range(1, d.shape[0]):
        di = d[i]
        ei = e2[i - 1]
        for k in range(m):
            v = di - x[k] - ei / q[k]
            if abs(v) < pivmin:
                v = -pivmin
            q[k] = v
            counts[k] += 1 if v < 0 else 0


@njit(cache=True)
def _bisect_all(d, e):
    """Simultaneous bisection for every eigenvalue index ``k`` (bracket holds the k-th smallest)."""
    n = d.shape[0]
    out = np.empty(n)
    if n == 1:
        out[0] = d[0]
        return out
    e2 = e * e
    lo = np.inf
    hi = -np.inf
    for i in range(n):
        r = 0.0
        if i > 0:
            r += abs(e[i - 1])
        if i < n - 1:
            r += abs(e[i])
        lo = min(lo, d[i] - r)
        hi = max(hi, d[i] + r)
    norm = max(abs(lo), abs(hi))
    if norm == 0.0:
        out[:] = 0.0
        return out
    tol = 1e-12 * norm
    pivmin = 1e-300 + 1e-30 * norm * norm
    a = np.full(n, lo - tol)
    b = np.full(n, hi + tol)
    mid = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    while True:
        width = 0.0
        for k in range(n):
            width = max(width, b[k] - a[k])
            mid[k] = 0.5 * (a[k] + b[k])
        if width <= tol:
            break
        _sturm_counts(d, e2, mid, pivmin, counts)
        for k in range(n):
            if counts[k] > k:
                b[k] = mid[k]
            else:
                a[k] = mid[k]
    return mid


def tridiag_eigenvalues(diag, offdiag) -> np.ndarray:
    """All eigenvalues of a symmetric tridiagonal matrix, sorted, by Sturm bisection."""
    d = np.ascontiguousarray(diag, dtype=float)
    e = np.ascontiguousarray(offdiag, dtype=float)
    if d.ndim != 1 or len(d) == 0 or e.shape != (len(d) - 1,):
        raise ValueError("need n diagonal and n - 1 off-diagonal entries")
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
        raise ValueError("entries must be finite")
    return np.sort(_bisect_all(d, e))


def chi_draws(rng, dfs):
    """Chi variables: sums of squared Gaussians for integer degrees, gamma sampling otherwise."""
    dfs = np.asarray(dfs, dtype=float)
    out = np.empty(len(dfs))
    whole = dfs == np.round(dfs)
    k = dfs[whole].astype(np.int64)
    if len(k):
        z2 = rng.standard_normal(int(k.sum())) ** 2
        starts = np.concatenate(([0], np.cumsum(k)[:-1]))
        out[whole] = np.sqrt(np.add.reduceat(z2, starts))
    if np.any(~whole):
        out[~whole] = np.sqrt(rng.chisquare(dfs[~whole]))
    return out


def tridiag_matrix(n, beta, sigma, rng):
    """Scaled diagonal and off-diagonal of one beta-Hermite draw."""
    if n < 1 or not beta > 0 or not sigma > 0:
        raise ValueError("need n >= 1, beta > 0, sigma > 0")
    s = sigma * math.sqrt(2.0 / (beta * n))
    d = rng.standard_normal(n)
    e = chi_draws(rng, beta * (n - np.arange(1, n))) / math.sqrt(2.0)
    return s * d, s * e


def tridiag_beta_sample(n, beta, sigma, rng) -> np.ndarray:
    """Sorted eigenvalues distributed by the stationary law of the particle system."""
    d, e = tridiag_matrix(n, beta, sigma, rng)
    return tridiag_eigenvalues(d, e)


def replica_rng(seed, replica):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replica)])))


def tridiag_ensemble(n, beta, sigma, replicas, seed, first_replica=0) -> np.ndarray:
    """``(replicas, n)`` eigenvalue samples, one independent stream per replica."""
    out = np.empty((replicas, n))
    for r in range(replicas):
        out[r] = tridiag_beta_sample(n, beta, sigma, replica_rng(seed, first_replica + r))
    return out


def stationary_sum_sq_moments(n, beta, sigma):
    """Exact mean and variance of ``sum lambda^2`` under the stationary law (a Gamma variable)."""
    shape = 0.5 * (n + beta * n * (n - 1) / 2.0)
    rate = beta * n / (4.0 * sigma**2)
    return shape / rate, shape / rate**2
