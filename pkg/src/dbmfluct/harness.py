"""Monte Carlo estimation of fluctuation moments and comparison with theory."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import MonteCarloError
from .holoflow import FlowMap
from .sim import Monomial, Resolvent, SimParams, fluctuations, simulate_ensemble
from .theory import FluctQuery, TheoryResult
from .tridiag import tridiag_ensemble

MAX_FAILED_FRACTION = 0.01
CHUNK = 500


@dataclass(frozen=True)
class MonomialQuery:
    """Monomial statistics ``<Y_t, x^k>`` at one or more times."""

    beta: float
    entries: tuple  # (time, k) pairs

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((float(t), int(k)) for t, k in self.entries))
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if any(t < 0 or k < 0 for t, k in self.entries):
            raise ValueError("monomial entries need t >= 0 and k >= 0")


def query_tests(query):
    """``[(time, test), ...]`` for either query type."""
    if isinstance(query, FluctQuery):
        if query.y0.locations:
            raise ValueError("simulation starts from quantile placement; Y0 must be empty")
        return [(t, Resolvent(z)) for t, z in query.entries]
    return [(t, Monomial(k)) for t, k in query.entries]


@dataclass
class McEstimate:
    labels: list
    sample_mean: np.ndarray
    sample_cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    replicas: int
    seed: int
    failed: int = 0
    halving_events: int = 0
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def standard_errors(self):
        return self.cov_se


def estimate_from_samples(U, labels, seed=0, failed=0, halving_events=0, keep=True) -> McEstimate:
    """Mean, pseudo-covariance and their standard errors from ``(R, m)`` complex samples."""
    U = np.asarray(U, dtype=complex)
    R = U.shape[0]
    if R < 2:
        raise ValueError("need at least two replicas")
    mean = U.mean(axis=0)
    C = U - mean
    mean_se = np.sqrt(U.real.var(axis=0, ddof=1) + U.imag.var(axis=0, ddof=1)) / math.sqrt(R)
    P = C[:, :, None] * C[:, None, :]
    cov = P.sum(axis=0) / (R - 1)
    cov_se = np.sqrt(P.real.var(axis=0, ddof=1) + P.imag.var(axis=0, ddof=1)) / math.sqrt(R)
    # reductions over transposed slices may round differently
    cov = 0.5 * (cov + cov.T)
    cov_se = 0.5 * (cov_se + cov_se.T)
    return McEstimate(list(labels), mean, cov, mean_se, cov_se, R, seed, failed, halving_events,
                      U if keep else None)


def mc_fluctuations(params: SimParams, x0, query, replicas, fm: FlowMap | None = None) -> McEstimate:
    """Simulate ``replicas`` independent systems and estimate the fluctuation moments."""
    if replicas < 100:
        raise ValueError("mc_fluctuations needs at least 100 replicas")
    if not math.isclose(query.beta, params.beta, rel_tol=0, abs_tol=0):
        raise ValueError("query beta differs from simulation beta")
    if fm is None:
        fm = FlowMap(x0, params.sigma)
    tests = query_tests(query)
    times = np.array(sorted({t for t, _ in tests}))
    index = {t: i for i, t in enumerate(times)}
    rows, failed, events = [], 0, 0
    for first in range(0, replicas, CHUNK):
        run = simulate_ensemble(params, x0, times, min(CHUNK, replicas - first), fm, first_replica=first)
        ok = ~run.failed
        failed += int(np.sum(run.failed))
        events += int(np.sum(run.halving_events))
        snaps = run.snapshots[ok]
        cols = [fluctuations(snaps[:, index[t], :], t, [test], fm)[:, 0] for t, test in tests]
        rows.append(np.stack(cols, axis=-1))
    if failed > MAX_FAILED_FRACTION * replicas:
        raise MonteCarloError(f"{failed} of {replicas} replicas failed (step halving exhausted)")
    U = np.concatenate(rows, axis=0)
    labels = [f"{test.label()}@t={t:.17g}" for t, test in tests]
    return estimate_from_samples(U, labels, params.seed, failed, events)


def normality_check(samples):
    """``(skewness, excess kurtosis, passed)`` against 5-SE bands."""
    x = np.asarray(samples, dtype=float)
    R = len(x)
    if R < 500:
        raise ValueError("normality_check needs at least 500 samples")
    sk = float(stats.skew(x))
    ku = float(stats.kurtosis(x))
    ok = abs(sk) < 5 * math.sqrt(6.0 / R) and abs(ku) < 5 * math.sqrt(24.0 / R)
    return sk, ku, ok


@dataclass(frozen=True)
class ComparisonRow:
    quantity: str
    theory: complex
    estimate: complex
    se: float
    z_score: float


def _z(theory, est, se):
    d = abs(complex(est) - complex(theory))
    if se > 0:
        return d / se
    if d == 0:
        return 0.0
    raise ValueError("nonzero discrepancy with zero standard error")


def compare(theory: TheoryResult, mc: McEstimate) -> list:
    m = len(mc.sample_mean)
    if theory.mean.shape != (m,) or theory.cov.shape != (m, m):
        raise ValueError("theory and estimate shapes differ")
    labels = mc.labels or [str(i) for i in range(m)]
    rows = []
    for a in range(m):
        rows.append(ComparisonRow(f"mean[{labels[a]}]", complex(theory.mean[a]), complex(mc.sample_mean[a]),
                                  float(mc.mean_se[a]), _z(theory.mean[a], mc.sample_mean[a], mc.mean_se[a])))
    for a in range(m):
        for b in range(a, m):
            rows.append(ComparisonRow(f"cov[{labels[a]},{labels[b]}]", complex(theory.cov[a, b]),
                                      complex(mc.sample_cov[a, b]), float(mc.cov_se[a, b]),
                                      _z(theory.cov[a, b], mc.sample_cov[a, b], mc.cov_se[a, b])))
    return rows


COMPARISON_COLUMNS = ["quantity", "theory_re", "theory_im", "est_re", "est_im", "se", "z_score"]


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_comparison_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for r in rows:
            w.writerow([r.quantity, fmt(r.theory.real), fmt(r.theory.imag), fmt(r.estimate.real),
                        fmt(r.estimate.imag), fmt(r.se), fmt(r.z_score)])


# -- equilibrium oracle ------------------------------------------------------

def tridiag_sum_sq_fluct(n, beta, sigma, replicas, seed):
    """Samples of ``sum lambda^2 - n sigma^2`` under the stationary law."""
    lam = tridiag_ensemble(n, beta, sigma, replicas, seed)
    return np.sum(lam**2, axis=1) - n * sigma**2


def variance_with_se(x):
    """Sample variance and its standard error (from the fourth central moment)."""
    x = np.asarray(x, dtype=float)
    R = len(x)
    c = x - x.mean()
    v = float(np.sum(c**2) / (R - 1))
    se = float(np.sqrt(np.var(c**2, ddof=1) / R))
    return v, se
