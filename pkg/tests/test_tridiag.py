import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import eigh_tridiagonal

from dbmfluct import tridiag as td
from dbmfluct.harness import variance_with_se


def test_eigenvalue_examples():
    assert td.tridiag_eigenvalues([2.5], []) == pytest.approx([2.5])
    assert td.tridiag_eigenvalues([0, 0], [1]) == pytest.approx([-1, 1], abs=1e-12)
    want = sorted(2 * math.cos(k * math.pi / 6) for k in range(1, 6))
    assert td.tridiag_eigenvalues(np.zeros(5), np.ones(4)) == pytest.approx(want, abs=1e-12)
    assert list(td.tridiag_eigenvalues(np.zeros(3), np.zeros(2))) == [0, 0, 0]


def test_eigenvalue_validation():
    with pytest.raises(ValueError):
        td.tridiag_eigenvalues([1, 2], [1, 2])
    with pytest.raises(ValueError):
        td.tridiag_eigenvalues([1, np.nan], [1])


@settings(deadline=None, max_examples=30)
@given(n=st.integers(2, 60), seed=st.integers(0, 2**31))
def test_bisection_matches_lapack(n, seed):
    r = np.random.default_rng(seed)
    d = r.normal(size=n) * r.choice([1e-3, 1, 1e3])
    e = r.normal(size=n - 1)
    e[r.random(n - 1) < 0.1] = 0.0
    got = td.tridiag_eigenvalues(d, e)
    want = eigh_tridiagonal(d, e, eigvals_only=True)
    scale = max(np.max(np.abs(d)) + 2 * np.max(np.abs(e)), 1e-300)
    assert np.max(np.abs(got - want)) <= 1e-11 * scale


def test_chi_draws_moments():
    r = np.random.default_rng(0)
    for df in (3.0, 0.7, 12.5):
        x = np.array([td.chi_draws(r, [df])[0] for _ in range(20000)])
        assert np.mean(x**2) == pytest.approx(df, rel=4 * math.sqrt(2 / df / 20000) + 0.01)


def test_n1_is_gaussian():
    beta, sigma = 2.0, 1.3
    x = td.tridiag_ensemble(1, beta, sigma, 10000, seed=4)[:, 0]
    v, se = variance_with_se(x)
    assert abs(v - 2 * sigma**2 / beta) < 3 * se
    assert abs(x.mean()) < 3 * math.sqrt(v / len(x))


@pytest.mark.parametrize("n,beta,sigma", [(5, 0.5, 1.0), (20, 1.0, 0.7), (40, 2.0, 1.0), (10, 4.0, 1.5)])
def test_sum_of_squares_moment(n, beta, sigma):
    lam = td.tridiag_ensemble(n, beta, sigma, 10000, seed=11)
    s = np.sum(lam**2, axis=1)
    want = sigma**2 * (n - 1) + 2 * sigma**2 / beta
    assert td.stationary_sum_sq_moments(n, beta, sigma)[0] == pytest.approx(want)
    assert abs(s.mean() - want) < 3 * s.std(ddof=1) / math.sqrt(len(s))
    v, se = variance_with_se(s)
    assert abs(v - td.stationary_sum_sq_moments(n, beta, sigma)[1]) < 3.5 * se


def test_semicircle_histogram():
    lam = td.tridiag_ensemble(200, 2.0, 1.0, 100, seed=2).ravel()
    edges = np.linspace(-2, 2, 21)
    counts, _ = np.histogram(lam, bins=edges)
    emp = counts / (len(lam) * np.diff(edges))
    mid = 0.5 * (edges[1:] + edges[:-1])
    # exact bin averages of the semicircle density
    from dbmfluct.measures import semicircle_cdf
    exact = np.diff([semicircle_cdf(1.0, e) for e in edges]) / np.diff(edges)
    assert np.max(np.abs(emp - exact)) < 0.05
    assert np.max(np.abs(emp - np.sqrt(4 - mid**2) / (2 * np.pi))) < 0.05


def test_replica_streams_reproducible():
    a = td.tridiag_ensemble(10, 1.0, 1.0, 5, seed=3)
    b = td.tridiag_ensemble(10, 1.0, 1.0, 3, seed=3, first_replica=2)
    assert np.array_equal(a[2:], b)
