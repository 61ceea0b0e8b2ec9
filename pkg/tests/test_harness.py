import math

import numpy as np
import pytest

from dbmfluct import harness, sim
from dbmfluct import measures as ms
from dbmfluct.errors import MonteCarloError
from dbmfluct.harness import (McEstimate, MonomialQuery, compare, estimate_from_samples, mc_fluctuations,
                              normality_check, variance_with_se)
from dbmfluct.holoflow import FlowMap
from dbmfluct.theory import FluctQuery, TheoryResult, theory

D0 = ms.AtomicMeasure((0.0,), (1.0,))
PM = ms.AtomicMeasure((-1.0, 1.0), (0.5, 0.5))


def test_normality_examples():
    g = np.random.default_rng(0)
    assert normality_check(g.normal(size=5000))[2]
    sk, ku, ok = normality_check(g.exponential(size=10_000))
    assert not ok and sk == pytest.approx(2, abs=0.3)
    with pytest.raises(ValueError):
        normality_check(np.zeros(499))


def test_normality_false_alarm_rate_is_small():
    g = np.random.default_rng(1)
    passes = sum(normality_check(g.normal(size=600))[2] for _ in range(200))
    assert passes == 200


def _est(mean, cov, se):
    m = len(mean)
    return McEstimate([f"q{i}" for i in range(m)], np.asarray(mean, complex), np.asarray(cov, complex),
                      np.full(m, se), np.full((m, m), se), 100, 0)


def test_compare_identical_inputs_give_zero_z():
    mean = np.array([1 + 1j, -0.5j])
    cov = np.array([[2.0, 0.3j], [0.3j, 1.0]])
    rows = compare(TheoryResult(mean, cov), _est(mean, cov, 1.0))
    assert [r.z_score for r in rows] == [0.0] * 5


def test_compare_z_score_arithmetic():
    rows = compare(TheoryResult(np.zeros(1, complex), np.zeros((1, 1), complex)),
                   _est([0.3], [[0.0]], 0.1))
    assert rows[0].z_score == pytest.approx(3.0, abs=1e-14)
    assert rows[0].quantity == "mean[q0]"


def test_compare_shape_mismatch():
    with pytest.raises(ValueError):
        compare(TheoryResult(np.zeros(2, complex), np.zeros((2, 2), complex)), _est([0.0], [[0.0]], 1.0))


def test_estimate_standard_errors():
    g = np.random.default_rng(2)
    U = g.normal(size=(400, 2)) + 1j * g.normal(size=(400, 2))
    est = estimate_from_samples(U, ["a", "b"])
    want = np.sqrt(U.real.var(axis=0, ddof=1) + U.imag.var(axis=0, ddof=1)) / 20
    assert np.allclose(est.mean_se, want)
    # pseudo-covariance: no conjugation
    C = U - U.mean(axis=0)
    assert est.sample_cov[0, 1] == pytest.approx(np.sum(C[:, 0] * C[:, 1]) / 399)
    assert np.all(np.isfinite(est.cov_se)) and np.all(est.cov_se > 0)


def test_variance_with_se_gaussian():
    g = np.random.default_rng(3)
    v, se = variance_with_se(g.normal(scale=2.0, size=20_000))
    assert abs(v - 4.0) < 3 * se
    # Var of the sample variance of a Gaussian is 2 s^4 / R
    assert se == pytest.approx(math.sqrt(2 * 16 / 20_000), rel=0.05)


def test_pipeline_row_count_and_symmetry():
    p = sim.SimParams(6, 2.0, dt=5e-3, seed=4)
    q = FluctQuery(2.0, ((0.5, 1j), (0.5, 2j)))
    fm = FlowMap(PM, 1.0)
    est = mc_fluctuations(p, PM, q, 100, fm)
    assert np.array_equal(est.sample_cov, est.sample_cov.T)
    rows = compare(theory(q, fm), est)
    assert len(rows) == 2 + 3
    assert sum(r.quantity.startswith("cov") for r in rows) == 3


def test_seed_determinism():
    p = sim.SimParams(5, 1.0, dt=5e-3, seed=123)
    q = MonomialQuery(1.0, ((0.3, 2), (0.6, 1)))
    a = mc_fluctuations(p, PM, q, 120)
    b = mc_fluctuations(p, PM, q, 120)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.sample_cov, b.sample_cov)
    c = mc_fluctuations(sim.SimParams(5, 1.0, dt=5e-3, seed=124), PM, q, 120)
    assert not np.array_equal(a.samples, c.samples)


def test_chunking_does_not_change_samples(monkeypatch):
    p = sim.SimParams(4, 2.0, dt=5e-3, seed=5)
    q = MonomialQuery(2.0, ((0.2, 2),))
    a = mc_fluctuations(p, PM, q, 150)
    monkeypatch.setattr(harness, "CHUNK", 40)
    b = mc_fluctuations(p, PM, q, 150)
    assert np.array_equal(a.samples, b.samples)


def _failing(fraction):
    real = sim.simulate_ensemble

    def fake(*args, **kw):
        run = real(*args, **kw)
        k = int(round(fraction * len(run.status)))
        run.status[:k] = sim.STATUS_STIFF
        return run
    return fake


def test_too_many_failures_raise(monkeypatch):
    monkeypatch.setattr(harness, "simulate_ensemble", _failing(0.02))
    with pytest.raises(MonteCarloError):
        mc_fluctuations(sim.SimParams(4, 2.0, dt=5e-3), PM, MonomialQuery(2.0, ((0.1, 2),)), 200)


def test_few_failures_are_counted(monkeypatch):
    monkeypatch.setattr(harness, "simulate_ensemble", _failing(0.01))
    est = mc_fluctuations(sim.SimParams(4, 2.0, dt=5e-3), PM, MonomialQuery(2.0, ((0.1, 2),)), 200)
    assert est.failed == 2 and est.replicas == 198


def test_validation():
    p = sim.SimParams(4, 2.0)
    with pytest.raises(ValueError, match="at least 100"):
        mc_fluctuations(p, PM, MonomialQuery(2.0, ((0.1, 2),)), 99)
    with pytest.raises(ValueError, match="beta"):
        mc_fluctuations(p, PM, MonomialQuery(1.0, ((0.1, 2),)), 100)
    y0 = ms.SignedAtomicMeasure((0.0, 1.0), (1.0, -1.0))
    with pytest.raises(ValueError, match="Y0"):
        mc_fluctuations(p, PM, FluctQuery(2.0, ((0.1, 1j),), y0), 100)


def test_oracle_sum_of_squares_mean():
    # E[sum lambda^2] - n sigma^2 = sigma^2 (2/beta - 1)
    x = harness.tridiag_sum_sq_fluct(20, 0.5, 1.3, 4000, 7)
    se = x.std(ddof=1) / math.sqrt(len(x))
    assert abs(x.mean() - 1.3**2 * 3) < 3 * se


@pytest.mark.slow
def test_resolvent_clt_at_beta_one():
    p = sim.SimParams(100, 1.0, dt=1e-3, seed=31)
    q = FluctQuery(1.0, ((math.log(2), 1j),))
    est = mc_fluctuations(p, D0, q, 2000)
    assert abs(est.sample_mean[0] - (-0.125j)) < 3 * est.mean_se[0]
    assert abs(est.sample_cov[0, 0] - 3 / 32) < 3 * est.cov_se[0, 0]
