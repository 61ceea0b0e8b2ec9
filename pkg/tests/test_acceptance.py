"""Acceptance checks, one test per criterion; each reports PASS/FAIL in the terminal summary."""
import math

import numpy as np
import pytest

from dbmfluct import measures as ms
from dbmfluct import sim
from dbmfluct import theory as th
from dbmfluct.harness import estimate_from_samples, normality_check, tridiag_sum_sq_fluct, variance_with_se
from dbmfluct.holoflow import FlowMap, schwarzian

import oracles
from conftest import record

LN2 = math.log(2)
D0 = ms.AtomicMeasure((0.0,), (1.0,))
PM = ms.AtomicMeasure((-1.0, 1.0), (0.5, 0.5))
SC = ms.SemicircleMeasure(1.0)
PRESETS = {"deformed-gue": FlowMap(PM, 1.0), "stationary": FlowMap(SC, 1.0)}


def _q(beta, *entries):
    return th.FluctQuery(beta, entries)


def _check(criterion, ok, detail):
    record(criterion, ok, detail)
    assert ok, detail


def test_c01_round_trip():
    g = np.random.default_rng(101)
    worst = 0.0
    for fm in PRESETS.values():
        for _ in range(200):
            t = g.uniform(0.01, 4.0)
            z = complex(g.uniform(-4, 4), g.choice([-1, 1]) * 10 ** g.uniform(-2, 0.7))
            w = fm.h(t, z)
            worst = max(worst, abs(fm.g(t, w).value - z) / (1 + abs(z)))
    _check(1, worst <= 1e-12, f"max |g(h(z)) - z|/(1+|z|) = {worst:.2e} over 400 pairs")


def test_c02_pde_residual():
    d = 1e-4
    g = np.random.default_rng(102)
    worst = 0.0
    for fm in PRESETS.values():
        for _ in range(50):
            t = g.uniform(0.2, 2.5)
            z = complex(g.uniform(-3, 3), g.uniform(0.3, 2.5))
            M = fm.M(t, z)
            Mt = (fm.M(t + d, z) - fm.M(t - d, z)) / (2 * d)
            Mz = (fm.M(t, z + d) - fm.M(t, z - d)) / (2 * d)
            worst = max(worst, abs(Mt - (2 * fm.sigma**2 * M + z) * Mz - M))
    _check(2, worst <= 1e-5, f"max PDE residual {worst:.2e} at 100 interior points")


def test_c03_point_mass_closed_form():
    fm = FlowMap(D0, 1.0)
    h, d1, d2, d3 = oracles.point_mass_h(1.0, LN2, 1j)
    want = {"M": oracles.point_mass_M(1.0, LN2, 1j), "h": h, "Sh": oracles.schwarzian_from(d1, d2, d3),
            "mean": 0.5 * (2 / 1 - 1) * d2 / d1, "var": oracles.schwarzian_from(d1, d2, d3) / 3}
    exact = {"M": 2j / 3, "h": 3j, "Sh": 9 / 32, "mean": -1j / 8, "var": 3 / 32}
    got = {"M": fm.M(LN2, 1j), "h": fm.h(LN2, 1j), "Sh": schwarzian(fm.h_jet(LN2, 1j)),
           "mean": th.mean_stieltjes(_q(1.0, (LN2, 1j)), fm)[0],
           "var": th.cov_stieltjes(_q(1.0, (LN2, 1j)), fm)[0, 0]}
    err = max(max(abs(got[k] - want[k]), abs(want[k] - exact[k])) for k in got)
    _check(3, err <= 1e-10, f"max deviation from quadratic-formula oracle {err:.1e}")


def test_c04_contour_equals_polynomial_sum():
    worst = 0.0
    for name, fm in PRESETS.items():
        x0 = fm.x0
        for n in range(1, 7):
            for t in (0.5, 1.0, 2.0):
                a = th.contour_var(th._mono(n), t, 2.0, fm)
                b = th.poly_variance(n, t, 2.0, x0, 1.0)
                worst = max(worst, abs(a - b) / abs(b))
    _check(4, worst <= 1e-7, f"max relative gap {worst:.1e} over 36 cases")


def test_c05_equilibrium_limits():
    errs = []
    for fm in PRESETS.values():
        for n in (2, 4, 6):
            errs.append(abs(th.poly_variance(n, 20.0, 2.0, fm.x0, 1.0) - th.poly_variance_limit(n, 2.0, 1.0)))
    poly_ok = max(errs) <= 1e-6
    cheb = abs(th.chebyshev_variance([0, 0, 1], 2.0, 1.0) - th.poly_variance_limit(2, 2.0, 1.0))
    cov_err = 0.0
    pts = (1j, 0.5 + 1j, -1 + 2j, 2j)
    for fm in PRESETS.values():
        C = th.cov_stieltjes(_q(2.0, *[(12.0, z) for z in pts]), fm)
        for a, za in enumerate(pts):
            for b, zb in enumerate(pts):
                cov_err = max(cov_err, abs(C[a, b] - th.equilibrium_cov(2.0, 1.0, 0.0, za, zb)))
    ok = poly_ok and cheb <= 1e-10 and cov_err <= 1e-5
    _check(5, ok, f"poly {max(errs):.1e}, chebyshev {cheb:.1e}, cov {cov_err:.1e}")


def _clt_samples(beta, replicas=2000, n=100, seed=600):
    fm = FlowMap(D0, 1.0)
    p = sim.SimParams(n, beta, dt=1e-3, seed=seed)
    run = sim.simulate_ensemble(p, D0, [LN2], replicas, fm)
    assert not np.any(run.failed)
    U = sim.fluctuations(run.snapshots[:, 0, :], LN2, [sim.Resolvent(1j), sim.Monomial(2)], fm)
    return U, fm


@pytest.mark.slow
def test_c06_monte_carlo_clt():
    lines, ok = [], True
    for beta in (1.0, 2.0):
        U, fm = _clt_samples(beta, seed=600 + int(beta))
        est = estimate_from_samples(U, ["resolvent", "x2"])
        res = th.theory(_q(beta, (LN2, 1j)), fm)
        mono = th.monomial_theory([2], LN2, beta, fm)
        want_mean = [res.mean[0], mono.mean[0]]
        want_var = [res.cov[0, 0], mono.cov[0, 0]]
        z = []
        for a in range(2):
            z.append(abs(est.sample_mean[a] - want_mean[a]) / est.mean_se[a])
            z.append(abs(est.sample_cov[a, a] - want_var[a]) / est.cov_se[a, a])
        norm = [normality_check(s)[2] for s in (U[:, 0].real, U[:, 0].imag, U[:, 1].real)]
        ok = ok and max(z) < 3 and all(norm)
        lines.append(f"beta={beta:g}: max z {max(z):.2f}, Var<Y,x^2> {est.sample_cov[1, 1].real:.3f} "
                     f"vs {want_var[1].real:.3f}, normal {all(norm)}")
    _check(6, ok, "; ".join(lines))


@pytest.mark.slow
def test_c07_general_beta_equilibrium():
    n, t = 100, 10.0
    fm = FlowMap(SC, 1.0)
    lines, ok = [], True
    for k, beta in enumerate((0.5, 1.0, 2.0, 4.0)):
        p = sim.SimParams(n, beta, dt=2.5e-3, seed=700 + k)
        run = sim.simulate_ensemble(p, SC, [t], 600, fm)
        assert not np.any(run.failed)
        x = np.sum(run.snapshots[:, 0, :] ** 2, axis=-1) - n * fm.moment(t, 2)
        v_sde, e_sde = variance_with_se(x)
        v_tri, e_tri = variance_with_se(tridiag_sum_sq_fluct(n, beta, 1.0, 5000, 770 + k))
        lim = th.poly_variance_limit(2, beta, 1.0)
        good = (abs(v_sde - v_tri) < 3 * math.hypot(e_sde, e_tri)
                and abs(v_sde - lim) < 3 * e_sde and abs(v_tri - lim) < 3 * e_tri)
        ok = ok and good
        lines.append(f"beta={beta:g}: sde {v_sde:.3f}±{e_sde:.3f}, tridiag {v_tri:.3f}±{e_tri:.3f}, limit {lim:.3f}")
    _check(7, ok, "; ".join(lines))


@pytest.mark.slow
def test_c08_exact_moment_identities():
    n, R = 16, 10_000
    x0 = ms.AtomicMeasure(tuple(np.linspace(-0.5, 2.0, n)), (1 / n,) * n)
    S1 = float(np.sum(x0.x))
    ts = np.array([0.5, 1.0, 2.0, 4.0])
    lines, ok = [], True
    for beta in (1.0, 2.0):
        p = sim.SimParams(n, beta, dt=1e-3, seed=800 + int(beta))
        run = sim.simulate_ensemble(p, x0, ts, R)
        assert not np.any(run.failed)
        s1 = run.snapshots.sum(axis=-1)
        z = [abs(s1[:, k].mean() - S1 * math.exp(-t)) / (s1[:, k].std(ddof=1) / math.sqrt(R))
             for k, t in enumerate(ts[:3])]
        sq = (run.snapshots[:, 3, :] ** 2).sum(axis=-1)
        stat = (n - 1) + 2 / beta
        z2 = abs(sq.mean() - stat) / (sq.std(ddof=1) / math.sqrt(R))
        ok = ok and max(z) < 3 and z2 < 3
        lines.append(f"beta={beta:g}: sum decay max z {max(z):.2f}, E[sum l^2] {sq.mean():.3f} vs {stat:.3f} (z {z2:.2f})")
    _check(8, ok, "; ".join(lines))


def test_c09_deformed_gue_merge():
    fm = PRESETS["deformed-gue"]
    thr = 5e-3
    lo, hi = 0.2, 0.6
    d_lo, d_hi = fm.density(lo, 0.0), fm.density(hi, 0.0)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if fm.density(mid, 0.0) > thr:
            hi = mid
        else:
            lo = mid
    t_star = math.log(math.sqrt(2))
    ok = d_lo <= thr and d_hi >= 1e-2 and abs(hi - t_star) <= 0.05
    _check(9, ok, f"density(0.2)={d_lo:.1e}, density(0.6)={d_hi:.3f}, transition at t={hi:.4f} (t*={t_star:.4f})")


def test_c10_initial_data_dependence():
    q = _q(2.0, (1.0, 2j))
    a = th.cov_stieltjes(q, FlowMap(D0, 1.0))[0, 0]
    b = th.cov_stieltjes(q, PRESETS["deformed-gue"])[0, 0]
    _check(10, abs(a - b) > 1e-3, f"|cov(delta_0) - cov(two atoms)| = {abs(a - b):.3e} ({a:.5f} vs {b:.5f})")
