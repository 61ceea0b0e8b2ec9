"""Fluctuation CLT at one time: simulated mean/variance of resolvent and x^2 statistics against theory."""
import argparse
import math

from dbmfluct import measures as ms
from dbmfluct import theory as th
from dbmfluct.harness import MonomialQuery, compare, mc_fluctuations, normality_check
from dbmfluct.holoflow import FlowMap
from dbmfluct.sim import SimParams

ap = argparse.ArgumentParser()
ap.add_argument("--n", type=int, default=100)
ap.add_argument("--beta", type=float, default=2.0)
ap.add_argument("--t", type=float, default=math.log(2))
ap.add_argument("--dt", type=float, default=1e-3)
ap.add_argument("--replicas", type=int, default=2000)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--start", choices=["delta", "two-atoms"], default="delta")
a = ap.parse_args()

x0 = ms.AtomicMeasure((0.0,), (1.0,)) if a.start == "delta" else ms.AtomicMeasure((-1.0, 1.0), (0.5, 0.5))
fm = FlowMap(x0, 1.0)
p = SimParams(a.n, a.beta, dt=a.dt, seed=a.seed)
for query, expected in [
    (th.FluctQuery(a.beta, ((a.t, 1j), (a.t, 2j))), lambda q: th.theory(q, fm)),
    (MonomialQuery(a.beta, ((a.t, 2), (a.t, 4))), lambda q: th.monomial_theory([2, 4], a.t, a.beta, fm)),
]:
    est = mc_fluctuations(p, x0, query, a.replicas, fm)
    for row in compare(expected(query), est):
        print(f"{row.quantity:60s} theory {row.theory:.5f}  mc {row.estimate:.5f}  z {row.z_score:.2f}")
    for k, lab in enumerate(est.labels):
        sk, ku, ok = normality_check(est.samples[:, k].real)
        print(f"  normality {lab}: skew {sk:+.3f} kurt {ku:+.3f} {'pass' if ok else 'FAIL'}")
