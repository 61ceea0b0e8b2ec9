"""Finite-n bias of the CLT: resolvent variance at z = i against the large-n theory for several n."""
import argparse
import math

import numpy as np

from dbmfluct import measures as ms
from dbmfluct import theory as th
from dbmfluct.harness import estimate_from_samples
from dbmfluct.holoflow import FlowMap
from dbmfluct.sim import Resolvent, SimParams, fluctuations, simulate_ensemble

ap = argparse.ArgumentParser()
ap.add_argument("--ns", type=int, nargs="+", default=[50, 100, 200])
ap.add_argument("--beta", type=float, default=2.0)
ap.add_argument("--t", type=float, default=math.log(2))
ap.add_argument("--dt", type=float, default=1e-3)
ap.add_argument("--replicas", type=int, default=1000)
a = ap.parse_args()

x0 = ms.AtomicMeasure((0.0,), (1.0,))
fm = FlowMap(x0, 1.0)
res = th.theory(th.FluctQuery(a.beta, ((a.t, 1j),)), fm)
print(f"theory mean {res.mean[0]:.5f}, variance {res.cov[0, 0]:.5f}")
for n in a.ns:
    run = simulate_ensemble(SimParams(n, a.beta, dt=a.dt, seed=n), x0, [a.t], a.replicas, fm)
    U = fluctuations(run.snapshots[~run.failed, 0, :], a.t, [Resolvent(1j)], fm)
    est = estimate_from_samples(U, ["r"])
    dm = est.sample_mean[0] - res.mean[0]
    dv = est.sample_cov[0, 0] - res.cov[0, 0]
    print(f"n={n}: mean bias {dm:+.5f} (se {est.mean_se[0]:.5f}), variance bias {dv:+.5f} (se {est.cov_se[0, 0]:.5f})",
          flush=True)
