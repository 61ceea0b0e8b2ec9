"""Stationary Var(sum lambda^2): long-run simulation, tridiagonal model and the large-n limit."""
import argparse
import math
import time

import numpy as np

from dbmfluct import measures as ms
from dbmfluct.harness import tridiag_sum_sq_fluct, variance_with_se
from dbmfluct.holoflow import FlowMap
from dbmfluct.sim import SimParams, simulate_ensemble
from dbmfluct.theory import poly_variance_limit

ap = argparse.ArgumentParser()
ap.add_argument("--n", type=int, default=100)
ap.add_argument("--betas", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0])
ap.add_argument("--t", type=float, default=10.0)
ap.add_argument("--dt", type=float, default=2.5e-3)
ap.add_argument("--replicas", type=int, default=600)
ap.add_argument("--draws", type=int, default=5000)
a = ap.parse_args()

sc = ms.SemicircleMeasure(1.0)
fm = FlowMap(sc, 1.0)
for k, beta in enumerate(a.betas):
    t0 = time.time()
    run = simulate_ensemble(SimParams(a.n, beta, dt=a.dt, seed=700 + k), sc, [a.t], a.replicas, fm)
    x = np.sum(run.snapshots[~run.failed, 0, :] ** 2, axis=-1) - a.n * fm.moment(a.t, 2)
    v, e = variance_with_se(x)
    vt, et = variance_with_se(tridiag_sum_sq_fluct(a.n, beta, 1.0, a.draws, 770 + k))
    exact = 4 * (a.n - 1) / (a.n * beta) + 8 / (a.n * beta**2)
    print(f"beta={beta:g}: sde {v:.4f}±{e:.4f}  tridiag {vt:.4f}±{et:.4f}  finite-n {exact:.4f}  "
          f"limit {poly_variance_limit(2, beta, 1.0):.4f}  z(sde-tri) {abs(v - vt) / math.hypot(e, et):.2f}  "
          f"{time.time() - t0:.0f}s", flush=True)
