"""Euler-Maruyama bias of E[sum lambda^2] against the exact relaxation law."""
import argparse
import math
import time

import numpy as np

from dbmfluct import measures as ms
from dbmfluct.holoflow import FlowMap
from dbmfluct.sim import SimParams, simulate_ensemble

ap = argparse.ArgumentParser()
ap.add_argument("--n", type=int, default=100)
ap.add_argument("--beta", type=float, default=1.0)
ap.add_argument("--t", type=float, default=math.log(2))
ap.add_argument("--dts", type=float, nargs="+", default=[1e-3, 5e-4])
ap.add_argument("--replicas", type=int, default=500)
ap.add_argument("--start", choices=["delta", "semicircle"], default="delta")
a = ap.parse_args()

x0 = ms.AtomicMeasure((0.0,), (1.0,)) if a.start == "delta" else ms.SemicircleMeasure(1.0)
fm = FlowMap(x0, 1.0)
stat = (a.n - 1) + 2 / a.beta
for dt in a.dts:
    p = SimParams(a.n, a.beta, dt=dt, seed=1)
    t0 = time.time()
    run = simulate_ensemble(p, x0, [a.t], a.replicas, fm)
    s0 = float(np.sum(run.start.positions**2))
    tau = a.t - run.start.time
    want = s0 * math.exp(-2 * tau) + stat * (1 - math.exp(-2 * tau))
    S = (run.snapshots[~run.failed, 0] ** 2).sum(axis=-1)
    se = S.std(ddof=1) / math.sqrt(len(S))
    print(f"dt={dt:g} mean={S.mean():.4f} exact={want:.4f} bias={S.mean()-want:+.4f} se={se:.4f} "
          f"events={run.halving_events.mean():.1f} failed={int(run.failed.sum())} {time.time()-t0:.1f}s", flush=True)
