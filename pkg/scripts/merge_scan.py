"""Density at x = 0 of the flowed two-atom law across the merge time."""
import argparse
import math

import numpy as np

from dbmfluct import measures as ms
from dbmfluct.holoflow import FlowMap

ap = argparse.ArgumentParser()
ap.add_argument("--sigma", type=float, default=1.0)
ap.add_argument("--tmin", type=float, default=0.2)
ap.add_argument("--tmax", type=float, default=0.6)
ap.add_argument("--points", type=int, default=21)
a = ap.parse_args()

fm = FlowMap(ms.AtomicMeasure((-1.0, 1.0), (0.5, 0.5)), a.sigma)
t_star = math.log(math.sqrt(1 + a.sigma**-2))
print(f"merge time {t_star:.6f}")
print("t,density,density_exact")
for t in np.linspace(a.tmin, a.tmax, a.points):
    print(f"{t:.4f},{fm.density(t, 0.0):.6e},{fm.xt_density_exact(t, 0.0):.6e}")
