"""Time stepping of the interacting particle system

    d lambda_i = 2 sigma / sqrt(n beta) dB_i - lambda_i dt
                 + (2 sigma^2 / n) sum_{j != i} dt / (lambda_i - lambda_j).

Euler-Maruyama, except that the nearest-neighbour repulsion is taken at
the end of the step. That part is a convex tridiagonal solve whose root is
always ordered, so close approaches (frequent for beta <= 1) neither stall
the step nor bias it. A sub-step whose solve fails is split in two,
recursively, with the Brownian path refined by bridge samples. Sub-steps
are numbered like a binary heap (root 1, children 2c and 2c + 1) so that
each has a unique stream address.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import measures as ms
from .errors import DomainError, StiffStepError
from .holoflow import FlowMap
from .rng import fill_normals, split_seed

STATUS_OK = 0
STATUS_STIFF = 1
WARMUP = 0.5


@dataclass(frozen=True)
class SimParams:
    n: int
    beta: float
    sigma: float = 1.0
    dt: float = 1e-3
    max_halvings: int = 20
    seed: int = 0

    def __post_init__(self):
        problems = sim_violations(self.n, self.beta, self.sigma, self.dt, self.max_halvings, self.seed)
        if problems:
            raise ValueError("; ".join(problems))


def sim_violations(n, beta, sigma, dt, max_halvings=20, seed=0):
    out = []
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        out.append("n must be a positive integer")
    if not beta > 0:
        out.append("beta must be positive")
    if not sigma > 0:
        out.append("sigma must be positive")
    if not (0 < dt <= 0.1):
        out.append("dt must lie in (0, 0.1]")
    if not (isinstance(max_halvings, (int, np.integer)) and 0 <= max_halvings <= 40):
        out.append("max_halvings must be an integer in [0, 40]")
    if not (isinstance(seed, (int, np.integer)) and 0 <= seed < 2**64):
        out.append("seed must be an unsigned 64-bit integer")
    return out


@dataclass
class ParticleState:
    time: float
    positions: np.ndarray
    halving_events: int = 0


# -- kernels -----------------------------------------------------------------

@njit(cache=True)
def interaction(x, out):
    """``out_i = sum_{j != i} 1/(x_i - x_j)``, each pair evaluated once."""
    n = x.shape[0]
    for i in range(n):
        out[i] = 0.0
    for i in range(n):
        xi = x[i]
        acc = 0.0
        for j in range(i + 1, n):
            r = 1.0 / (xi - x[j])
            acc += r
            out[j] -= r
        out[i] += acc


@njit(cache=True)
def far_interaction(x, out):
    """Like :func:`interaction` but without the two nearest neighbours (``|i - j| >= 2``)."""
    n = x.shape[0]
    for i in range(n):
        out[i] = 0.0
    for i in range(n):
        xi = x[i]
        acc = 0.0
        for j in range(i + 2, n):
            r = 1.0 / (xi - x[j])
            acc += r
            out[j] -= r
        out[i] += acc


@njit(cache=True)
def _isotonic(v, out, sums, counts):
    """Least-squares nondecreasing fit to ``v`` (pool adjacent violators)."""
    n = v.shape[0]
    k = 0
    for i in range(n):
        sums[k] = v[i]
        counts[k] = 1.0
        k += 1
        while k > 1 and sums[k - 2] / counts[k - 2] >= sums[k - 1] / counts[k - 1]:
            sums[k - 2] += sums[k - 1]
            counts[k - 2] += counts[k - 1]
            k -= 1
    i = 0
    for j in range(k):
        m = sums[j] / counts[j]
        for _ in range(int(counts[j])):
            out[i] = m
            i += 1


@njit(cache=True)
def nn_solve(x, b, a, y, grad, diag, off, p):
    """Solve ``y_i = b_i + a sum_{j = i +- 1} 1/(y_i - y_j)`` for increasing ``y``.

    The solution minimises the strictly convex
    ``1/2 |y - b|^2 - a sum log(y_{i+1} - y_i)``; Newton with a tridiagonal
    Hessian, started from an ordered point and damped so that no gap
    shrinks by more than 90% per iteration. Returns False if it stalls.
    """
    n = y.shape[0]
    if n == 1 or a == 0.0:
        y[:] = b
        return True
    # start from the explicit proposal, projected onto gaps >= sqrt(a/2)
    # (a pair pushed together settles at gap sqrt(2a))
    s = math.sqrt(0.5 * a)
    grad[0] = b[0] + a / (x[0] - x[1])
    grad[n - 1] = b[n - 1] + a / (x[n - 1] - x[n - 2])
    for i in range(1, n - 1):
        grad[i] = b[i] + a / (x[i] - x[i - 1]) + a / (x[i] - x[i + 1])
    for i in range(n):
        grad[i] -= s * i
    _isotonic(grad, y, diag, off)
    for i in range(n):
        y[i] += s * i
    for _ in range(100):
        for i in range(n):
            grad[i] = y[i] - b[i]
            diag[i] = 1.0
        for i in range(n - 1):
            r = 1.0 / (y[i + 1] - y[i])
            grad[i] += a * r
            grad[i + 1] -= a * r
            w = a * r * r
            diag[i] += w
            diag[i + 1] += w
            off[i] = -w
        # Thomas algorithm; the matrix is diagonally dominant
        p[0] = -grad[0]
        for i in range(1, n):
            m = off[i - 1] / diag[i - 1]
            diag[i] -= m * off[i - 1]
            p[i] = -grad[i] - m * p[i - 1]
        p[n - 1] /= diag[n - 1]
        for i in range(n - 2, -1, -1):
            p[i] = (p[i] - off[i] * p[i + 1]) / diag[i]
        alpha = 1.0
        done = True
        for i in range(n - 1):
            d = y[i + 1] - y[i]
            dp = p[i + 1] - p[i]
            if -dp * alpha > 0.9 * d:
                alpha = 0.9 * d / -dp
            if not abs(dp) <= 1e-7 * d + 1e-14 * (1.0 + abs(y[i])):
                done = False
        for i in range(n):
            if not abs(p[i]) <= 1e-8 * (1.0 + abs(y[i])):
                done = False
            y[i] += alpha * p[i]
        if done:
            return True
    return False


@njit(cache=True)
def _base_step(x, h, step, replica, c_drift, c_noise, max_halv, k0, k1,
               xi, force, prop, work, codes, lens, dws):
    """Advance ``x`` in place by ``h``; returns (ok, halving events).

    Confinement, noise and interactions beyond the nearest neighbours are
    explicit; the nearest-neighbour repulsion is implicit, which keeps the
    ordering for any noise. A sub-step whose implicit solve fails is split
    in two, refining the Brownian path with a bridge sample so the halves
    add up to the rejected increment. Node ``c`` of the binary tree draws
    its bridge normals from sub-stream ``c``; the whole-step increment
    uses sub-stream 0.
    """
    n = x.shape[0]
    fill_normals(xi, 0, step, replica, k0, k1)
    sh = math.sqrt(h)
    for i in range(n):
        dws[0, i] = sh * xi[i]
    top = 0
    codes[0] = 1
    lens[0] = h
    events = 0
    fresh = False
    b = work[0]
    while top >= 0:
        code = codes[top]
        hh = lens[top]
        if not fresh:
            far_interaction(x, force)
            fresh = True
        for i in range(n):
            b[i] = x[i] + (c_drift * force[i] - x[i]) * hh + c_noise * dws[top, i]
        if nn_solve(x, b, c_drift * hh, prop, work[1], work[2], work[3], work[4]):
            x[:] = prop
            fresh = False
            top -= 1
            continue
        level = 0
        c = code
        while c > 1:
            c >>= 1
            level += 1
        if level >= max_halv:
            return False, events
        events += 1
        # bridge: W(hh/2) - W(hh)/2 ~ N(0, hh/4), independent of W(hh)
        fill_normals(xi, code, step, replica, k0, k1)
        half = 0.5 * math.sqrt(hh)
        for i in range(n):
            mid = 0.5 * dws[top, i] + half * xi[i]
            dws[top + 1, i] = mid
            dws[top, i] = dws[top, i] - mid
        # slot top now holds the second half, slot top + 1 the first
        codes[top] = 2 * code + 1
        lens[top] = 0.5 * hh
        codes[top + 1] = 2 * code
        lens[top + 1] = 0.5 * hh
        top += 1
    return True, events


@njit(cache=True)
def run_ensemble(x_init, t0, grid, replica_ids, n_beta, sigma, dt, max_halv, k0, k1, warmup):
    """Simulate replicas and snapshot them at each grid time.

    ``n_beta`` is ``(n, beta)`` packed as floats. With ``warmup > 0`` the
    base step is capped by ``warmup * t`` (start from coincident atoms,
    whose stiffness decays like 1/t). Failed replicas keep NaN snapshots
    and report their smallest gap.
    """
    n = x_init.shape[0]
    beta = n_beta[1]
    R = replica_ids.shape[0]
    m = grid.shape[0]
    snaps = np.full((R, m, n), np.nan)
    events = np.zeros(R, dtype=np.int64)
    status = np.zeros(R, dtype=np.int64)
    min_gap = np.full(R, np.inf)
    c_drift = 2.0 * sigma * sigma / n
    c_noise = 2.0 * sigma / math.sqrt(n * beta)
    xi = np.empty(n)
    force = np.empty(n)
    prop = np.empty(n)
    work = np.empty((5, n))
    codes = np.empty(max_halv + 2, dtype=np.int64)
    lens = np.empty(max_halv + 2)
    dws = np.empty((max_halv + 2, n))
    x = np.empty(n)
    for r in range(R):
        rep = replica_ids[r]
        x[:] = x_init
        t = t0
        step = 0
        ok = True
        for g in range(m):
            target = grid[g]
            while t < target:
                hmax = dt
                if warmup > 0.0:
                    hmax = min(dt, warmup * t)
                rem = target - t
                if rem <= hmax * (1.0 + 1e-9):
                    h = rem
                    t_next = target
                else:
                    h = hmax
                    t_next = t + h
                good, ev = _base_step(x, h, step, rep, c_drift, c_noise, max_halv, k0, k1,
                                      xi, force, prop, work, codes, lens, dws)
                events[r] += ev
                step += 1
                t = t_next
                if not good:
                    ok = False
                    gap = np.inf
                    for i in range(n - 1):
                        gap = min(gap, x[i + 1] - x[i])
                    min_gap[r] = gap
                    break
            if not ok:
                break
            snaps[r, g, :] = x
        if not ok:
            status[r] = STATUS_STIFF
    return snaps, events, status, min_gap


# -- python layer ------------------------------------------------------------

def drift(positions, sigma):
    """Deterministic drift ``-x_i + (2 sigma^2/n) sum_{j != i} 1/(x_i - x_j)``."""
    x = np.ascontiguousarray(positions, dtype=float)
    f = np.empty_like(x)
    interaction(x, f)
    return -x + 2.0 * sigma**2 / len(x) * f


def step(state: ParticleState, params: SimParams, dt_try, step_index=0, replica=0) -> ParticleState:
    """One (possibly subdivided) step of length ``dt_try``."""
    if not dt_try > 0:
        raise ValueError("dt_try must be positive")
    n = params.n
    x = np.array(state.positions, dtype=float)
    k0, k1 = split_seed(params.seed)
    mh = params.max_halvings
    ok, ev = _base_step(x, float(dt_try), step_index, replica, 2 * params.sigma**2 / n,
                        2 * params.sigma / math.sqrt(n * params.beta), mh, k0, k1,
                        np.empty(n), np.empty(n), np.empty(n), np.empty((5, n)),
                        np.empty(mh + 2, dtype=np.int64), np.empty(mh + 2), np.empty((mh + 2, n)))
    if not ok:
        raise StiffStepError("step halving exhausted", min_gap=float(np.min(np.diff(x))) if n > 1 else None)
    return ParticleState(state.time + dt_try, x, state.halving_events + int(ev))


def init_particles(x0, n, fm: FlowMap | None, tau0) -> ParticleState:
    """Deterministic start: midpoint quantiles of ``X0``, or of ``X_tau0`` if atoms coincide."""
    if not 0 <= tau0 <= 0.01:
        raise ValueError("tau0 must lie in [0, 0.01]")
    pts = ms.quantile_sample(x0, n)
    if n == 1 or np.all(np.diff(pts) > 0):
        return ParticleState(0.0, pts)
    if not tau0 > 0:
        raise ValueError("coincident initial atoms need tau0 > 0")
    if fm is None:
        raise ValueError("coincident initial atoms need a flow map")
    return ParticleState(float(tau0), fm.xt_quantiles(tau0, n))


@dataclass
class EnsembleRun:
    times: np.ndarray
    snapshots: np.ndarray  # (replicas, times, n)
    halving_events: np.ndarray
    status: np.ndarray
    min_gap: np.ndarray
    start: ParticleState
    replica_ids: np.ndarray

    @property
    def failed(self):
        return self.status != STATUS_OK


def warmup_rate(params: SimParams):
    """Step cap per unit time after a coincident start: ``h <= rate * t``."""
    return WARMUP / params.n * min(1.0, params.beta)


def default_tau0(dt):
    return min(dt, 1e-3)


def simulate_ensemble(params: SimParams, x0, t_grid, replicas, fm: FlowMap | None = None,
                      first_replica=0) -> EnsembleRun:
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("t_grid must be a strictly increasing nonempty list")
    if fm is None:
        fm = FlowMap(x0, params.sigma)
    start = init_particles(x0, params.n, fm, default_tau0(params.dt))
    if grid[0] < start.time:
        raise ValueError(f"t_grid starts before the initial time {start.time}")
    ids = np.arange(first_replica, first_replica + replicas, dtype=np.int64)
    k0, k1 = split_seed(params.seed)
    warm = warmup_rate(params) if start.time > 0 else 0.0
    snaps, ev, status, gap = run_ensemble(np.ascontiguousarray(start.positions), start.time, grid, ids,
                                          np.array([params.n, params.beta], dtype=float),
                                          params.sigma, params.dt, params.max_halvings, k0, k1, warm)
    return EnsembleRun(grid, snaps, ev, status, gap, start, ids)


def simulate(params: SimParams, x0, t_grid, fm: FlowMap | None = None, replica=0) -> list:
    """Single trajectory snapshotted at the grid times."""
    run = simulate_ensemble(params, x0, t_grid, 1, fm, first_replica=replica)
    if run.status[0] != STATUS_OK:
        raise StiffStepError("step halving exhausted", min_gap=float(run.min_gap[0]))
    ev = int(run.halving_events[0])
    return [ParticleState(float(t), run.snapshots[0, k].copy(), ev) for k, t in enumerate(run.times)]


# -- fluctuations ------------------------------------------------------------

@dataclass(frozen=True)
class Resolvent:
    z: complex

    def label(self):
        return f"resolvent({self.z.real:.17g}{self.z.imag:+.17g}j)"


@dataclass(frozen=True)
class Monomial:
    k: int

    def label(self):
        return f"monomial({self.k})"


def _centering(test, t, fm, n):
    if isinstance(test, Resolvent):
        return n * fm.M(t, test.z)
    return n * fm.moment(t, test.k)


def linear_statistics(positions, test):
    """``sum_i F(lambda_i)`` over the last axis."""
    x = np.asarray(positions, dtype=float)
    if isinstance(test, Resolvent):
        z = complex(test.z)
        if np.any(np.abs(x - z) < 1e-12):
            raise DomainError("resolvent point within 1e-12 of a particle")
        return np.sum(1.0 / (x - z), axis=-1)
    if test.k < 0:
        raise ValueError("monomial degree must be nonnegative")
    return np.sum(x**test.k, axis=-1).astype(complex)


def fluctuation(state: ParticleState, test, fm: FlowMap) -> complex:
    """``<Y^n_t, F> = sum F(lambda_i) - n int F dX_t``."""
    return complex(linear_statistics(state.positions, test) - _centering(test, state.time, fm, len(state.positions)))


def fluctuations(positions, t, tests, fm: FlowMap):
    """Fluctuations for an array of configurations ``(..., n)``; returns ``(..., len(tests))``."""
    x = np.asarray(positions, dtype=float)
    n = x.shape[-1]
    cols = [linear_statistics(x, tst) - _centering(tst, t, fm, n) for tst in tests]
    return np.stack(cols, axis=-1)
