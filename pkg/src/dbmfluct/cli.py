"""Batch front end: JSON job configs in, CSV tables and a JSON manifest out."""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import shutil
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from . import measures as ms
from .errors import ConfigError, DbmError
from .harness import (MonomialQuery, compare, fmt, mc_fluctuations, tridiag_sum_sq_fluct,
                      variance_with_se, write_comparison_csv)
from .holoflow import FlowMap
from .sim import SimParams, sim_violations, simulate
from .theory import (FluctQuery, TheoryResult, _mono, contour_cov, contour_mean, equilibrium_cov,
                     equilibrium_mean, monomial_theory, poly_variance_limit, theory)

MODES = ("theory", "simulate", "mc", "compare", "scenario")
SCENARIOS = ("stationary", "deformed-gue")
MERGE_TIMES = (0.2, 0.3466, 0.6)
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


@dataclass
class RunConfig:
    mode: str
    measure: object = None
    sigma: float = 1.0
    beta: float = 2.0
    times: list = field(default_factory=list)
    points: list = field(default_factory=list)
    monomials: list = field(default_factory=list)
    n: int | None = None
    replicas: int | None = None
    seed: int = 0
    dt: float = 1e-3
    scenario: str | None = None
    output_path: str = "."
    raw: dict = field(default_factory=dict)

    def echo(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("raw", "measure", "points")}
        d["measure"] = ms.measure_to_json(self.measure) if self.measure is not None else None
        d["points"] = [[z.real, z.imag] for z in self.points]
        return d


# -- parsing -----------------------------------------------------------------

def _num(obj, key, errs, kind=float, required=False, default=None):
    if key not in obj:
        if required:
            errs.append(f"{key} is required")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errs.append(f"{key} must be a number")
        return default
    if kind is int:
        if float(v) != int(v):
            errs.append(f"{key} must be an integer")
            return default
        return int(v)
    if not math.isfinite(v):
        errs.append(f"{key} must be finite")
        return default
    return float(v)


def _measure(obj, errs):
    m = obj.get("measure")
    if m is None:
        return None
    if not isinstance(m, dict):
        errs.append("measure must be an object")
        return None
    kind = m.get("type")
    if kind == "atomic":
        atoms = m.get("atoms")
        if not isinstance(atoms, list) or not all(isinstance(a, (list, tuple)) and len(a) == 2 for a in atoms):
            errs.append("atomic measure needs atoms as [[location, weight], ...]")
            return None
        try:
            locs = [float(a[0]) for a in atoms]
            wts = [float(a[1]) for a in atoms]
        except (TypeError, ValueError):
            errs.append("atom entries must be numbers")
            return None
        problems = ms.atomic_violations(locs, wts)
        if problems:
            errs.extend(problems)
            return None
        return ms.AtomicMeasure(tuple(locs), tuple(wts))
    if kind == "semicircle":
        s = m.get("sigma")
        if isinstance(s, bool) or not isinstance(s, (int, float)) or not s > 0:
            errs.append("semicircle sigma must be positive")
            return None
        return ms.SemicircleMeasure(float(s))
    errs.append(f"unknown measure type {kind!r}")
    return None


def parse_config(text, mode=None) -> RunConfig:
    """Validate a JSON job description, collecting every violation."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"malformed JSON: {exc}"]) from None
    if not isinstance(obj, dict):
        raise ConfigError(["config must be a JSON object"])
    errs = []
    cmode = obj.get("mode", mode)
    if mode is not None and cmode != mode:
        errs.append(f"config mode {cmode!r} does not match subcommand {mode!r}")
    if cmode not in MODES:
        errs.append(f"mode must be one of {', '.join(MODES)}")
    scen = obj.get("scenario")
    if cmode == "scenario" and scen not in SCENARIOS:
        errs.append(f"scenario must be one of {', '.join(SCENARIOS)}")

    measure = _measure(obj, errs)
    sigma = _num(obj, "sigma", errs, default=1.0)
    beta = _num(obj, "beta", errs, default=2.0)
    if sigma is not None and not sigma > 0:
        errs.append("sigma must be positive")
    if beta is not None and not beta > 0:
        errs.append("beta must be positive")
    dt = _num(obj, "dt", errs, default=1e-3)
    n = _num(obj, "n", errs, kind=int)
    replicas = _num(obj, "replicas", errs, kind=int)
    seed = obj.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        errs.append("seed must be an unsigned 64-bit integer")
        seed = 0

    times = obj.get("times", [])
    if not isinstance(times, list) or not all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in times):
        errs.append("times must be a list of numbers")
        times = []
    times = [float(t) for t in times]
    if any(not (math.isfinite(t) and t >= 0) for t in times):
        errs.append("times must be finite and nonnegative")
    points = []
    for p in obj.get("points", []) or []:
        if isinstance(p, (list, tuple)) and len(p) == 2 and all(isinstance(v, (int, float)) for v in p):
            points.append(complex(p[0], p[1]))
        else:
            errs.append("points must be [re, im] pairs")
            break
    if any(z.imag == 0 for z in points):
        errs.append("points must lie off the real axis")
    monomials = obj.get("monomials", []) or []
    if not isinstance(monomials, list) or not all(isinstance(k, int) and not isinstance(k, bool) and k >= 0 for k in monomials):
        errs.append("monomials must be a list of nonnegative integers")
        monomials = []

    # mode-specific requirements
    needs_measure = cmode in ("theory", "simulate", "mc", "compare")
    if needs_measure and measure is None and "measure" not in obj:
        errs.append("measure is required")
    if cmode in ("theory", "mc", "compare", "simulate") and not times:
        errs.append("times must be a nonempty list")
    if cmode in ("theory", "mc", "compare") and not points and not monomials:
        errs.append("points or monomials are required")
    if cmode in ("theory", "mc", "compare") and points and monomials:
        errs.append("give either points or monomials, not both")
    if cmode in ("simulate", "mc", "compare"):
        if n is None:
            errs.append("n is required")
        if dt is not None and beta is not None and sigma is not None and n is not None:
            errs.extend(e for e in sim_violations(n, beta, sigma, dt, 20, seed)
                        if not e.startswith(("beta", "sigma", "seed")))
        elif dt is not None and not (0 < dt <= 0.1):
            errs.append("dt must lie in (0, 0.1]")
    if cmode in ("mc", "compare"):
        if replicas is None:
            errs.append("replicas is required")
        elif replicas < 100:
            errs.append("replicas must be at least 100")
    if cmode == "scenario" and scen == "stationary":
        if not points:
            errs.append("stationary scenario needs points")
        if replicas is not None and n is None:
            errs.append("n is required when replicas is given")
    if errs:
        raise ConfigError(errs)

    if cmode == "scenario":
        if scen == "deformed-gue":
            measure = ms.AtomicMeasure((-1.0, 1.0), (0.5, 0.5))
        else:
            measure = ms.SemicircleMeasure(sigma)
    return RunConfig(cmode, measure, sigma, beta, times, points, monomials, n, replicas, seed, dt, scen, raw=obj)


# -- execution ---------------------------------------------------------------

def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in r])


def _resolvent_query(cfg):
    return FluctQuery(cfg.beta, tuple((t, z) for t in cfg.times for z in cfg.points))


def _monomial_query(cfg):
    return MonomialQuery(cfg.beta, tuple((t, k) for t in cfg.times for k in cfg.monomials))


def _labels(cfg):
    if cfg.points:
        return [f"resolvent({z.real:.17g}{z.imag:+.17g}j)@t={t:.17g}" for t in cfg.times for z in cfg.points]
    return [f"monomial({k})@t={t:.17g}" for t in cfg.times for k in cfg.monomials]


def _theory(cfg, fm):
    if cfg.points:
        return theory(_resolvent_query(cfg), fm)
    if len(set(cfg.times)) != 1:
        # cross-time monomial covariances via the contour formula
        ents = [(t, k) for t in cfg.times for k in cfg.monomials]
        mean = np.array([contour_mean(_mono(k), t, cfg.beta, fm) for t, k in ents], dtype=complex)
        cov = np.empty((len(ents), len(ents)), dtype=complex)
        for a, (ta, ka) in enumerate(ents):
            for b in range(a, len(ents)):
                tb, kb = ents[b]
                (t1, k1), (t2, k2) = ((ta, ka), (tb, kb)) if ta >= tb else ((tb, kb), (ta, ka))
                cov[a, b] = cov[b, a] = contour_cov(_mono(k1), _mono(k2), t1, t2, cfg.beta, fm)
        return TheoryResult(mean, cov)
    return monomial_theory(cfg.monomials, cfg.times[0], cfg.beta, fm)


def _theory_rows(res, labels):
    rows = []
    for a, lab in enumerate(labels):
        rows.append((f"mean[{lab}]", res.mean[a].real, res.mean[a].imag))
    for a in range(len(labels)):
        for b in range(a, len(labels)):
            rows.append((f"cov[{labels[a]},{labels[b]}]", res.cov[a, b].real, res.cov[a, b].imag))
    return rows


def _mc(cfg, fm):
    params = SimParams(cfg.n, cfg.beta, cfg.sigma, cfg.dt, seed=cfg.seed)
    q = _resolvent_query(cfg) if cfg.points else _monomial_query(cfg)
    return mc_fluctuations(params, cfg.measure, q, cfg.replicas, fm)


def execute(cfg: RunConfig, outdir) -> dict:
    """Write the mode's outputs into ``outdir``; return manifest extras."""
    extra = {}
    fm = FlowMap(cfg.measure, cfg.sigma)
    if cfg.mode == "theory":
        res = _theory(cfg, fm)
        _write_rows(os.path.join(outdir, "theory.csv"), ["quantity", "re", "im"], _theory_rows(res, _labels(cfg)))
        with open(os.path.join(outdir, "theory.json"), "w") as fh:
            json.dump(res.to_json(), fh, indent=1)
    elif cfg.mode == "simulate":
        params = SimParams(cfg.n, cfg.beta, cfg.sigma, cfg.dt, seed=cfg.seed)
        states = simulate(params, cfg.measure, sorted(cfg.times), fm)
        rows = [(s.time, str(i), lam) for s in states for i, lam in enumerate(s.positions)]
        _write_rows(os.path.join(outdir, "trajectory.csv"), ["t", "i", "lambda"], rows)
        extra["halving_events"] = int(states[-1].halving_events)
    elif cfg.mode == "mc":
        est = _mc(cfg, fm)
        rows = [(f"mean[{lab}]", est.sample_mean[a].real, est.sample_mean[a].imag, est.mean_se[a])
                for a, lab in enumerate(est.labels)]
        for a in range(len(est.labels)):
            for b in range(a, len(est.labels)):
                rows.append((f"cov[{est.labels[a]},{est.labels[b]}]", est.sample_cov[a, b].real,
                             est.sample_cov[a, b].imag, est.cov_se[a, b]))
        _write_rows(os.path.join(outdir, "mc.csv"), ["quantity", "est_re", "est_im", "se"], rows)
        extra.update(halving_events=est.halving_events, failed_replicas=est.failed, replicas=est.replicas)
    elif cfg.mode == "compare":
        est = _mc(cfg, fm)
        res = _theory(cfg, fm)
        write_comparison_csv(compare(res, est), os.path.join(outdir, "comparison.csv"))
        extra.update(halving_events=est.halving_events, failed_replicas=est.failed, replicas=est.replicas)
    elif cfg.scenario == "deformed-gue":
        times = cfg.times or list(MERGE_TIMES)
        rows = [(t, 0.0, fm.density(t, 0.0), fm.xt_density_exact(t, 0.0)) for t in times]
        _write_rows(os.path.join(outdir, "density.csv"), ["t", "x", "density", "density_exact"], rows)
    else:
        _stationary(cfg, fm, outdir, extra)
    return extra


def _stationary(cfg, fm, outdir, extra):
    times = cfg.times or [10.0]
    rows = []
    for t in times:
        q = FluctQuery(cfg.beta, tuple((t, z) for z in cfg.points))
        res = theory(q, fm)
        for a, za in enumerate(cfg.points):
            eq = equilibrium_mean(cfg.beta, cfg.sigma, za)
            rows.append((f"mean[{za.real:.17g}{za.imag:+.17g}j]@t={t:.17g}", res.mean[a].real, res.mean[a].imag,
                         eq.real, eq.imag))
            for b in range(a, len(cfg.points)):
                zb = cfg.points[b]
                eq = equilibrium_cov(cfg.beta, cfg.sigma, 0.0, za, zb)
                rows.append((f"cov[{za.real:.17g}{za.imag:+.17g}j,{zb.real:.17g}{zb.imag:+.17g}j]@t={t:.17g}",
                             res.cov[a, b].real, res.cov[a, b].imag, eq.real, eq.imag))
    _write_rows(os.path.join(outdir, "stationary.csv"),
                ["quantity", "finite_t_re", "finite_t_im", "equilibrium_re", "equilibrium_im"], rows)
    if cfg.replicas:
        x = tridiag_sum_sq_fluct(cfg.n, cfg.beta, cfg.sigma, cfg.replicas, cfg.seed)
        v, se = variance_with_se(x)
        lim = poly_variance_limit(2, cfg.beta, cfg.sigma)
        _write_rows(os.path.join(outdir, "oracle.csv"), ["quantity", "theory_re", "theory_im", "est_re", "est_im", "se", "z_score"],
                    [("var[monomial(2)]", lim, 0.0, v, 0.0, se, abs(v - lim) / se)])


def run(cfg: RunConfig, outdir) -> int:
    """Execute ``cfg`` into ``outdir``; on failure nothing new is left behind."""
    os.makedirs(outdir, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=".partial-", dir=outdir)
    try:
        extra = execute(cfg, stage)
        manifest = {"version": __version__, "mode": cfg.mode, "seed": cfg.seed, "config": cfg.echo(),
                    "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()), **extra}
        manifest["files"] = sorted(os.listdir(stage))
        with open(os.path.join(stage, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
        for name in os.listdir(stage):
            os.replace(os.path.join(stage, name), os.path.join(outdir, name))
        return EXIT_OK
    except (DbmError, ArithmeticError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def build_parser():
    p = argparse.ArgumentParser(prog="dbmfluct", description="Dyson Brownian motion fluctuation toolkit")
    sub = p.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        s = sub.add_parser(mode)
        s.add_argument("--config", required=True, help="JSON job description")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int, default=None, help="override the config seed (unsigned 64-bit)")
        s.add_argument("--replicas", type=int, default=None, help="override the replica count")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            obj = json.load(fh)
        if not isinstance(obj, dict):
            raise ConfigError(["config must be a JSON object"])
        if args.seed is not None:
            obj["seed"] = args.seed
        if args.replicas is not None:
            obj["replicas"] = args.replicas
        cfg = parse_config(json.dumps(obj), mode=args.mode)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.output_path = args.out
    return run(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
