"""Command-line runner: hardy, equilibrium, nogo, dirac, measure.

Data files (summary.json, crossings.json, trajectories.csv, certificate.json)
depend only on config, seed and version. Wall time goes to timing.json.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, config_dict, emit_config, load_config, validate
from .parallel import stream

SCHEMA_VERSION = 1
TRAJECTORY_COLUMNS = ("id", "s", "t_a", "q_a", "t_b", "q_b", "flags")


def _clean(v):
    """JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return v


def _check(name, value, passed, sigma=None, threshold=None):
    return {"name": name, "value": value, "sigma": sigma, "threshold": threshold, "pass": bool(passed)}


def _fmt(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else "nan"


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        w.writerows(rows)


# --------------------------------------------------------------------------
# commands; each returns (checks, extra summary fields, files)


def run_hardy_command(cfg: RunConfig):
    from .equilibrium import quantum_table
    from .hardy import FRAMES, build_scenario, run_hardy, run_start

    g = cfg.geometry
    sc = build_scenario(g)
    h = cfg.offset
    T_a0, T_b0 = run_start(g, h)
    s_last = g.t_exit - max(T_a0, T_b0)
    k = int(math.floor(s_last / cfg.record_every + 1e-9))
    cps = [round(i * cfg.record_every, 12) for i in range(1, k + 1)]
    rep = run_hardy(sc, h, cfg.n, cfg.seed, cfg.detectors, cfg.integrator, checkpoints=cps)

    checks = []
    n = rep.n
    pp = rep.tables["I(t1)"].cell("+x", "+x")
    checks.append(_check("pp_fraction_I(t1)", pp.fraction, abs(pp.fraction - 1 / 12) <= 0.008, pp.sigma, "|value - 1/12| <= 0.008"))
    flagged = int(np.count_nonzero(rep.flags))
    checks.append(_check("flagged_fraction", flagged / n, flagged / n < 1e-3, None, "< 0.001"))

    crossings = {}
    quantum = {}
    for f in FRAMES:
        sl = sc.slice(f)
        ra, rb = sc.slice_regions(sl)
        q = quantum_table(sc.state, sl, ra, rb)
        quantum[f] = q
        tab = rep.tables[f].as_dict()
        for c in tab["cells"]:
            c["quantum"] = q[(c["a"], c["b"])]
        crossings[f] = tab

    courses = {}
    sub = rep.sub_ensemble(1, 1)
    ends = {}
    for za, zb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        key = f"a:{'+' if za > 0 else '-'}z b:{'+' if zb > 0 else '-'}z"
        ends[key] = int(np.count_nonzero((rep.channels["a_z"][sub] == za) & (rep.channels["b_z"][sub] == zb)))
    courses["pp_subensemble"] = int(np.count_nonzero(sub))
    courses["exits"] = ends
    # course and exhibit statements describe the undisturbed experiment
    if h != 0 and np.count_nonzero(sub) and not cfg.detectors:
        want = "a:-z b:+z" if h < 0 else "a:+z b:-z"
        frac = ends[want] / np.count_nonzero(sub)
        checks.append(_check(f"courses_{want}", frac, frac >= 0.99, None, ">= 0.99"))
        frame, ca, cb = ("III", "+x", "+z") if h < 0 else ("II", "+z", "+x")
        cell = rep.tables[frame].cell(ca, cb)
        qp = quantum[frame][(ca, cb)]
        ok = cell.fraction >= 0.07 and qp < 1e-6 and (cell.fraction - qp) > 10 * cell.sigma
        checks.append(_check(f"exhibit_{frame}_({ca},{cb})", cell.fraction, ok, cell.sigma, ">= 0.07, quantum < 1e-6, > 10 sigma"))
        courses["exhibit"] = {"frame": frame, "a": ca, "b": cb, "fraction": cell.fraction, "quantum": qp}

    detectors = []
    if cfg.detectors:
        plain = run_hardy(sc, h, cfg.n, cfg.seed, (), cfg.integrator, checkpoints=cps + [d.time - (T_a0 if d.subsystem == "a" else T_b0) for d in cfg.detectors])
        first = min(d.time - (T_a0 if d.subsystem == "a" else T_b0) for d in cfg.detectors)
        same = all(
            np.array_equal(rep.snapshots[sp], plain.snapshots[sp], equal_nan=True) for sp in rep.snapshots if sp <= first
        )
        checks.append(_check("pre_detection_identical", same, same, None, "bitwise"))
        for i, d in enumerate(cfg.detectors):
            fired = rep.fired[i]
            other = "b_z" if d.subsystem == "a" else "a_z"
            cnt = int(np.count_nonzero(fired))
            minus = int(np.count_nonzero(rep.channels[other][fired] == -1))
            entry = {"subsystem": d.subsystem, "region": d.region, "time": d.time, "fired": cnt, "other_exits_minus_z": minus}
            detectors.append(entry)
            if d.region == "+x" and cnt:
                checks.append(_check(f"detector_{d.subsystem}+x_other_exits_-z", minus / cnt, minus / cnt >= 0.99, None, ">= 0.99"))

    rows = []
    snaps = sorted(rep.snapshots)
    for i in range(n):
        for sp in snaps:
            qa, qb = rep.snapshots[sp][i]
            rows.append((i, _fmt(sp), _fmt(T_a0 + sp), _fmt(qa), _fmt(T_b0 + sp), _fmt(qb), int(rep.flags[i])))
    extra = {
        "h": h,
        "start": list(rep.start),
        "acceptance_rate": rep.acceptance,
        "flagged": {"total": flagged, "by_flag": {str(b): int(np.count_nonzero(rep.flags & b)) for b in (1, 2, 4, 8)}},
        "courses": courses,
        "detectors": detectors,
    }
    return checks, extra, {"crossings.json": crossings, "trajectories.csv": rows}


def run_equilibrium_command(cfg: RunConfig):
    from .hardy import build_scenario, equivariance_scan

    sc = build_scenario(cfg.geometry)
    checks, table = [], []
    for i, h in enumerate(cfg.equilibrium.h_values):
        rows = equivariance_scan(sc, h, cfg.n, cfg.seed + i, cfg.equilibrium.s_values, cfg.integrator)
        for r in rows:
            table.append({"h": r.h, "s": r.s, "tv": r.tv, "flagged": r.flagged, "cells": r.cells})
            checks.append(_check(f"tv_h={r.h!r}_s={r.s!r}", r.tv, r.tv < 0.02, None, "< 0.02"))
    return checks, {"equivariance": table}, {"crossings.json": {"equivariance": table}}


def run_nogo_command(cfg: RunConfig):
    from .feasibility import (
        FeasibilityProblem,
        Feasible,
        certify_no_measure,
        hardy_constraints,
        implied_lower_bound,
        verify_certificate,
        verify_witness,
    )

    forbidden = "never az=-1 and bz=-1"
    if cfg.nogo.constraints:
        with open(cfg.nogo.constraints, encoding="utf-8") as fh:
            problem = FeasibilityProblem.from_text(fh.read())
    else:
        problem = hardy_constraints()
    if cfg.nogo.drop:
        problem = problem.without(cfg.nogo.drop)
    names = [c.name for c in problem.constraints]
    res = certify_no_measure(problem)
    checks = []
    cert = {"constraints": names}
    if isinstance(res, Feasible):
        ok = verify_witness(problem, res.witness)
        cert.update(result="feasible", witness=[_clean(Fraction(w)) for w in res.witness])
        checks.append(_check("witness_verified", ok, ok))
    else:
        ok = verify_certificate(problem, res)
        cert.update(result="infeasible", multipliers=[_clean(Fraction(m)) for m in res.multipliers], text=res.to_text(problem))
        checks.append(_check("certificate_verified", ok, ok))
        if forbidden in names:
            bound = implied_lower_bound(problem, res, forbidden)
            cert["implied_lower_bound"] = {"constraint": forbidden, "value": _clean(bound)}
            checks.append(_check("implied_bound_ge_1/12", _clean(bound), bound >= Fraction(1, 12), None, ">= 1/12"))
    extra = {"result": cert["result"], "certificate": cert}
    if not cfg.nogo.constraints and not cfg.nogo.drop:
        checks.append(_check("hardy_infeasible", cert["result"], cert["result"] == "infeasible"))
        relaxed = problem.without(forbidden)
        r2 = certify_no_measure(relaxed)
        ok2 = isinstance(r2, Feasible) and verify_witness(relaxed, r2.witness)
        extra["without_forbidden"] = {
            "result": "feasible" if isinstance(r2, Feasible) else "infeasible",
            "witness": [_clean(Fraction(w)) for w in r2.witness] if isinstance(r2, Feasible) else None,
        }
        checks.append(_check("relaxed_feasible_witness", ok2, ok2))
    return checks, extra, {"certificate.json": cert}


def run_dirac_command(cfg: RunConfig):
    from .dirac import (
        MultitimeDiracState,
        density_bins,
        dirac_current,
        dirac_evolve,
        gaussian_packet,
        integrate_dirac_ensemble,
        integrate_dirac_path,
        integrate_multitime_paths,
        path_set_distance,
        quantile_edges,
        sample_density,
    )

    d = cfg.dirac
    st = gaussian_packet(d.length, d.points, d.mass, d.x0, d.k0, d.width)
    checks = []

    cur, drift, defect = st, 0.0, np.inf
    dt = d.t_end / d.steps
    for i in range(d.steps):
        cur = dirac_evolve(cur, dt)
        drift = max(drift, abs(cur.norm() - 1.0))
        if i % 50 == 0 or i == d.steps - 1:
            j0, j1 = dirac_current(cur)
            defect = min(defect, float(np.min(j0 * j0 - j1 * j1)))
    checks.append(_check("norm_drift", drift, drift < 1e-8, None, "< 1e-8"))
    checks.append(_check("timelike_defect", defect, defect >= -1e-12, None, ">= -1e-12"))

    final = dirac_evolve(st, d.t_end)
    x0 = sample_density(st, cfg.n, cfg.seed)
    xe, vmax = integrate_dirac_ensemble(st, x0, d.t_end, d.dt)
    edges = quantile_edges(final, d.bins)
    p = density_bins(final, edges)
    emp = np.histogram(xe, bins=edges)[0] / len(xe)
    tv = 0.5 * float(np.sum(np.abs(p - emp)))
    checks.append(_check("j0_equivariance_tv", tv, tv < 0.02, None, "< 0.02"))

    half = dict(length=d.length, n=d.points, mass=d.mass)
    a = gaussian_packet(x0=d.x0, k0=d.k0, sigma=d.width, **half)
    b = gaussian_packet(x0=-d.x0, k0=-0.5 * d.k0, sigma=d.width, **half)
    c = gaussian_packet(x0=d.x0 + 2 * d.width, k0=-d.k0, sigma=d.width, **half)
    e = gaussian_packet(x0=-d.x0 - 2 * d.width, k0=0.8 * d.k0, sigma=d.width, **half)
    ent = MultitimeDiracState((1.0, 1.0), ((a, b), (c, e))).normalized()
    one = MultitimeDiracState((1.0,), ((a,),))
    span = 0.5 * d.t_end
    dist, n1, spread, speed = 0.0, 0.0, 0.0, 0.0
    for i in range(d.paths):
        g = stream(cfg.seed, i)
        x1 = d.x0 + d.width * float(g.uniform(-1, 1))
        x2 = -d.x0 + d.width * float(g.uniform(-1, 1))
        start = [(0.0, x1), (0.0, x2)]
        pm = integrate_multitime_paths(ent, "multibd", start, span)
        ps = integrate_multitime_paths(ent, "shbd", start, 1e9, t_stop=span)
        dist = max(dist, path_set_distance(pm, ps, 0))
        pc = integrate_multitime_paths(ent, "covariant", start, 0.5 * span)
        spread = max(spread, float(np.ptp(pc.T[1] - pc.T[0])))
        c1 = integrate_multitime_paths(one, "covariant", [(0.0, x1)], 1e9, t_stop=span)
        ref = integrate_dirac_path(a, x1, span)
        n1 = max(n1, float(np.max(np.abs(ref.dense(c1.T[0])[0] - c1.Q[0]))))
        speed = max(speed, ref.max_speed())
    speed = max(speed, vmax)
    checks.append(_check("path_speed", speed, speed <= 1 + 1e-9, None, "<= 1 + 1e-9"))
    checks.append(_check("shbd_vs_multibd_distance", dist, dist < 1e-6, None, "< 1e-6"))
    checks.append(_check("covariant_N1_vs_single", n1, n1 < 1e-6, None, "< 1e-6"))

    rows = []
    for i in range(len(x0)):
        rows.append((i, _fmt(0.0), _fmt(0.0), _fmt(x0[i]), "", "", 0))
        rows.append((i, _fmt(d.t_end), _fmt(d.t_end), _fmt(xe[i]), "", "", 0))
    extra = {"covariant_T2_minus_T1_spread": spread, "bins": {"edges": list(edges), "quantum": list(p), "empirical": list(emp)}}
    return checks, extra, {"trajectories.csv": rows, "crossings.json": {"j0_bins": extra["bins"]}}


def run_measure_command(cfg: RunConfig):
    from .measurement import (
        MeasurementEvent,
        hardy_model,
        joint_probability,
        no_signaling_gap,
        random_events,
        random_model,
        shift_events,
    )

    m = hardy_model()

    def ev(sub, axis, out):
        return MeasurementEvent(sub, 0.0, axis, out)

    pp = joint_probability(m, [ev("a", "x", 1), ev("b", "x", 1)])
    forb = {
        "ax=+1,bz=+1": joint_probability(m, [ev("a", "x", 1), ev("b", "z", 1)]),
        "az=+1,bx=+1": joint_probability(m, [ev("a", "z", 1), ev("b", "x", 1)]),
        "az=-1,bz=-1": joint_probability(m, [ev("a", "z", -1), ev("b", "z", -1)]),
    }
    checks = [_check("hardy_pp", pp, abs(pp - 1 / 12) <= 1e-12, None, "|value - 1/12| <= 1e-12")]
    for k, v in forb.items():
        checks.append(_check(f"forbidden_{k}", v, abs(v) <= 1e-12, None, "<= 1e-12"))

    shift_err, gap = 0.0, 0.0
    axes = ("x", "y", "z")
    for i in range(cfg.measure.cases):
        g = stream(cfg.seed, i)
        model = random_model(g)
        events = random_events(g, cfg.measure.events)
        tau = tuple(float(v) for v in g.uniform(-3, 3, size=2))
        p0 = joint_probability(model, events)
        m2, e2 = shift_events(model, events, tau)
        shift_err = max(shift_err, abs(joint_probability(m2, e2) - p0))
        ta = np.sort(g.uniform(-2, 2, size=2))
        a_set = [(float(ta[0]), axes[g.integers(3)]), (float(ta[1]), axes[g.integers(3)])]
        b1 = [(float(g.uniform(-2, 2)), axes[g.integers(3)])]
        b2 = [(float(g.uniform(-2, 2)), axes[g.integers(3)])]
        gap = max(gap, no_signaling_gap(model, a_set, b1, b2))
    checks.append(_check("shift_invariance", shift_err, shift_err <= 1e-12, None, "<= 1e-12"))
    checks.append(_check("no_signaling_gap", gap, gap <= 1e-12, None, "<= 1e-12"))
    extra = {"hardy": {"ax=+1,bx=+1": pp, **forb}}
    return checks, extra, {}


COMMANDS = {
    "hardy": run_hardy_command,
    "equilibrium": run_equilibrium_command,
    "nogo": run_nogo_command,
    "dirac": run_dirac_command,
    "measure": run_measure_command,
}


def run(cfg: RunConfig) -> dict:
    """Execute one command and write its files; returns the summary."""
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    try:
        checks, extra, files = COMMANDS[cfg.command](cfg)
    except (ValueError, RuntimeError, OSError) as e:
        raise RuntimeError(f"{cfg.command} failed: {e}") from e
    wall = time.perf_counter() - t0
    failures = [c["name"] for c in checks if not c["pass"]]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": cfg.command,
        # the output directory is left out so identical runs compare equal anywhere
        "config": {k: v for k, v in config_dict(cfg).items() if k != "out"},
        "config_text": emit_config(replace(cfg, out="")),
        "checks": checks,
        "checks_enabled": cfg.check,
        "failures": failures,
        "passed": not failures,
        **extra,
    }
    for name, content in files.items():
        path = os.path.join(cfg.out, name)
        if name.endswith(".csv"):
            _write_rows(path, content)
        else:
            _write_json(path, {"schema_version": SCHEMA_VERSION, **content})
    _write_json(os.path.join(cfg.out, "summary.json"), summary)
    _write_json(os.path.join(cfg.out, "timing.json"), {"schema_version": SCHEMA_VERSION, "wall_seconds": wall})
    return summary


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multibohm", description="Two-time Bohmian mechanics experiments.")
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", help="INI scenario file")
    p.add_argument("--h", type=float, help="clock offset t_b - t_a")
    p.add_argument("--n", type=int, help="ensemble size")
    p.add_argument("--seed", type=int, help="64-bit master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--check", action="store_true", help="exit nonzero unless every check passes")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        over = {"command": args.command}
        for key in ("h", "n", "seed", "out"):
            v = getattr(args, key)
            if v is not None:
                over[key] = v
        if args.check:
            over["check"] = True
        cfg = validate(replace(cfg, **over))
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        summary = run(cfg)
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    for c in summary["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']} = {c['value']}")
    if cfg.check and not summary["passed"]:
        print("failed: " + ", ".join(summary["failures"]), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
