"""Command line front end.

Every command loads a scenario file, runs one experiment, and writes its
artifacts under --out with fixed names.  Reports carry the sha256 of the
scenario file and no timestamps, so rerunning a command on the same file
produces byte-identical report.json output.

Exit codes: 0 success, 2 bad scenario or unrunnable experiment, 3 impulse
times accumulated (Zeno abort), 4 verify found a mismatched expectation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import geometry
from .config import load_scenario, parse_point, resolve_scenario_path
from .errors import IfsimError, ScenarioInvalid, ZenoAbortError
from .flow import flow_var_batch
from .impulse import ZENO_ABORT, Scenario, build_trajectory
from .measure import (DiscreteMeasure, invariance_defect, kb_average,
                      mass_near_D, support_in_omega, write_measure_csv)
from .nonwandering import (audit_hypotheses, continuity_report,
                           estimate_omega, write_omega_csv)
from .quotient import conjugacy_residual

_AUDIT_KEYS = ("tau_d_continuous", "image_in_omega_minus_d",
               "omega_cap_d_empty")


def _json_safe(v):
    if isinstance(v, dict):
        return {str(k): _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)) or isinstance(v, np.ndarray):
        return [_json_safe(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        # strict JSON has no Infinity/NaN literals
        return f if math.isfinite(f) else repr(f)
    return v


def _write_report(out_dir, command, sf, parameters, results, verdicts=None):
    payload = {
        "command": command,
        "scenario": {"name": sf.scenario.name, "sha256": sf.sha256},
        "parameters": _json_safe(parameters),
        "results": _json_safe(results),
        "verdicts": _json_safe(verdicts if verdicts is not None else {}),
    }
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, int(args.threads))
    env = os.environ.get("IFS_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ScenarioInvalid(f"IFS_THREADS must be an integer, got {env!r}")
    return 1


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _estimate(sf, name, threads):
    exp = sf.experiment(name, "omega")
    est = estimate_omega(sf.scenario, exp["grid"], exp["params"],
                         threads=threads)
    return exp, est


def _omega_params(name, exp) -> dict:
    p = exp["params"]
    return {"experiment": name, "grid": list(exp["grid"]),
            "eps_ball": p.eps_ball, "t_min": p.T_min, "horizon": p.horizon,
            "sample_step": p.sample_step}


def _measure_source(sc: Scenario, exp) -> DiscreteMeasure:
    if exp["source"] == "kb":
        return kb_average(sc, np.array(exp["x0"]), exp["delta"], exp["n"])
    n = exp["n"]
    th = 2.0 * np.pi * np.arange(1, n + 1) / n
    pts = np.column_stack([np.full(n, exp["radius"]), th])
    return DiscreteMeasure(geometry.normalize(sc.chart, pts),
                           np.full(n, 1.0 / n), sc.chart)


# --- simulate ------------------------------------------------------------


def _segment_rows(fh, sc, start, t0, t1, seg, include_start):
    """Sample rows at t0 + j*h, strictly before t1."""
    h = sc.flow.h
    n = max(0, int(np.ceil((t1 - t0) / h - 1e-9)))
    js = np.arange(0 if include_start else 1, n)
    if js.size == 0:
        return None
    rel = js * h
    pts = geometry.normalize(sc.chart, flow_var_batch(
        sc.flow, sc.chart, np.tile(start, (js.size, 1)), rel))
    for t, (a, b) in zip(t0 + rel, pts):
        fh.write(f"{float(t)!r},{float(a)!r},{float(b)!r},{seg},0\n")
    return float(t0 + rel[-1])


def cmd_simulate(sf, args) -> int:
    sc = sf.scenario
    x0 = np.array(parse_point(args.x0, sc.chart, path="--x0"))
    H = sc.horizon_default if args.horizon is None else float(args.horizon)
    traj = build_trajectory(sc, x0, H)
    out = _outdir(args)
    path = os.path.join(out, "trajectory.csv")
    with open(path, "w") as fh:
        fh.write("t,x1,x2,segment_index,is_event\n")
        last_t = None
        t_seg, state = 0.0, traj.x0
        for k, ev in enumerate(traj.events):
            t = _segment_rows(fh, sc, state, t_seg, ev.t, k, include_start=(k == 0))
            if t is not None:
                last_t = t
            for pt, seg in ((ev.hit, k), (ev.image, k + 1)):
                fh.write(f"{float(ev.t)!r},{float(pt[0])!r},{float(pt[1])!r},"
                         f"{seg},1\n")
            last_t, t_seg, state = float(ev.t), float(ev.t), ev.image
        nseg = len(traj.events)
        end = traj.end_time
        t = _segment_rows(fh, sc, state, t_seg, end, nseg,
                          include_start=(nseg == 0))
        if t is not None:
            last_t = t
        if traj.truncation == ZENO_ABORT:
            fh.write(f"# truncated: impulse times accumulated near "
                     f"t = {float(end)!r}\n")
        elif last_t is None or last_t < end - 1e-12:
            pt = geometry.normalize(sc.chart, traj.final_state[None, :])[0]
            fh.write(f"{float(end)!r},{float(pt[0])!r},{float(pt[1])!r},"
                     f"{nseg},0\n")
    if traj.truncation == ZENO_ABORT:
        print(f"zeno abort at t = {traj.end_time:.6g} after {traj.n_events} "
              f"impulses; partial trajectory in {path}", file=sys.stderr)
        return 3
    print(f"simulate: {traj.n_events} impulses up to t = {H:g}, wrote {path}")
    return 0


# --- experiment commands -------------------------------------------------


def cmd_omega(sf, args) -> int:
    name = args.experiment or "omega"
    exp, est = _estimate(sf, name, _threads(args))
    out = _outdir(args)
    with open(os.path.join(out, "omega.csv"), "w") as fh:
        write_omega_csv(est, fh)
    results = {"n_points": int(est.points.shape[0]),
               "n_flagged": int(np.count_nonzero(est.flagged)),
               "n_zeno": int(np.count_nonzero(est.zeno)),
               "spacing": list(est.spacing)}
    _write_report(out, "omega", sf, _omega_params(name, exp), results)
    print(f"omega: {results['n_flagged']} of {results['n_points']} "
          f"grid points flagged")
    return 0


def cmd_taud(sf, args) -> int:
    name = args.experiment or "taud"
    exp = sf.experiment(name, "taud")
    _, est = _estimate(sf, exp["omega"], _threads(args))
    prof = continuity_report(sf.scenario, est, exp["scale"], exp["horizon"])
    out = _outdir(args)
    with open(os.path.join(out, "taud.csv"), "w") as fh:
        fh.write("x1,x2,tau\n")
        for (a, b), tau in zip(prof.samples, prof.taus):
            fh.write(f"{float(a)!r},{float(b)!r},{float(tau)!r}\n")
    results = {"modulus": prof.modulus,
               "discontinuous": prof.discontinuous,
               "scale": prof.scale,
               "n_samples": int(prof.samples.shape[0]),
               "n_pairs_above_bar": len(prof.jump_pairs),
               "jump_pairs": [[i, j, g] for i, j, g in prof.jump_pairs[:32]]}
    params = {"experiment": name, "omega": exp["omega"],
              "scale": exp["scale"], "horizon": exp["horizon"]}
    _write_report(out, "taud", sf, params, results)
    word = "discontinuous" if prof.discontinuous else "continuous"
    print(f"taud: modulus {prof.modulus:.6g} at scale {prof.scale:g} ({word})")
    return 0


def _measure_params(name, exp) -> dict:
    p = {k: v for k, v in exp.items() if k not in ("kind", "partition")}
    p["experiment"] = name
    p["partition"] = exp["partition"].as_dict()
    return p


def cmd_measure(sf, args) -> int:
    name = args.experiment or "measure"
    exp = sf.experiment(name, "measure")
    sc = sf.scenario
    mu = _measure_source(sc, exp)
    out = _outdir(args)
    with open(os.path.join(out, "measure.csv"), "w") as fh:
        write_measure_csv(mu, fh)
    results = {"n_atoms": mu.n_atoms, "source": exp["source"]}
    if exp["times"]:
        defects = [invariance_defect(sc, mu, t, exp["partition"])
                   for t in exp["times"]]
        results["defects"] = [d.as_dict() for d in defects]
        results["max_defect"] = max(d.tv_defect for d in defects)
    if exp["margin"] is not None:
        results["mass_near_d"] = mass_near_D(sc, mu, exp["margin"])
    if exp["support_eps"] is not None:
        _, est = _estimate(sf, exp["omega"], _threads(args))
        results["support"] = support_in_omega(
            mu, est, exp["support_eps"]).as_dict()
    _write_report(out, "measure", sf, _measure_params(name, exp), results)
    line = f"measure: {mu.n_atoms} atoms"
    if "max_defect" in results:
        line += f", max defect {results['max_defect']:.6g}"
    print(line)
    return 0


def cmd_quotient(sf, args) -> int:
    name = args.experiment or "quotient"
    exp = sf.experiment(name, "quotient")
    _, est = _estimate(sf, exp["omega"], _threads(args))
    per_time = [(t, conjugacy_residual(sf.scenario, est,
                                       n_samples=exp["n_samples"],
                                       times=(t,), seed=exp["seed"]))
                for t in exp["times"]]
    residual = max(r for _, r in per_time)
    out = _outdir(args)
    with open(os.path.join(out, "quotient.csv"), "w") as fh:
        fh.write("time,residual\n")
        for t, r in per_time:
            fh.write(f"{float(t)!r},{float(r)!r}\n")
    params = {"experiment": name, "omega": exp["omega"],
              "n_samples": exp["n_samples"], "times": list(exp["times"]),
              "seed": exp["seed"]}
    results = {"residual": residual,
               "per_time": {repr(float(t)): r for t, r in per_time}}
    _write_report(out, "quotient", sf, params, results)
    print(f"quotient: conjugacy residual {residual:.6g}")
    return 0


# --- verify --------------------------------------------------------------


def _verdict(key, want, results):
    if key in _AUDIT_KEYS:
        got = results["audit"][key]
        ok = got == want
    elif key == "support_pass":
        got = results["support"]["pass"]
        ok = got == want
    elif key in ("modulus_max", "modulus_min"):
        got = results["modulus"]
        ok = got <= want if key == "modulus_max" else got >= want
    elif key in ("defect_max", "defect_min"):
        got = results["max_defect"]
        ok = got <= want if key == "defect_max" else got >= want
    elif key == "mass_near_d_max":
        got = results["mass_near_d"]
        ok = got <= want
    else:  # residual_max / residual_min
        got = results["residual"]
        ok = got <= want if key == "residual_max" else got >= want
    return {"expected": want, "actual": got, "pass": bool(ok)}


def cmd_verify(sf, args) -> int:
    if not sf.expected:
        raise ScenarioInvalid(
            "verify needs an [expected] block in the scenario file")
    name = args.experiment or "verify"
    exp = sf.experiment(name, "verify")
    sc = sf.scenario
    threads = _threads(args)
    expected = sf.expected
    out = _outdir(args)
    results = {}
    est_box = []

    def est():
        if not est_box:
            est_box.append(_estimate(sf, exp["omega"], threads)[1])
            with open(os.path.join(out, "omega.csv"), "w") as fh:
                write_omega_csv(est_box[0], fh)
        return est_box[0]

    if any(k in expected for k in _AUDIT_KEYS):
        results["audit"] = audit_hypotheses(sc, est(),
                                            horizon=exp["horizon"]).as_dict()
    if "modulus_max" in expected or "modulus_min" in expected:
        texp = sf.experiment(exp["taud"], "taud")
        prof = continuity_report(sc, est(), texp["scale"], texp["horizon"])
        results["modulus"] = prof.modulus
    if any(k in expected for k in ("defect_max", "defect_min",
                                   "mass_near_d_max", "support_pass")):
        mexp = sf.experiment(exp["measure"], "measure")
        mu = _measure_source(sc, mexp)
        if "defect_max" in expected or "defect_min" in expected:
            if not mexp["times"]:
                raise ScenarioInvalid(
                    "defect expectations need times in the measure block")
            defects = [invariance_defect(sc, mu, t, mexp["partition"])
                       for t in mexp["times"]]
            results["defects"] = [d.as_dict() for d in defects]
            results["max_defect"] = max(d.tv_defect for d in defects)
        if "mass_near_d_max" in expected:
            if mexp["margin"] is None:
                raise ScenarioInvalid(
                    "mass_near_d_max needs a margin in the measure block")
            results["mass_near_d"] = mass_near_D(sc, mu, mexp["margin"])
        if "support_pass" in expected:
            if mexp["support_eps"] is None:
                raise ScenarioInvalid(
                    "support_pass needs support_eps in the measure block")
            results["support"] = support_in_omega(
                mu, est(), mexp["support_eps"]).as_dict()
    if "residual_max" in expected or "residual_min" in expected:
        qexp = sf.experiment(exp["quotient"], "quotient")
        results["residual"] = conjugacy_residual(
            sc, est(), n_samples=qexp["n_samples"], times=qexp["times"],
            seed=qexp["seed"])

    verdicts = {k: _verdict(k, expected[k], results)
                for k in sorted(expected)}
    n_pass = sum(1 for v in verdicts.values() if v["pass"])
    params = {"experiment": name, "omega": exp["omega"], "taud": exp["taud"],
              "measure": exp["measure"], "quotient": exp["quotient"],
              "horizon": exp["horizon"]}
    _write_report(out, "verify", sf, params, results, verdicts)
    for k in sorted(verdicts):
        v = verdicts[k]
        word = "PASS" if v["pass"] else "FAIL"
        print(f"verify {sc.name}: {k} expected {v['expected']} "
              f"actual {_json_safe(v['actual'])} {word}")
    print(f"verify: {n_pass} of {len(verdicts)} expectations matched")
    return 0 if n_pass == len(verdicts) else 4


_DISPATCH = {"simulate": cmd_simulate, "omega": cmd_omega, "taud": cmd_taud,
             "measure": cmd_measure, "quotient": cmd_quotient,
             "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ifs",
        description="Impulsive semiflow toolkit: trajectories, recurrence "
                    "estimates, first-hit profiles, invariant measure "
                    "candidates and glued-quotient checks.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, threads=True, experiment=True):
        p.add_argument("scenario",
                       help="scenario file path, or the name of a shipped "
                            "scenario (example21, example22, zeno, "
                            "corrupted_impulse)")
        p.add_argument("--out", default=".", metavar="DIR",
                       help="output directory (default: current directory)")
        if experiment:
            p.add_argument("--experiment", default=None, metavar="NAME",
                           help="experiment block to use (default: the block "
                                "named after the command)")
        if threads:
            p.add_argument("--threads", type=int, default=None, metavar="N",
                           help="worker processes for grid scans "
                                "(default: IFS_THREADS or 1)")

    p = sub.add_parser("simulate",
                       help="walk one impulsive trajectory, write CSV")
    common(p, threads=False, experiment=False)
    p.add_argument("--x0", required=True, metavar="PT",
                   help="start point, e.g. '1,pi'")
    p.add_argument("--horizon", type=float, default=None, metavar="T",
                   help="end time (default: scenario horizon_default)")

    for cmd, hlp in (
            ("omega", "classify grid points by orbit returns"),
            ("taud", "first-hit profile and its continuity modulus"),
            ("measure", "build a candidate measure and its defect report"),
            ("quotient", "conjugacy residual of the glued semiflow"),
            ("verify", "run experiments and compare with [expected]")):
        common(sub.add_parser(cmd, help=hlp))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sf = load_scenario(resolve_scenario_path(args.scenario))
        return _DISPATCH[args.command](sf, args)
    except ZenoAbortError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except ScenarioInvalid as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except IfsimError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
