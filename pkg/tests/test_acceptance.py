"""End-to-end acceptance run for the two worked annulus scenarios.

Each test prints one pass/fail line with the measured numbers, then
asserts.  Run with -s to see the lines on success.  The grid estimates are
module-scoped because several criteria share them; each criterion times
only the work it claims.
"""

import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.spatial import cKDTree

from ifsim import geometry
from ifsim.config import load_scenario, resolve_scenario_path
from ifsim.expr import parse_field
from ifsim.flow import BaseFlow, flow_var_batch, flow_window
from ifsim.impulse import (build_trajectory, check_separation, phi_batch,
                           sample_impulsive_set)
from ifsim.measure import (BoxPartition, DiscreteMeasure, RadiusPartition,
                           invariance_defect, kb_average, mass_near_D,
                           support_in_omega, tv_on_partition)
from ifsim.nonwandering import continuity_report, estimate_omega, tau_d
from ifsim.quotient import conjugacy_residual

PI = np.pi


def _report(num, ok, detail):
    print(f"acceptance {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def _embed(pts):
    return geometry.embed("polar2d", np.atleast_2d(np.asarray(pts, float)))


@pytest.fixture(scope="module")
def file21():
    return load_scenario(resolve_scenario_path("example21"))


@pytest.fixture(scope="module")
def file22():
    return load_scenario(resolve_scenario_path("example22"))


@pytest.fixture(scope="module")
def est21(file21):
    exp = file21.experiment("omega", "omega")
    t0 = time.perf_counter()
    est = estimate_omega(file21.scenario, exp["grid"], exp["params"])
    return est, time.perf_counter() - t0


@pytest.fixture(scope="module")
def est22(file22):
    exp = file22.experiment("omega", "omega")
    t0 = time.perf_counter()
    est = estimate_omega(file22.scenario, exp["grid"], exp["params"])
    return est, time.perf_counter() - t0


def test_criterion_1_cycle_events(file21):
    t0 = time.perf_counter()
    traj = build_trajectory(file21.scenario, (1.0, PI), horizon=16.0)
    elapsed = time.perf_counter() - t0
    tev = traj.event_times()[:5]
    t_err = float(np.max(np.abs(tev - PI * np.arange(1, 6))))
    hit_err = max(float(np.linalg.norm(_embed(e.hit)[0] - _embed((1.0, 0.0))[0]))
                  for e in traj.events[:5])
    img_err = max(float(np.linalg.norm(_embed(e.image)[0] - _embed((1.0, PI))[0]))
                  for e in traj.events[:5])
    ok = (len(traj.events) >= 5 and t_err <= 1e-6 and hit_err <= 1e-8
          and img_err <= 1e-12 and elapsed < 1.0)
    _report(1, ok, f"5 impulse times within {t_err:.2e} of multiples of pi, "
                   f"hits {hit_err:.2e} from (1,0), images {img_err:.2e} "
                   f"from the cycle point, {elapsed:.2f} s")


def test_criterion_2_numeric_matches_closed_form(file21, file22):
    t0 = time.perf_counter()
    h = 1e-3
    n = int(np.ceil(2 * PI / h))
    ts = np.arange(n + 1) * h
    x0 = np.array([1.5, 1.0])
    sups = []
    for src, exact in (("0; 1", file21.scenario.flow),
                       ("1 - r; 1", file22.scenario.flow)):
        num = BaseFlow("numeric", field=parse_field(src, 2, "polar2d"), h=h)
        win = flow_window(num, "polar2d", x0[None, :], n, step=h)[0]
        ref = flow_var_batch(exact, "polar2d", np.tile(x0, (n + 1, 1)), ts)
        sups.append(float(np.max(np.linalg.norm(
            geometry.embed("polar2d", win) - geometry.embed("polar2d", ref),
            axis=-1))))
    elapsed = time.perf_counter() - t0
    ok = max(sups) <= 1e-6 and elapsed < 5.0
    _report(2, ok, f"integrator vs closed form sup gaps {sups[0]:.2e} and "
                   f"{sups[1]:.2e} on [0, 2pi] at h=1e-3, {elapsed:.2f} s")


def test_criterion_3_recurrence_grid_21(file21, est21):
    est, elapsed = est21
    dr, dth = est.spacing
    diag = float(np.hypot(dr, dth))
    fp = est.flagged_points
    ftree = cKDTree(_embed(fp))
    arc = np.column_stack([np.ones(100), np.linspace(1.5 * PI, 2 * PI, 100)])
    cover, _ = ftree.query(_embed(arc))
    th = fp[:, 1]
    on_lower = (th >= PI - 1e-9) | (th <= 1e-9) | (th >= 2 * PI - 1e-9)
    subset_ok = bool(np.all(on_lower)
                     and np.all(np.abs(fp[:, 0] - 1.0) <= diag))
    ok = (float(cover.max()) <= diag and subset_ok
          and float(fp[:, 0].max()) < 1.0 + 2 * dr and elapsed < 120.0)
    _report(3, ok, f"{fp.shape[0]} flagged points cover the closing arc "
                   f"within {cover.max():.4f} and stay in a one-cell "
                   f"neighborhood of the lower half circle, max radius "
                   f"{fp[:, 0].max():.4f}, {elapsed:.1f} s")


def test_criterion_4_recurrence_grid_22(est22):
    est, elapsed = est22
    dr, dth = est.spacing
    diag = float(np.hypot(dr, dth))
    fp = est.flagged_points
    ftree = cKDTree(_embed(fp))
    circle = np.column_stack([np.ones(200), np.linspace(0, 2 * PI, 200)])
    cover, _ = ftree.query(_embed(circle))
    ok = (float(cover.max()) <= diag
          and float(np.max(np.abs(fp[:, 0] - 1.0))) <= diag
          and float(fp[:, 0].max()) < 1.0 + 2 * dr and elapsed < 120.0)
    _report(4, ok, f"{fp.shape[0]} flagged points form a one-cell "
                   f"neighborhood of the whole unit circle (cover gap "
                   f"{cover.max():.4f}, max radius {fp[:, 0].max():.4f}), "
                   f"{elapsed:.1f} s")


def test_criterion_5_first_hit_profiles(file21, file22, est21, est22):
    sc1 = file21.scenario
    e1 = est21[0]
    th_s = np.linspace(PI, 2 * PI, 100)
    tau_err = max(abs(tau_d(sc1, e1, (1.0, th)) - (2 * PI - th))
                  for th in th_s)
    scale = file21.experiment("taud", "taud")["scale"]
    prof1 = continuity_report(sc1, e1, scale)

    texp = file22.experiment("taud", "taud")
    prof2 = continuity_report(file22.scenario, est22[0], texp["scale"],
                              texp["horizon"])
    target = _embed((1.0, 0.0))[0]
    near = min(min(np.linalg.norm(_embed(prof2.samples[i])[0] - target),
                   np.linalg.norm(_embed(prof2.samples[j])[0] - target))
               for i, j, _ in prof2.jump_pairs)
    diag2 = float(np.hypot(*est22[0].spacing))
    ok = (tau_err <= 1e-4 and prof1.modulus <= 0.02
          and prof2.modulus >= 6.1 and prof2.discontinuous and near <= diag2)
    _report(5, ok, f"first-hit profile matches 2pi-theta within "
                   f"{tau_err:.2e}, modulus {prof1.modulus:.2e} <= 0.02 on "
                   f"the first scenario; modulus {prof2.modulus:.2f} >= 6.1 "
                   f"with a jump pair {near:.2e} from (1,0) on the second")


def test_criterion_6_time_average_21(file21, est21):
    sc = file21.scenario
    t0 = time.perf_counter()
    mu = kb_average(sc, np.array([1.0, PI]), 0.01, 100_000)
    part = BoxPartition()
    n = 20_000
    th = PI + (np.arange(n) + 0.5) * PI / n
    arc = DiscreteMeasure(np.column_stack([np.ones(n), th]),
                          np.full(n, 1.0 / n), "polar2d")
    tv = tv_on_partition(part, mu, arc)
    defects = [invariance_defect(sc, mu, t, part).tv_defect
               for t in (0.37, 1.0, PI)]
    mass = mass_near_D(sc, mu, 1e-3)
    sup = support_in_omega(mu, est21[0], 0.02)
    elapsed = time.perf_counter() - t0
    ok = (tv <= 0.05 and max(defects) <= 0.1 and mass <= 0.01
          and sup.passed and elapsed < 30.0)
    _report(6, ok, f"time average is {tv:.4f} from uniform on the cycle, "
                   f"defects {[f'{d:.4f}' for d in defects]} <= 0.1, mass "
                   f"near the section {mass:.4f}, support within 0.02 of "
                   f"the estimate, {elapsed:.1f} s")


def test_criterion_7_escaping_mass_22(file22):
    sc = file22.scenario
    mexp = file22.experiment("measure", "measure")
    t0 = time.perf_counter()
    n = mexp["n"]
    th = 2 * PI * np.arange(1, n + 1) / n
    mu = DiscreteMeasure(geometry.normalize(sc.chart,
                                            np.column_stack([np.full(n, 1.0), th])),
                         np.full(n, 1.0 / n), sc.chart)
    rep = invariance_defect(sc, mu, 2 * PI, mexp["partition"])
    elapsed = time.perf_counter() - t0
    ok = rep.tv_defect >= 0.99 and elapsed < 5.0
    _report(7, ok, f"uniform circle measure moves {rep.tv_defect:.4f} of its "
                   f"mass off {{r <= 1.001}} after one turn, {elapsed:.2f} s")


def test_criterion_8_conjugacy_residuals(file21, est21):
    sc = file21.scenario
    qexp = file21.experiment("quotient", "quotient")
    t0 = time.perf_counter()
    clean = conjugacy_residual(sc, est21[0], n_samples=qexp["n_samples"],
                               times=qexp["times"], seed=qexp["seed"])
    sfc = load_scenario(resolve_scenario_path("corrupted_impulse"))
    cexp = sfc.experiment("omega", "omega")
    est_c = estimate_omega(sfc.scenario, cexp["grid"], cexp["params"])
    cq = sfc.experiment("quotient", "quotient")
    bad = conjugacy_residual(sfc.scenario, est_c, n_samples=cq["n_samples"],
                             times=cq["times"], seed=cq["seed"])
    elapsed = time.perf_counter() - t0
    ok = clean <= 1e-4 and bad >= 0.05 and elapsed < 30.0
    _report(8, ok, f"glued-semiflow residual {clean:.2e} <= 1e-4 clean and "
                   f"{bad:.4f} >= 0.05 with the shifted reset, "
                   f"{elapsed:.1f} s")


def test_criterion_9_flagged_points_stay_near_estimate(file21, est21):
    sc = file21.scenario
    est = est21[0]
    eps = est.params.eps_ball
    fp = est.flagged_points
    ftree = cKDTree(_embed(fp))
    dtree = cKDTree(_embed(sample_impulsive_set(sc)))
    d0, _ = dtree.query(_embed(fp))
    starts = fp[d0 > eps]
    worst_flag, worst_d = 0.0, np.inf
    for t in (0.5, 1.0, 2.0):
        st, ok_rows = phi_batch(sc, starts, t)
        assert bool(np.all(ok_rows))
        df, _ = ftree.query(_embed(st))
        dd, _ = dtree.query(_embed(st))
        worst_flag = max(worst_flag, float(df.max()))
        worst_d = min(worst_d, float(dd.min()))
    ok = worst_flag <= 2 * eps and worst_d > 0.5 * eps
    _report(9, ok, f"{starts.shape[0]} flagged starts stay within "
                   f"{worst_flag:.4f} <= {2 * eps} of the flagged set at "
                   f"t in (0.5, 1, 2) and keep {worst_d:.4f} > "
                   f"{0.5 * eps} clear of the section")


def test_criterion_10_property_suites():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "tests", "-q", "-p", "no:cacheprovider",
         "--ignore", os.path.join("tests", "test_acceptance.py")],
        cwd=root, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else "?"
    ok = proc.returncode == 0 and elapsed < 60.0
    _report(10, ok, f"unit and property suites: {tail}, {elapsed:.1f} s")


def test_criterion_11_zeno_and_separation(file21, file22, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ifsim.cli", "simulate", "zeno",
         "--x0", "1.5,3", "--out", str(tmp_path)],
        capture_output=True, text=True)
    sep1 = check_separation(file21.scenario)
    sep2 = check_separation(file22.scenario)
    ok = (proc.returncode == 3 and sep1.min_gap >= 1.0 and sep2.min_gap >= 1.0
          and sep1.passed and sep2.passed)
    _report(11, ok, f"accumulating-impulse scenario exits 3; reset images "
                    f"keep gaps {sep1.min_gap:.2f} and {sep2.min_gap:.2f} "
                    f">= 1 from the section")
