"""Grid estimate of the non-wandering set, first-hit profiles, audits.

A grid point is classified by an orbit-return proxy: advance it under the
impulsive semiflow and look for a late pass back into the eps ball around
the start.  The scan window is the late half of the horizon, [max(T_min,
horizon/2), horizon], so transient early passes do not count as returns.
Jump images are tested in addition to the uniform time samples, since a
return can land exactly on an image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import IfsimError, ScenarioInvalid
from .impulse import (Collector, Scenario, apply_impulse, check_start,
                      first_hit, first_hit_batch, in_impulsive_set, phi_batch,
                      sample_impulsive_set)


@dataclass(frozen=True)
class RecurrenceParams:
    eps_ball: float = 0.01
    T_min: float = 0.5
    horizon: float = 50.0
    sample_step: float = 1e-3

    def __post_init__(self):
        if not (self.eps_ball > 0.0):
            raise ScenarioInvalid("eps_ball must be positive")
        if not (self.sample_step > 0.0):
            raise ScenarioInvalid("sample_step must be positive")
        if not (0.0 <= self.T_min < self.horizon):
            raise ScenarioInvalid("need 0 <= T_min < horizon")

    @property
    def t_late(self) -> float:
        return max(self.T_min, 0.5 * self.horizon)


def _check_eps_scale(sc: Scenario, p: RecurrenceParams):
    corners = np.array([[lo, hi] for lo, hi in sc.box])
    pts = np.array([[a, b] for a in corners[0] for b in corners[1]])
    emb = geometry.embed(sc.chart, pts)
    diam = 2.0 * float(np.max(np.linalg.norm(emb, axis=1)))
    if not (p.eps_ball < 0.5 * diam):
        raise ScenarioInvalid("eps_ball is not small against the domain")


class _ReturnCollector(Collector):
    """Tracks, per row, the closest late-window approach to the start."""

    def __init__(self, chart, starts, t_lo, eps):
        self.chart = chart
        self.start_emb = geometry.embed(chart, starts)
        self.t_lo = t_lo
        self._eps2 = eps * eps
        n = starts.shape[0]
        self.min_d2 = np.full(n, np.inf)
        self.first_t = np.full(n, np.inf)

    def on_window(self, rows, win, t0, limits, step):
        t_end = t0 + limits * step
        use = t_end >= self.t_lo
        if not np.any(use):
            return
        rows = rows[use]
        win = win[use]
        t0 = t0[use]
        limits = limits[use]
        j_lo = np.ceil((self.t_lo - t0) / step - 1e-9).astype(np.int64)
        j_lo = np.clip(j_lo, 0, None)
        W1 = win.shape[1]
        j_idx = np.arange(W1)
        mask = (j_idx[None, :] >= j_lo[:, None]) & (j_idx[None, :] <= limits[:, None])
        emb = geometry.embed(self.chart, win)
        d2 = (emb[:, :, 0] - self.start_emb[rows, 0, None]) ** 2 + \
            (emb[:, :, 1] - self.start_emb[rows, 1, None]) ** 2
        d2 = np.where(mask, d2, np.inf)
        np.minimum.at(self.min_d2, rows, d2.min(axis=1))
        # earliest sample inside the ball, if any, for the return-time column
        hit = d2 < self._eps2
        anyhit = np.any(hit, axis=1)
        if np.any(anyhit):
            jfirst = np.argmax(hit[anyhit], axis=1)
            tcand = t0[anyhit] + jfirst * step
            np.minimum.at(self.first_t, rows[anyhit], tcand)

    def on_images(self, rows, t_event, images):
        use = t_event >= self.t_lo
        if not np.any(use):
            return
        rows = rows[use]
        emb = geometry.embed(self.chart, images[use])
        d2 = (emb[:, 0] - self.start_emb[rows, 0]) ** 2 + \
            (emb[:, 1] - self.start_emb[rows, 1]) ** 2
        np.minimum.at(self.min_d2, rows, d2)
        close = d2 < self._eps2
        if np.any(close):
            np.minimum.at(self.first_t, rows[close], t_event[use][close])


def _scan_returns(sc: Scenario, pts, p: RecurrenceParams):
    """(min_dist, first_return_time, completed) for each start point."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    col = _ReturnCollector(sc.chart, pts, p.t_late, p.eps_ball)
    _, ok = phi_batch(sc, pts, p.horizon, scan_step=p.sample_step,
                      on_zeno="mask", collector=col)
    return np.sqrt(col.min_d2), col.first_t, ok


def _scan_slab(args):
    sc, pts, p = args
    return _scan_returns(sc, pts, p)


@dataclass
class OmegaEstimate:
    """Grid classification of the non-wandering estimate."""

    grid: tuple
    box: tuple
    params: RecurrenceParams
    points: np.ndarray
    flagged: np.ndarray
    min_dist: np.ndarray
    first_return: np.ndarray
    zeno: np.ndarray

    @property
    def flagged_points(self) -> np.ndarray:
        return self.points[self.flagged]

    @property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / (n - 1) if n > 1 else (hi - lo)
                     for (lo, hi), n in zip(self.box, self.grid))


def is_recurrent(sc: Scenario, x, p: RecurrenceParams) -> bool:
    """Orbit-return test: does the trajectory of x come back within
    eps_ball of x at some sampled time in the late window?  Zeno-truncated
    orbits classify as False."""
    _check_eps_scale(sc, p)
    x = check_start(sc, x)
    dist, _, ok = _scan_returns(sc, x[None, :], p)
    return bool(ok[0] and dist[0] < p.eps_ball)


def estimate_omega(sc: Scenario, grid, p: RecurrenceParams,
                   threads: int = 1) -> OmegaEstimate:
    """Classify every point of a per-axis grid over the domain box."""
    _check_eps_scale(sc, p)
    grid = tuple(int(n) for n in grid)
    if len(grid) != 2 or any(n < 1 for n in grid):
        raise ScenarioInvalid(f"bad grid shape {grid!r}")
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(sc.box, grid)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)

    if threads > 1 and pts.shape[0] > 256:
        from concurrent.futures import ProcessPoolExecutor
        slabs = np.array_split(np.arange(pts.shape[0]), threads)
        parts = []
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for out in pool.map(_scan_slab, [(sc, pts[s], p) for s in slabs]):
                parts.append(out)
        dist = np.concatenate([o[0] for o in parts])
        first = np.concatenate([o[1] for o in parts])
        ok = np.concatenate([o[2] for o in parts])
    else:
        dist, first, ok = _scan_returns(sc, pts, p)

    flagged = ok & (dist < p.eps_ball)
    return OmegaEstimate(grid=grid, box=sc.box, params=p, points=pts,
                         flagged=flagged, min_dist=dist, first_return=first,
                         zeno=~ok)


def write_omega_csv(est: OmegaEstimate, fh):
    fh.write("x1,x2,flagged,first_return_time\n")
    for (a, b), fl, ft in zip(est.points, est.flagged, est.first_return):
        fh.write(f"{float(a)!r},{float(b)!r},{1 if fl else 0},{float(ft)!r}\n")


# ---------------------------------------------------------------------------
# first-hit profile over the estimate

def _near_flagged_tolerance(sc: Scenario, est: OmegaEstimate, x) -> float:
    return max(est.params.eps_ball,
               geometry.cell_diagonal(sc.chart, est.spacing, x))


def tau_d(sc: Scenario, est: OmegaEstimate, x, horizon: float | None = None) -> float:
    """First-hit time of the section for a point on the estimate: 0 on the
    section itself, +inf when the horizon is exhausted without a hit."""
    x = np.asarray(x, dtype=float)
    flagged = est.flagged_points
    if flagged.shape[0] == 0:
        raise IfsimError("estimate has no flagged points")
    d = np.min(geometry.chord(sc.chart, x[None, :], flagged))
    if d > _near_flagged_tolerance(sc, est, x):
        raise IfsimError(
            f"point {tuple(x)} is not on the non-wandering estimate "
            f"(distance {d:.3g})")
    if in_impulsive_set(sc, x[None, :], sc.knobs.hit_bisection_tol)[0]:
        return 0.0
    res = first_hit(sc, x, horizon=horizon)
    return math.inf if res is None else res[0]


def _tau_batch(sc: Scenario, pts, horizon: float | None):
    taus = np.zeros(pts.shape[0])
    on_d = in_impulsive_set(sc, pts, sc.knobs.hit_bisection_tol)
    if np.any(~on_d):
        H = sc.horizon_default if horizon is None else horizon
        t, _ = first_hit_batch(sc, pts[~on_d], H)
        taus[~on_d] = t
    return taus


@dataclass
class TauDProfile:
    samples: np.ndarray
    taus: np.ndarray
    scale: float
    modulus: float
    discontinuous: bool
    jump_pairs: list  # (i, j, gap) with gap above the discontinuity bar


def continuity_report(sc: Scenario, est: OmegaEstimate, scale: float,
                      horizon: float | None = None) -> TauDProfile:
    """Modulus of the first-hit profile over flagged pairs closer than
    scale.  Two no-hit values compare as equal (one point at infinity)."""
    if not (scale > 0.0):
        raise ScenarioInvalid("scale must be positive")
    pts = est.flagged_points
    if pts.shape[0] < 2:
        raise IfsimError("need at least two flagged samples for a modulus")
    taus = _tau_batch(sc, pts, horizon)

    from scipy.spatial import cKDTree
    tree = cKDTree(geometry.embed(sc.chart, pts))
    pairs = sorted(tree.query_pairs(scale))
    modulus = 0.0
    jumps = []
    bar = 10.0 * scale
    for i, j in pairs:
        a, b = taus[i], taus[j]
        if math.isinf(a) and math.isinf(b):
            gap = 0.0
        elif math.isinf(a) or math.isinf(b):
            gap = math.inf
        else:
            gap = abs(a - b)
        modulus = max(modulus, gap)
        if gap > bar:
            jumps.append((int(i), int(j), float(gap)))
    return TauDProfile(samples=pts, taus=taus, scale=scale, modulus=modulus,
                       discontinuous=modulus > bar, jump_pairs=jumps)


# ---------------------------------------------------------------------------
# hypothesis audits

@dataclass
class AuditReport:
    tau_d_continuous: bool
    image_in_omega_minus_d: bool
    omega_cap_d_empty: bool
    modulus: float
    n_near_d: int
    worst_image_to_flagged: float
    worst_image_to_d: float

    def as_dict(self) -> dict:
        return {
            "tau_d_continuous": self.tau_d_continuous,
            "image_in_omega_minus_d": self.image_in_omega_minus_d,
            "omega_cap_d_empty": self.omega_cap_d_empty,
            "modulus": self.modulus,
            "n_near_d": self.n_near_d,
            "worst_image_to_flagged": self.worst_image_to_flagged,
            "worst_image_to_d": self.worst_image_to_d,
        }


def audit_hypotheses(sc: Scenario, est: OmegaEstimate,
                     horizon: float | None = None) -> AuditReport:
    """Checks the measure-existence hypotheses on the estimate: continuity
    of the first-hit profile, and that jump images of flagged points near
    the section land back on the estimate away from the section."""
    from scipy.spatial import cKDTree

    eps = est.params.eps_ball
    prof = continuity_report(sc, est, scale=eps, horizon=horizon)

    flagged = est.flagged_points
    d_tree = cKDTree(geometry.embed(sc.chart, sample_impulsive_set(sc)))
    dist_d, _ = d_tree.query(geometry.embed(sc.chart, flagged))

    omega_cap_d_empty = bool(np.all(dist_d > 0.5 * eps))

    near = dist_d <= eps
    n_near = int(np.count_nonzero(near))
    if n_near == 0:
        img_ok = True
        worst_flag = 0.0
        worst_d = math.inf
    else:
        images = apply_impulse(sc.impulse, flagged[near])
        f_tree = cKDTree(geometry.embed(sc.chart, flagged))
        to_flag, _ = f_tree.query(geometry.embed(sc.chart, images))
        to_d, _ = d_tree.query(geometry.embed(sc.chart, images))
        tols = np.array([_near_flagged_tolerance(sc, est, im) for im in images])
        img_ok = bool(np.all(to_flag <= tols) and np.all(to_d > eps))
        worst_flag = float(np.max(to_flag))
        worst_d = float(np.min(to_d))

    return AuditReport(
        tau_d_continuous=not prof.discontinuous,
        image_in_omega_minus_d=img_ok,
        omega_cap_d_empty=omega_cap_d_empty,
        modulus=prof.modulus,
        n_near_d=n_near,
        worst_image_to_flagged=worst_flag,
        worst_image_to_d=worst_d)
