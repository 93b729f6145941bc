"""Discrete measures, push-forwards, time averages, invariance defects.

Everything here is atomic: a measure is finitely many weighted points, a
push-forward moves the points and keeps the weights, and invariance is
certified (or refuted) by total variation on a fixed partition.  That is
deliberately coarse; the interesting failures show up as mass escaping a
named cell family, not as weak-convergence subtleties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import IfsimError, PartialMapError, ScenarioInvalid
from .flow import flow_var_batch
from .impulse import (Collector, Scenario, check_start, in_impulsive_set,
                      phi_batch)
from .quotient import class_of

# weights must sum to one this tightly
WEIGHT_TOL = 1e-12
# atoms lighter than this are ignored by support queries
SUPPORT_WEIGHT_MIN = 1e-6


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely many weighted atoms in chart coordinates, total mass one."""

    points: np.ndarray
    weights: np.ndarray
    chart: str = "polar2d"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        geometry.check_chart(self.chart)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
            raise ScenarioInvalid("measure needs a nonempty (n, 2) atom array")
        if not np.all(np.isfinite(pts)):
            raise ScenarioInvalid("atoms must be finite")
        if w.shape != (pts.shape[0],):
            raise ScenarioInvalid("need one weight per atom")
        if not np.all(w > 0.0):
            raise ScenarioInvalid("weights must be strictly positive")
        if abs(float(np.sum(w)) - 1.0) > WEIGHT_TOL:
            raise ScenarioInvalid("weights must sum to one")

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @classmethod
    def point_mass(cls, x, chart: str = "polar2d") -> "DiscreteMeasure":
        return cls(np.asarray(x, dtype=float)[None, :], np.ones(1), chart)

    @classmethod
    def uniform(cls, points, chart: str = "polar2d") -> "DiscreteMeasure":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n), chart)


def write_measure_csv(mu: DiscreteMeasure, fh) -> None:
    fh.write("x1,x2,weight\n")
    for (a, b), w in zip(mu.points, mu.weights):
        fh.write(f"{float(a)!r},{float(b)!r},{float(w)!r}\n")


# --- partitions ----------------------------------------------------------


@dataclass(frozen=True)
class BoxPartition:
    """Uniform m-by-m grid over a planar window, plus one overflow cell.

    Cells are half open in embedded coordinates, so the angular seam of a
    polar chart costs nothing.
    """

    m: int = 64
    box: tuple = ((-2.0, 2.0), (-2.0, 2.0))

    def __post_init__(self):
        if int(self.m) < 1:
            raise ScenarioInvalid("partition resolution must be >= 1")
        object.__setattr__(self, "m", int(self.m))
        box = tuple((float(a), float(b)) for a, b in self.box)
        object.__setattr__(self, "box", box)
        if len(box) != 2 or any(not (lo < hi) for lo, hi in box):
            raise ScenarioInvalid("partition box must be two ordered intervals")

    @property
    def n_cells(self) -> int:
        return self.m * self.m + 1

    def index(self, chart: str, pts) -> np.ndarray:
        e = geometry.embed(chart, np.atleast_2d(np.asarray(pts, dtype=float)))
        inside = np.ones(e.shape[0], dtype=bool)
        cols = []
        for a, (lo, hi) in enumerate(self.box):
            k = np.floor((e[:, a] - lo) / (hi - lo) * self.m).astype(np.int64)
            inside &= (k >= 0) & (k < self.m)
            cols.append(np.clip(k, 0, self.m - 1))
        idx = cols[0] * self.m + cols[1]
        idx[~inside] = self.m * self.m
        return idx

    def describe(self, cell: int):
        if cell == self.m * self.m:
            return "outside"
        return (int(cell) // self.m, int(cell) % self.m)

    def as_dict(self) -> dict:
        return {"kind": "box", "m": self.m,
                "box": [list(iv) for iv in self.box]}


@dataclass(frozen=True)
class RadiusPartition:
    """Concentric cells split at fixed embedded radii: r <= t1, (t1, t2],
    ..., r > tk.  The refinement family that witnesses escape from a thin
    shell."""

    thresholds: tuple

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        object.__setattr__(self, "thresholds", th)
        if not th or th[0] <= 0.0 or any(b <= a for a, b in zip(th, th[1:])):
            raise ScenarioInvalid("radius thresholds must be positive and increasing")

    @property
    def n_cells(self) -> int:
        return len(self.thresholds) + 1

    def index(self, chart: str, pts) -> np.ndarray:
        e = geometry.embed(chart, np.atleast_2d(np.asarray(pts, dtype=float)))
        r = np.sqrt(np.sum(e * e, axis=-1))
        return np.searchsorted(np.asarray(self.thresholds), r, side="left")

    def describe(self, cell: int):
        th = self.thresholds
        if cell == 0:
            return f"r <= {th[0]}"
        if cell == len(th):
            return f"r > {th[-1]}"
        return f"{th[cell - 1]} < r <= {th[cell]}"

    def as_dict(self) -> dict:
        return {"kind": "radius", "thresholds": list(self.thresholds)}


def _hist(partition, mu: DiscreteMeasure) -> np.ndarray:
    idx = partition.index(mu.chart, mu.points)
    return np.bincount(idx, weights=mu.weights, minlength=partition.n_cells)


def tv_on_partition(partition, mu: DiscreteMeasure,
                    nu: DiscreteMeasure) -> float:
    """Total variation restricted to the partition's sigma-algebra."""
    return 0.5 * float(np.sum(np.abs(_hist(partition, mu) - _hist(partition, nu))))


# --- push-forwards -------------------------------------------------------


def pushforward(f, mu: DiscreteMeasure) -> DiscreteMeasure:
    """Transport atoms through a point map, weights riding along.

    f takes and returns an (n, 2) array; rows coming back non-finite mean
    the map was undefined there and abort the whole transport.
    """
    out = np.atleast_2d(np.asarray(f(mu.points), dtype=float))
    if out.shape != mu.points.shape:
        raise IfsimError("point map changed the atom array shape")
    bad = ~np.all(np.isfinite(out), axis=1)
    if np.any(bad):
        raise PartialMapError(
            f"map undefined at {int(bad.sum())} of {mu.n_atoms} atoms",
            indices=tuple(int(i) for i in np.flatnonzero(bad)))
    return DiscreteMeasure(out, mu.weights, mu.chart)


def flow_map(sc: Scenario, t: float, impulse=None):
    """The time-t impulsive flow as an atom map.  Rows that hit the Zeno
    guard come back NaN, which pushforward reports atom by atom."""

    def f(pts):
        out, ok = phi_batch(sc, pts, float(t), on_zeno="mask", impulse=impulse)
        out = out.copy()
        out[~ok] = np.nan
        return out

    return f


# --- time averages -------------------------------------------------------


class _EventLog(Collector):
    """Keeps every jump of a single-row walk: absolute time and image."""

    def __init__(self):
        self.times = []
        self.states = []

    def on_images(self, rows, t_event, images):
        self.times.extend(float(v) for v in t_event)
        self.states.extend(np.array(img) for img in images)


def kb_average(sc: Scenario, x0, delta: float, N: int) -> DiscreteMeasure:
    """Cesaro time average along one trajectory: equal mass at the states
    phi(x0, k*delta), k = 0..N-1.

    The trajectory is walked once to record the jump schedule; atoms are
    then filled segment by segment with per-atom flow times, so the cost
    is one walk plus O(N) closed-form evaluations.
    """
    if int(N) < 1:
        raise ScenarioInvalid("need at least one atom")
    if not (delta > 0.0):
        raise ScenarioInvalid("sampling step must be positive")
    if N * delta > sc.horizon_default * (1.0 + 1e-9):
        raise ScenarioInvalid("N * delta exceeds the scenario horizon")
    x0 = check_start(sc, x0)
    N = int(N)
    t_end = (N - 1) * delta

    log = _EventLog()
    phi_batch(sc, x0[None, :], t_end, collector=log)  # Zeno aborts propagate

    t_seg = np.array([0.0] + log.times)
    states = [x0] + log.states
    grid = np.arange(N) * delta
    # a grid time equal to a jump time belongs to the segment starting
    # there: the trajectory is right continuous
    seg_of = np.searchsorted(t_seg, grid, side="right") - 1
    atoms = np.empty((N, 2))
    for i, s in enumerate(states):
        sel = seg_of == i
        if not np.any(sel):
            continue
        reps = np.tile(s, (int(np.sum(sel)), 1))
        atoms[sel] = flow_var_batch(sc.flow, sc.chart, reps, grid[sel] - t_seg[i])
    atoms = geometry.normalize(sc.chart, atoms)
    return DiscreteMeasure(atoms, np.full(N, 1.0 / N), sc.chart)


# --- invariance ----------------------------------------------------------


@dataclass(frozen=True)
class DefectReport:
    t: float
    tv_defect: float
    partition: object
    worst_cell: object
    worst_gap: float

    def as_dict(self) -> dict:
        return {"t": self.t, "tv_defect": self.tv_defect,
                "partition": self.partition.as_dict(),
                "worst_cell": self.worst_cell, "worst_gap": self.worst_gap}


def invariance_defect(sc: Scenario, mu: DiscreteMeasure, t: float,
                      partition) -> DefectReport:
    """Total variation, on the partition, between mu pushed through the
    time-t flow and mu itself.  Zero certifies invariance at this
    resolution; near one means the partition catches almost all the mass
    moving out of some cell."""
    pushed = pushforward(flow_map(sc, t), mu)
    gap = np.abs(_hist(partition, pushed) - _hist(partition, mu))
    k = int(np.argmax(gap))
    return DefectReport(t=float(t), tv_defect=0.5 * float(np.sum(gap)),
                        partition=partition, worst_cell=partition.describe(k),
                        worst_gap=float(gap[k]))


# --- the three measure conclusions ---------------------------------------


@dataclass(frozen=True)
class SupportReport:
    max_dist: float
    passed: bool

    def as_dict(self) -> dict:
        return {"max_dist": self.max_dist, "pass": self.passed}


def support_in_omega(mu: DiscreteMeasure, est, eps: float) -> SupportReport:
    """Farthest carried atom from the flagged set of an estimate."""
    from scipy.spatial import cKDTree

    flagged = est.flagged_points
    if flagged.shape[0] == 0:
        raise IfsimError("estimate has no flagged points")
    pts = mu.points[mu.weights >= SUPPORT_WEIGHT_MIN]
    if pts.shape[0] == 0:
        raise IfsimError("no atoms at or above the weight floor")
    tree = cKDTree(geometry.embed(mu.chart, flagged))
    d, _ = tree.query(geometry.embed(mu.chart, pts))
    worst = float(np.max(d))
    return SupportReport(max_dist=worst, passed=bool(worst <= eps))


def mass_near_D(sc: Scenario, mu: DiscreteMeasure, margin: float) -> float:
    """Weight carried within margin of the section, constraint included
    with a matching one-sided slack."""
    if not (margin > 0.0):
        raise ScenarioInvalid("margin must be positive")
    near = in_impulsive_set(sc, mu.points, margin, c_min=-margin)
    return float(np.sum(mu.weights[near]))


def push_to_quotient(sc: Scenario, mu: DiscreteMeasure) -> DiscreteMeasure:
    """Image of mu on the glued space, atoms stored through their class
    canonicals.  Only defined off the section, where projection is
    one-to-one."""
    on = in_impulsive_set(sc, mu.points, sc.knobs.hit_bisection_tol)
    if np.any(on):
        raise PartialMapError(
            f"{int(np.sum(on))} atoms sit on the section, where the "
            "projection is not invertible",
            indices=tuple(int(i) for i in np.flatnonzero(on)))
    reps = np.array([class_of(sc, x).canonical for x in mu.points])
    return DiscreteMeasure(reps, mu.weights, mu.chart)


def lift_from_quotient(sc: Scenario, nu: DiscreteMeasure) -> DiscreteMeasure:
    """The other direction: every quotient atom back to its canonical
    representative upstairs."""
    reps = np.array([class_of(sc, x).canonical for x in nu.points])
    on = in_impulsive_set(sc, reps, sc.knobs.hit_bisection_tol)
    if np.any(on):
        raise PartialMapError(
            "quotient atoms without an off-section representative cannot "
            "be lifted",
            indices=tuple(int(i) for i in np.flatnonzero(on)))
    return DiscreteMeasure(reps, nu.weights, nu.chart)
