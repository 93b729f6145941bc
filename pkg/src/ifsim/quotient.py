"""Glued state space: equivalence classes across the jump, the projection,
a graph surrogate for the quotient pseudometric, and the induced semiflow.

A point on the section is identified with its jump image, and with anything
the jump sends to either of them.  Classes are finite, so the quotient
pseudometric is approximated by shortest paths on a finite atom graph:
chord-cost edges between all atoms, zero-cost edges inside a class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import IfsimError, PartialMapError, ScenarioInvalid
from .impulse import (ImpulseMap, Scenario, apply_impulse, check_start,
                      in_box, in_impulsive_set, phi_batch,
                      sample_impulsive_set)

# two chart points this close (embedded) are treated as the same point
MERGE_TOL = 1e-9


def _apply_inverse(imp: ImpulseMap, pts):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    a, b = imp.inverse.batch()(pts[:, 0], pts[:, 1])
    return np.column_stack([a, b])


@dataclass(frozen=True)
class EquivClass:
    """Finite set of mutually identified points.

    canonical is the representative used to flow the class: the first
    off-section member in lexicographic order, or the lexicographically
    smallest member when the whole class sits on the section.
    """

    representatives: tuple
    canonical: tuple

    def as_dict(self) -> dict:
        return {"representatives": [list(p) for p in self.representatives],
                "canonical": list(self.canonical)}


class QuotientPoint:
    """A point of the glued space, compared through its canonical
    representative (embedded distance below MERGE_TOL counts as equal)."""

    __slots__ = ("cls", "chart")

    def __init__(self, cls: EquivClass, chart: str):
        self.cls = cls
        self.chart = chart

    @property
    def canonical(self):
        return self.cls.canonical

    def __eq__(self, other):
        if not isinstance(other, QuotientPoint):
            return NotImplemented
        return bool(geometry.chord(self.chart, self.cls.canonical,
                                   other.cls.canonical) <= MERGE_TOL)

    def __repr__(self):
        return f"QuotientPoint({self.cls.canonical})"


def _on_section(sc: Scenario, pts):
    return in_impulsive_set(sc, np.atleast_2d(pts), sc.knobs.hit_bisection_tol)


def _preimages_declared(sc: Scenario, imp: ImpulseMap, y, tol):
    w = geometry.normalize(sc.chart, _apply_inverse(imp, y[None, :]))[0]
    if not in_box(sc, w[None, :])[0]:
        return []
    if not _on_section(sc, w)[0]:
        return []
    back = geometry.normalize(sc.chart, apply_impulse(imp, w[None, :]))[0]
    if geometry.chord(sc.chart, back, y) > tol:
        return []
    return [w]


def _preimages_searched(sc: Scenario, imp: ImpulseMap, y, tol):
    # walk the sampled section, refine every local minimum of the image
    # distance that comes close enough to be a plausible root
    try:
        ds = sample_impulsive_set(sc)
    except ScenarioInvalid as e:
        raise PartialMapError(
            "no declared inverse and the impulsive-set sample is empty; "
            "preimages are unavailable") from e
    im = geometry.normalize(sc.chart, apply_impulse(imp, ds))
    d = geometry.chord(sc.chart, im, y[None, :])
    if ds.shape[0] == 1:
        return [ds[0]] if d[0] <= max(tol, 1e-8) else []

    gaps = geometry.chord(sc.chart, im[1:], im[:-1])
    coarse = 2.0 * float(np.max(gaps)) + 1e-6

    from scipy.optimize import minimize_scalar
    found = []
    for i in np.flatnonzero(d <= coarse):
        left = d[i - 1] if i > 0 else math.inf
        right = d[i + 1] if i + 1 < d.size else math.inf
        if d[i] > left or d[i] > right:
            continue
        a = ds[max(i - 1, 0)]
        b = ds[min(i + 1, ds.shape[0] - 1)]

        def g(u):
            p = geometry.chart_lerp(sc.chart, a, b, u)
            q = geometry.normalize(sc.chart, apply_impulse(imp, p[None, :]))[0]
            return float(geometry.chord(sc.chart, q, y))

        res = minimize_scalar(g, bounds=(0.0, 1.0), method="bounded",
                              options={"xatol": sc.knobs.hit_bisection_tol})
        if res.fun <= max(10.0 * tol, 1e-8):
            # the refined point interpolates adjacent section samples, so
            # it is on the section up to the sampling resolution
            found.append(geometry.normalize(
                sc.chart, geometry.chart_lerp(sc.chart, a, b, float(res.x))))
    return found


def _preimages(sc: Scenario, imp: ImpulseMap, y, tol):
    if imp.inverse is not None:
        return _preimages_declared(sc, imp, y, tol)
    return _preimages_searched(sc, imp, y, tol)


def class_of(sc: Scenario, x) -> EquivClass:
    """All points identified with x: x itself, its jump image when x sits
    on the section, and every preimage of either under the jump."""
    x = geometry.normalize(sc.chart, check_start(sc, x))
    imp = sc.effective_gluing()
    tol = max(10.0 * sc.knobs.hit_bisection_tol, MERGE_TOL)

    reps = [x]
    if _on_section(sc, x)[0]:
        ix = geometry.normalize(sc.chart, apply_impulse(imp, x[None, :]))[0]
        reps.append(ix)
        reps.extend(_preimages(sc, imp, ix, tol))
    reps.extend(_preimages(sc, imp, x, tol))

    kept: list = []
    for p in reps:
        if all(geometry.chord(sc.chart, p, q) > MERGE_TOL for q in kept):
            kept.append(np.asarray(p, dtype=float))
    kept.sort(key=lambda p: (p[0], p[1]))

    on = _on_section(sc, np.array(kept))
    off = [p for p, flag in zip(kept, on) if not flag]
    canon = off[0] if off else kept[0]
    return EquivClass(representatives=tuple(tuple(map(float, p)) for p in kept),
                      canonical=tuple(map(float, canon)))


def project(sc: Scenario, x) -> QuotientPoint:
    return QuotientPoint(class_of(sc, x), sc.chart)


class GluingGraph:
    """Finite atom set carrying the quotient pseudometric surrogate.

    Build with the points of interest, then query distances; every query
    may insert the two classes involved.  Construction and insertion are
    single-owner, pure queries afterwards are safe to share.
    """

    def __init__(self, sc: Scenario, points=(), max_class_hops: int = 4):
        self.sc = sc
        self.chart = sc.chart
        self.max_edges = 2 * int(max_class_hops) + 1
        self._pts: list = []
        self._emb: list = []
        self._cid: list = []
        self._parent: list = []
        self._cost = None
        for p in points:
            self.add_class(class_of(sc, p))

    # union-find over class labels, so a rep landing on an existing atom
    # merges the two classes
    def _find(self, i):
        while self._parent[i] != i:
            self._parent[i] = self._parent[self._parent[i]]
            i = self._parent[i]
        return i

    def _union(self, i, j):
        ri, rj = self._find(i), self._find(j)
        if ri != rj:
            self._parent[rj] = ri

    @property
    def atom_count(self) -> int:
        return len(self._pts)

    def add_class(self, cls: EquivClass) -> list:
        idx = []
        fresh_label = None
        for p in cls.representatives:
            p = np.asarray(p, dtype=float)
            e = geometry.embed(self.chart, p)
            hit = None
            for k, q in enumerate(self._emb):
                if math.hypot(e[0] - q[0], e[1] - q[1]) <= MERGE_TOL:
                    hit = k
                    break
            if hit is None:
                self._pts.append(p)
                self._emb.append(e)
                label = len(self._parent)
                self._parent.append(label)
                self._cid.append(label)
                hit = len(self._pts) - 1
                self._cost = None
            idx.append(hit)
            if fresh_label is None:
                fresh_label = self._cid[hit]
            else:
                self._union(fresh_label, self._cid[hit])
        return idx

    def cost_matrix(self) -> np.ndarray:
        if self._cost is None:
            emb = np.array(self._emb)
            diff = emb[:, None, :] - emb[None, :, :]
            c = np.sqrt(np.sum(diff * diff, axis=-1))
            roots = np.array([self._find(i) for i in self._cid])
            c[roots[:, None] == roots[None, :]] = 0.0
            self._cost = c
        return self._cost

    def distance(self, a, b) -> float:
        """Shortest-path cost between the classes of a and b, paths capped
        at max_edges edges."""
        ia = self.add_class(a.cls if isinstance(a, QuotientPoint) else a)
        ib = self.add_class(b.cls if isinstance(b, QuotientPoint) else b)
        c = self.cost_matrix()
        d = np.full(self.atom_count, np.inf)
        d[ia] = 0.0
        for _ in range(self.max_edges):
            nd = np.minimum(d, np.min(d[:, None] + c, axis=0))
            if np.array_equal(nd, d):
                break
            d = nd
        return float(np.min(d[ib]))


def quotient_distance(graph: GluingGraph, a: QuotientPoint,
                      b: QuotientPoint) -> float:
    if a == b:
        return 0.0
    return graph.distance(a, b)


def psi(sc: Scenario, a: QuotientPoint, t: float) -> QuotientPoint:
    """Induced semiflow on the glued space: flow the canonical
    representative, gluing at section crossings, then project."""
    x = np.asarray(a.cls.canonical, dtype=float)
    if _on_section(sc, x)[0]:
        raise IfsimError(
            "quotient point has no representative off the section; the "
            "induced flow is not defined there")
    out, ok = phi_batch(sc, x[None, :], float(t),
                        impulse=sc.effective_gluing())
    if not ok[0]:
        raise IfsimError("representative did not reach the requested time")
    return project(sc, out[0])


def conjugacy_residual(sc: Scenario, est, n_samples: int = 100,
                       times=(0.1, 1.0, 2.5), seed: int = 0) -> float:
    """Largest quotient distance between flow-then-project and
    project-then-flow over sampled estimate points off the section."""
    from scipy.spatial import cKDTree

    pts = est.flagged_points
    if pts.shape[0] == 0:
        raise IfsimError("estimate has no flagged points to sample")
    d_tree = cKDTree(geometry.embed(sc.chart, sample_impulsive_set(sc)))
    dist_d, _ = d_tree.query(geometry.embed(sc.chart, pts))
    cand = pts[dist_d > est.params.eps_ball]
    if cand.shape[0] == 0:
        raise IfsimError("no flagged points off the section")

    rng = np.random.default_rng(seed)
    take = min(int(n_samples), cand.shape[0])
    samples = cand[rng.choice(cand.shape[0], size=take, replace=False)]

    canon = np.array([class_of(sc, x).canonical for x in samples])
    graph = GluingGraph(sc)
    worst = 0.0
    for t in times:
        through_glue, _ = phi_batch(sc, canon, float(t),
                                    impulse=sc.effective_gluing())
        through_flow, _ = phi_batch(sc, samples, float(t))
        gap = geometry.chord(sc.chart, through_glue, through_flow)
        for i in np.flatnonzero(gap > MERGE_TOL):
            worst = max(worst, quotient_distance(
                graph,
                project(sc, through_glue[i]),
                project(sc, through_flow[i])))
    return worst
