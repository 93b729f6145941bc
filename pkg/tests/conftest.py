"""Shared scenario builders for the test suite."""

import numpy as np

from ifsim.expr import parse_field
from ifsim.flow import BaseFlow
from ifsim.impulse import ImpulseMap, ImpulseSurface, Scenario

PI = np.pi
BOX = ((1.0, 2.0), (0.0, 2.0 * PI))


def pf(src, dim=1):
    return parse_field(src, dim, "polar2d")


def rotation_scenario(**kw):
    """Annulus, rigid rotation, section on the positive horizontal ray,
    jump to the mid-radius point on the opposite ray."""
    args = dict(
        name="rotation",
        chart="polar2d",
        box=BOX,
        flow=BaseFlow("exact_rotation"),
        surface=ImpulseSurface(pf("sin(th)"), pf("cos(th)"), "ascending"),
        impulse=ImpulseMap(pf("(1 + r) / 2; pi", 2), pf("2 * r - 1; 0", 2)),
        horizon_default=20.0,
    )
    args.update(kw)
    return Scenario(**args)


def contraction_scenario(**kw):
    """Annulus, radial contraction toward the unit circle, section at the
    single point (1, 0), jump outward to (2, 0)."""
    args = dict(
        name="contraction",
        chart="polar2d",
        box=BOX,
        flow=BaseFlow("exact_contraction"),
        surface=ImpulseSurface(pf("sin(th)"), pf("1e-12 - abs(r - 1)"), "ascending"),
        impulse=ImpulseMap(pf("r + 1; 0", 2), pf("r - 1; 0", 2)),
        horizon_default=20.0,
    )
    args.update(kw)
    return Scenario(**args)


def zeno_prone_scenario():
    # the jump lands a hair before the section, so the second inter-event
    # gap collapses to 5e-7, below the 1e-6 guard
    return rotation_scenario(
        name="creep",
        surface=ImpulseSurface(pf("sin(th)"), pf("1"), "ascending"),
        impulse=ImpulseMap(pf("r; th - 5e-7", 2)))


def circle(r, n, lo=0.0, hi=2.0 * PI):
    th = np.linspace(lo, hi, n)
    return np.column_stack([np.full(n, float(r)), th])


def synth_estimate(sc, flagged_pts, p, grid=(200, 200)):
    """Hand-built estimate for profile tests, bypassing the grid scan."""
    from ifsim.nonwandering import OmegaEstimate
    pts = np.asarray(flagged_pts, dtype=float)
    n = pts.shape[0]
    return OmegaEstimate(grid=grid, box=sc.box, params=p, points=pts,
                         flagged=np.ones(n, dtype=bool),
                         min_dist=np.zeros(n),
                         first_return=np.full(n, np.inf),
                         zeno=np.zeros(n, dtype=bool))
