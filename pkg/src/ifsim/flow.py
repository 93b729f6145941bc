"""Continuous base semiflow.

Two closed-form flows cover the annulus scenarios (rigid rotation, and
rotation with radial contraction toward the unit circle); anything else is
integrated with a fixed-step RK4 on the chart coordinates.  All advancing
is vectorized over rows of (n, 2) state arrays, and every code path is
deterministic: the same inputs always produce bitwise identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ScenarioInvalid
from .expr import Expr

FLOW_KINDS = ("exact_rotation", "exact_contraction", "numeric")


@dataclass(frozen=True)
class BaseFlow:
    kind: str
    field: Expr | None = None
    h: float = 1e-3

    def __post_init__(self):
        if self.kind not in FLOW_KINDS:
            raise ScenarioInvalid(f"unknown flow kind {self.kind!r}")
        if self.kind == "numeric":
            if self.field is None:
                raise ScenarioInvalid("numeric flow needs a field expression")
            if self.field.ncomp != 2:
                raise ScenarioInvalid("flow field must have 2 components")
        if not (self.h > 0.0):
            raise ScenarioInvalid("step size h must be positive")


def _field_fn(field: Expr):
    fb = field.batch()

    def f(pts):
        a, b = fb(pts[..., 0], pts[..., 1])
        return np.stack([a, b], axis=-1)

    return f


def _rk4_step(f, pts, dt):
    # dt: scalar or (n, 1) column for per-row step sizes
    k1 = f(pts)
    k2 = f(pts + 0.5 * dt * k1)
    k3 = f(pts + 0.5 * dt * k2)
    k4 = f(pts + dt * k3)
    return pts + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _require_polar(flow: BaseFlow, chart: str):
    if chart != "polar2d":
        raise ScenarioInvalid(
            f"flow kind {flow.kind!r} is defined on the polar2d chart only")


def flow_batch(flow: BaseFlow, chart: str, states, t: float):
    """Advance every row of `states` by the same time t >= 0."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if t < 0.0:
        raise ValueError("semiflow runs forward only")
    if t == 0.0:
        return states.copy()
    if flow.kind == "exact_rotation":
        _require_polar(flow, chart)
        out = states.copy()
        out[:, 1] += t
        return out
    if flow.kind == "exact_contraction":
        _require_polar(flow, chart)
        out = np.empty_like(states)
        out[:, 0] = 1.0 + (states[:, 0] - 1.0) * np.exp(-t)
        out[:, 1] = states[:, 1] + t
        return out
    f = _field_fn(flow.field)
    h = flow.h
    # guard against t/h landing just under an integer
    n = int(np.floor(t / h + 1e-12))
    rem = t - n * h
    cur = states
    for _ in range(n):
        cur = _rk4_step(f, cur, h)
    if rem > h * 1e-9:
        cur = _rk4_step(f, cur, rem)
    return np.array(cur, dtype=float)


def flow_at(flow: BaseFlow, chart: str, state, t: float):
    """Single-point advance; returns an array of shape (2,)."""
    return flow_batch(flow, chart, np.asarray(state, dtype=float)[None, :], t)[0]


def flow_small_batch(flow: BaseFlow, chart: str, states, ts):
    """Advance row i by its own time ts[i], each in [0, h].

    Used to move from a bracketing sample to a refined crossing time.  For
    the numeric kind this is a single RK4 step per row, so the per-row
    times must not exceed the step size.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    ts = np.asarray(ts, dtype=float)
    if flow.kind == "exact_rotation":
        _require_polar(flow, chart)
        out = states.copy()
        out[:, 1] += ts
        return out
    if flow.kind == "exact_contraction":
        _require_polar(flow, chart)
        out = np.empty_like(states)
        out[:, 0] = 1.0 + (states[:, 0] - 1.0) * np.exp(-ts)
        out[:, 1] = states[:, 1] + ts
        return out
    if np.any(ts > flow.h * (1.0 + 1e-9)):
        raise ValueError("flow_small_batch: per-row times must stay within one step")
    f = _field_fn(flow.field)
    out = _rk4_step(f, states, ts[:, None])
    return np.where(ts[:, None] > 0.0, out, states)


def flow_window(flow: BaseFlow, chart: str, states, nsteps: int, step: float | None = None):
    """States at offsets j*step for j = 0..nsteps, shape (n, nsteps + 1, 2).

    step defaults to flow.h.  Exact kinds accept any positive step; the
    numeric kind must be sampled on its own integration grid.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    n = states.shape[0]
    h = flow.h if step is None else step
    if flow.kind in ("exact_rotation", "exact_contraction"):
        _require_polar(flow, chart)
        tg = np.arange(nsteps + 1) * h
        out = np.empty((n, nsteps + 1, 2))
        if flow.kind == "exact_rotation":
            out[:, :, 0] = states[:, 0][:, None]
        else:
            out[:, :, 0] = 1.0 + (states[:, 0] - 1.0)[:, None] * np.exp(-tg)[None, :]
        out[:, :, 1] = states[:, 1][:, None] + tg[None, :]
        return out
    if h != flow.h:
        raise ScenarioInvalid("numeric flow must be scanned at its own step h")
    f = _field_fn(flow.field)
    out = np.empty((n, nsteps + 1, 2))
    out[:, 0] = states
    cur = states
    for j in range(nsteps):
        cur = _rk4_step(f, cur, h)
        out[:, j + 1] = cur
    return out


def flow_var_batch(flow: BaseFlow, chart: str, states, ts):
    """Advance row i by its own arbitrary time ts[i] >= 0.

    Exact kinds vectorize via the closed forms; the numeric kind falls back
    to a per-row loop and is only meant for modest row counts.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    ts = np.asarray(ts, dtype=float)
    if flow.kind in ("exact_rotation", "exact_contraction"):
        return flow_small_batch(flow, chart, states, ts)
    out = np.empty_like(states)
    for i in range(states.shape[0]):
        out[i] = flow_batch(flow, chart, states[i][None, :], float(ts[i]))[0]
    return out
