"""Scenario files: a strict TOML schema plus builders.

The file is the reproducibility surface.  Everything a run needs is in the
scenario file or on the command line, unknown keys are rejected at every
level, and the raw bytes are hashed so reports can name exactly what they
were computed from.  Numeric leaves accept either a number or a constant
expression string like "pi", which keeps angles readable.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from importlib.resources import files as _pkg_files

try:
    import tomllib as _toml
except ModuleNotFoundError:  # 3.10
    import tomli as _toml

from .errors import ExprError, ScenarioInvalid
from .expr import eval_field, parse_field
from .flow import FLOW_KINDS, BaseFlow
from .geometry import CHART_SYMBOLS
from .impulse import ImpulseMap, ImpulseSurface, Knobs, Scenario
from .measure import BoxPartition, RadiusPartition
from .nonwandering import RecurrenceParams

_TOP_KEYS = {"scenario", "flow", "section", "impulse", "gluing", "knobs",
             "experiments", "expected"}
_CROSSINGS = ("ascending", "descending", "any")

_EXP_KEYS = {
    "omega": {"kind", "grid", "eps_ball", "t_min", "horizon", "sample_step"},
    "taud": {"kind", "omega", "scale", "horizon"},
    "measure": {"kind", "omega", "source", "x0", "delta", "n", "radius",
                "times", "partition", "support_eps", "margin"},
    "quotient": {"kind", "omega", "n_samples", "times", "seed"},
    "verify": {"kind", "omega", "taud", "measure", "quotient", "horizon"},
}

_EXPECTED_BOOL = {"tau_d_continuous", "image_in_omega_minus_d",
                  "omega_cap_d_empty", "support_pass"}
_EXPECTED_NUM = {"modulus_max", "modulus_min", "defect_max", "defect_min",
                 "mass_near_d_max", "residual_max", "residual_min"}


def _fail(path, msg):
    raise ScenarioInvalid(f"{path}: {msg}")


def _table(v, path):
    if not isinstance(v, dict):
        _fail(path, "must be a table")
    return v


def _allow(tab, path, allowed):
    for k in tab:
        if k not in allowed:
            _fail(path, f"unknown key {k!r}")


def _need(tab, path, key):
    if key not in tab:
        _fail(path, f"missing required key {key!r}")
    return tab[key]


def _str(v, path) -> str:
    if not isinstance(v, str):
        _fail(path, "must be a string")
    return v


def _bool(v, path) -> bool:
    if not isinstance(v, bool):
        _fail(path, "must be true or false")
    return v


def _num(v, path) -> float:
    # bool is an int subclass, keep it out
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, "must be a number")
    return float(v)


def _int(v, path) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(path, "must be an integer")
    return int(v)


def _const(v, chart, path) -> float:
    """A number, or a constant expression string in the chart grammar."""
    if isinstance(v, str):
        try:
            e = parse_field(v, 1, chart)
        except ExprError as err:
            _fail(path, f"bad expression: {err}")
        a = eval_field(e, (0.0, 0.0))[0]
        if a != eval_field(e, (1.0, 2.0))[0]:
            _fail(path, "expression must be constant")
        return float(a)
    return _num(v, path)


def _const_list(v, chart, path, length=None):
    if not isinstance(v, list):
        _fail(path, "must be an array")
    if length is not None and len(v) != length:
        _fail(path, f"must have {length} entries")
    return tuple(_const(x, chart, f"{path}[{i}]") for i, x in enumerate(v))


def parse_point(text: str, chart: str, path: str = "x0"):
    """Comma-separated pair of constants, e.g. '1,pi'."""
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 2:
        _fail(path, "must be two comma-separated values")
    return tuple(_const(p, chart, f"{path}[{i}]") for i, p in enumerate(parts))


def _expr(tab, path, key, dim, chart, required=True, default=None):
    if key not in tab:
        if required:
            _fail(path, f"missing required key {key!r}")
        return default
    src = _str(tab[key], f"{path}.{key}")
    try:
        return parse_field(src, dim, chart)
    except ExprError as err:
        _fail(f"{path}.{key}", f"bad expression: {err}")


# --- scenario proper -----------------------------------------------------


def _build_flow(doc, chart) -> BaseFlow:
    tab = _table(_need(doc, "scenario file", "flow"), "flow")
    _allow(tab, "flow", {"kind", "field", "h"})
    kind = _str(_need(tab, "flow", "kind"), "flow.kind")
    if kind not in FLOW_KINDS:
        _fail("flow.kind", f"must be one of {FLOW_KINDS}")
    if kind != "numeric" and "field" in tab:
        _fail("flow.field", "only the numeric kind takes a field")
    field = _expr(tab, "flow", "field", 2, chart, required=(kind == "numeric"))
    kw = {}
    if "h" in tab:
        kw["h"] = _num(tab["h"], "flow.h")
    return BaseFlow(kind, field=field, **kw)


def _build_impulse(tab, path, chart) -> ImpulseMap:
    _allow(tab, path, {"forward", "inverse"})
    fwd = _expr(tab, path, "forward", 2, chart)
    inv = _expr(tab, path, "inverse", 2, chart, required=False)
    return ImpulseMap(fwd, inv)


def _build_scenario(doc) -> Scenario:
    meta = _table(_need(doc, "scenario file", "scenario"), "scenario")
    _allow(meta, "scenario", {"name", "chart", "box", "horizon_default"})
    name = _str(_need(meta, "scenario", "name"), "scenario.name")
    chart = _str(_need(meta, "scenario", "chart"), "scenario.chart")
    if chart not in CHART_SYMBOLS:
        _fail("scenario.chart", f"unknown chart {chart!r}")
    raw_box = _need(meta, "scenario", "box")
    if not isinstance(raw_box, list) or len(raw_box) != 2:
        _fail("scenario.box", "must be two [lo, hi] intervals")
    box = tuple(_const_list(iv, chart, f"scenario.box[{i}]", length=2)
                for i, iv in enumerate(raw_box))

    sec = _table(_need(doc, "scenario file", "section"), "section")
    _allow(sec, "section", {"s", "c", "crossing"})
    crossing = _str(_need(sec, "section", "crossing"), "section.crossing")
    if crossing not in _CROSSINGS:
        _fail("section.crossing", f"must be one of {_CROSSINGS}")
    surface = ImpulseSurface(_expr(sec, "section", "s", 1, chart),
                             _expr(sec, "section", "c", 1, chart), crossing)

    impulse = _build_impulse(_table(_need(doc, "scenario file", "impulse"),
                                    "impulse"), "impulse", chart)
    gluing = None
    if "gluing" in doc:
        gluing = _build_impulse(_table(doc["gluing"], "gluing"), "gluing", chart)

    knobs = Knobs()
    if "knobs" in doc:
        ktab = _table(doc["knobs"], "knobs")
        _allow(ktab, "knobs", {"hit_bisection_tol", "tau_min", "zeno_min_gap",
                               "zeno_max_impulses"})
        kw = {}
        for key in ("hit_bisection_tol", "tau_min", "zeno_min_gap"):
            if key in ktab:
                kw[key] = _num(ktab[key], f"knobs.{key}")
        if "zeno_max_impulses" in ktab:
            kw["zeno_max_impulses"] = _int(ktab["zeno_max_impulses"],
                                           "knobs.zeno_max_impulses")
        knobs = Knobs(**kw)

    kw = {}
    if "horizon_default" in meta:
        kw["horizon_default"] = _num(meta["horizon_default"],
                                     "scenario.horizon_default")
    return Scenario(name=name, chart=chart, box=box, flow=_build_flow(doc, chart),
                    surface=surface, impulse=impulse, knobs=knobs,
                    gluing=gluing, **kw)


# --- experiment blocks ---------------------------------------------------


def _build_omega(tab, path, chart):
    grid = tab.get("grid", [50, 50])
    if not (isinstance(grid, list) and len(grid) == 2):
        _fail(f"{path}.grid", "must be [n1, n2]")
    grid = tuple(_int(g, f"{path}.grid[{i}]") for i, g in enumerate(grid))
    if any(g < 1 for g in grid):
        _fail(f"{path}.grid", "entries must be >= 1")
    kw = {}
    for src, dst in (("eps_ball", "eps_ball"), ("t_min", "T_min"),
                     ("horizon", "horizon"), ("sample_step", "sample_step")):
        if src in tab:
            kw[dst] = _const(tab[src], chart, f"{path}.{src}")
    return {"kind": "omega", "grid": grid, "params": RecurrenceParams(**kw)}


def _build_partition(tab, path):
    _allow(tab, path, {"kind", "m", "thresholds"})
    kind = tab.get("kind", "box")
    if kind == "box":
        if "thresholds" in tab:
            _fail(f"{path}.thresholds", "only the radius kind takes thresholds")
        return BoxPartition(m=_int(tab.get("m", 64), f"{path}.m"))
    if kind == "radius":
        if "m" in tab:
            _fail(f"{path}.m", "only the box kind takes m")
        th = _need(tab, path, "thresholds")
        if not isinstance(th, list):
            _fail(f"{path}.thresholds", "must be an array")
        return RadiusPartition(tuple(_num(t, f"{path}.thresholds[{i}]")
                                     for i, t in enumerate(th)))
    _fail(f"{path}.kind", "must be 'box' or 'radius'")


def _build_measure(tab, path, chart):
    source = _str(_need(tab, path, "source"), f"{path}.source")
    out = {"kind": "measure", "source": source,
           "omega": _str(tab.get("omega", "omega"), f"{path}.omega"),
           "times": _const_list(tab.get("times", []), chart, f"{path}.times"),
           "partition": _build_partition(_table(tab.get("partition", {}),
                                                f"{path}.partition"),
                                         f"{path}.partition"),
           "support_eps": None, "margin": None, "x0": None,
           "delta": None, "radius": None}
    if source == "kb":
        out["x0"] = _const_list(_need(tab, path, "x0"), chart,
                                f"{path}.x0", length=2)
        out["delta"] = _const(_need(tab, path, "delta"), chart, f"{path}.delta")
        out["n"] = _int(_need(tab, path, "n"), f"{path}.n")
    elif source == "circle":
        if "x0" in tab or "delta" in tab:
            _fail(path, "x0 and delta belong to the kb source")
        out["n"] = _int(_need(tab, path, "n"), f"{path}.n")
        out["radius"] = _const(tab.get("radius", 1.0), chart, f"{path}.radius")
    else:
        _fail(f"{path}.source", "must be 'kb' or 'circle'")
    if out["n"] < 1:
        _fail(f"{path}.n", "must be >= 1")
    if "support_eps" in tab:
        out["support_eps"] = _const(tab["support_eps"], chart,
                                    f"{path}.support_eps")
    if "margin" in tab:
        out["margin"] = _const(tab["margin"], chart, f"{path}.margin")
    return out


def _build_taud(tab, path, chart):
    return {"kind": "taud",
            "omega": _str(tab.get("omega", "omega"), f"{path}.omega"),
            "scale": _const(_need(tab, path, "scale"), chart, f"{path}.scale"),
            "horizon": _const(tab["horizon"], chart, f"{path}.horizon")
            if "horizon" in tab else None}


def _build_quotient(tab, path, chart):
    return {"kind": "quotient",
            "omega": _str(tab.get("omega", "omega"), f"{path}.omega"),
            "n_samples": _int(tab.get("n_samples", 100), f"{path}.n_samples"),
            "times": _const_list(tab.get("times", [0.1, 1.0, 2.5]), chart,
                                 f"{path}.times"),
            "seed": _int(tab.get("seed", 0), f"{path}.seed")}


def _build_verify(tab, path, chart):
    return {"kind": "verify",
            "omega": _str(tab.get("omega", "omega"), f"{path}.omega"),
            "taud": _str(tab.get("taud", "taud"), f"{path}.taud"),
            "measure": _str(tab.get("measure", "measure"), f"{path}.measure"),
            "quotient": _str(tab.get("quotient", "quotient"),
                             f"{path}.quotient"),
            "horizon": _const(tab["horizon"], chart, f"{path}.horizon")
            if "horizon" in tab else None}


_EXP_BUILDERS = {"omega": _build_omega, "taud": _build_taud,
                 "measure": _build_measure, "quotient": _build_quotient,
                 "verify": _build_verify}


def _build_experiments(doc, chart) -> dict:
    out = {}
    for name, tab in _table(doc.get("experiments", {}), "experiments").items():
        path = f"experiments.{name}"
        tab = _table(tab, path)
        kind = tab.get("kind", name)
        if kind not in _EXP_BUILDERS:
            _fail(path, f"unknown experiment kind {kind!r}; name the block "
                        f"after one of {tuple(_EXP_BUILDERS)} or set 'kind'")
        _allow(tab, path, _EXP_KEYS[kind])
        out[name] = _EXP_BUILDERS[kind](tab, path, chart)
    return out


def _build_expected(doc) -> dict:
    tab = _table(doc.get("expected", {}), "expected")
    _allow(tab, "expected", _EXPECTED_BOOL | _EXPECTED_NUM)
    out = {}
    for k, v in tab.items():
        if k in _EXPECTED_BOOL:
            out[k] = _bool(v, f"expected.{k}")
        else:
            out[k] = _num(v, f"expected.{k}")
    return out


# --- entry point ---------------------------------------------------------


@dataclass(frozen=True)
class ScenarioFile:
    """A loaded, validated scenario plus its experiment and expectation
    blocks and the hash of the raw bytes."""

    scenario: Scenario
    experiments: dict
    expected: dict
    sha256: str
    path: str

    def experiment(self, name: str, kind: str) -> dict:
        if name not in self.experiments:
            _fail(f"experiments.{name}", "no such experiment block")
        exp = self.experiments[name]
        if exp["kind"] != kind:
            _fail(f"experiments.{name}",
                  f"is a {exp['kind']!r} block, expected {kind!r}")
        return exp


def resolve_scenario_path(arg: str) -> str:
    """A real file path wins; bare names fall back to the scenarios shipped
    with the package, so 'example21' works from any directory."""
    if os.path.exists(arg):
        return str(arg)
    name = arg[:-5] if str(arg).endswith(".toml") else str(arg)
    if "/" not in name and os.sep not in name:
        cand = _pkg_files("ifsim").joinpath("scenarios", f"{name}.toml")
        if cand.is_file():
            return str(cand)
    raise ScenarioInvalid(f"{arg}: no such file and no shipped scenario by "
                          f"that name")


def load_scenario(path) -> ScenarioFile:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise ScenarioInvalid(f"{path}: cannot read: {err}") from None
    try:
        doc = _toml.loads(raw.decode("utf-8"))
    except (_toml.TOMLDecodeError, UnicodeDecodeError) as err:
        raise ScenarioInvalid(f"{path}: not valid TOML: {err}") from None
    _allow(doc, "scenario file", _TOP_KEYS)
    sc = _build_scenario(doc)
    return ScenarioFile(scenario=sc,
                        experiments=_build_experiments(doc, sc.chart),
                        expected=_build_expected(doc),
                        sha256=hashlib.sha256(raw).hexdigest(),
                        path=str(path))
