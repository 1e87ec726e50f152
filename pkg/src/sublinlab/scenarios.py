"""Scenario files, batch execution and report emission.

A scenario file is JSON: either a list of records or ``{"scenarios": [...]}``.
Each record has ``id``, ``kind`` and an optional ``params`` object::

    {"id": "pos-part", "kind": "gnormal",
     "params": {"phi": {"fn": "positive_part", "clip": 8}, "rho": 1,
                "g": [0.25, 1], "dx": 0.02, "expected": 0.398942, "tol": 0.002}}

Tolerances live in the scenario.  Every run is a pure function of the record
and its seed, so emitted CSV is byte-for-byte reproducible.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import functions as F
from . import harness as H
from .core import DistributionFamily
from .dp import Grid, PathFunctional, auto_grid, family_stats, rademacher_iid
from .errors import ScenarioError, SublinError
from .gpde import GCoefficients, HeatSolveConfig, g_normal_expect, time_steps

PARALLEL_ENV = "SUBLINLAB_PARALLEL"

CSV_HEADER = ["scenario_id", "kind", "status", "n", "prelimit", "limit", "gap",
              "lhs", "rhs", "slack", "grid_dx", "clip", "seed"]

KINDS = {
    "gnormal": "G-normal expectation of a test function by the G-heat solver",
    "clt": "CLT gaps of an array against the G-normal limit over n_list",
    "fclt": "functional CLT gaps (skeleton/terminal) or Cauchy gaps (running extrema)",
    "rosenthal": "seeded batch of Rosenthal-type maximal inequalities",
    "exponential": "seeded batch of the exponential inequality in its vanishing-term regime",
    "counterexample": "third moments showing xi + a*eta is not G-normal for |a| >= 6",
    "levy": "marginal gaps of the discrete Levy-characterisation process",
    "axioms": "randomised checks of the sub-linear expectation axioms and Hoelder",
}

REQUIRED = {
    "gnormal": ("phi",),
    "clt": ("phi", "n_list"),
    "fclt": ("functional", "n_list"),
    "rosenthal": ("variant",),
    "exponential": (),
    "counterexample": ("tau", "a"),
    "levy": ("g", "n_list", "phis"),
    "axioms": (),
}


@dataclass
class Scenario:
    id: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class RunReport:
    scenario_id: str
    kind: str
    status: str
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    message: str = ""


# Parsing ---------------------------------------------------------------------------

def parse_scenarios(path) -> list[Scenario]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    text = path.read_text()
    try:
        doc = json.loads(text) if text.strip() else []
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno - 1 < len(text.splitlines()) else ""
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line}") from exc
    records = doc.get("scenarios", None) if isinstance(doc, dict) else doc
    if not isinstance(records, list):
        raise ScenarioError("scenario file must hold a list of records or {'scenarios': [...]}")
    out, seen = [], set()
    for i, rec in enumerate(records):
        out.append(_validate(rec, i))
        if out[-1].id in seen:
            raise ScenarioError(f"record {i}: duplicate id {out[-1].id!r}")
        seen.add(out[-1].id)
    return out


def _validate(rec, i: int) -> Scenario:
    if not isinstance(rec, dict):
        raise ScenarioError(f"record {i}: expected an object")
    for key in ("id", "kind"):
        if key not in rec:
            raise ScenarioError(f"record {i}: missing field {key!r}")
    sid, kind = str(rec["id"]), rec["kind"]
    if kind not in KINDS:
        raise ScenarioError(f"record {i} ({sid}): field 'kind' has unknown value {kind!r}; "
                            f"expected one of {sorted(KINDS)}")
    params = rec.get("params", {})
    if not isinstance(params, dict):
        raise ScenarioError(f"record {i} ({sid}): field 'params' must be an object")
    for key in REQUIRED[kind]:
        if key not in params:
            raise ScenarioError(f"record {i} ({sid}): kind {kind!r} needs params.{key}")
    return Scenario(sid, kind, params)


# Parameter helpers -----------------------------------------------------------------

def _g(p, default=(1.0, 1.0)) -> GCoefficients:
    lo, hi = p.get("g", default)
    return GCoefficients(float(lo), float(hi))


def _cfg(p) -> HeatSolveConfig:
    grid = p.get("grid")
    if grid is not None:
        grid = Grid(float(grid["lo"]), float(grid["hi"]), int(grid["n_points"]))
    return HeatSolveConfig(dx=float(p.get("dx", 0.02)), cfl_safety=float(p.get("cfl", 0.5)), grid=grid)


def _array_builder(desc: dict):
    """``n -> KernelArray`` from an array descriptor."""
    kind = desc.get("type", "rademacher")
    scales = [float(s) for s in desc.get("scales", [1.0])]
    if kind == "rademacher":
        return lambda n: rademacher_iid(scales, n)
    base = DistributionFamily.rademacher_scales(scales)
    if kind == "moving_average":
        coeffs = desc["coeffs"]
        return lambda n: H.weighted_sum_array(H.moving_average_weights(coeffs, n), base)
    if kind == "weighted":
        # weights w(i, n) = n^-1/2 * profile(i / n), profile piecewise linear on [0, 1]
        prof = F.TestFunction(desc.get("profile_x", [0.0, 1.0]), desc.get("profile_y", [1.0, 1.0]))
        return lambda n: H.weighted_sum_array(
            [prof(i / n) / math.sqrt(n) for i in range(1, n + 1)], base)
    raise ScenarioError(f"unknown array type {kind!r}")


def _functional(desc: dict) -> PathFunctional:
    kind = desc.get("kind", "terminal")
    phi = F.from_descriptor(desc["phi"])
    if kind == "skeleton":
        return PathFunctional.skeleton(desc["times"], phi)
    return PathFunctional(kind, phi)


def _clip(desc) -> float | None:
    if isinstance(desc, dict):
        if "clip" in desc:
            return float(desc["clip"])
        if desc.get("fn") == "product":
            clips = [_clip(f) for f in desc["factors"]]
            return max(c for c in clips if c is not None) if any(c is not None for c in clips) else None
    return None


def _row(**kw) -> dict:
    row = dict.fromkeys(["n", "prelimit", "limit", "gap", "lhs", "rhs", "slack", "grid_dx"])
    row.update(kw)
    return row


def _table_rows(table: H.ConvergenceTable) -> list[dict]:
    dx = table.meta.get("grid_dx", {})
    return [_row(n=r.n, prelimit=r.prelimit, limit=r.limit, gap=r.gap, grid_dx=dx.get(r.n))
            for r in table.rows]


# Runners, one per kind ---------------------------------------------------------------
# Each returns (passed, rows, summary, provenance).

def _run_gnormal(p, seed):
    phi = F.from_descriptor(p["phi"])
    g, cfg = _g(p), _cfg(p)
    rho = float(p.get("rho", 1.0))
    value = g_normal_expect(phi, rho, g, cfg)
    expected = p.get("expected")
    gap = abs(value - float(expected)) if expected is not None else None
    passed = gap is None or gap <= float(p.get("tol", 1e-3))
    prov = {"pde_dx": cfg.spacing, "time_steps": time_steps(rho, g, cfg.spacing, cfg.cfl_safety),
            "pde_form": "backward"}
    return passed, [_row(limit=value, gap=gap, grid_dx=cfg.spacing)], {"value": value}, prov


def _run_clt(p, seed):
    phi = F.from_descriptor(p["phi"])
    g, cfg = _g(p), _cfg(p)
    table = H.clt_gap(_array_builder(p.get("array", {})), phi, p["n_list"],
                      float(p.get("rho", 1.0)), g, auto_grid, cfg)
    passed = _ordinal_checks(table, p)
    lind = {str(n): asdict(rep) for n, rep in table.meta["lindeberg"].items()}
    return passed, _table_rows(table), {"gaps": table.gaps, "lindeberg": lind}, \
        {"pde_dx": cfg.spacing, "pde_form": "backward"}


def _ordinal_checks(table: H.ConvergenceTable, p) -> bool:
    """Ordinal convergence checks configured by the scenario."""
    gaps = table.gaps
    tol = float(p.get("monotone_tol", 0.0))
    ok = table.nonincreasing(tol) if p.get("monotone", True) else True
    if p.get("strict", False):
        ok = ok and table.strictly_decreasing()
    if "ratio" in p:
        ok = ok and gaps[-1] <= float(p["ratio"]) * gaps[0]
    if "max_gap" in p:
        ok = ok and max(gaps) <= float(p["max_gap"])
    if p.get("final_below_first", True) and len(gaps) > 1:
        ok = ok and gaps[-1] <= gaps[0] + tol
    return bool(ok)


def _run_fclt(p, seed):
    g = _g(p)
    cfg = HeatSolveConfig(dx=float(p.get("dx", 0.04)), cfl_safety=float(p.get("cfl", 0.5)))
    functional = _functional(p["functional"])
    table = H.fclt_gap(_array_builder(p.get("array", {})), functional, p["n_list"],
                       float(p.get("rho", 1.0)), g, auto_grid, cfg)
    q = dict(p)
    if table.kind == "cauchy":
        q.setdefault("strict", True)
    passed = _ordinal_checks(table, q)
    return passed, _table_rows(table), {"gaps": table.gaps, "table_kind": table.kind}, \
        {"pde_dx": cfg.spacing, "pde_form": "backward"}


def _batch_rows(reports):
    return [_row(n=r.descriptor.get("n"), lhs=r.lhs, rhs=r.rhs, slack=r.slack) for r in reports]


def _run_rosenthal(p, seed):
    rng = np.random.default_rng(seed)
    variant = p["variant"]
    count, n_max = int(p.get("count", 100)), int(p.get("n_max", 5))
    power = float(p.get("p", 2.0))
    reports = []
    for i in range(count):
        n = int(rng.integers(1, n_max + 1))
        if variant == "independent":
            fams = [H.random_family(rng) for _ in range(n)]
            reports.append(H.independent_rosenthal_check(fams, power, float(p.get("C_p", 8.0))))
        else:
            arr = H.random_kernel_array(rng, n, state_dependent=bool(i % 2),
                                        nonpositive_mean=variant == "suffix_sq")
            reports.append(H.rosenthal_check(arr, power, variant, p.get("C_p")))
    violations = sum(not r.holds(1e-9) for r in reports)
    summary = {"violations": violations, "count": count,
               "max_empirical_constant": max(r.empirical_constant for r in reports)}
    return violations == 0, _batch_rows(reports), summary, {}


def _run_exponential(p, seed):
    rng = np.random.default_rng(seed)
    count, n_max = int(p.get("count", 100)), int(p.get("n_max", 5))
    margin = float(p.get("y_margin", 0.25))
    reports = []
    for i in range(count):
        n = int(rng.integers(1, n_max + 1))
        arr = H.random_kernel_array(rng, n, state_dependent=bool(i % 2), nonpositive_mean=True)
        x = float(rng.uniform(0.1, 1.5 * arr.reach + 0.1))
        reports.append(H.exponential_inequality_check(arr, x, arr.c_max + margin))
    violations = sum(not r.holds(1e-9) for r in reports)
    return violations == 0, _batch_rows(reports), {"violations": violations, "count": count}, {}


def _run_counterexample(p, seed):
    cfg = _cfg(p)
    clip = float(p.get("clip", 8.0))
    rep = H.counterexample_check(float(p["tau"]), float(p["a"]), cfg, clip=clip,
                                 tol=float(p.get("tol", 0.02)))
    rows = [_row(prelimit=rep.third_moment_sum, limit=rep.third_moment_xi,
                 gap=abs(rep.third_moment_sum - rep.third_moment_xi),
                 lhs=rep.upper_bound, rhs=rep.scaled_lower_bound,
                 slack=rep.scaled_lower_bound - rep.upper_bound, grid_dx=cfg.spacing)]
    return rep.consistent, rows, rep.as_dict(), {"pde_dx": cfg.spacing, "pde_form": "backward"}


def _run_levy(p, seed):
    g, cfg = _g(p), _cfg(p)
    phis = [F.from_descriptor(d) for d in p["phis"]]
    tables = H.levy_demo(g, p["n_list"], phis, auto_grid, cfg)
    q = dict(p)
    q.setdefault("monotone_tol", 1e-6)
    rows, summary = [], {}
    passed = True
    for t in tables:
        passed = passed and _ordinal_checks(t, q)
        rows += _table_rows(t)
        summary[t.label] = t.gaps
    stats = family_stats(H.levy_process(g, max(p["n_list"])).family(1, 0.0))
    summary["step_stats_at_max_n"] = {"mean_upper": stats.mean_upper, "mean_lower": stats.mean_lower,
                                      "var_upper": stats.var_upper, "var_lower": stats.var_lower}
    return passed, rows, summary, {"pde_dx": cfg.spacing, "pde_form": "backward"}


def _run_axioms(p, seed):
    bad = H.axiom_suite(int(p.get("count", 1000)), seed)
    return sum(bad.values()) == 0, [], {"violations": bad}, {}


RUNNERS = {
    "gnormal": _run_gnormal, "clt": _run_clt, "fclt": _run_fclt, "rosenthal": _run_rosenthal,
    "exponential": _run_exponential, "counterexample": _run_counterexample,
    "levy": _run_levy, "axioms": _run_axioms,
}


def run_one(scenario: Scenario, default_seed: int = 0) -> RunReport:
    seed = int(scenario.params.get("seed", default_seed))
    p = scenario.params
    clip = _clip(p.get("phi")) or _clip(p.get("functional", {}).get("phi")) or p.get("clip")
    prov = {"seed": seed, "clip": clip}
    t0 = time.perf_counter()
    try:
        passed, rows, summary, extra = RUNNERS[scenario.kind](p, seed)
        status, message = ("pass" if passed else "fail"), ""
    except (SublinError, ValueError, KeyError, TypeError) as exc:
        status, rows, summary, extra = "error", [], {}, {}
        message = f"{type(exc).__name__}: {exc}"
    prov.update(extra)
    prov["wall_time"] = time.perf_counter() - t0
    return RunReport(scenario.id, scenario.kind, status, rows, _plain(summary), _plain(prov), message)


def _run_star(args):
    return run_one(*args)


def default_parallelism() -> int:
    try:
        return max(1, int(os.environ.get(PARALLEL_ENV, "1")))
    except ValueError:
        return 1


def run(scenarios: list[Scenario], parallelism: int | None = None, seed: int = 0) -> list[RunReport]:
    """Run every scenario; failures are captured per scenario, order is preserved."""
    k = default_parallelism() if parallelism is None else int(parallelism)
    if k < 1:
        raise ScenarioError("parallelism must be at least 1")
    jobs = [(s, seed) for s in scenarios]
    if k == 1 or len(jobs) <= 1:
        return [_run_star(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=k) as pool:
        return list(pool.map(_run_star, jobs))


# Emission --------------------------------------------------------------------------

def _plain(obj):
    """Convert numpy scalars and tuples into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(reports: list[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        base = {"scenario_id": r.scenario_id, "kind": r.kind, "status": r.status,
                "clip": r.provenance.get("clip"), "seed": r.provenance.get("seed")}
        for row in r.rows or [{}]:
            rec = dict(base)
            rec.update({k: row.get(k) for k in ("n", "prelimit", "limit", "gap", "lhs",
                                                 "rhs", "slack", "grid_dx")})
            w.writerow([_cell(rec.get(col)) for col in CSV_HEADER])
    return buf.getvalue()


def emit(reports: list[RunReport], fmt: str, out_path) -> Path:
    """Write reports as CSV (fixed header) or JSON (one object per report)."""
    out_path = Path(out_path)
    if fmt == "csv":
        text = csv_text(reports)
    elif fmt == "json":
        text = json.dumps([asdict(r) for r in reports], indent=2, sort_keys=True) + "\n"
    else:
        raise ScenarioError(f"unknown format {fmt!r}")
    out_path.write_text(text)
    return out_path


def load_reports(path) -> list[RunReport]:
    return [RunReport(**rec) for rec in json.loads(Path(path).read_text())]
