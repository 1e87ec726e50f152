"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``PASS``/``FAIL`` line (visible with ``pytest -v -s``
or in ``test_output.txt``) before asserting, so a failing criterion still
reports the measured numbers.
"""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from sublinlab import functions as F
from sublinlab import harness as H
from sublinlab.dp import Grid, PathFunctional, dp_sum_expect, rademacher_iid, tree_expect_exact
from sublinlab.gpde import GCoefficients, HeatSolveConfig, g_normal_expect, g_third_moment_bounds
from sublinlab.scenarios import Scenario, run_one

ROOT = Path(__file__).resolve().parents[1]
INV_SQRT_2PI = 1 / math.sqrt(2 * math.pi)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  criterion {number:2d}  {title}: {detail}")
        assert ok, detail
    return emit


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_criterion_01_positive_part(report):
    parts, ok = [], True
    for r in (0.0, 0.25, 1.0):
        v, secs = timed(g_normal_expect, F.positive_part(8), 1.0, GCoefficients(r, 1.0), HeatSolveConfig(dx=0.02))
        ok &= abs(v - INV_SQRT_2PI) <= 2e-3 and secs < 10
        parts.append(f"r={r}: {v:.6f} ({secs:.2f}s)")
    report(1, "G-normal positive part", ok, f"target {INV_SQRT_2PI:.6f} ± 2e-3; " + ", ".join(parts))


def test_criterion_02_moments(report):
    g = GCoefficients(0.25, 1.0)
    m2 = g_normal_expect(F.square(8), 1.0, g)
    m1 = g_normal_expect(F.abs_power(1, 8), 1.0, g)
    c1 = math.sqrt(2 / math.pi)
    ok = abs(m2 - 1.0) <= 0.01 and abs(m1 - c1) <= 0.01 * c1
    report(2, "G-normal moments", ok, f"E[xi^2]={m2:.6f} (1 ± 1%), E|xi|={m1:.6f} ({c1:.6f} ± 1%)")


def test_criterion_03_third_moment(report):
    lo, hi = g_third_moment_bounds(0.25)
    m3 = g_normal_expect(F.cube(8), 1.0, GCoefficients(0.25, 1.0))
    ce = H.counterexample_check(0.25, 6.0)
    ok = lo - 0.02 <= m3 <= hi + 0.02 and ce.contradiction
    report(3, "third-moment bounds", ok,
           f"E[xi^3]={m3:.6f} in [{lo:.6f}, {hi:.6f}] ± 0.02; "
           f"|a|=6: {ce.scaled_lower_bound:.4f} > {hi:.4f} is {ce.contradiction}")


def test_criterion_04_oracle_equivalence(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(200):
        n = int(rng.integers(1, 7))
        arr = H.random_kernel_array(rng, n, state_dependent=bool(i % 2), max_members=3, max_atoms=3)
        phi = H.random_test_function(rng, -3.0, 3.0)
        dp = dp_sum_expect(arr, phi, Grid.lattice(0.25, arr.reach))
        tree = tree_expect_exact(arr, PathFunctional.terminal(phi))
        worst = max(worst, abs(dp - tree))
    secs = time.perf_counter() - t0
    report(4, "oracle equivalence", worst <= 1e-6 and secs < 60,
           f"200 instances, max |dp - tree| = {worst:.2e} (tol 1e-6), {secs:.1f}s (limit 60s)")


def test_criterion_05_clt(report):
    t = H.clt_gap(lambda n: rademacher_iid([0.5, 1.0], n), F.positive_part(8), [4, 16, 64], 1.0,
                  GCoefficients(0.25, 1.0))
    ok = t.nonincreasing() and t.gap(64) <= t.gap(4) / 2
    gaps = ", ".join(f"gap({r.n})={r.gap:.6f}" for r in t.rows)
    report(5, "CLT convergence", ok, f"{gaps}; nonincreasing and gap(64) <= gap(4)/2")


def test_criterion_06_rosenthal(report):
    t0 = time.perf_counter()
    cases = [("suffix_sq", {"variant": "suffix_sq"}), ("max_sq", {"variant": "max_sq"}),
             ("independent p=2 C_p=8", {"variant": "independent", "p": 2, "C_p": 8})]
    parts, ok = [], True
    for name, params in cases:
        rep = run_one(Scenario(name, "rosenthal", dict(params, count=100)))
        v = rep.summary.get("violations")
        worst = min(row["slack"] for row in rep.rows)
        ok &= rep.status == "pass" and v == 0 and len(rep.rows) == 100 and worst >= -1e-9
        parts.append(f"{name}: {v} violations, min slack {worst:.3g}")
    secs = time.perf_counter() - t0
    ok &= secs < 120
    report(6, "Rosenthal suite", ok, "; ".join(parts) + f"; {secs:.1f}s (limit 120s)")


def test_criterion_07_exponential(report):
    rep = run_one(Scenario("exp", "exponential", {"count": 100}))
    worst = min(row["slack"] for row in rep.rows)
    ok = rep.status == "pass" and rep.summary["violations"] == 0 and len(rep.rows) == 100
    report(7, "exponential inequality", ok,
           f"{rep.summary['violations']} violations in {len(rep.rows)} instances, min slack {worst:.3g}")


def test_criterion_08_axioms(report):
    bad = H.axiom_suite(count=1000, seed=0)
    report(8, "axiom suite", sum(bad.values()) == 0,
           "1000 checks, violations " + ", ".join(f"{k}={v}" for k, v in bad.items()))


def test_criterion_09_fclt(report):
    skeleton = PathFunctional.skeleton([0.5, 1.0], F.Product(F.identity(1.0), F.identity(1.0)))
    t1 = H.fclt_gap(lambda n: rademacher_iid([1.0], n), skeleton, [4, 64], 1.0, GCoefficients(1, 1),
                    cfg=HeatSolveConfig(dx=0.04))
    t2 = H.fclt_gap(lambda n: rademacher_iid([0.5, 1.0], n), PathFunctional.running_max(F.identity(8)),
                    [4, 8, 16, 32, 64], 1.0, GCoefficients(0.25, 1.0))
    ok = t1.gap(64) < t1.gap(4) and t2.strictly_decreasing()
    cauchy = ", ".join(f"{g:.5f}" for g in t2.gaps)
    report(9, "FCLT", ok, f"skeleton gap(4)={t1.gap(4):.5f} > gap(64)={t1.gap(64):.5f}; "
                          f"running-max Cauchy gaps {cauchy} strictly decreasing")


def test_criterion_10_determinism(report, tmp_path):
    config = ROOT / "scenarios" / "suite.json"
    outputs = []
    for i, par in enumerate(("1", "4")):
        out = tmp_path / f"run{i}"
        subprocess.run([sys.executable, "-m", "sublinlab", "run", str(config), "--out", str(out),
                        "--seed", "17", "--parallel", par], check=False, capture_output=True)
        outputs.append((out / "report.csv").read_bytes())
    ok = outputs[0] == outputs[1] and len(outputs[0]) > 0
    report(10, "determinism", ok, f"two runs of {config.name}: {len(outputs[0])} bytes, identical={ok}")
