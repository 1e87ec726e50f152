"""Numerical checks of the limit theorems and moment inequalities.

Prelimit sides come from :mod:`sublinlab.dp` (grid backward induction or the
exact tree), limit sides from :mod:`sublinlab.gpde`.  Inequalities are
reported with their slack ``rhs - lhs`` so that a violation is a negative
number rather than an exception.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import functions as F
from .core import DistributionFamily, StepDistribution, conjugate_expect_step, expect_step, holder_gap
from .dp import (Grid, KernelArray, PathFunctional, auto_grid, dp_path_expect,
                 dp_sum_expect, family_stats, reachable_states, tree_expect_exact,
                 tree_expectation)
from .errors import InvalidInstance, InvalidParameter
from .gpde import (GCoefficients, HeatSolveConfig, as_test_function, g_normal_expect,
                   g_third_moment_bounds, gbm_skeleton_expect, solve_g_heat)

MEAN_TOL = 1e-12


# Reports ---------------------------------------------------------------------

@dataclass
class LindebergReport:
    """Finite-n values of the four CLT hypotheses, worst state per step."""

    eps: tuple
    lindeberg_sum: tuple
    var_sum_upper: float
    var_sum_upper_min: float
    rho_target: float
    rho_gap: float
    r_target: float
    r_gap: float
    mean_sum: float
    worst_state: bool

    def satisfied(self, tol: float) -> bool:
        return max(max(self.lindeberg_sum, default=0.0), self.rho_gap, self.r_gap, self.mean_sum) <= tol


@dataclass
class Row:
    n: int
    prelimit: float
    limit: float
    gap: float


@dataclass
class ConvergenceTable:
    """Prelimit/limit pairs; ``kind='cauchy'`` rows hold the previous prelimit as limit."""

    rows: list
    kind: str = "limit"
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows.sort(key=lambda r: r.n)

    @property
    def gaps(self) -> list[float]:
        return [r.gap for r in self.rows]

    def gap(self, n: int) -> float:
        for r in self.rows:
            if r.n == n:
                return r.gap
        raise KeyError(n)

    def nonincreasing(self, tol: float = 0.0) -> bool:
        g = self.gaps
        return all(b <= a + tol for a, b in zip(g, g[1:]))

    def strictly_decreasing(self) -> bool:
        g = self.gaps
        return all(b < a for a, b in zip(g, g[1:]))


@dataclass
class InequalityReport:
    lhs: float
    rhs: float
    descriptor: dict
    constant: float = 1.0

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def empirical_constant(self) -> float:
        """Smallest constant that would still make this instance hold."""
        base = self.rhs / self.constant if self.constant else 0.0
        return self.lhs / base if base > 0 else 0.0

    def holds(self, tol: float = 1e-9) -> bool:
        return self.slack >= -tol


# Lindeberg-type conditions ---------------------------------------------------------

def lindeberg_conditions(arr: KernelArray, eps_list: Sequence[float], rho_target: float,
                         r_target: float, max_states: int = 20000) -> LindebergReport:
    """Sum the per-step conditional quantities, taking the worst reachable state."""
    eps_list = tuple(float(e) for e in eps_list)
    if any(e <= 0 for e in eps_list):
        raise InvalidParameter("eps values must be positive")
    if arr.state_dependent:
        states = reachable_states(arr, max_states=max_states)
    else:
        states = [np.array([0.0])] * arr.n_steps
    lind = np.zeros(len(eps_list))
    vu_max = vu_min = r_sum = m_sum = 0.0
    for k in range(1, arr.n_steps + 1):
        stats = [family_stats(arr.family(k, float(s))) for s in states[k - 1]]
        lind += [max(st.lindeberg(e) for st in stats) for e in eps_list]
        vu_max += max(st.var_upper for st in stats)
        vu_min += min(st.var_upper for st in stats)
        r_sum += max(abs(r_target * st.var_upper - st.var_lower) for st in stats)
        m_sum += max(abs(st.mean_upper) + abs(st.mean_lower) for st in stats)
    return LindebergReport(
        eps=eps_list, lindeberg_sum=tuple(float(v) for v in lind),
        var_sum_upper=vu_max, var_sum_upper_min=vu_min, rho_target=rho_target,
        rho_gap=max(abs(vu_max - rho_target), abs(vu_min - rho_target)),
        r_target=r_target, r_gap=r_sum, mean_sum=m_sum, worst_state=arr.state_dependent)


# CLT / FCLT ---------------------------------------------------------------------

def clt_gap(arr_builder: Callable[[int], KernelArray], phi: Callable, n_list: Sequence[int],
            rho: float, g: GCoefficients, grid_policy: Callable[[KernelArray], Grid] = auto_grid,
            cfg: HeatSolveConfig = HeatSolveConfig(), eps_list=(0.05,), r_target=None) -> ConvergenceTable:
    """Gap between the prelimit upper expectation and the G-normal limit, per n."""
    limit = g_normal_expect(phi, rho, g, cfg)
    r_target = g.sigma_lower_sq / g.sigma_upper_sq if r_target is None else r_target
    rows, grids, lind = [], {}, {}
    for n in sorted(n_list):
        arr = arr_builder(n)
        grid = grid_policy(arr)
        pre = dp_sum_expect(arr, phi, grid)
        rows.append(Row(n, pre, limit, abs(pre - limit)))
        grids[n] = grid.dx
        lind[n] = lindeberg_conditions(arr, eps_list, rho * g.sigma_upper_sq, r_target)
    return ConvergenceTable(rows, meta={"grid_dx": grids, "lindeberg": lind,
                                        "pde_dx": cfg.spacing, "pde_form": "backward"})


def fclt_gap(arr_builder: Callable[[int], KernelArray], functional: PathFunctional,
             n_list: Sequence[int], rho: float, g: GCoefficients,
             grid_policy: Callable[[KernelArray], Grid] = auto_grid,
             cfg: HeatSolveConfig = HeatSolveConfig(), support: float | None = None) -> ConvergenceTable:
    """Functional CLT gaps for ``rho(t) = rho * t``.

    Terminal and skeleton functionals are compared with G-Brownian motion
    expectations; the extremum kinds have no computed limit and report
    Cauchy gaps between consecutive entries of ``n_list`` instead.
    """
    ns = sorted(n_list)
    pre, grids = {}, {}
    for n in ns:
        arr = arr_builder(n)
        grid = grid_policy(arr)
        pre[n] = dp_path_expect(arr, functional, grid)
        grids[n] = grid.dx
    meta = {"grid_dx": grids, "pde_dx": cfg.spacing, "pde_form": "backward"}
    if functional.kind == "terminal":
        limit = g_normal_expect(functional.phi, rho, g, cfg)
    elif functional.kind == "skeleton":
        limit = gbm_skeleton_expect(functional.phi, [rho * t for t in functional.times], g, cfg,
                                    support=support)
    else:
        rows = [Row(b, pre[b], pre[a], abs(pre[b] - pre[a])) for a, b in zip(ns, ns[1:])]
        return ConvergenceTable(rows, kind="cauchy", meta=meta)
    return ConvergenceTable([Row(n, pre[n], limit, abs(pre[n] - limit)) for n in ns], meta=meta)


def weighted_sum_array(weights: Sequence[float], base: DistributionFamily) -> KernelArray:
    """Array whose step ``i`` is ``base`` scaled by ``weights[i]``."""
    w = [float(a) for a in weights]
    if not w or not all(math.isfinite(a) for a in w):
        raise InvalidParameter("weights must be a nonempty list of finite numbers")
    meta = {"max_weight": max(abs(a) for a in w), "sum_sq": math.fsum(a * a for a in w)}
    return KernelArray.from_families([base.scaled(a) for a in w], label="weighted", meta=meta)


def moving_average_weights(coeffs: Sequence[float], n: int) -> list[float]:
    """Weights of ``n**-0.5 * (X_1 + ... + X_n)`` for ``X_k = sum_i a_i eta_{i+k}``."""
    a = [float(c) for c in coeffs]
    q = len(a) - 1

    def coef(j):
        return a[j] if 0 <= j <= q else 0.0

    r = 1.0 / math.sqrt(n)
    return [r * math.fsum(coef(i - k) for k in range(1, n + 1)) for i in range(1, n + q + 1)]


# Rosenthal-type inequalities ------------------------------------------------------

def _accumulated(arr: KernelArray, stat: Callable, leaf: Callable = lambda a: a,
                 combine: str = "expect") -> float:
    """Upper expectation (or worst path) of ``leaf(sum_k stat(family at step k))``."""
    return tree_expectation(
        arr, (0.0, 0.0),
        lambda st, k, z, fam: (st[0] + z, st[1] + stat(family_stats(fam))),
        lambda st: leaf(st[1]), combine=combine)


def _drift(st) -> float:
    return max(st.mean_upper, 0.0) + max(-st.mean_lower, 0.0)


def _require_nonpositive_means(arr: KernelArray, what: str):
    for k, states in enumerate(reachable_states(arr), start=1):
        for s in states.tolist():
            if family_stats(arr.family(k, s)).mean_upper > MEAN_TOL:
                raise InvalidInstance(f"{what} needs nonpositive conditional upper means; "
                                      f"step {k} at state {s:g} violates it")


def default_rosenthal_constant(p: float) -> float:
    return 2.0 ** (2 * p) * p * p


def rosenthal_check(arr: KernelArray, p: float = 2.0, variant: str = "max_sq",
                    C_p: float | None = None) -> InequalityReport:
    """Compare the maximal moment of partial sums with its conditional-moment bound.

    ``suffix_sq``: ``E[(max_k (S_n - S_k))^2] <= E[sum of conditional upper variances]``
    for arrays with nonpositive conditional upper means.
    ``max_sq``: ``E[max_k |S_k|^2] <= 256 (E[sum var] + E[(sum drift)^2])``.
    ``max_p``: the order-``p`` analogue with constant ``C_p``.
    """
    big = 2 * arr.reach + 1.0  # clipping never binds on the reachable set
    desc = {"variant": variant, "n": arr.n_steps, "p": p, "label": arr.label}
    var_sum = _accumulated(arr, lambda st: st.var_upper)
    if variant == "suffix_sq":
        _require_nonpositive_means(arr, "suffix_sq")
        lhs = tree_expect_exact(arr, PathFunctional.suffix_max(F.square(big)))
        return InequalityReport(lhs, var_sum, desc, 1.0)
    if variant == "max_sq":
        drift_sq = _accumulated(arr, _drift, lambda a: a * a)
        lhs = tree_expect_exact(arr, PathFunctional.running_max_abs(F.square(big)))
        return InequalityReport(lhs, 256.0 * (var_sum + drift_sq), desc, 256.0)
    if variant == "max_p":
        if p < 2:
            raise InvalidParameter("max_p needs p >= 2")
        C = default_rosenthal_constant(p) if C_p is None else float(C_p)
        moment = _accumulated(arr, lambda st: st.abs_moment_upper(p))
        var_pow = _accumulated(arr, lambda st: st.var_upper, lambda a: a ** (p / 2))
        drift_pow = _accumulated(arr, _drift, lambda a: a ** p)
        lhs = tree_expect_exact(arr, PathFunctional.running_max_abs(F.abs_power(p, big)))
        return InequalityReport(lhs, C * (moment + var_pow + drift_pow), desc, C)
    raise InvalidParameter(f"unknown Rosenthal variant {variant!r}")


def independent_rosenthal_check(families: Sequence[DistributionFamily], p: float = 2.0,
                                C_p: float = 8.0) -> InequalityReport:
    """Maximal inequality for independent steps, bound built from one-step moments."""
    if p < 2:
        raise InvalidParameter("p must be at least 2")
    arr = KernelArray.from_families(families)
    big = arr.reach + 1.0
    lhs = tree_expect_exact(arr, PathFunctional.running_max_abs(F.abs_power(p, big)))
    moment = math.fsum(expect_step(f, lambda x: np.abs(x) ** p) for f in families)
    second = math.fsum(expect_step(f, lambda x: x * x) for f in families)
    drift = math.fsum(max(-conjugate_expect_step(f, lambda x: x), 0.0)
                      + max(expect_step(f, lambda x: x), 0.0) for f in families)
    rhs = C_p * (moment + second ** (p / 2) + drift ** p)
    return InequalityReport(lhs, rhs, {"variant": "independent", "n": len(families), "p": p}, C_p)


# Exponential inequality ------------------------------------------------------------

def exponential_bound_value(x: float, y: float, A: float) -> float:
    if not (x > 0 and y > 0 and A > 0):
        raise InvalidParameter("x, y and A must be positive")
    return math.exp(-x * x / (2 * (x * y + A)) * (1 + 2.0 / 3.0 * math.log1p(x * y / A)))


def exponential_inequality_check(arr: KernelArray, x: float, y: float,
                                 ramp_width: float | None = None) -> InequalityReport:
    """Upper capacity of ``{S_n >= x}`` against the exponential bound.

    Only the regime where every atom is below ``y`` is handled, so the
    capacity term of the general bound vanishes once ``A`` is the largest
    accumulated conditional variance over all paths.
    """
    if not (x > 0 and y > 0):
        raise InvalidParameter("x and y must be positive")
    if arr.c_max >= y:
        raise InvalidInstance(f"atoms reach {arr.c_max:g} >= y = {y:g}; "
                              "the instance violates the vanishing-term specialisation")
    _require_nonpositive_means(arr, "the exponential inequality")
    A = _accumulated(arr, lambda st: st.var_upper, combine="pathmax")
    finals = tree_terminal_states(arr)
    below = finals[finals < x - 1e-12]
    w = 1e-6 if ramp_width is None else float(ramp_width)
    if ramp_width is None and below.size:
        w = min(w, 0.5 * (x - below.max()))
    upper = tree_expect_exact(arr, PathFunctional.terminal(F.ramp(x - w, x)))
    lower = tree_expect_exact(arr, PathFunctional.terminal(F.ramp(x, x + w)))
    # A == 0 means no variance at all; the bound tends to 0 as A -> 0+
    rhs = exponential_bound_value(x, y, A) if A > 0 else 0.0
    desc = {"n": arr.n_steps, "x": x, "y": y, "A": A, "ramp_width": w,
            "lower_bracket": lower, "label": arr.label}
    return InequalityReport(upper, rhs, desc)


def tree_terminal_states(arr: KernelArray) -> np.ndarray:
    """All reachable values of ``S_n``."""
    last = reachable_states(arr)[-1]
    out = set()
    for s in last.tolist():
        for z in arr.family(arr.n_steps, s).atoms.tolist():
            out.add(round(s + z, 12) + 0.0)
    return np.array(sorted(out))


# Non-G-normality of xi + a * eta -------------------------------------------------

@dataclass
class CounterexampleReport:
    tau: float
    a: float
    third_moment_xi: float
    third_moment_sum: float
    lower_bound: float
    upper_bound: float
    scaled_lower_bound: float
    tol: float
    clip: float
    within_bounds: bool
    sum_matches: bool
    contradiction: bool

    @property
    def consistent(self) -> bool:
        return self.within_bounds and self.sum_matches and (self.contradiction or abs(self.a) < 6)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["consistent"] = self.consistent
        return d


def counterexample_check(tau: float, a: float, cfg: HeatSolveConfig = HeatSolveConfig(),
                         clip: float = 8.0, tol: float = 0.02,
                         inner_cfg: HeatSolveConfig | None = None) -> CounterexampleReport:
    """Third moments of ``xi ~ N(0, [tau, 1])`` and of ``xi + a * eta``.

    ``eta`` is a classical standard normal independent of ``xi``.  The sum is
    evaluated by nesting: ``h(x) = E[(x + a * eta)^3]`` from a classical heat
    solve, then the G-normal expectation of ``h`` truncated at ``clip``.
    """
    lo, hi = g_third_moment_bounds(tau)
    g = GCoefficients(tau, 1.0)
    m_xi = g_normal_expect(F.cube(clip), 1.0, g, cfg)
    inner_cfg = inner_cfg or HeatSolveConfig(dx=max(cfg.spacing, 0.05), cfl_safety=cfg.cfl_safety)
    wide = F.cube(clip * (1 + abs(a)))
    h = solve_g_heat(wide, a * a, GCoefficients(1.0, 1.0), inner_cfg)
    m_sum = g_normal_expect(as_test_function(h, -clip, clip), 1.0, g, cfg)
    scaled = math.sqrt(1 + a * a) * lo
    return CounterexampleReport(
        tau=tau, a=a, third_moment_xi=m_xi, third_moment_sum=m_sum,
        lower_bound=lo, upper_bound=hi, scaled_lower_bound=scaled, tol=tol, clip=clip,
        within_bounds=lo - tol <= m_xi <= hi + tol,
        sum_matches=abs(m_sum - m_xi) <= tol,
        contradiction=scaled > hi)


# Lévy characterisation demo -------------------------------------------------------

def levy_process(g: GCoefficients, n: int) -> KernelArray:
    """Steps choosing between ``±sigma_lo/sqrt(n)`` and ``±sigma_hi/sqrt(n)``."""
    r = 1.0 / math.sqrt(n)
    fam = DistributionFamily((StepDistribution.rademacher(math.sqrt(g.sigma_lower_sq) * r),
                              StepDistribution.rademacher(g.sigma_upper * r)))
    return KernelArray.iid(fam, n, label="levy")


def levy_demo(g: GCoefficients, n_list: Sequence[int], phis: Sequence[Callable],
              grid_policy: Callable[[KernelArray], Grid] = auto_grid,
              cfg: HeatSolveConfig = HeatSolveConfig()) -> list[ConvergenceTable]:
    """Marginal gaps of the discrete process against ``N(0, [s_lo, s_hi])``, one table per phi."""
    tables = []
    for phi in phis:
        t = clt_gap(lambda n: levy_process(g, n), phi, n_list, 1.0, g, grid_policy, cfg)
        t.label = F.describe(phi)
        tables.append(t)
    return tables


# Random instances ----------------------------------------------------------------

def random_family(rng: np.random.Generator, max_members: int = 3, max_atoms: int = 3,
                  unit: float = 0.25, max_units: int = 4, nonpositive_mean: bool = False) -> DistributionFamily:
    """Family with atoms on the lattice ``unit * Z`` and random weights."""
    members = []
    for _ in range(int(rng.integers(1, max_members + 1))):
        k = int(rng.integers(1, max_atoms + 1))
        pts = unit * rng.choice(np.arange(-max_units, max_units + 1), size=k, replace=False)
        w = rng.dirichlet(np.ones(k))
        w[-1] = 1.0 - w[:-1].sum()
        if nonpositive_mean:
            mean = float(np.dot(w, pts))
            if mean > 0:
                pts = pts - unit * math.ceil(mean / unit)
        members.append(StepDistribution(pts, w))
    return DistributionFamily(tuple(members))


def random_kernel_array(rng: np.random.Generator, n: int, state_dependent: bool = False,
                        **family_kw) -> KernelArray:
    """Constant or sign-of-state dependent array of random lattice families."""
    if not state_dependent:
        return KernelArray.from_families([random_family(rng, **family_kw) for _ in range(n)],
                                         label="random")
    pos = [random_family(rng, **family_kw) for _ in range(n)]
    neg = [random_family(rng, **family_kw) for _ in range(n)]
    c_max = max(f.max_abs for f in pos + neg)
    return KernelArray(n, lambda k, s: pos[k - 1] if s >= 0 else neg[k - 1], c_max=c_max,
                       state_dependent=True, label="random-state-dependent")


# Axioms ------------------------------------------------------------------------

AXIOMS = ("monotonicity", "constant", "subadditivity", "homogeneity",
          "translation", "conjugate_dominance", "holder")


def random_test_function(rng: np.random.Generator, lo: float = -3.0, hi: float = 3.0,
                         max_breaks: int = 6, scale: float = 2.0) -> F.TestFunction:
    k = int(rng.integers(1, max_breaks + 1))
    xs = np.sort(rng.uniform(lo, hi, size=k))
    return F.TestFunction.from_points(xs, rng.normal(0.0, scale, size=xs.size))


def axiom_suite(count: int = 1000, seed: int = 0, tol: float = 1e-12) -> dict:
    """Randomised checks of the expectation axioms; returns violation counts per axiom."""
    rng = np.random.default_rng(seed)
    bad = dict.fromkeys(AXIOMS, 0)
    for _ in range(count):
        members = []
        for _ in range(int(rng.integers(1, 5))):
            k = int(rng.integers(1, 5))
            members.append(StepDistribution(rng.uniform(-4, 4, size=k), rng.dirichlet(np.ones(k))))
        fam = DistributionFamily(tuple(members))
        phi, psi = random_test_function(rng), random_test_function(rng)
        bump = random_test_function(rng)
        dominating = phi + F.TestFunction.from_points(bump.breakpoints, np.abs(bump.values))
        lam, c = float(rng.exponential(2.0)), float(rng.normal(0, 3))
        e_phi, e_psi = expect_step(fam, phi), expect_step(fam, psi)
        scale = 1.0 + abs(e_phi) + abs(e_psi)
        bad["monotonicity"] += expect_step(fam, phi) > expect_step(fam, dominating) + tol * scale
        bad["constant"] += abs(expect_step(fam, F.TestFunction.constant(c)) - c) > tol * (1 + abs(c))
        bad["subadditivity"] += expect_step(fam, phi + psi) > e_phi + e_psi + tol * scale
        bad["homogeneity"] += abs(expect_step(fam, lam * phi) - lam * e_phi) > tol * (1 + lam) * scale
        bad["translation"] += abs(expect_step(fam, phi + c) - (e_phi + c)) > tol * (scale + abs(c))
        bad["conjugate_dominance"] += conjugate_expect_step(fam, phi) > e_phi + tol * scale
        bad["holder"] += holder_gap(fam, phi, psi, 2.0) < -tol * scale * scale
    return {k: int(v) for k, v in bad.items()}
