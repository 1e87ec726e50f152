"""Backward induction for nested sub-linear expectations.

An array of steps is described by a :class:`KernelArray`: at step ``k`` and
current partial sum ``s`` the adversary may pick any member of the family
``kernel(k, s)``.  The value of a path functional is computed backwards,
taking at every node the largest classical expectation of the next value.

Two evaluators are provided.  :func:`dp_path_expect` works on a uniform grid
with multilinear interpolation of the next value function; it is the
production path.  :func:`tree_expect_exact` walks the outcome tree with
memoisation on the exact state and never touches a grid; it is the oracle.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DistributionFamily, StepDistribution
from .errors import DomainOverflow, InvalidInput, InvalidParameter, TooLarge

REACH_TOL = 1e-9

TREE_MAX_STEPS = 8
TREE_MAX_ATOMS = 4
TREE_MAX_MEMBERS = 4
MAX_SKELETON_TIMES = 4


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    n_points: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidParameter("grid needs lo < hi")
        if int(self.n_points) < 2:
            raise InvalidParameter("grid needs at least two points")
        object.__setattr__(self, "n_points", int(self.n_points))
        dx = (self.hi - self.lo) / (self.n_points - 1)
        object.__setattr__(self, "points", self.lo + dx * np.arange(self.n_points))

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / (self.n_points - 1)

    @classmethod
    def lattice(cls, dx: float, reach: float) -> "Grid":
        """Symmetric grid with spacing ``dx`` that has 0 as a node and covers ``±reach``."""
        if not dx > 0:
            raise InvalidParameter("dx must be positive")
        k = max(1, int(math.ceil(reach / dx - 1e-9)))
        return cls(-k * dx, k * dx, 2 * k + 1)

    def covers(self, a: float, b: float) -> bool:
        return self.lo <= a + REACH_TOL and self.hi >= b - REACH_TOL


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """Grid values with linear interpolation and constant extension."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise InvalidInput("values must have one entry per grid point")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("value function must be finite")
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        out = np.interp(x, self.grid.points, self.values)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def support(self) -> tuple[float, float]:
        return self.grid.lo, self.grid.hi


class KernelArray:
    """Step-by-step specification of an array of increments.

    ``kernel(k, s)`` returns the family available at step ``k`` (1-based)
    when the partial sum before the step is ``s``.  ``c_max`` bounds every
    atom of every family; for constant kernels it is computed.
    """

    def __init__(self, n_steps: int, kernel: Callable[[int, float], DistributionFamily],
                 c_max: float | None = None, state_dependent: bool = False,
                 label: str = "", meta: dict | None = None):
        if int(n_steps) < 1:
            raise InvalidParameter("n_steps must be at least 1")
        self.n_steps = int(n_steps)
        self.kernel = kernel
        self.state_dependent = bool(state_dependent)
        self.label = label
        self.meta = dict(meta or {})
        if c_max is None:
            if state_dependent:
                raise InvalidParameter("state-dependent kernels must declare c_max")
            c_max = max(self.family(k, 0.0).max_abs for k in range(1, self.n_steps + 1))
        self.c_max = float(c_max)
        self._validate()

    def _validate(self):
        states = [0.0]
        if self.state_dependent:
            reach = self.n_steps * self.c_max
            states = np.linspace(-reach, reach, 9).tolist()
        for k in range(1, self.n_steps + 1):
            for s in states:
                fam = self.family(k, s)
                if not isinstance(fam, DistributionFamily):
                    raise InvalidInput(f"kernel({k}, {s}) did not return a DistributionFamily")
                if fam.max_abs > self.c_max + REACH_TOL:
                    raise InvalidInput(f"kernel({k}, {s}) has atoms beyond c_max={self.c_max}")

    @classmethod
    def from_families(cls, families: Sequence[DistributionFamily], label: str = "",
                      meta: dict | None = None) -> "KernelArray":
        fams = tuple(families)
        return cls(len(fams), lambda k, s: fams[k - 1], label=label, meta=meta)

    @classmethod
    def iid(cls, family: DistributionFamily, n: int, label: str = "") -> "KernelArray":
        return cls(n, lambda k, s: family, label=label)

    def family(self, k: int, s: float) -> DistributionFamily:
        if not 1 <= k <= self.n_steps:
            raise InvalidParameter(f"step index {k} outside 1..{self.n_steps}")
        return self.kernel(k, s)

    @property
    def reach(self) -> float:
        return self.n_steps * self.c_max

    def __repr__(self):
        kind = "state-dependent" if self.state_dependent else "constant"
        return f"KernelArray(n={self.n_steps}, {kind}, c_max={self.c_max:g}{', ' + self.label if self.label else ''})"


# Path functionals ---------------------------------------------------------

# kind -> (aux update from (aux, sum), leaf statistic from (sum, aux)).
# On the grid the aux coordinate is first made consistent with the sum by
# the same update, so nodes with e.g. max < sum act as if max == sum.
_EXTREMA = {
    "running_max": (lambda a, s: np.maximum(a, s), lambda s, a: a),
    "running_max_abs": (lambda a, s: np.maximum(a, np.abs(s)), lambda s, a: a),
    "suffix_max": (lambda a, s: np.minimum(a, s), lambda s, a: s - a),
}


@dataclass(frozen=True, eq=False)
class PathFunctional:
    """A functional of the interpolated partial-sum path with a Markov augmentation.

    Kinds:

    * ``terminal``: ``phi(S_n)``
    * ``running_max``: ``phi(max(0, S_1, ..., S_n))``
    * ``running_max_abs``: ``phi(max_k |S_k|)``
    * ``suffix_max``: ``phi(max_k (S_n - S_k))`` with ``S_0 = 0``
    * ``skeleton``: ``phi(W(t_1), ..., W(t_d))`` for the path interpolated
      linearly between the points ``(k/n, S_k)``.
    """

    kind: str
    phi: Callable
    times: tuple = ()

    def __post_init__(self):
        if self.kind not in ("terminal", "skeleton", *_EXTREMA):
            raise InvalidParameter(f"unknown functional kind {self.kind!r}")
        if self.kind == "skeleton":
            t = tuple(float(x) for x in self.times)
            if not t:
                raise InvalidParameter("skeleton functional needs at least one time")
            if len(t) > MAX_SKELETON_TIMES:
                raise TooLarge(f"skeleton functionals are capped at {MAX_SKELETON_TIMES} times")
            if t[0] <= 0 or t[-1] > 1 or any(b <= a for a, b in zip(t, t[1:])):
                raise InvalidParameter("skeleton times must be strictly increasing in (0, 1]")
            object.__setattr__(self, "times", t)

    @classmethod
    def terminal(cls, phi):
        return cls("terminal", phi)

    @classmethod
    def running_max(cls, phi):
        return cls("running_max", phi)

    @classmethod
    def running_max_abs(cls, phi):
        return cls("running_max_abs", phi)

    @classmethod
    def suffix_max(cls, phi):
        return cls("suffix_max", phi)

    @classmethod
    def skeleton(cls, times, phi):
        return cls("skeleton", phi, tuple(times))

    # step at which each skeleton time is crossed, and its fraction within the step
    def _crossings(self, n: int) -> list[tuple[int, float]]:
        out = []
        for t in self.times:
            k = max(1, int(math.ceil(n * t - 1e-9)))
            out.append((k, n * t - (k - 1)))
        return out

    # scalar semantics, used by the exact tree
    def initial_state(self) -> tuple:
        return (0.0,) if self.kind in ("terminal", "skeleton") else (0.0, 0.0)

    def advance(self, state: tuple, k: int, z: float, n: int) -> tuple:
        s = state[0]
        s_new = s + z
        if self.kind == "terminal":
            return (s_new,)
        if self.kind == "skeleton":
            recs = tuple(s + frac * z for kk, frac in self._crossings(n) if kk == k)
            return (s_new,) + state[1:] + recs
        update = _EXTREMA[self.kind][0]
        return (s_new, float(update(state[1], s_new)))

    def leaf(self, state: tuple) -> float:
        if self.kind == "terminal":
            return float(self.phi(state[0]))
        if self.kind == "skeleton":
            return float(self.phi(*state[1:]))
        return float(self.phi(_EXTREMA[self.kind][1](state[0], state[1])))


# Grid evaluation -----------------------------------------------------------

def _interp_nd(U: np.ndarray, grid: Grid, queries: Sequence) -> np.ndarray:
    """Multilinear interpolation of ``U`` (one grid per axis), constant outside."""
    idx, frac = [], []
    for q in queries:
        t = (np.asarray(q, dtype=float) - grid.lo) / grid.dx
        i = np.clip(np.floor(t), 0, grid.n_points - 2).astype(np.intp)
        idx.append(i)
        frac.append(np.clip(t - i, 0.0, 1.0))
    out = 0.0
    for corner in itertools.product((0, 1), repeat=len(queries)):
        w = 1.0
        ii = []
        for c, i, f in zip(corner, idx, frac):
            ii.append(i + c)
            w = w * (f if c else 1.0 - f)
        out = out + w * U[tuple(ii)]
    return out


def _check_reach(arr: KernelArray, grid: Grid):
    if not grid.covers(-arr.reach, arr.reach):
        raise DomainOverflow(
            f"grid [{grid.lo:g}, {grid.hi:g}] does not contain the reachable range "
            f"±{arr.reach:g} (n_steps={arr.n_steps}, c_max={arr.c_max:g})")


class _GridPlan:
    """Axis bookkeeping for the augmented state of a functional on a grid."""

    def __init__(self, functional: PathFunctional, n: int, grid: Grid):
        self.f = functional
        self.n = n
        self.grid = grid
        self.x = grid.points
        if functional.kind == "skeleton":
            cross = functional._crossings(n)
            # a final time equal to 1 is read off the terminal sum directly
            k_last, frac_last = cross[-1]
            self.last_is_sum = k_last == n and abs(frac_last - 1.0) < 1e-12
            stored = cross[:-1] if self.last_is_sum else cross
            self.stored = stored
            self.records_by = [sum(1 for kk, _ in stored if kk <= k) for k in range(n + 1)]

    def n_axes(self, k: int) -> int:
        if self.f.kind == "terminal":
            return 1
        if self.f.kind == "skeleton":
            return 1 + self.records_by[k]
        return 2

    def _mesh(self, n_axes: int):
        shape = [1] * n_axes
        out = []
        for ax in range(n_axes):
            sh = list(shape)
            sh[ax] = self.grid.n_points
            out.append(self.x.reshape(sh))
        return out

    def terminal_values(self) -> np.ndarray:
        kind = self.f.kind
        if kind == "terminal":
            return np.asarray(self.f.phi(self.x), dtype=float)
        if kind == "skeleton":
            mesh = self._mesh(self.n_axes(self.n))
            args = mesh[1:] + ([mesh[0]] if self.last_is_sum else [])
            args = np.broadcast_arrays(*args, mesh[0])[:-1]
            return np.asarray(self.f.phi(*args), dtype=float)
        update, stat = _EXTREMA[kind]
        s, a = np.broadcast_arrays(*self._mesh(2))
        return np.asarray(self.f.phi(stat(s, update(a, s))), dtype=float)

    def queries(self, k: int, rows: np.ndarray, z: float) -> list:
        """Coordinates in the step-k value array reached from step-(k-1) nodes.

        ``rows`` selects the partial-sum nodes; the output has the shape of the
        step-(k-1) array restricted to those rows.
        """
        kind = self.f.kind
        m = self.n_axes(k - 1)
        mesh = self._mesh(m)
        s = self.x[rows].reshape([-1] + [1] * (m - 1))
        if kind == "terminal":
            return [s + z]
        if kind == "skeleton":
            new = [s + frac * z for kk, frac in self.stored if kk == k]
            return [s + z] + mesh[1:] + new
        update, _ = _EXTREMA[kind]
        return [s + z, update(update(mesh[1], s), s + z)]


def dp_path_expect(arr: KernelArray, functional: PathFunctional, grid: Grid) -> float:
    """Upper expectation of a path functional by backward induction on ``grid``."""
    _check_reach(arr, grid)
    n = arr.n_steps
    plan = _GridPlan(functional, n, grid)
    V = plan.terminal_values()
    all_rows = np.arange(grid.n_points)
    for k in range(n, 0, -1):
        shape = (grid.n_points,) + (grid.n_points,) * (plan.n_axes(k - 1) - 1)
        V_prev = np.empty(shape)
        if arr.state_dependent:
            groups: dict = {}
            for i, s in enumerate(grid.points):
                groups.setdefault(arr.family(k, float(s)), []).append(i)
            blocks = [(fam, np.array(rows)) for fam, rows in groups.items()]
        else:
            blocks = [(arr.family(k, 0.0), all_rows)]
        for fam, rows in blocks:
            best = None
            for member in fam:
                val = 0.0
                for z, w in zip(member.points, member.weights):
                    val = val + w * _interp_nd(V, grid, plan.queries(k, rows, z))
                # ties resolve to the first-listed member
                best = val if best is None else np.maximum(best, val)
            V_prev[rows] = best
        V = V_prev
    return float(_interp_nd(V, grid, [np.array(0.0)] * plan.n_axes(0)))


def dp_sum_expect(arr: KernelArray, phi: Callable, grid: Grid) -> float:
    """Upper expectation of ``phi(Z_1 + ... + Z_n)``."""
    return dp_path_expect(arr, PathFunctional.terminal(phi), grid)


def dp_value_function(arr: KernelArray, phi: Callable, grid: Grid) -> ValueFunction:
    """Time-0 value function ``x -> E[phi(x + Z_1 + ... + Z_n)]`` on ``grid``.

    Values near the grid edges see the constant extension, so only nodes
    within ``grid`` shrunk by the reach are exact.
    """
    n = arr.n_steps
    x = grid.points
    V = np.asarray(phi(x), dtype=float)
    for k in range(n, 0, -1):
        if arr.state_dependent:
            raise InvalidParameter("value functions are only offered for constant kernels")
        fam = arr.family(k, 0.0)
        V = np.max([sum(w * np.interp(x + z, x, V) for z, w in zip(m.points, m.weights))
                    for m in fam], axis=0)
    return ValueFunction(grid, V)


def auto_grid(arr: KernelArray, max_points: int = 8001) -> Grid:
    """Grid containing the reachable range, on the atom lattice when one exists.

    Tries spacings ``u / m`` where ``u`` is the smallest nonzero atom
    magnitude in the first step; falls back to a uniform grid of
    ``max_points`` nodes.
    """
    reach = arr.reach
    if reach == 0:
        return Grid.lattice(1.0, 1.0)
    atoms = np.unique(np.concatenate([arr.family(k, 0.0).atoms for k in range(1, arr.n_steps + 1)]))
    nz = np.abs(atoms[np.abs(atoms) > 1e-12])
    if nz.size:
        u = float(nz.min())
        for m in range(1, 9):
            dx = u / m
            r = atoms / dx
            if np.all(np.abs(r - np.round(r)) < 1e-9) and 2 * reach / dx + 1 <= max_points:
                return Grid.lattice(dx, reach)
    return Grid.lattice(2 * reach / (max_points - 1), reach)


# Exact tree -----------------------------------------------------------------

def _key(k, state):
    return (k,) + tuple(round(v, 12) + 0.0 for v in state)


def tree_expectation(arr: KernelArray, init: tuple,
                     advance: Callable[[tuple, int, float, DistributionFamily], tuple],
                     leaf: Callable[[tuple], float], combine: str = "expect",
                     caps: bool = True) -> float:
    """Generic exact recursion over the outcome tree of ``arr``.

    ``combine='expect'`` takes the largest member expectation at each node;
    ``combine='pathmax'`` takes the maximum over all reachable children,
    giving the worst path.  Identical states are evaluated once.
    """
    n = arr.n_steps
    if caps and n > TREE_MAX_STEPS:
        raise TooLarge(f"exact tree is capped at {TREE_MAX_STEPS} steps (got {n})")
    memo: dict = {}

    def value(k, state):
        if k == n:
            return leaf(state)
        key = _key(k, state)
        hit = memo.get(key)
        if hit is not None:
            return hit
        fam = arr.family(k + 1, state[0])
        if caps and (len(fam) > TREE_MAX_MEMBERS
                     or any(len(m.points) > TREE_MAX_ATOMS for m in fam)):
            raise TooLarge("family exceeds the exact-tree caps "
                           f"({TREE_MAX_MEMBERS} members, {TREE_MAX_ATOMS} atoms)")
        child = {z: value(k + 1, advance(state, k + 1, z, fam)) for z in fam.atoms.tolist()}
        if combine == "pathmax":
            out = max(child.values())
        else:
            out = max(sum(w * child[z] for z, w in zip(m.points, m.weights)) for m in fam)
        memo[key] = out
        return out

    return float(value(0, tuple(init)))


def tree_expect_exact(arr: KernelArray, functional: PathFunctional) -> float:
    """Exact upper expectation of a path functional, without any grid."""
    n = arr.n_steps
    return tree_expectation(arr, functional.initial_state(),
                            lambda st, k, z, fam: functional.advance(st, k, z, n),
                            functional.leaf)


def reachable_states(arr: KernelArray, max_states: int = 20000) -> list[np.ndarray]:
    """Partial sums reachable before each step (index ``k-1`` for step ``k``)."""
    states = np.array([0.0])
    out = []
    for k in range(1, arr.n_steps + 1):
        out.append(states)
        nxt = set()
        for s in states.tolist():
            for z in arr.family(k, s).atoms.tolist():
                nxt.add(round(s + z, 12) + 0.0)
        if len(nxt) > max_states:
            raise TooLarge(f"more than {max_states} reachable states at step {k}")
        states = np.array(sorted(nxt))
    return out


# Conditional statistics -------------------------------------------------------

@dataclass(frozen=True)
class StepStats:
    mean_upper: float
    mean_lower: float
    var_upper: float
    var_lower: float
    family: DistributionFamily = field(repr=False)

    def lindeberg(self, eps: float) -> float:
        """Largest member expectation of ``(Z**2 - eps)^+``."""
        return float(max(m.expect(lambda z: np.maximum(z * z - eps, 0.0)) for m in self.family))

    def abs_moment_upper(self, p: float) -> float:
        return float(max(m.expect(lambda z: np.abs(z) ** p) for m in self.family))


def family_stats(fam: DistributionFamily) -> StepStats:
    means = fam.classical_values(lambda z: z)
    seconds = fam.classical_values(lambda z: z * z)
    return StepStats(float(means.max()), float(means.min()),
                     float(seconds.max()), float(seconds.min()), fam)


def conditional_step_stats(arr: KernelArray, k: int, s: float) -> StepStats:
    """Conditional upper/lower mean and second moment of step ``k`` at state ``s``."""
    return family_stats(arr.family(k, s))


def rademacher_iid(scales: Sequence[float], n: int) -> KernelArray:
    """``n`` steps, each choosing among ``±scale/sqrt(n)`` for the given scales."""
    r = 1.0 / math.sqrt(n)
    fam = DistributionFamily(tuple(StepDistribution.rademacher(s * r) for s in scales))
    return KernelArray.iid(fam, n, label=f"rademacher{tuple(scales)}/sqrt(n)")
