"""Explicit monotone finite differences for the G-heat equation.

Expectations under a G-normal law are read off the solution of

    d_t u = G(d_xx u),   u(0, x) = phi(x),   G(a) = (s_hi * a^+ - s_lo * a^-) / 2,

at ``x = 0``.  The solver marches the equivalent backward equation from
terminal data with the scheme ``V <- V + dt * G(D2 V)``, which is monotone as
long as ``dt <= dx**2 / s_hi``; boundary nodes use constant extension.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dp import Grid, ValueFunction
from .errors import DomainOverflow, InvalidParameter
from .functions import TestFunction, support_of

TAIL_SIGMAS = 6.0

THIRD_MOMENT_LOW = 3 * (2 - math.sqrt(2)) / (4 * math.sqrt(math.pi))
THIRD_MOMENT_HIGH = 3 * (2 + math.sqrt(2)) / (4 * math.sqrt(math.pi))


@dataclass(frozen=True)
class GCoefficients:
    """Lower and upper variance of a G-normal law."""

    sigma_lower_sq: float
    sigma_upper_sq: float

    def __post_init__(self):
        lo, hi = float(self.sigma_lower_sq), float(self.sigma_upper_sq)
        if not (0 <= lo <= hi and 0 < hi < math.inf):
            raise InvalidParameter(f"need 0 <= sigma_lower_sq <= sigma_upper_sq < inf, got ({lo}, {hi})")
        object.__setattr__(self, "sigma_lower_sq", lo)
        object.__setattr__(self, "sigma_upper_sq", hi)

    @classmethod
    def normalized(cls, r: float) -> "GCoefficients":
        """The ``[r, 1]`` normalisation."""
        return cls(r, 1.0)

    @property
    def sigma_upper(self) -> float:
        return math.sqrt(self.sigma_upper_sq)

    @property
    def is_classical(self) -> bool:
        return self.sigma_lower_sq == self.sigma_upper_sq


def g_operator(alpha, g: GCoefficients):
    """``G(alpha)``; accepts scalars or arrays."""
    a = np.asarray(alpha, dtype=float)
    out = 0.5 * (g.sigma_upper_sq * np.maximum(a, 0.0) - g.sigma_lower_sq * np.maximum(-a, 0.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class HeatSolveConfig:
    """Discretisation settings.

    If ``grid`` is None a symmetric grid with spacing ``dx`` is built to cover
    the support of the test function widened by six standard deviations.
    """

    dx: float = 0.02
    cfl_safety: float = 0.5
    grid: Grid | None = None

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise InvalidParameter("cfl_safety must lie in (0, 1]")
        if self.grid is None and not self.dx > 0:
            raise InvalidParameter("dx must be positive")

    @property
    def spacing(self) -> float:
        return self.grid.dx if self.grid is not None else self.dx


def required_span(phi, horizon: float, g: GCoefficients) -> tuple[float, float]:
    a, b = support_of(phi)
    m = TAIL_SIGMAS * g.sigma_upper * math.sqrt(max(horizon, 0.0))
    return a - m, b + m


def solve_grid(phi, horizon: float, g: GCoefficients, cfg: HeatSolveConfig) -> Grid:
    a, b = required_span(phi, horizon, g)
    if cfg.grid is not None:
        if not cfg.grid.covers(a, b):
            raise DomainOverflow(
                f"grid [{cfg.grid.lo:g}, {cfg.grid.hi:g}] narrower than the required span "
                f"[{a:g}, {b:g}]")
        return cfg.grid
    return Grid.lattice(cfg.dx, max(abs(a), abs(b)))


def time_steps(horizon: float, g: GCoefficients, dx: float, cfl_safety: float) -> int:
    """Number of explicit steps: the smallest count with ``dt <= cfl * dx^2 / s_hi``."""
    if horizon <= 0:
        return 0
    dt_max = cfl_safety * dx * dx / g.sigma_upper_sq
    return max(1, int(math.ceil(horizon / dt_max - 1e-9)))


def march(values: np.ndarray, horizon: float, g: GCoefficients, dx: float,
          cfl_safety: float = 0.5) -> np.ndarray:
    """Advance grid data (space along the last axis) through ``horizon``."""
    V = np.array(values, dtype=float, copy=True)
    m = time_steps(horizon, g, dx, cfl_safety)
    if m == 0:
        return V
    dt = horizon / m
    c = dt / (dx * dx)
    hi, lo = 0.5 * g.sigma_upper_sq * c, 0.5 * g.sigma_lower_sq * c
    D = np.empty_like(V)
    for _ in range(m):
        D[..., 1:-1] = V[..., 2:] - 2.0 * V[..., 1:-1] + V[..., :-2]
        D[..., 0] = V[..., 1] - V[..., 0]
        D[..., -1] = V[..., -2] - V[..., -1]
        V += np.where(D > 0, hi * D, lo * D)
    return V


def solve_g_heat(phi: Callable, horizon: float, g: GCoefficients,
                 cfg: HeatSolveConfig = HeatSolveConfig()) -> ValueFunction:
    """Return ``x -> E[phi(x + sqrt(horizon) * xi)]`` with ``xi`` G-normal under ``g``."""
    if horizon < 0:
        raise InvalidParameter("horizon must be nonnegative")
    grid = solve_grid(phi, horizon, g, cfg)
    V0 = np.asarray(phi(grid.points), dtype=float)
    return ValueFunction(grid, march(V0, horizon, g, grid.dx, cfg.cfl_safety))


def g_normal_expect(phi: Callable, rho: float, g: GCoefficients,
                    cfg: HeatSolveConfig = HeatSolveConfig()) -> float:
    """``E[phi(sqrt(rho) * xi)]`` for ``xi ~ N(0, [s_lo, s_hi])``."""
    if rho < 0:
        raise InvalidParameter("rho must be nonnegative")
    if rho == 0:
        return float(phi(0.0))
    return float(solve_g_heat(phi, rho, g, cfg)(0.0))


def gbm_skeleton_expect(phi: Callable, times: Sequence[float], g: GCoefficients,
                        cfg: HeatSolveConfig = HeatSolveConfig(), support: float | None = None) -> float:
    """``E[phi(W_{t_1}, ..., W_{t_d})]`` for a G-Brownian motion ``W``.

    The conditional expectation given the first ``j`` coordinates is computed on
    a tensor grid by marching the last coordinate through ``t_{j+1} - t_j``
    and restricting to the diagonal ``x_{j+1} = x_j``.  ``support`` bounds the
    region outside of which ``phi`` is constant in every coordinate.
    """
    t = [float(x) for x in times]
    if not t or t[0] <= 0 or any(b <= a for a, b in zip(t, t[1:])):
        raise InvalidParameter("times must be positive and strictly increasing")
    if len(t) > 4:
        raise InvalidParameter("at most four skeleton times are supported")
    if support is None:
        support = max(abs(v) for v in support_of(phi)) or 0.0
    gaps = [t[0]] + [b - a for a, b in zip(t, t[1:])]
    reach = support + TAIL_SIGMAS * g.sigma_upper * sum(math.sqrt(d) for d in gaps)
    grid = cfg.grid or Grid.lattice(cfg.dx, reach)
    if not grid.covers(-reach, reach):
        raise DomainOverflow(f"grid narrower than ±{reach:g}")
    x = grid.points
    n, d = grid.n_points, len(t)
    mesh = np.meshgrid(*([x] * d), indexing="ij", sparse=True)
    psi = np.asarray(phi(*mesh), dtype=float)
    psi = np.broadcast_to(psi, (n,) * d).copy()
    for j in range(d - 1, 0, -1):
        psi = march(psi, t[j] - t[j - 1], g, grid.dx, cfg.cfl_safety)
        psi = np.diagonal(psi, axis1=-2, axis2=-1).copy()
    psi = march(psi, t[0], g, grid.dx, cfg.cfl_safety)
    return float(np.interp(0.0, x, psi))


def g_third_moment_bounds(tau: float) -> tuple[float, float]:
    """Closed-form bracket of the upper third moment of ``N(0, [tau, 1])``."""
    if not 0 < tau < 1:
        raise InvalidParameter("tau must lie in (0, 1)")
    return THIRD_MOMENT_LOW * (1 - tau), THIRD_MOMENT_HIGH * (1 - tau)


def as_test_function(v: ValueFunction, lo: float | None = None, hi: float | None = None) -> TestFunction:
    """Piecewise-linear view of a solved slice, optionally truncated to ``[lo, hi]``."""
    x, y = v.grid.points, v.values
    keep = np.ones_like(x, dtype=bool)
    if lo is not None:
        keep &= x >= lo - 1e-12
    if hi is not None:
        keep &= x <= hi + 1e-12
    return TestFunction(x[keep], y[keep])
