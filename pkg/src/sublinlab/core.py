"""Finitely supported sub-linear expectations.

A sub-linear expectation is realised as the upper envelope of finitely many
classical expectations, each taken under a distribution with finitely many
atoms.  Every axiom (monotonicity, constant preservation, sub-additivity,
positive homogeneity) then holds exactly and values are computable in closed
form, which is what makes this layer usable as an oracle for the others.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidInput, InvalidParameter
from .functions import ramp

WEIGHT_TOL = 1e-12
MERGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class StepDistribution:
    """Probability distribution with finitely many atoms, in canonical form."""

    points: tuple
    weights: tuple
    _p: np.ndarray = field(init=False, repr=False)
    _w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if p.size == 0 or p.size != w.size:
            raise InvalidInput("a distribution needs at least one atom and one weight per atom")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(w))):
            raise InvalidInput("atoms and weights must be finite")
        if np.any(w <= 0):
            raise InvalidInput("weights must be strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidInput(f"weights sum to {w.sum()!r}, not 1")
        order = np.argsort(p, kind="stable")
        p, w = p[order], w[order]
        # merge atoms closer than MERGE_TOL so that equality is decidable
        pts, wts = [p[0]], [w[0]]
        for x, v in zip(p[1:], w[1:]):
            if x - pts[-1] <= MERGE_TOL:
                wts[-1] += v
            else:
                pts.append(x)
                wts.append(v)
        p, w = np.array(pts), np.array(wts)
        object.__setattr__(self, "points", tuple(p.tolist()))
        object.__setattr__(self, "weights", tuple(w.tolist()))
        object.__setattr__(self, "_p", p)
        object.__setattr__(self, "_w", w)

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[float, float]]) -> "StepDistribution":
        atoms = list(atoms)
        return cls(tuple(a for a, _ in atoms), tuple(b for _, b in atoms))

    @classmethod
    def point_mass(cls, c: float) -> "StepDistribution":
        return cls((float(c),), (1.0,))

    @classmethod
    def rademacher(cls, scale: float) -> "StepDistribution":
        """Symmetric two-point law at ``±scale`` (a point mass if scale is 0)."""
        return cls((-abs(scale), abs(scale)), (0.5, 0.5))

    def expect(self, phi: Callable) -> float:
        return float(np.dot(self._w, phi(self._p)))

    def scaled(self, a: float) -> "StepDistribution":
        return StepDistribution(self._p * a, self._w)

    @property
    def mean(self) -> float:
        return float(np.dot(self._w, self._p))

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self._p)))

    def __eq__(self, other):
        return (isinstance(other, StepDistribution)
                and self.points == other.points and self.weights == other.weights)

    def __hash__(self):
        return hash((self.points, self.weights))


@dataclass(frozen=True)
class DistributionFamily:
    """Nonempty finite set of distributions; the sup over it is the expectation."""

    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise InvalidInput("a distribution family needs at least one member")
        if not all(isinstance(m, StepDistribution) for m in members):
            raise InvalidInput("family members must be StepDistribution instances")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, *members: StepDistribution) -> "DistributionFamily":
        return cls(members)

    @classmethod
    def rademacher_scales(cls, scales: Sequence[float]) -> "DistributionFamily":
        """Family of symmetric two-point laws, one per scale."""
        return cls(tuple(StepDistribution.rademacher(s) for s in scales))

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    @property
    def atoms(self) -> np.ndarray:
        """Union of all member atoms, sorted."""
        return np.unique(np.concatenate([m._p for m in self.members]))

    @property
    def max_abs(self) -> float:
        return max(m.max_abs for m in self.members)

    def scaled(self, a: float) -> "DistributionFamily":
        return DistributionFamily(tuple(m.scaled(a) for m in self.members))

    def classical_values(self, phi: Callable) -> np.ndarray:
        return np.array([m.expect(phi) for m in self.members])


def expect_step(fam: DistributionFamily, phi: Callable) -> float:
    """Upper expectation: the largest classical expectation of ``phi`` over the family."""
    return float(np.max(fam.classical_values(phi)))


def conjugate_expect_step(fam: DistributionFamily, phi: Callable) -> float:
    """Lower (conjugate) expectation, ``-expect_step(fam, -phi)``."""
    return -expect_step(fam, lambda x: -np.asarray(phi(x), dtype=float))


@dataclass(frozen=True)
class CapacityBracket:
    lower: float
    upper: float

    def __post_init__(self):
        if not (-1e-12 <= self.lower <= self.upper + 1e-12 and self.upper <= 1 + 1e-12):
            raise InvalidInput(f"inconsistent capacity bracket ({self.lower}, {self.upper})")

    @property
    def width(self) -> float:
        return self.upper - self.lower


def capacity_bracket(fam: DistributionFamily, threshold: float, ramp_width: float) -> CapacityBracket:
    """Sandwich the upper capacity of ``{X >= threshold}`` between two ramps.

    The lower ramp vanishes up to ``threshold`` and the upper ramp reaches 1 at
    ``threshold``, so they sit below and above the indicator respectively.
    """
    if not ramp_width > 0:
        raise InvalidParameter("ramp_width must be positive")
    lower = expect_step(fam, ramp(threshold, threshold + ramp_width))
    upper = expect_step(fam, ramp(threshold - ramp_width, threshold))
    return CapacityBracket(lower, upper)


def choquet(capacity: Callable[[float], float], support_bounds: tuple[float, float],
            quadrature_step: float) -> float:
    """Choquet integral of a capacity ``t -> V(X >= t)`` by the composite midpoint rule.

    The capacity is taken as 1 below ``lo`` and 0 above ``hi``.  The positive
    and negative half-lines are integrated separately and only interior
    midpoints are sampled, so a jump of the capacity at the origin or at
    either support bound (which point masses produce) costs no accuracy.
    """
    lo, hi = map(float, support_bounds)
    if not lo < hi:
        raise InvalidParameter("support bounds need lo < hi")
    if not quadrature_step > 0:
        raise InvalidParameter("quadrature_step must be positive")

    def integrate(a, b, shift):
        m = max(1, int(np.ceil((b - a) / quadrature_step - 1e-9)))
        h = (b - a) / m
        ts = a + h * (np.arange(m) + 0.5)
        vals = np.array([float(capacity(t)) for t in ts])
        if np.any(np.diff(vals) > 1e-12):
            raise InvalidInput("capacity samples are not nonincreasing in the threshold")
        if np.any(vals < -1e-12) or np.any(vals > 1 + 1e-12):
            raise InvalidInput("capacity samples must lie in [0, 1]")
        return h * float(np.sum(vals - shift))

    total = 0.0
    if hi > 0:
        a = max(lo, 0.0)
        total += integrate(a, hi, 0.0) + a  # capacity is 1 on [0, lo) when lo > 0
    if lo < 0:
        b = min(hi, 0.0)
        total += integrate(lo, b, 1.0) + b  # capacity is 0 on (hi, 0] when hi < 0
    return float(total)


def holder_gap(fam: DistributionFamily, x: Callable, y: Callable, p: float = 2.0) -> float:
    """``rhs - lhs`` of the Hölder inequality for ``|XY|`` with exponents (p, p/(p-1))."""
    if not p > 1:
        raise InvalidParameter("Hölder exponent must exceed 1")
    q = p / (p - 1)
    lhs = expect_step(fam, lambda t: np.abs(x(t) * y(t)))
    rhs = (expect_step(fam, lambda t: np.abs(x(t)) ** p) ** (1 / p)
           * expect_step(fam, lambda t: np.abs(y(t)) ** q) ** (1 / q))
    return rhs - lhs
