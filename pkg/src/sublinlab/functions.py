"""Bounded test functions.

Two families are provided.  :class:`TestFunction` is the exact class:
continuous, piecewise linear, finitely many breakpoints and constant tails.
:class:`Clipped` wraps a smooth numpy function ``f`` as ``f(clip(x, -L, L))``
so that moment experiments (``x**2``, ``x**3``, ``|x|**p``) stay bounded
while remaining exact inside the clip window.

Both are vectorised callables and expose ``support``, the interval outside
of which they are constant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInput, InvalidParameter


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Continuous piecewise-linear function with constant extension."""

    __test__ = False  # keep pytest from collecting this class

    breakpoints: tuple
    values: tuple
    _x: np.ndarray = field(init=False, repr=False)
    _y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.breakpoints, dtype=float).ravel()
        y = np.asarray(self.values, dtype=float).ravel()
        if x.size == 0 or x.size != y.size:
            raise InvalidInput("breakpoints and values must be nonempty and of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInput("breakpoints and values must be finite")
        if np.any(np.diff(x) <= 0):
            raise InvalidInput("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", tuple(x.tolist()))
        object.__setattr__(self, "values", tuple(y.tolist()))
        object.__setattr__(self, "_x", x)
        object.__setattr__(self, "_y", y)

    def __call__(self, x):
        out = np.interp(x, self._x, self._y)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def support(self) -> tuple[float, float]:
        return float(self._x[0]), float(self._x[-1])

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self._y)))

    @property
    def lipschitz(self) -> float:
        if self._x.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self._y) / np.diff(self._x))))

    # Arithmetic stays inside the class: the sum of two piecewise-linear
    # functions is piecewise linear on the union of breakpoints.
    def __add__(self, other):
        if isinstance(other, TestFunction):
            x = np.union1d(self._x, other._x)
            return TestFunction(x, self(x) + other(x))
        return TestFunction(self._x, self._y + float(other))

    __radd__ = __add__

    def __neg__(self):
        return TestFunction(self._x, -self._y)

    def __sub__(self, other):
        return self + (-other if isinstance(other, TestFunction) else -float(other))

    def __mul__(self, scalar):
        return TestFunction(self._x, self._y * float(scalar))

    __rmul__ = __mul__

    def scaled_argument(self, lam: float) -> "TestFunction":
        """Return ``x -> self(lam * x)`` for ``lam > 0``."""
        if lam <= 0:
            raise InvalidParameter("argument scale must be positive")
        return TestFunction(self._x / lam, self._y)

    @classmethod
    def from_points(cls, xs: Sequence[float], ys: Sequence[float]) -> "TestFunction":
        """Interpolant through (xs, ys); duplicate xs must carry equal ys."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        order = np.argsort(xs, kind="stable")
        xs, ys = xs[order], ys[order]
        keep = np.concatenate([[True], np.diff(xs) > 0])
        return cls(xs[keep], ys[keep])

    @classmethod
    def sampled(cls, f: Callable, lo: float, hi: float, n: int = 801) -> "TestFunction":
        xs = np.linspace(lo, hi, n)
        return cls(xs, np.asarray(f(xs), dtype=float))

    @classmethod
    def constant(cls, c: float) -> "TestFunction":
        return cls((0.0,), (float(c),))


def ramp(start: float, end: float) -> TestFunction:
    """0 left of ``start``, 1 right of ``end``, linear in between."""
    if not end > start:
        raise InvalidParameter("ramp requires end > start")
    return TestFunction((start, end), (0.0, 1.0))


class Clipped:
    """``f(clip(x, -level, level))``: bounded and exact on ``[-level, level]``."""

    def __init__(self, f: Callable, level: float, name: str = "clipped"):
        if not level > 0:
            raise InvalidParameter("clip level must be positive")
        self.f = f
        self.level = float(level)
        self.name = name

    def __call__(self, x):
        out = self.f(np.clip(x, -self.level, self.level))
        return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)

    @property
    def support(self) -> tuple[float, float]:
        return -self.level, self.level

    @property
    def sup_norm(self) -> float:
        xs = np.linspace(-self.level, self.level, 2001)
        return float(np.max(np.abs(self(xs))))

    def __repr__(self):
        return f"Clipped({self.name}, level={self.level:g})"


def identity(level: float) -> Clipped:
    return Clipped(lambda x: x, level, "identity")


def positive_part(level: float) -> Clipped:
    return Clipped(lambda x: np.maximum(x, 0.0), level, "positive_part")


def square(level: float) -> Clipped:
    return Clipped(lambda x: x * x, level, "square")


def cube(level: float) -> Clipped:
    return Clipped(lambda x: x * x * x, level, "cube")


def abs_power(p: float, level: float) -> Clipped:
    return Clipped(lambda x: np.abs(x) ** p, level, f"abs_power_{p:g}")


class Product:
    """``(x_1, ..., x_d) -> f_1(x_1) * ... * f_d(x_d)`` for one-argument test functions."""

    def __init__(self, *factors):
        if not factors:
            raise InvalidParameter("a product needs at least one factor")
        self.factors = factors

    def __call__(self, *xs):
        if len(xs) != len(self.factors):
            raise InvalidInput(f"expected {len(self.factors)} arguments, got {len(xs)}")
        out = 1.0
        for f, x in zip(self.factors, xs):
            out = out * f(x)
        return out

    @property
    def support(self) -> tuple[float, float]:
        r = max(max(abs(a), abs(b)) for a, b in (support_of(f) for f in self.factors))
        return -r, r

    def __repr__(self):
        return "Product(" + ", ".join(describe(f) for f in self.factors) + ")"


def support_of(phi) -> tuple[float, float]:
    """Interval outside of which ``phi`` is constant; (0, 0) if unknown."""
    return tuple(getattr(phi, "support", (0.0, 0.0)))


def describe(phi) -> str:
    if isinstance(phi, (Clipped, Product)):
        return repr(phi)
    if isinstance(phi, TestFunction):
        return f"TestFunction({len(phi.breakpoints)} breakpoints)"
    return getattr(phi, "__name__", type(phi).__name__)


NAMED = {
    "identity": identity,
    "positive_part": positive_part,
    "square": square,
    "cube": cube,
    "abs": lambda level: abs_power(1.0, level),
}


def from_descriptor(desc: dict):
    """Build a test function from a config record.

    ``{"fn": "positive_part", "clip": 8}``, ``{"fn": "abs_power", "p": 3,
    "clip": 8}``, ``{"fn": "piecewise", "breakpoints": [...], "values": [...]}``
    ``{"fn": "ramp", "start": a, "end": b}`` or ``{"fn": "product",
    "factors": [...]}`` for multi-argument functions of a path skeleton.
    """
    if not isinstance(desc, dict) or "fn" not in desc:
        raise InvalidInput("test function descriptor needs an 'fn' field")
    name = desc["fn"]
    if name == "product":
        return Product(*(from_descriptor(f) for f in desc["factors"]))
    if name == "piecewise":
        return TestFunction(desc["breakpoints"], desc["values"])
    if name == "ramp":
        return ramp(float(desc["start"]), float(desc["end"]))
    if name == "constant":
        return TestFunction.constant(float(desc["value"]))
    level = float(desc.get("clip", 8.0))
    if name == "abs_power":
        return abs_power(float(desc["p"]), level)
    if name in NAMED:
        return NAMED[name](level)
    raise InvalidInput(f"unknown test function {name!r}")
