import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sublinlab import functions as F
from sublinlab.core import (CapacityBracket, DistributionFamily, StepDistribution,
                            capacity_bracket, choquet, conjugate_expect_step, expect_step,
                            holder_gap)
from sublinlab.errors import InvalidInput, InvalidParameter

R = StepDistribution.rademacher
MIXED = DistributionFamily.of(R(0.5), R(1.0))


# distributions ------------------------------------------------------------------

def test_canonical_form_merges_and_sorts():
    d = StepDistribution((1.0, -1.0, 1.0 + 1e-13), (0.25, 0.5, 0.25))
    assert d.points == (-1.0, 1.0)
    assert d.weights == (0.5, 0.5)
    assert d == R(1.0)
    assert hash(d) == hash(R(1.0))


@pytest.mark.parametrize("points, weights", [
    ((), ()),
    ((0.0, 1.0), (0.5,)),
    ((0.0, 1.0), (0.5, 0.6)),
    ((0.0, 1.0), (1.0, 0.0)),
    ((0.0, math.nan), (0.5, 0.5)),
])
def test_invalid_distributions(points, weights):
    with pytest.raises(InvalidInput):
        StepDistribution(points, weights)


def test_empty_family_rejected():
    with pytest.raises(InvalidInput):
        DistributionFamily(())


# expectations --------------------------------------------------------------------

def test_point_mass_at_zero():
    assert expect_step(DistributionFamily.of(StepDistribution.point_mass(0.0)), F.square(10)) == 0.0


def test_sup_over_members():
    assert expect_step(MIXED, F.square(10)) == pytest.approx(1.0, abs=1e-15)


def test_symmetric_linear():
    assert expect_step(DistributionFamily.of(R(1.0)), F.identity(10)) == 0.0


def test_conjugate_is_inf():
    assert conjugate_expect_step(MIXED, F.square(10)) == pytest.approx(0.25, abs=1e-15)


def test_conjugate_of_point_mass():
    fam = DistributionFamily.of(StepDistribution.point_mass(0.7))
    phi = F.TestFunction.from_points([-1, 0, 2], [3, -1, 5])
    assert conjugate_expect_step(fam, phi) == pytest.approx(phi(0.7))
    assert expect_step(fam, phi) == pytest.approx(phi(0.7))


def test_conjugate_symmetric_linear():
    assert conjugate_expect_step(DistributionFamily.of(R(1.0)), F.identity(10)) == 0.0


# capacities ----------------------------------------------------------------------

def test_capacity_bracket_rademacher():
    b = capacity_bracket(DistributionFamily.of(R(1.0)), 0.5, 0.25)
    assert (b.lower, b.upper) == (0.5, 0.5)


def test_capacity_bracket_point_mass_below():
    b = capacity_bracket(DistributionFamily.of(StepDistribution.point_mass(0.0)), 1.0, 0.5)
    assert (b.lower, b.upper) == (0.0, 0.0)


def test_capacity_bracket_mixed():
    b = capacity_bracket(MIXED, 0.75, 0.1)
    assert (b.lower, b.upper) == pytest.approx((0.5, 0.5))


def test_capacity_bracket_tightens():
    fam = DistributionFamily.of(StepDistribution((0.0, 1.0, 2.0), (0.2, 0.3, 0.5)), R(1.0))
    widths = [capacity_bracket(fam, 1.0, w) for w in (1.0, 0.5, 0.25, 0.125)]
    assert all(a.lower <= b.lower + 1e-15 for a, b in zip(widths, widths[1:]))
    assert all(a.upper >= b.upper - 1e-15 for a, b in zip(widths, widths[1:]))


def test_capacity_bracket_rejects_bad_width():
    with pytest.raises(InvalidParameter):
        capacity_bracket(MIXED, 0.0, 0.0)
    with pytest.raises(InvalidInput):
        CapacityBracket(0.6, 0.4)


# Choquet integral -------------------------------------------------------------------

def test_choquet_constant():
    c, h = 1.3, 0.01
    assert choquet(lambda t: 1.0 if t <= c else 0.0, (0.0, 2.0), h) == pytest.approx(c, abs=h)


def test_choquet_direct_formula():
    assert choquet(lambda t: 0.6 if t <= 1 else 0.0, (0.0, 1.0), 0.01) == pytest.approx(0.6)


def test_choquet_two_point():
    cap = lambda t: 1.0 if t <= 0 else (0.3 if t <= 1 else 0.0)
    assert choquet(cap, (-1.0, 1.0), 0.01) == pytest.approx(0.3, abs=1e-12)


def test_choquet_negative_support():
    # X = -2 surely: the integral is -2
    assert choquet(lambda t: 1.0 if t <= -2 else 0.0, (-3.0, -1.0), 0.001) == pytest.approx(-2, abs=2e-3)


def test_choquet_rejects_increasing_capacity():
    with pytest.raises(InvalidInput):
        choquet(lambda t: min(max(t, 0.0), 1.0), (0.0, 1.0), 0.1)
    with pytest.raises(InvalidParameter):
        choquet(lambda t: 0.0, (1.0, 0.0), 0.1)


# axioms as properties ---------------------------------------------------------------

atom = st.floats(-4, 4, allow_nan=False)


@st.composite
def families(draw):
    members = []
    for _ in range(draw(st.integers(1, 4))):
        pts = draw(st.lists(atom, min_size=1, max_size=4))
        w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=len(pts), max_size=len(pts))))
        members.append(StepDistribution(pts, w / w.sum()))
    return DistributionFamily(tuple(members))


@st.composite
def piecewise_linear(draw):
    xs = sorted(set(draw(st.lists(st.floats(-4, 4), min_size=1, max_size=6))))
    ys = draw(st.lists(st.floats(-5, 5), min_size=len(xs), max_size=len(xs)))
    return F.TestFunction.from_points(xs, ys)


@settings(max_examples=200, deadline=None)
@given(families(), piecewise_linear(), piecewise_linear())
def test_subadditivity(fam, phi, psi):
    assert expect_step(fam, phi + psi) <= expect_step(fam, phi) + expect_step(fam, psi) + 1e-12


@settings(max_examples=200, deadline=None)
@given(families(), piecewise_linear(), st.floats(0, 10))
def test_positive_homogeneity(fam, phi, lam):
    assert expect_step(fam, phi * lam) == pytest.approx(lam * expect_step(fam, phi), abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(families(), piecewise_linear(), st.floats(-5, 5))
def test_translation_and_constants(fam, phi, c):
    assert expect_step(fam, F.TestFunction.constant(c)) == pytest.approx(c, abs=1e-14)
    shifted = phi + F.TestFunction.constant(c)
    assert expect_step(fam, shifted) == pytest.approx(expect_step(fam, phi) + c, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(families(), piecewise_linear(), piecewise_linear())
def test_monotonicity_and_conjugate(fam, phi, bump):
    psi = phi + F.TestFunction.from_points(bump.breakpoints, np.abs(bump.values))
    assert expect_step(fam, phi) <= expect_step(fam, psi) + 1e-12
    assert conjugate_expect_step(fam, phi) <= expect_step(fam, phi) + 1e-12


@settings(max_examples=200, deadline=None)
@given(families(), piecewise_linear(), piecewise_linear())
def test_holder(fam, x, y):
    assert holder_gap(fam, x, y) >= -1e-10
