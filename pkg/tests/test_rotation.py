import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusrot.core import LiftMap, translation
from torusrot.dsl import builtin_family
from torusrot.rotation import (
    MIXED, RATIONAL, TOTALLY_IRRATIONAL, bmm_estimate, bmm_growth, classify_rotation_vector,
    convex_hull, deviation, directional_deviation, find_relation, hull_contains, is_flat,
    rational_approximant, rotation_set_estimate, rotation_vector_estimate,
)
from oracles import A_SKEW, PHI, skew_bmm_oracle, skew_vertical_deviation

SQRT2M1 = math.sqrt(2) - 1


def skew():
    return builtin_family("skew", PHI, 0.0, A_SKEW).lift()


def without_power(F):
    return LiftMap(F.forward, F.inverse, name=F.name)


def test_rigid_rotation_set_is_a_point():
    F = translation(0.3, -0.7)
    rep = rotation_set_estimate(F, 16, 1000)
    assert rep.spread == 0.0
    assert rep.mean == pytest.approx((0.3, -0.7), abs=1e-12)
    assert rep.bmm_constant <= 1e-9
    assert rep.is_pseudo_rotation


def test_rigid_power_and_composition_agree():
    F = translation(PHI, SQRT2M1)
    a = rotation_set_estimate(F, 8, 500, rng=np.random.default_rng(4))
    b = rotation_set_estimate(without_power(F), 8, 500, rng=np.random.default_rng(4))
    assert np.allclose(a.estimates, b.estimates, atol=1e-12)


def test_skew_deviation_matches_direct_sum():
    F = skew()
    z = (0.37, 0.11)
    series = deviation(F, (PHI, 0.0), (-30, 30), z)
    for n in (-30, -7, -1, 1, 5, 30):
        d = series.at(n)
        assert abs(d[0]) < 1e-12
        assert d[1] == pytest.approx(skew_vertical_deviation(z[0], n), abs=1e-12)


def test_directional_deviation_projects():
    F = skew()
    z = (0.2, 0.4)
    full = deviation(F, (PHI, 0.0), (1, 19), z)
    proj = directional_deviation(F, (PHI, 0.0), (0, 1), (1, 19), z)
    assert np.allclose(proj.dv, full.values[:, 1])


def test_bmm_matches_oracle():
    F = skew()
    samples = np.random.default_rng(7).uniform(0, 1, (6, 2))
    c, (n, z) = bmm_estimate(F, (PHI, 0.0), None, 2000, samples=samples)
    assert c == pytest.approx(skew_bmm_oracle(samples[:, 0], 2000), abs=1e-9)
    assert abs(skew_vertical_deviation(z[0], n)) == pytest.approx(c, abs=1e-9)


def test_bmm_closed_form_bound():
    # |sum_k sin(2 pi (x + k phi))| <= 1 / |sin(pi phi)|
    c = bmm_growth(skew(), (PHI, 0.0), None, Ns=(100, 1000, 10000))
    assert is_flat(c)
    assert c[-1] <= A_SKEW / abs(math.sin(math.pi * PHI)) + 1e-9


def test_bmm_fails_for_unbounded_deviation():
    # (x, y) -> (x, y + 0.1 sin(2 pi x)) drifts linearly on each vertical circle
    F = builtin_family("skew", 0.0, 0.0, 0.1).lift()
    growth = bmm_growth(F, (0.0, 0.0), None, Ns=(10, 100, 1000))
    assert not is_flat(growth)


def test_rotation_vector_estimate_golden():
    est = rotation_vector_estimate(skew(), (0.3, 0.2), 10_000)
    assert tuple(est.rho) == pytest.approx((PHI, 0.0), abs=1e-3)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.integers(0, 49), st.integers(1, 50), st.integers(0, 49))
def test_rational_classification(q1, p1, q2, p2):
    r = (p1 % q1) / q1, (p2 % q2) / q2
    cls = classify_rotation_vector(r)
    assert cls.tag == RATIONAL
    (a1, b1), (a2, b2) = cls.approximants
    assert Fraction(a1, b1) == Fraction(p1 % q1, q1)
    assert Fraction(a2, b2) == Fraction(p2 % q2, q2)


def test_vector_classes():
    assert classify_rotation_vector((PHI, SQRT2M1)).tag == TOTALLY_IRRATIONAL
    mixed = classify_rotation_vector((PHI, 0.0))
    assert mixed.tag == MIXED and mixed.relation == (0, 1, 0)
    rel = classify_rotation_vector((PHI, 2 * PHI)).relation
    assert rel == (2, -1, 0)
    assert classify_rotation_vector((PHI, 1 - PHI)).relation == (1, 1, -1)
    with pytest.raises(ValueError):
        classify_rotation_vector((0.1, 0.2), q_max=1)


@settings(max_examples=100, deadline=None)
@given(st.integers(-5, 5), st.integers(-5, 5), st.integers(-3, 3))
def test_found_relation_holds(k1, k2, k0):
    if k2 == 0:
        return
    r1 = PHI
    r2 = -(k1 * r1 + k0) / k2
    rel = find_relation((r1, r2), 10, 1e-9)
    assert rel is not None
    a, b, c = rel
    assert abs(a * r1 + b * r2 + c) <= 1e-9
    assert max(abs(a), abs(b)) <= max(abs(k1), abs(k2))


def test_rational_approximant():
    assert rational_approximant(0.5 + 1e-8, 10, 1e-6) == (1, 2)
    assert rational_approximant(PHI, 50, 1e-6) is None


def test_convex_hull_square_with_interior_points():
    pts = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5), (0.2, 0.7), (1, 0.5)]
    hull = convex_hull(pts)
    assert sorted(map(tuple, hull)) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert hull_contains(hull, (0.3, 0.3))
    assert not hull_contains(hull, (1.2, 0.3))
    assert hull_contains(hull, (1.05, 0.3), slack=0.1)


def test_doubly_perturbed_rotation_set_small():
    F = builtin_family("doubly-perturbed", PHI, SQRT2M1, 0.02, 0.02).lift()
    rep = rotation_set_estimate(F, 8, 2000, with_bmm=False)
    assert rep.spread < 1e-2
